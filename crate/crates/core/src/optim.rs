//! Inner-loop updaters.
//!
//! SGD uses heavy-ball momentum in velocity form without dampening and adds
//! weight decay to the gradient (coupled L2):
//!
//! ```text
//! g ← grad + weight_decay·w
//! v ← momentum·v + g
//! w ← w − lr·v
//! ```
//!
//! Adam is the usual bias-corrected update with ε = 1e-8 outside the root.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{check_finite, WeightVector};

pub const ADAM_EPS: f64 = 1e-8;

fn default_eps() -> f64 {
    ADAM_EPS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd {
        momentum: f64,
        weight_decay: f64,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

impl OptimizerConfig {
    pub fn plain_sgd() -> Self {
        OptimizerConfig::Sgd {
            momentum: 0.0,
            weight_decay: 0.0,
        }
    }

    /// Fresh optimizer state (zero buffers) for weights shaped like `w`.
    pub fn init(&self, w: &WeightVector) -> Result<Optimizer> {
        Ok(match *self {
            OptimizerConfig::Sgd { momentum, weight_decay } => Optimizer::Sgd(SgdState::new(w, momentum, weight_decay)?),
            OptimizerConfig::Adam { beta1, beta2, eps } => Optimizer::Adam(AdamState::new(w, beta1, beta2, eps)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    velocity: WeightVector,
    momentum: f64,
    weight_decay: f64,
}

impl SgdState {
    pub fn new(like: &WeightVector, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::spec(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::spec(format!("weight decay must be ≥ 0, got {weight_decay}")));
        }
        Ok(Self {
            velocity: like.zeros_like(),
            momentum,
            weight_decay,
        })
    }

    pub fn velocity(&self) -> &WeightVector {
        &self.velocity
    }

    pub fn step(&mut self, w: &mut WeightVector, grad: &WeightVector, lr: f64) -> Result<()> {
        w.check_layout(grad)?;
        w.check_layout(&self.velocity)?;
        let (mu, wd) = (self.momentum, self.weight_decay);
        let v = self.velocity.values_mut();
        for ((wi, gi), vi) in w.values_mut().iter_mut().zip(grad.values()).zip(v.iter_mut()) {
            let g = gi + wd * *wi;
            *vi = mu * *vi + g;
            *wi -= lr * *vi;
        }
        check_finite(w.values())
    }

    fn reset(&mut self) {
        self.velocity.values_mut().fill(0.0);
    }
}

/// Pure form of [`SgdState::step`].
pub fn sgd_step(w: &WeightVector, grad: &WeightVector, lr: f64, state: &SgdState) -> Result<(WeightVector, SgdState)> {
    let mut w = w.clone();
    let mut state = state.clone();
    state.step(&mut w, grad, lr)?;
    Ok((w, state))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: WeightVector,
    v: WeightVector,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
}

impl AdamState {
    pub fn new(like: &WeightVector, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::spec(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::spec("Adam eps must be positive"));
        }
        Ok(Self {
            m: like.zeros_like(),
            v: like.zeros_like(),
            beta1,
            beta2,
            eps,
            t: 0,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn moments(&self) -> (&WeightVector, &WeightVector) {
        (&self.m, &self.v)
    }

    pub fn step(&mut self, w: &mut WeightVector, grad: &WeightVector, lr: f64) -> Result<()> {
        w.check_layout(grad)?;
        w.check_layout(&self.m)?;
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let m = self.m.values_mut();
        let v = self.v.values_mut();
        for (i, wi) in w.values_mut().iter_mut().enumerate() {
            let g = grad.values()[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *wi -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        check_finite(w.values())
    }

    fn reset(&mut self) {
        self.m.values_mut().fill(0.0);
        self.v.values_mut().fill(0.0);
        self.t = 0;
    }
}

/// Pure form of [`AdamState::step`].
pub fn adam_step(
    w: &WeightVector,
    grad: &WeightVector,
    lr: f64,
    state: &AdamState,
) -> Result<(WeightVector, AdamState)> {
    let mut w = w.clone();
    let mut state = state.clone();
    state.step(&mut w, grad, lr)?;
    Ok((w, state))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd(SgdState),
    Adam(AdamState),
}

impl Optimizer {
    pub fn step(&mut self, w: &mut WeightVector, grad: &WeightVector, lr: f64) -> Result<()> {
        match self {
            Optimizer::Sgd(s) => s.step(w, grad, lr),
            Optimizer::Adam(s) => s.step(w, grad, lr),
        }
    }

    /// Zero the momentum / moment buffers.
    pub fn reset(&mut self) {
        match self {
            Optimizer::Sgd(s) => s.reset(),
            Optimizer::Adam(s) => s.reset(),
        }
    }
}
