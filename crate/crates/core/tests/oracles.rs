use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use walab_core::data::{synthetic_blobs, BlobSpec, Split};
use walab_core::nn::{mlp_spec, toy_cnn_spec, Batch, Objective};
use walab_core::optim::{adam_step, AdamState, ADAM_EPS};
use walab_core::{LayoutId, RunningAverage, WeightVector};

const L: LayoutId = LayoutId(3);

/// Per-coordinate Neumaier-compensated sum divided by the count.
fn compensated_mean(vectors: &[Vec<f64>]) -> Vec<f64> {
    let dim = vectors[0].len();
    (0..dim)
        .map(|j| {
            let (mut sum, mut comp) = (0.0f64, 0.0f64);
            for v in vectors {
                let x = v[j];
                let t = sum + x;
                comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
                sum = t;
            }
            (sum + comp) / vectors.len() as f64
        })
        .collect()
}

fn running_mean(vectors: &[Vec<f64>]) -> Vec<f64> {
    let mut avg = RunningAverage::empty(vectors[0].len(), L).unwrap();
    for v in vectors {
        avg = avg.update(&WeightVector::new(v.clone(), L).unwrap()).unwrap();
    }
    assert_eq!(avg.count(), vectors.len() as u64);
    avg.into_mean().into_values()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn running_mean_matches_compensated_batch_mean(
        vectors in (1usize..24).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-1e3f64..1e3, d), 1..400))
    ) {
        let got = running_mean(&vectors);
        let want = compensated_mean(&vectors);
        let scale: Vec<f64> = (0..want.len())
            .map(|j| vectors.iter().map(|v| v[j].abs()).fold(0.0, f64::max))
            .collect();
        for j in 0..want.len() {
            // the incremental form accumulates O(k·eps) of the largest magnitude
            let tol = 1e-12 * want[j].abs().max(scale[j] * vectors.len() as f64 * 1e-3).max(1e-300);
            prop_assert!((got[j] - want[j]).abs() <= tol, "{} vs {}", got[j], want[j]);
        }
    }
}

#[test]
fn running_mean_of_constants_is_exact() {
    let v = vec![0.1, -7.3, 1e-9];
    let vectors = vec![v.clone(); 1000];
    assert_eq!(running_mean(&vectors), v);
}

/// Straight-loop forward pass of dense → relu → dense → log-softmax,
/// reading the `out × in` weights then bias of each layer from `w`.
fn reference_mlp_loss(dims: [usize; 3], w: &[f64], batch: &Batch) -> f64 {
    let dense = |w: &[f64], x: &[f64], inputs: usize, outputs: usize| -> Vec<f64> {
        (0..outputs)
            .map(|o| {
                let mut acc = w[inputs * outputs + o];
                for i in 0..inputs {
                    acc += w[o * inputs + i] * x[i];
                }
                acc
            })
            .collect()
    };
    let split = dims[0] * dims[1] + dims[1];
    let mut total = 0.0;
    for s in 0..batch.len() {
        let h: Vec<f64> = dense(&w[..split], batch.sample(s), dims[0], dims[1])
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        let logits = dense(&w[split..], &h, dims[1], dims[2]);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total += lse - logits[batch.labels()[s]];
    }
    total / batch.len() as f64
}

#[test]
fn mlp_forward_matches_reference_loops() {
    let dims = [7, 5, 4];
    let spec = mlp_spec(&dims).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for seed in 0..5 {
        let w = spec.init_weights(seed);
        // non-zero biases so their placement is exercised
        let values: Vec<f64> = w.values().iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
        let w = WeightVector::new(values, spec.layout()).unwrap();
        let inputs = (0..4 * dims[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels = (0..4).map(|_| rng.random_range(0..dims[2])).collect();
        let batch = Batch::new(inputs, labels, dims[0]).unwrap();
        let (loss, _) = spec.forward_loss(&w, &batch).unwrap();
        let want = reference_mlp_loss(dims, w.values(), &batch);
        assert!((loss - want).abs() <= 1e-10 * want.abs(), "{loss} vs {want}");
    }
}

#[test]
fn init_variance_is_two_over_fan_in() {
    let spec = toy_cnn_spec();
    let fan_ins = [27usize, 144, 2048, 128];
    let blocks = spec.param_blocks();
    for seed in 0..4 {
        let w = spec.init_weights(seed);
        for (&(offset, weights, bias), &fan_in) in blocks.iter().zip(&fan_ins) {
            let block = &w.values()[offset..offset + weights];
            let var = block.iter().map(|x| x * x).sum::<f64>() / weights as f64;
            let target = 2.0 / fan_in as f64;
            if fan_in >= 128 {
                assert!((var / target - 1.0).abs() < 0.2, "fan_in {fan_in}: {var} vs {target}");
            }
            let bound = (6.0 / fan_in as f64).sqrt();
            assert!(block.iter().all(|x| x.abs() <= bound));
            assert!(w.values()[offset + weights..offset + weights + bias].iter().all(|&b| b == 0.0));
        }
    }
}

#[test]
fn blobs_six_sigma_apart_are_linearly_separable() {
    let data = synthetic_blobs(&BlobSpec::flat(4, 150, 6, 3), Split::Train).unwrap();
    let spec = mlp_spec(&[6, 4]).unwrap();
    let all: Vec<usize> = (0..data.len()).collect();
    let batch = data.batch(&all).unwrap();
    let mut w = spec.init_weights(0).into_values();
    for _ in 0..300 {
        let cur = WeightVector::new(w.clone(), spec.layout()).unwrap();
        let (_, g) = spec.backward(&cur, &batch).unwrap();
        w.iter_mut().zip(g.values()).for_each(|(wi, gi)| *wi -= 0.5 * gi);
    }
    let acc = spec.evaluate(&WeightVector::new(w, spec.layout()).unwrap(), &data).unwrap().accuracy;
    assert!(acc > 0.95, "train accuracy {acc}");
}

/// Adam on one scalar coordinate, written from the update rule.
fn scalar_adam(w: f64, grads: &[f64], lr: f64) -> f64 {
    let (b1, b2): (f64, f64) = (0.9, 0.999);
    let (mut m, mut v, mut w) = (0.0, 0.0, w);
    for (t, &g) in grads.iter().enumerate() {
        let t = (t + 1) as i32;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t));
        let v_hat = v / (1.0 - b2.powi(t));
        w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    w
}

#[test]
fn adam_matches_scalar_reference() {
    let w0 = [0.5, -1.5, 2.0, 0.0, 1e-3];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grads: Vec<[f64; 5]> = (0..25).map(|_| std::array::from_fn(|_| rng.random_range(-3.0..3.0))).collect();
    let lr = 0.01;
    let mut w = WeightVector::new(w0.to_vec(), L).unwrap();
    let mut state = AdamState::new(&w, 0.9, 0.999, ADAM_EPS).unwrap();
    for g in &grads {
        (w, state) = adam_step(&w, &WeightVector::new(g.to_vec(), L).unwrap(), lr, &state).unwrap();
    }
    for j in 0..5 {
        let col: Vec<f64> = grads.iter().map(|g| g[j]).collect();
        let want = scalar_adam(w0[j], &col, lr);
        assert!((w.values()[j] - want).abs() <= 1e-12, "{} vs {want}", w.values()[j]);
    }
    assert_eq!(state.steps_taken(), 25);
}
