//! Core numerics for the weight-averaging lab.
//!
//! The crate is organised bottom-up: [`ndcore`] holds flat parameter vectors
//! and the running mean, [`nn`] maps a [`nn::ModelSpec`] onto those vectors
//! with hand-written forward/backward passes, [`schedule`] and [`optim`]
//! drive the inner loop, and [`averaging`] composes them into the SGD, SWA,
//! DSWA, TSWA and PSWA controllers. [`landscape`] probes the loss along a line
//! between two solutions, and [`quadratic`] is a noisy-quadratic testbed for
//! the tail-averaging variance effect.

pub mod averaging;
pub mod data;
pub mod error;
pub mod landscape;
pub mod ndcore;
pub mod nn;
pub mod optim;
pub mod quadratic;
pub mod rng;
pub mod schedule;

pub use error::{Error, Result};
pub use ndcore::{LayoutId, RunningAverage, WeightVector};
