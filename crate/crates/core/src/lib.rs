//! Conditional GAN with conformal regularization.
//!
//! The crate bundles a small dense network engine ([`nn`]), four
//! nonconformity scores with split-conformal calibration ([`conformal`]),
//! the adversarial training loop with a weighted conformity penalty
//! ([`gan`]), validity and fidelity metrics ([`metrics`]), tabular dataset
//! utilities ([`data`]) and the `cgan` command-line driver ([`cli`]).
//!
//! Data-parallel loops (batch scoring, metric sweeps, multi-seed runs) go
//! through [`par`], which uses rayon when the `parallel` feature is on and
//! falls back to plain iteration otherwise. Results are identical in both
//! modes.

pub mod cli;
pub mod conformal;
pub mod data;
pub mod experiment;
pub mod gan;
pub mod metrics;
pub mod nn;
pub mod par;
pub mod rng;

pub use conformal::{Calibrator, NonconformityMethod, ScorerState, WeightVector};
pub use data::LabeledDataset;
pub use gan::{TrainConfig, TrainRecord};
pub use nn::{Matrix, MlpModel};
