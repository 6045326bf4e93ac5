//! Gaussian-mixture conditional-mean channel estimation.
//!
//! The crate fits circularly-symmetric complex Gaussian mixtures to channel
//! samples with EM and evaluates the closed-form conditional-mean estimator
//! that the mixture induces for the observation model `y = h + n`. Classical
//! baselines (least squares, sample-covariance and genie LMMSE, genie-aided
//! OMP) and a Monte Carlo sweep harness are included for benchmarking.
//!
//! Data-parallel loops (sample generation, the EM E-step, per-sample
//! estimation) run on rayon when the `parallel` feature is enabled, which it
//! is by default. Every random draw comes from a stream keyed by indices, so
//! results do not depend on the thread count.

pub mod channel;
mod codec;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod gmm;
pub mod harness;
pub mod linalg;
mod par;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::{Complex64, ComplexVector, HermitianMatrix};
