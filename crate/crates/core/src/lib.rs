//! Simulation and numerical verification of weighted empirical-process
//! limit theory for Gaussian subordinated long-memory sequences.
//!
//! The pipeline runs from [`process`] (Gaussian paths with prescribed
//! covariance) through [`hermite`] (Hermite coefficients, rank, normalization
//! and weights) and [`empirical`] (the sequential empirical process and its
//! reduction remainder) to [`montecarlo`] (replicated experiments and
//! convergence reports).

// Guards written as `!(x > 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod empirical;
pub mod error;
pub mod hermite;
pub mod montecarlo;
pub mod numeric;
pub mod process;

pub use error::{Error, Result};
pub use hermite::{HermiteProfile, Subordination, WeightFunction};
pub use montecarlo::{ConvergenceReport, ExperimentConfig};
pub use process::{CovarianceModel, GaussianPath, PathGenerator, SubordinatedSample};
