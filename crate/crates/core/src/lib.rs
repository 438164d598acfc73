//! Discrete-time survival analysis with a composite training objective.
//!
//! The crate bundles everything needed to go from a CSV of right-censored
//! observations to an evaluated model:
//!
//! - [`data`]: loading, time normalization onto a `K`-bin grid, splitting
//! - [`model`]: a small residual MLP with BatchNorm and dropout, Cat and
//!   MTLR heads that turn network outputs into a probability mass function
//!   over the bins, and exact reverse-mode gradients
//! - [`losses`]: likelihood, pairwise rank, time-adaptive pairwise rank
//!   (TAPR) and calibration losses, plus their weighted combination
//! - [`training`]: SGD with cosine annealing and validation C-index model
//!   selection
//! - [`metrics`]: C-index, Kaplan–Meier, IPCW Brier score / IBS,
//!   time-dependent AUC, log-rank, cutoff selection and hazard ratio
//! - [`synth`]: proportional-hazards data with known latent risk
//! - [`cli`]: the `triplesurv` command line (`prepare`, `train`,
//!   `evaluate`, `ablate`, `synth`)
//!
//! ```
//! use triplesurv::model::{mtlr_head, predict_risk};
//!
//! let pmf = mtlr_head(&[0.0, 0.0]).unwrap();
//! assert!((pmf.probs()[0] - 1.0 / 3.0).abs() < 1e-12);
//! assert!((predict_risk(&pmf) - 0.5).abs() < 1e-12);
//! ```

pub mod cli;
pub mod data;
pub mod error;
pub mod losses;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
