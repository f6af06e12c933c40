//! Time series cluster kernel for multivariate time series with informative
//! missingness.
//!
//! The kernel is an ensemble of mixed-mode Bayesian mixture models: each
//! component models observed values with a time-dependent Gaussian and the
//! observation mask with per-cell Bernoulli probabilities. Base models are
//! fitted by MAP-EM on random subsets of records, variables and time segments,
//! and the kernel accumulates cosine similarities of their posteriors.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod mixture;
pub mod synth;

pub use dataset::{Label, MtsDataset, MtsRecord, StandardizationStats};
pub use error::{Error, Result};
pub use eval::{EvalOptions, EvalReport, Protocol};
pub use kernel::{EnsembleConfig, GramMatrix, Mode, TrainedKernel};
pub use synth::{InjectionReport, Scheme};
