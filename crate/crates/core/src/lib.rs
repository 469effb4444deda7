//! Generalized-Gaussian modelling of temporal-difference errors: distribution
//! routines, variance estimators, loss weighting and a small TD-learning lab.

pub mod error;
pub mod estimators;
pub mod ggd;
mod quad;
pub mod special;
pub mod td_lab;
pub mod weighting;

pub use error::{Error, Result};
pub use ggd::{FitMode, FitResult, GgdParams, NllForm};
pub use td_lab::{ChainMdpSpec, ExperimentConfig, LossKind, TrainRunLog};
pub use weighting::{TdErrorBatch, WeightingConfig};
