//! Attentive LSTM stock movement prediction with adversarial training on the
//! latent representation.
//!
//! The pipeline runs from raw end-of-day prices ([`market`]) through the
//! differentiable model ([`nn`]) and its training objectives ([`train`]) to
//! metrics and robustness diagnostics ([`eval`]).

pub mod baselines;
pub mod error;
pub mod eval;
pub mod market;
pub mod nn;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
pub use eval::{MetricsReport, PredictionRecord};
pub use market::{Dataset, Example, Label, SplitSpec};
pub use nn::{Checkpoint, Model, ModelDims, ParamSet};
pub use train::{TrainConfig, TrainMode};
