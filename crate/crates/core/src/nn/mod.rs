//! Differentiable building blocks of the attentive LSTM with hand-written adjoints.

pub mod checkpoint;
pub mod layers;
pub mod model;
pub mod params;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use model::{ForwardTrace, HeadTerm, Model};
pub use params::{ModelDims, ParamSet, PARAM_NAMES};
pub use tensor::Tensor;
