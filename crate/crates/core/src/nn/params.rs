use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Layer sizes of the attentive LSTM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Features per day (D).
    pub features: usize,
    /// Feature-mapping width (E).
    pub mapping: usize,
    /// LSTM hidden units (U).
    pub hidden: usize,
    /// Attention projection width (E'); zero when attention is disabled.
    pub attention: usize,
    /// Lag length (T).
    pub lag: usize,
    /// With attention the head reads `[a; h_T]`, otherwise only `h_T`.
    pub use_attention: bool,
}

impl ModelDims {
    /// Attentive model with the attention width equal to the hidden size.
    pub fn attentive(features: usize, mapping: usize, hidden: usize, lag: usize) -> Self {
        ModelDims {
            features,
            mapping,
            hidden,
            attention: hidden,
            lag,
            use_attention: true,
        }
    }

    /// Plain LSTM: mapping, recurrence and a head on the last hidden state.
    pub fn plain(features: usize, mapping: usize, hidden: usize, lag: usize) -> Self {
        ModelDims {
            features,
            mapping,
            hidden,
            attention: 0,
            lag,
            use_attention: false,
        }
    }

    /// Length of the final latent representation `e`.
    pub fn representation(&self) -> usize {
        if self.use_attention {
            2 * self.hidden
        } else {
            self.hidden
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.features > 0
            && self.mapping > 0
            && self.hidden > 0
            && self.lag > 0
            && (self.use_attention == (self.attention > 0));
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid model dimensions {self:?}")))
        }
    }
}

/// Every trainable tensor of the model. Also used to hold gradients and
/// optimizer moments, which share the same layout.
///
/// The LSTM weight matrix stacks the input, forget, output and candidate
/// gates row-wise (`4U` rows); its columns are `[m_t; h_{t-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub w_map: Tensor,
    pub b_map: Tensor,
    pub w_lstm: Tensor,
    pub b_lstm: Tensor,
    pub w_att: Tensor,
    pub b_att: Tensor,
    pub u_att: Tensor,
    pub w_out: Tensor,
    pub b_out: Tensor,
}

pub const PARAM_NAMES: [&str; 9] = [
    "w_map", "b_map", "w_lstm", "b_lstm", "w_att", "b_att", "u_att", "w_out", "b_out",
];

impl ParamSet {
    pub fn zeros(dims: &ModelDims) -> Self {
        let (d, e, u, a, r) = (
            dims.features,
            dims.mapping,
            dims.hidden,
            dims.attention,
            dims.representation(),
        );
        ParamSet {
            w_map: Tensor::zeros(&[e, d]),
            b_map: Tensor::zeros(&[e]),
            w_lstm: Tensor::zeros(&[4 * u, e + u]),
            b_lstm: Tensor::zeros(&[4 * u]),
            w_att: Tensor::zeros(&[a, u]),
            b_att: Tensor::zeros(&[a]),
            u_att: Tensor::zeros(&[a]),
            w_out: Tensor::zeros(&[r]),
            b_out: Tensor::zeros(&[1]),
        }
    }

    /// Glorot-uniform weights, zero biases, forget-gate bias of one.
    pub fn init<R: Rng + ?Sized>(dims: &ModelDims, rng: &mut R) -> Self {
        let mut p = Self::zeros(dims);
        let (d, e, u, a, r) = (
            dims.features,
            dims.mapping,
            dims.hidden,
            dims.attention,
            dims.representation(),
        );
        glorot(&mut p.w_map, d, e, rng);
        glorot(&mut p.w_lstm, e + u, u, rng);
        glorot(&mut p.w_att, u, a, rng);
        glorot(&mut p.u_att, a, 1, rng);
        glorot(&mut p.w_out, r, 1, rng);
        p.b_lstm.data_mut()[u..2 * u].fill(1.0);
        p
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor); 9] {
        [
            ("w_map", &self.w_map),
            ("b_map", &self.b_map),
            ("w_lstm", &self.w_lstm),
            ("b_lstm", &self.b_lstm),
            ("w_att", &self.w_att),
            ("b_att", &self.b_att),
            ("u_att", &self.u_att),
            ("w_out", &self.w_out),
            ("b_out", &self.b_out),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 9] {
        [
            &mut self.w_map,
            &mut self.b_map,
            &mut self.w_lstm,
            &mut self.b_lstm,
            &mut self.w_att,
            &mut self.b_att,
            &mut self.u_att,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }

    /// Builds a set from tensors given in [`PARAM_NAMES`] order.
    pub fn from_tensors(dims: &ModelDims, tensors: Vec<Tensor>) -> Result<Self> {
        let mut p = Self::zeros(dims);
        if tensors.len() != PARAM_NAMES.len() {
            return Err(Error::shape(
                "parameter count",
                &[PARAM_NAMES.len()],
                &[tensors.len()],
            ));
        }
        for ((slot, t), name) in p.tensors_mut().into_iter().zip(tensors).zip(PARAM_NAMES) {
            if slot.shape() != t.shape() {
                return Err(Error::shape(name, slot.shape(), t.shape()));
            }
            *slot = t;
        }
        Ok(p)
    }

    pub fn check_shapes(&self, dims: &ModelDims) -> Result<()> {
        let reference = Self::zeros(dims);
        for ((name, mine), (_, want)) in self.tensors().into_iter().zip(reference.tensors()) {
            if mine.shape() != want.shape() {
                return Err(Error::shape(name, want.shape(), mine.shape()));
            }
        }
        Ok(())
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Squared Frobenius norm over all parameters.
    pub fn squared_norm(&self) -> f64 {
        self.tensors().iter().map(|(_, t)| t.squared_norm()).sum()
    }

    /// `self += k * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ParamSet, k: f64) {
        for (mine, (_, theirs)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            mine.add_scaled(theirs, k);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// All values in [`PARAM_NAMES`] order, row-major within each tensor.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.data().iter().copied())
            .collect()
    }

    /// Mutable access to the `i`-th value in [`ParamSet::flatten`] order.
    pub fn value_mut(&mut self, mut i: usize) -> &mut f64 {
        for t in self.tensors_mut() {
            if i < t.len() {
                return &mut t.data_mut()[i];
            }
            i -= t.len();
        }
        panic!("parameter index out of range");
    }
}

fn glorot<R: Rng + ?Sized>(t: &mut Tensor, fan_in: usize, fan_out: usize, rng: &mut R) {
    if t.is_empty() {
        return;
    }
    let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in t.data_mut() {
        *v = rng.random_range(-r..r);
    }
}
