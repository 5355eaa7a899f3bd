use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::layers::{
    attention_backward, attention_forward, head_forward, head_score, lstm_backward, lstm_forward,
    map_backward, map_forward, AttentionTrace, LstmTrace,
};
use crate::nn::params::{ModelDims, ParamSet};

/// Cached activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub inputs: Vec<Vec<f64>>,
    pub mapped: Vec<Vec<f64>>,
    pub lstm: LstmTrace,
    pub attention: Option<AttentionTrace>,
    /// Final latent representation `e`.
    pub representation: Vec<f64>,
    /// Classification confidence.
    pub score: f64,
}

impl ForwardTrace {
    pub fn last_hidden(&self) -> &[f64] {
        self.lstm.hidden.last().expect("non-empty sequence")
    }
}

/// One use of the head in the loss: an upstream derivative `dL/dŷ`, and an
/// optional constant shift added to `e` before scoring it.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTerm<'a> {
    pub upstream: f64,
    pub shift: Option<&'a [f64]>,
}

impl HeadTerm<'_> {
    pub fn clean(upstream: f64) -> Self {
        HeadTerm {
            upstream,
            shift: None,
        }
    }
}

/// Attentive LSTM (or plain LSTM when attention is disabled).
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub dims: ModelDims,
    pub params: ParamSet,
}

impl Model {
    pub fn new(dims: ModelDims, params: ParamSet) -> Result<Self> {
        dims.validate()?;
        params.check_shapes(&dims)?;
        Ok(Model { dims, params })
    }

    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Model {
            params: ParamSet::init(&dims, &mut rng),
            dims,
        })
    }

    pub fn forward<X: AsRef<[f64]>>(&self, window: &[X]) -> Result<ForwardTrace> {
        if window.is_empty() {
            return Err(Error::Contract("empty input window".into()));
        }
        let p = &self.params;
        let inputs: Vec<Vec<f64>> = window.iter().map(|x| x.as_ref().to_vec()).collect();
        let mapped = inputs
            .iter()
            .map(|x| map_forward(x, &p.w_map, &p.b_map))
            .collect::<Result<Vec<_>>>()?;
        let lstm = lstm_forward(&mapped, &p.w_lstm, &p.b_lstm)?;
        let attention = if self.dims.use_attention {
            Some(attention_forward(
                &lstm.hidden,
                &p.w_att,
                &p.b_att,
                &p.u_att,
            )?)
        } else {
            None
        };
        let last = lstm.hidden.last().expect("non-empty sequence");
        let (representation, score) = head_forward(
            attention.as_ref().map(|a| a.aggregate.as_slice()),
            last,
            &p.w_out,
            &p.b_out,
        )?;
        Ok(ForwardTrace {
            inputs,
            mapped,
            lstm,
            attention,
            representation,
            score,
        })
    }

    pub fn predict<X: AsRef<[f64]>>(&self, window: &[X]) -> Result<f64> {
        Ok(self.forward(window)?.score)
    }

    /// Scores a (possibly perturbed) representation with the head only.
    pub fn score_representation(&self, e: &[f64]) -> f64 {
        head_score(e, &self.params.w_out, &self.params.b_out)
    }

    /// Gradients of `Σ_k upstream_k · ŷ_k`, where each `ŷ_k` scores
    /// `e + shift_k`. Shifts are constants. Returns the parameter gradients
    /// and `dL/de`.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        terms: &[HeadTerm],
    ) -> Result<(ParamSet, Vec<f64>)> {
        let p = &self.params;
        let e = &trace.representation;
        if e.len() != self.dims.representation() || trace.inputs.len() != trace.lstm.hidden.len() {
            return Err(Error::shape(
                "forward trace",
                &[self.dims.representation()],
                &[e.len()],
            ));
        }
        let mut g = ParamSet::zeros(&self.dims);

        let mut d_e = vec![0.0; e.len()];
        for term in terms {
            let u = term.upstream;
            match term.shift {
                Some(shift) => {
                    for ((gw, x), r) in g.w_out.data_mut().iter_mut().zip(e).zip(shift) {
                        *gw += u * (x + r);
                    }
                }
                None => {
                    for (gw, x) in g.w_out.data_mut().iter_mut().zip(e) {
                        *gw += u * x;
                    }
                }
            }
            g.b_out.data_mut()[0] += u;
            for (d, w) in d_e.iter_mut().zip(p.w_out.data()) {
                *d += u * w;
            }
        }

        let units = self.dims.hidden;
        let steps = trace.lstm.hidden.len();
        let mut dh = vec![vec![0.0; units]; steps];
        let d_last = if let Some(att) = &trace.attention {
            attention_backward(
                &trace.lstm.hidden,
                att,
                &p.w_att,
                &p.u_att,
                &d_e[..units],
                &mut g.w_att,
                &mut g.b_att,
                &mut g.u_att,
                &mut dh,
            );
            &d_e[units..]
        } else {
            &d_e[..]
        };
        for (acc, d) in dh[steps - 1].iter_mut().zip(d_last) {
            *acc += d;
        }

        let dm = lstm_backward(
            &trace.mapped,
            &trace.lstm,
            &p.w_lstm,
            &dh,
            &mut g.w_lstm,
            &mut g.b_lstm,
        );
        for ((x, m), d) in trace.inputs.iter().zip(&trace.mapped).zip(&dm) {
            map_backward(x, m, d, &mut g.w_map, &mut g.b_map);
        }
        Ok((g, d_e))
    }
}
