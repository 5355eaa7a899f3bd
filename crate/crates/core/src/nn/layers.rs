//! Forward passes and exact adjoints of the four layers.
//!
//! Each `*_forward` returns the activations its `*_backward` needs; backward
//! functions accumulate parameter gradients into the supplied tensors and
//! return (or accumulate) gradients with respect to their inputs.

use crate::error::{Error, Result};
use crate::nn::tensor::{dot, Tensor};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let z = x.exp();
        z / (1.0 + z)
    }
}

fn check_len(what: &str, v: &[f64], want: usize) -> Result<()> {
    if v.len() == want {
        Ok(())
    } else {
        Err(Error::shape(what, &[want], &[v.len()]))
    }
}

fn check_finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite value in {what}")))
    }
}

/// `m = tanh(W x + b)`.
pub fn map_forward(x: &[f64], w: &Tensor, b: &Tensor) -> Result<Vec<f64>> {
    check_len("mapping input", x, w.cols())?;
    check_len("mapping bias", b.data(), w.shape()[0])?;
    let mut m = w.affine(x, b.data());
    m.iter_mut().for_each(|v| *v = v.tanh());
    check_finite("feature mapping", &m)?;
    Ok(m)
}

pub fn map_backward(x: &[f64], m: &[f64], dm: &[f64], gw: &mut Tensor, gb: &mut Tensor) {
    let dpre: Vec<f64> = m.iter().zip(dm).map(|(m, d)| d * (1.0 - m * m)).collect();
    gw.add_outer(&dpre, x);
    for (g, d) in gb.data_mut().iter_mut().zip(&dpre) {
        *g += d;
    }
}

/// Gate activations of one LSTM step.
#[derive(Debug, Clone, PartialEq)]
pub struct Gates {
    pub input: Vec<f64>,
    pub forget: Vec<f64>,
    pub output: Vec<f64>,
    pub candidate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    pub gates: Vec<Gates>,
    pub cells: Vec<Vec<f64>>,
    pub hidden: Vec<Vec<f64>>,
}

/// Runs the recurrence from `h_0 = c_0 = 0`.
pub fn lstm_forward(inputs: &[Vec<f64>], w: &Tensor, b: &Tensor) -> Result<LstmTrace> {
    let units = w.shape()[0] / 4;
    let in_dim = w.cols() - units;
    check_len("lstm bias", b.data(), 4 * units)?;

    let mut trace = LstmTrace {
        gates: Vec::with_capacity(inputs.len()),
        cells: Vec::with_capacity(inputs.len()),
        hidden: Vec::with_capacity(inputs.len()),
    };
    let mut h = vec![0.0; units];
    let mut c = vec![0.0; units];
    let mut v = vec![0.0; in_dim + units];
    for x in inputs {
        check_len("lstm input", x, in_dim)?;
        v[..in_dim].copy_from_slice(x);
        v[in_dim..].copy_from_slice(&h);
        let pre = w.affine(&v, b.data());
        let gates = Gates {
            input: pre[..units].iter().map(|&z| sigmoid(z)).collect(),
            forget: pre[units..2 * units].iter().map(|&z| sigmoid(z)).collect(),
            output: pre[2 * units..3 * units]
                .iter()
                .map(|&z| sigmoid(z))
                .collect(),
            candidate: pre[3 * units..].iter().map(|z| z.tanh()).collect(),
        };
        for k in 0..units {
            c[k] = gates.forget[k] * c[k] + gates.input[k] * gates.candidate[k];
            h[k] = gates.output[k] * c[k].tanh();
        }
        check_finite("lstm state", &c)?;
        trace.gates.push(gates);
        trace.cells.push(c.clone());
        trace.hidden.push(h.clone());
    }
    Ok(trace)
}

/// Backpropagation through time.
///
/// `dh` holds the gradient reaching each `h_t` from layers above; returns the
/// gradient for each input step.
pub fn lstm_backward(
    inputs: &[Vec<f64>],
    trace: &LstmTrace,
    w: &Tensor,
    dh: &[Vec<f64>],
    gw: &mut Tensor,
    gb: &mut Tensor,
) -> Vec<Vec<f64>> {
    let units = w.shape()[0] / 4;
    let in_dim = w.cols() - units;
    let steps = inputs.len();

    let mut dx = vec![Vec::new(); steps];
    let mut dh_next = vec![0.0; units];
    let mut dc_next = vec![0.0; units];
    let mut v = vec![0.0; in_dim + units];
    let mut dz = vec![0.0; 4 * units];
    let zeros = vec![0.0; units];

    for t in (0..steps).rev() {
        let g = &trace.gates[t];
        let c = &trace.cells[t];
        let c_prev = if t > 0 { &trace.cells[t - 1] } else { &zeros };
        let h_prev = if t > 0 { &trace.hidden[t - 1] } else { &zeros };

        for k in 0..units {
            let dh_k = dh[t][k] + dh_next[k];
            let tc = c[k].tanh();
            let dc = dc_next[k] + dh_k * g.output[k] * (1.0 - tc * tc);
            let d_out = dh_k * tc;
            let d_in = dc * g.candidate[k];
            let d_cand = dc * g.input[k];
            let d_forget = dc * c_prev[k];
            dz[k] = d_in * g.input[k] * (1.0 - g.input[k]);
            dz[units + k] = d_forget * g.forget[k] * (1.0 - g.forget[k]);
            dz[2 * units + k] = d_out * g.output[k] * (1.0 - g.output[k]);
            dz[3 * units + k] = d_cand * (1.0 - g.candidate[k] * g.candidate[k]);
            dc_next[k] = dc * g.forget[k];
        }

        v[..in_dim].copy_from_slice(&inputs[t]);
        v[in_dim..].copy_from_slice(h_prev);
        gw.add_outer(&dz, &v);
        for (g, d) in gb.data_mut().iter_mut().zip(&dz) {
            *g += d;
        }
        let mut dv = vec![0.0; in_dim + units];
        w.add_transposed_product(&dz, &mut dv);
        dh_next.copy_from_slice(&dv[in_dim..]);
        dv.truncate(in_dim);
        dx[t] = dv;
    }
    dx
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    /// `tanh(W_a h_t + b_a)` per step.
    pub projected: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub weights: Vec<f64>,
    pub aggregate: Vec<f64>,
}

/// Softmax-weighted pooling of the hidden states.
pub fn attention_forward(
    hidden: &[Vec<f64>],
    w: &Tensor,
    b: &Tensor,
    u: &Tensor,
) -> Result<AttentionTrace> {
    if hidden.is_empty() {
        return Err(Error::Contract("attention needs at least one step".into()));
    }
    let units = hidden[0].len();
    check_len("attention bias", b.data(), w.shape()[0])?;
    check_len("attention context", u.data(), w.shape()[0])?;

    let mut projected = Vec::with_capacity(hidden.len());
    let mut logits = Vec::with_capacity(hidden.len());
    for h in hidden {
        check_len("attention input", h, w.cols())?;
        let mut z = w.affine(h, b.data());
        z.iter_mut().for_each(|v| *v = v.tanh());
        logits.push(dot(u.data(), &z));
        projected.push(z);
    }
    let weights = softmax(&logits);
    let mut aggregate = vec![0.0; units];
    for (h, &a) in hidden.iter().zip(&weights) {
        for (acc, x) in aggregate.iter_mut().zip(h) {
            *acc += a * x;
        }
    }
    check_finite("attention", &aggregate)?;
    Ok(AttentionTrace {
        projected,
        logits,
        weights,
        aggregate,
    })
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Accumulates into `dh` the gradient of the aggregate with respect to each hidden state.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward(
    hidden: &[Vec<f64>],
    trace: &AttentionTrace,
    w: &Tensor,
    u: &Tensor,
    d_agg: &[f64],
    gw: &mut Tensor,
    gb: &mut Tensor,
    gu: &mut Tensor,
    dh: &mut [Vec<f64>],
) {
    let d_weight: Vec<f64> = hidden.iter().map(|h| dot(d_agg, h)).collect();
    let mean = dot(&trace.weights, &d_weight);
    for t in 0..hidden.len() {
        let a = trace.weights[t];
        for (g, d) in dh[t].iter_mut().zip(d_agg) {
            *g += a * d;
        }
        let d_logit = a * (d_weight[t] - mean);
        let z = &trace.projected[t];
        for (g, zi) in gu.data_mut().iter_mut().zip(z) {
            *g += d_logit * zi;
        }
        let dpre: Vec<f64> = z
            .iter()
            .zip(u.data())
            .map(|(zi, ui)| d_logit * ui * (1.0 - zi * zi))
            .collect();
        gw.add_outer(&dpre, &hidden[t]);
        for (g, d) in gb.data_mut().iter_mut().zip(&dpre) {
            *g += d;
        }
        w.add_transposed_product(&dpre, &mut dh[t]);
    }
}

/// Concatenates the representation and scores it with the linear head.
pub fn head_forward(
    aggregate: Option<&[f64]>,
    last_hidden: &[f64],
    w: &Tensor,
    b: &Tensor,
) -> Result<(Vec<f64>, f64)> {
    let mut e = Vec::with_capacity(w.len());
    if let Some(a) = aggregate {
        e.extend_from_slice(a);
    }
    e.extend_from_slice(last_hidden);
    check_len("representation", &e, w.len())?;
    let score = head_score(&e, w, b);
    if !score.is_finite() {
        return Err(Error::Numeric("prediction score is not finite".into()));
    }
    Ok((e, score))
}

pub fn head_score(e: &[f64], w: &Tensor, b: &Tensor) -> f64 {
    dot(w.data(), e) + b.data()[0]
}
