//! A straightforward re-implementation of the model's forward pass and
//! objectives, written without the library's layers, used as an oracle.
//!
//! Everything runs in double-double arithmetic so finite differences of the
//! oracle are limited by truncation, not by f64 roundoff.

#![allow(dead_code)]

use alstm_core::market::Example;
use alstm_core::nn::{Model, ParamSet};
use twofloat::TwoFloat;

pub type R = TwoFloat;

/// Parameters in extended precision, tensor by tensor.
pub struct Params {
    pub tensors: Vec<Vec<R>>,
}

impl Params {
    pub fn from(p: &ParamSet) -> Self {
        Params {
            tensors: p
                .tensors()
                .iter()
                .map(|(_, t)| t.data().iter().map(|&v| R::from(v)).collect())
                .collect(),
        }
    }

    /// Mutable access in flatten order.
    pub fn value_mut(&mut self, mut i: usize) -> &mut R {
        for t in &mut self.tensors {
            if i < t.len() {
                return &mut t[i];
            }
            i -= t.len();
        }
        panic!("parameter index out of range");
    }

    fn get(&self, k: usize) -> &[R] {
        &self.tensors[k]
    }
}

fn zero() -> R {
    R::from(0.0)
}

fn sum(it: impl Iterator<Item = R>) -> R {
    it.fold(zero(), |a, b| a + b)
}

fn sig(x: R) -> R {
    R::from(1.0) / (R::from(1.0) + (-x).exp())
}

fn matvec(w: &[R], rows: usize, cols: usize, x: &[R]) -> Vec<R> {
    (0..rows)
        .map(|r| sum((0..cols).map(|c| w[r * cols + c] * x[c])))
        .collect()
}

/// Representation `e` and score for one window.
pub fn forward(model: &Model, p: &Params, window: &[Vec<R>]) -> (Vec<R>, R) {
    let d = model.dims;
    let (w_map, b_map, w_lstm, b_lstm) = (p.get(0), p.get(1), p.get(2), p.get(3));
    let (w_att, b_att, u_att) = (p.get(4), p.get(5), p.get(6));
    let (dd, ee, uu) = (d.features, d.mapping, d.hidden);
    let mut h = vec![zero(); uu];
    let mut c = vec![zero(); uu];
    let mut hs = Vec::new();
    for x in window {
        let m: Vec<R> = matvec(w_map, ee, dd, x)
            .iter()
            .zip(b_map)
            .map(|(&z, &b)| (z + b).tanh())
            .collect();
        let mut input = m.clone();
        input.extend_from_slice(&h);
        let z: Vec<R> = matvec(w_lstm, 4 * uu, ee + uu, &input)
            .iter()
            .zip(b_lstm)
            .map(|(&z, &b)| z + b)
            .collect();
        for k in 0..uu {
            let i = sig(z[k]);
            let f = sig(z[uu + k]);
            let o = sig(z[2 * uu + k]);
            let g = z[3 * uu + k].tanh();
            c[k] = f * c[k] + i * g;
            h[k] = o * c[k].tanh();
        }
        hs.push(h.clone());
    }

    let mut e = Vec::new();
    if d.use_attention {
        let ea = d.attention;
        let logits: Vec<R> = hs
            .iter()
            .map(|ht| {
                let proj = matvec(w_att, ea, uu, ht);
                sum((0..ea).map(|j| u_att[j] * (proj[j] + b_att[j]).tanh()))
            })
            .collect();
        let mx = logits
            .iter()
            .skip(1)
            .fold(logits[0], |a, &b| if b > a { b } else { a });
        let ex: Vec<R> = logits.iter().map(|&l| (l - mx).exp()).collect();
        let z = sum(ex.iter().copied());
        let mut a = vec![zero(); uu];
        for (w, ht) in ex.iter().zip(&hs) {
            for k in 0..uu {
                a[k] += *w / z * ht[k];
            }
        }
        e.extend(a);
    }
    e.extend_from_slice(&h);
    let score = head(p, &e);
    (e, score)
}

pub fn head(p: &Params, e: &[R]) -> R {
    sum(e.iter().zip(p.get(7)).map(|(&a, &b)| a * b)) + p.get(8)[0]
}

pub fn hinge(y: f64, s: R) -> R {
    let m = R::from(1.0) - s * y;
    if m > zero() {
        m
    } else {
        zero()
    }
}

pub fn windows(ex: &Example) -> Vec<Vec<R>> {
    ex.window
        .iter()
        .map(|f| f.0.iter().map(|&v| R::from(v)).collect())
        .collect()
}

/// Fast-gradient perturbation at the current parameters, or `None` when the
/// hinge is inactive.
pub fn adversarial_shift(p: &ParamSet, y: f64, score: f64, eps: f64) -> Option<Vec<f64>> {
    if 1.0 - y * score <= 0.0 {
        return None;
    }
    let g: Vec<f64> = p.w_out.data().iter().map(|w| -y * w).collect();
    let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n < 1e-12 {
        return None;
    }
    Some(g.iter().map(|v| eps * v / n).collect())
}

/// `scale·Σ [l(y, ŷ) + β·l(y, ŷ(e + r))] + (α/2)‖Θ‖²` with fixed shifts.
pub fn objective(
    model: &Model,
    p: &Params,
    batch: &[&Example],
    shifts: &[Option<Vec<f64>>],
    alpha: f64,
    beta: f64,
    scale: f64,
) -> R {
    let mut total = zero();
    for (ex, shift) in batch.iter().zip(shifts) {
        let y = ex.label.sign();
        let (e, s) = forward(model, p, &windows(ex));
        total += hinge(y, s);
        if let Some(r) = shift {
            let moved: Vec<R> = e.iter().zip(r).map(|(&a, &b)| a + b).collect();
            total += hinge(y, head(p, &moved)) * beta;
        }
    }
    let norm = sum(p.tensors.iter().flatten().map(|&v| v * v));
    total * scale + norm * (0.5 * alpha)
}
