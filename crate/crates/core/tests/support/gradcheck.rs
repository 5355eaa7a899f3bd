//! Central finite-difference check of the analytic objective gradients.

#![allow(dead_code)]

use alstm_core::market::{Example, FeatureVector, Label};
use alstm_core::nn::{Model, ModelDims, ParamSet};
use alstm_core::train::{objective_with_shifts, ObjectiveValue};
use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::reference;

pub const STEP: f64 = 1e-5;
const KINK_MARGIN: f64 = 1e-3;

pub struct GradCase {
    pub model: Model,
    pub batch: Vec<Example>,
    pub shifts: Vec<Option<Vec<f64>>>,
    pub alpha: f64,
    pub beta: f64,
    pub scale: f64,
}

pub fn random_params(dims: &ModelDims, rng: &mut ChaCha8Rng) -> ParamSet {
    let mut p = ParamSet::zeros(dims);
    for i in 0..p.num_values() {
        *p.value_mut(i) = rng.random_range(-0.6..0.6);
    }
    p
}

fn random_example(lag: usize, rng: &mut ChaCha8Rng) -> Example {
    Example {
        stock_id: "S".into(),
        anchor_date: NaiveDate::from_ymd_opt(2016, 3, 1).unwrap(),
        window: (0..lag)
            .map(|_| FeatureVector(std::array::from_fn(|_| rng.random_range(-1.0..1.0))))
            .collect(),
        label: if rng.random_bool(0.5) {
            Label::Up
        } else {
            Label::Down
        },
        movement_percent: 1.0,
    }
}

/// Builds a batch whose clean and shifted scores all sit away from the hinge
/// kink, so central differences see a smooth function.
pub fn case(seed: u64, dims: ModelDims, batch: usize, adversarial: bool) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Model::new(dims, random_params(&dims, &mut rng)).unwrap();
    let (beta, eps) = if adversarial { (0.7, 0.2) } else { (0.0, 0.0) };
    let mut examples = Vec::new();
    let mut shifts = Vec::new();
    while examples.len() < batch {
        let ex = random_example(dims.lag, &mut rng);
        let y = ex.label.sign();
        let high = reference::Params::from(&model.params);
        let (e, s) = reference::forward(&model, &high, &reference::windows(&ex));
        let s = f64::from(s);
        if (1.0 - y * s).abs() < KINK_MARGIN {
            continue;
        }
        let shift = if adversarial {
            reference::adversarial_shift(&model.params, y, s, eps)
        } else {
            None
        };
        if let Some(r) = &shift {
            let moved: Vec<reference::R> = e.iter().zip(r).map(|(&a, &b)| a + b).collect();
            let shifted = f64::from(reference::head(&high, &moved));
            if (1.0 - y * shifted).abs() < KINK_MARGIN {
                continue;
            }
        }
        examples.push(ex);
        shifts.push(shift);
    }
    GradCase {
        model,
        batch: examples,
        shifts,
        alpha: 0.01,
        beta,
        scale: 2.0,
    }
}

pub struct GradReport {
    pub max_rel_err: f64,
    pub analytic_loss: f64,
    pub reference_loss: f64,
    pub checked: usize,
}

pub fn analytic(case: &GradCase) -> ObjectiveValue {
    let refs: Vec<&Example> = case.batch.iter().collect();
    objective_with_shifts(
        &case.model,
        &refs,
        &case.shifts,
        case.alpha,
        case.beta,
        case.scale,
    )
    .unwrap()
}

/// Max relative error `|a - n| / max(|a|, |n|, 1e-8)` over every parameter.
pub fn check(case: &GradCase) -> GradReport {
    let refs: Vec<&Example> = case.batch.iter().collect();
    let value = analytic(case);
    let grads = value.grads.flatten();
    let f = |p: &reference::Params| {
        reference::objective(
            &case.model,
            p,
            &refs,
            &case.shifts,
            case.alpha,
            case.beta,
            case.scale,
        )
    };
    let mut p = reference::Params::from(&case.model.params);
    let h = reference::R::from(STEP);
    let mut worst: f64 = 0.0;
    for (i, &a) in grads.iter().enumerate() {
        let orig = *p.value_mut(i);
        *p.value_mut(i) = orig + h;
        let plus = f(&p);
        *p.value_mut(i) = orig - h;
        let minus = f(&p);
        *p.value_mut(i) = orig;
        let n = f64::from((plus - minus) / (h * 2.0));
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    GradReport {
        max_rel_err: worst,
        analytic_loss: value.loss,
        reference_loss: f64::from(f(&reference::Params::from(&case.model.params))),
        checked: grads.len(),
    }
}
