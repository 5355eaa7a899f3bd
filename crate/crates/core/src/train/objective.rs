//! Clean and perturbed training objectives with their exact gradients.
//!
//! Every objective has the form
//!
//! ```text
//! scale · Σ_s [ l(y_s, ŷ_s) + β · l(y_s, w_out·(e_s + r_s) + b_out) ] + (α/2)·‖Θ‖²
//! ```
//!
//! where the second term only appears for examples that carry a shift `r_s`.
//! Shifts are constants of the differentiation.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::Example;
use crate::nn::{HeadTerm, Model, ParamSet};
use crate::train::loss::{hinge, hinge_slope};
use crate::train::perturb::{adversarial_perturbation, random_perturbation};

/// Value and gradient of an objective on one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub loss: f64,
    /// Unscaled sum of clean hinge losses.
    pub clean_loss: f64,
    /// Unscaled sum of hinge losses on shifted examples (before `β`).
    pub shifted_loss: f64,
    /// `(α/2)·‖Θ‖²`.
    pub regularizer: f64,
    /// Number of examples that carried a shift.
    pub shifted: usize,
    pub grads: ParamSet,
}

/// Eq.-style hinge objective on clean examples only.
pub fn objective_normal(
    model: &Model,
    batch: &[&Example],
    alpha: f64,
    scale: f64,
) -> Result<ObjectiveValue> {
    objective_with_shifts(model, batch, &vec![None; batch.len()], alpha, 0.0, scale)
}

/// Clean loss plus `β`-weighted loss on fast-gradient adversarial examples.
///
/// With `β = 0` this is exactly [`objective_normal`].
pub fn objective_adversarial(
    model: &Model,
    batch: &[&Example],
    alpha: f64,
    beta: f64,
    epsilon: f64,
    scale: f64,
) -> Result<ObjectiveValue> {
    if beta == 0.0 {
        return objective_normal(model, batch, alpha, scale);
    }
    let shifts = adversarial_shifts(model, batch, epsilon)?;
    objective_with_shifts(model, batch, &shifts, alpha, beta, scale)
}

/// Clean loss plus `β`-weighted loss on randomly perturbed representations.
pub fn objective_random<R: Rng + ?Sized>(
    model: &Model,
    batch: &[&Example],
    alpha: f64,
    beta: f64,
    epsilon: f64,
    scale: f64,
    rng: &mut R,
) -> Result<ObjectiveValue> {
    if beta == 0.0 {
        return objective_normal(model, batch, alpha, scale);
    }
    let dim = model.dims.representation();
    let shifts = batch
        .iter()
        .map(|_| random_perturbation(dim, epsilon, rng).map(Some))
        .collect::<Result<Vec<_>>>()?;
    objective_with_shifts(model, batch, &shifts, alpha, beta, scale)
}

/// Adversarial perturbation of every example in the batch at the current parameters.
pub fn adversarial_shifts(
    model: &Model,
    batch: &[&Example],
    epsilon: f64,
) -> Result<Vec<Option<Vec<f64>>>> {
    batch
        .par_iter()
        .map(|ex| {
            let score = model.predict(&ex.window)?;
            adversarial_perturbation(model.params.w_out.data(), ex.target(), score, epsilon)
        })
        .collect()
}

/// The objective for a fixed set of representation shifts (one per example).
pub fn objective_with_shifts(
    model: &Model,
    batch: &[&Example],
    shifts: &[Option<Vec<f64>>],
    alpha: f64,
    beta: f64,
    scale: f64,
) -> Result<ObjectiveValue> {
    if batch.is_empty() {
        return Err(Error::Contract("objective needs a non-empty batch".into()));
    }
    if shifts.len() != batch.len() {
        return Err(Error::shape("shifts", &[batch.len()], &[shifts.len()]));
    }

    let per_example = batch
        .par_iter()
        .zip(shifts.par_iter())
        .map(|(ex, shift)| example_terms(model, ex, shift.as_deref(), beta))
        .collect::<Result<Vec<_>>>()?;

    let mut grads = ParamSet::zeros(&model.dims);
    let (mut clean_loss, mut shifted_loss, mut shifted) = (0.0, 0.0, 0);
    for (clean, extra, g) in &per_example {
        clean_loss += clean;
        if let Some(l) = extra {
            shifted_loss += l;
            shifted += 1;
        }
        grads.add_scaled(g, 1.0);
    }
    grads.scale(scale);
    grads.add_scaled(&model.params, alpha);

    let regularizer = 0.5 * alpha * model.params.squared_norm();
    let loss = scale * (clean_loss + beta * shifted_loss) + regularizer;
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::Numeric("objective is not finite".into()));
    }
    Ok(ObjectiveValue {
        loss,
        clean_loss,
        shifted_loss,
        regularizer,
        shifted,
        grads,
    })
}

fn example_terms(
    model: &Model,
    ex: &Example,
    shift: Option<&[f64]>,
    beta: f64,
) -> Result<(f64, Option<f64>, ParamSet)> {
    let y = ex.target();
    let trace = model.forward(&ex.window)?;
    let mut terms = vec![HeadTerm::clean(hinge_slope(y, trace.score))];
    let clean = hinge(y, trace.score);

    let extra = match shift {
        Some(r) => {
            if r.len() != trace.representation.len() {
                return Err(Error::shape(
                    "representation shift",
                    &[trace.representation.len()],
                    &[r.len()],
                ));
            }
            let e_shifted: Vec<f64> = trace
                .representation
                .iter()
                .zip(r)
                .map(|(e, r)| e + r)
                .collect();
            let score = model.score_representation(&e_shifted);
            terms.push(HeadTerm {
                upstream: beta * hinge_slope(y, score),
                shift: Some(r),
            });
            Some(hinge(y, score))
        }
        None => None,
    };

    let (grads, _) = model.backward(&trace, &terms)?;
    Ok((clean, extra, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{FeatureVector, Label};
    use crate::nn::{ModelDims, Tensor};
    use chrono::NaiveDate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn examples(n: usize, lag: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| Example {
                stock_id: format!("S{i}"),
                anchor_date: NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
                window: (0..lag)
                    .map(|_| FeatureVector(std::array::from_fn(|_| rng.random_range(-0.5..0.5))))
                    .collect(),
                label: if rng.random_bool(0.5) {
                    Label::Up
                } else {
                    Label::Down
                },
                movement_percent: 1.0,
            })
            .collect()
    }

    #[test]
    fn satisfied_margins_without_regularizer_are_free() {
        let dims = ModelDims::attentive(11, 3, 3, 2);
        let mut params = ParamSet::zeros(&dims);
        params.b_out = Tensor::scalar(2.0);
        let model = Model::new(dims, params).unwrap();
        let mut data = examples(6, 2, 1);
        data.iter_mut().for_each(|e| e.label = Label::Up);
        let batch: Vec<&Example> = data.iter().collect();
        let v = objective_normal(&model, &batch, 0.0, 1.0).unwrap();
        assert_eq!(v.loss, 0.0);
        assert_eq!(v.grads.squared_norm(), 0.0);
    }

    #[test]
    fn regularizer_only_gradient() {
        let dims = ModelDims::attentive(11, 3, 3, 2);
        let mut model = Model::init(dims, 4).unwrap();
        model.params.w_out.fill(0.0);
        model.params.b_out = Tensor::scalar(5.0);
        let mut data = examples(4, 2, 2);
        data.iter_mut().for_each(|e| e.label = Label::Up);
        let batch: Vec<&Example> = data.iter().collect();
        let v = objective_normal(&model, &batch, 0.3, 1.0).unwrap();
        let mut want = model.params.clone();
        want.scale(0.3);
        assert_eq!(v.grads, want);
    }

    #[test]
    fn zero_beta_is_the_normal_objective() {
        let model = Model::init(ModelDims::attentive(11, 4, 4, 3), 9).unwrap();
        let data = examples(8, 3, 3);
        let batch: Vec<&Example> = data.iter().collect();
        let a = objective_normal(&model, &batch, 0.01, 1.0).unwrap();
        let b = objective_adversarial(&model, &batch, 0.01, 0.0, 0.05, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_epsilon_doubles_active_losses() {
        let model = Model::init(ModelDims::attentive(11, 4, 4, 3), 9).unwrap();
        let data = examples(8, 3, 5);
        let batch: Vec<&Example> = data.iter().collect();
        let beta = 0.5;
        let clean = objective_normal(&model, &batch, 0.1, 1.0).unwrap();
        let adv = objective_adversarial(&model, &batch, 0.1, beta, 0.0, 1.0).unwrap();
        // random init keeps every example inside the margin
        assert_eq!(adv.shifted, batch.len());
        let want = (1.0 + beta) * clean.clean_loss + clean.regularizer;
        assert!((adv.loss - want).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let model = Model::init(ModelDims::attentive(11, 2, 2, 2), 0).unwrap();
        assert!(objective_normal(&model, &[], 0.0, 1.0).is_err());
    }
}
