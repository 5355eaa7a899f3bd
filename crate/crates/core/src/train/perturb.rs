use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::tensor::l2_norm;
use crate::nn::{ForwardTrace, Model};
use crate::train::loss::hinge_slope;

/// Gradient norms below this are treated as zero.
pub const MIN_GRAD_NORM: f64 = 1e-12;

/// Fast-gradient adversarial example at the latent representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Adversarial {
    pub perturbation: Vec<f64>,
    pub representation: Vec<f64>,
    pub score: f64,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon >= 0.0 {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "perturbation scale must be non-negative, got {epsilon}"
        )))
    }
}

/// `ε·g/‖g‖` with `g = ∂l/∂e = -y·w_out`, or `None` when the hinge is
/// inactive (`y·ŷ ≥ 1`) or `g` vanishes.
pub fn adversarial_perturbation(
    head_weights: &[f64],
    y: f64,
    score: f64,
    epsilon: f64,
) -> Result<Option<Vec<f64>>> {
    check_epsilon(epsilon)?;
    let slope = hinge_slope(y, score);
    if slope == 0.0 {
        return Ok(None);
    }
    let grad: Vec<f64> = head_weights.iter().map(|w| slope * w).collect();
    let norm = l2_norm(&grad);
    if norm < MIN_GRAD_NORM {
        return Ok(None);
    }
    Ok(Some(grad.into_iter().map(|g| epsilon * g / norm).collect()))
}

/// Adversarial example for one forward pass of `model`.
pub fn gen_adversarial(
    model: &Model,
    trace: &ForwardTrace,
    y: f64,
    epsilon: f64,
) -> Result<Option<Adversarial>> {
    let Some(r) = adversarial_perturbation(model.params.w_out.data(), y, trace.score, epsilon)?
    else {
        return Ok(None);
    };
    let e_adv: Vec<f64> = trace
        .representation
        .iter()
        .zip(&r)
        .map(|(e, r)| e + r)
        .collect();
    Ok(Some(Adversarial {
        score: model.score_representation(&e_adv),
        representation: e_adv,
        perturbation: r,
    }))
}

/// Direction drawn uniformly from the sphere of radius `epsilon`.
pub fn random_perturbation<R: Rng + ?Sized>(
    dim: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    if epsilon == 0.0 {
        return Ok(vec![0.0; dim]);
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = l2_norm(&v);
        if norm >= MIN_GRAD_NORM {
            return Ok(v.into_iter().map(|x| epsilon * x / norm).collect());
        }
    }
}

/// `e + r` for a random `r` on the `epsilon`-sphere.
pub fn gen_random_perturbation<R: Rng + ?Sized>(
    e: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let r = random_perturbation(e.len(), epsilon, rng)?;
    Ok(e.iter().zip(&r).map(|(e, r)| e + r).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_head_example() {
        let r = adversarial_perturbation(&[3.0, 4.0], 1.0, 0.0, 0.05)
            .unwrap()
            .unwrap();
        assert!((r[0] + 0.03).abs() < 1e-15);
        assert!((r[1] + 0.04).abs() < 1e-15);
    }

    #[test]
    fn inactive_hinge_has_no_example() {
        assert_eq!(
            adversarial_perturbation(&[3.0, 4.0], 1.0, 2.0, 0.05).unwrap(),
            None
        );
        assert_eq!(
            adversarial_perturbation(&[0.0, 0.0], 1.0, 0.0, 0.05).unwrap(),
            None
        );
    }

    #[test]
    fn negative_epsilon_is_rejected() {
        assert!(adversarial_perturbation(&[1.0], 1.0, 0.0, -0.1).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(random_perturbation(3, -1.0, &mut rng).is_err());
    }

    #[test]
    fn random_perturbation_has_radius_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = [0.2, -0.4, 0.9, 0.0];
        assert_eq!(
            gen_random_perturbation(&e, 0.0, &mut rng).unwrap(),
            e.to_vec()
        );
        for _ in 0..1000 {
            let moved = gen_random_perturbation(&e, 0.07, &mut rng).unwrap();
            let d: Vec<f64> = moved.iter().zip(&e).map(|(a, b)| a - b).collect();
            assert!((l2_norm(&d) - 0.07).abs() < 1e-9);
        }
    }

    #[test]
    fn random_directions_are_centered() {
        // Each coordinate of a uniform direction in n dims has variance 1/n.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (dim, draws) = (8, 100_000);
        let mut mean = vec![0.0; dim];
        for _ in 0..draws {
            let r = random_perturbation(dim, 1.0, &mut rng).unwrap();
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / draws as f64;
            }
        }
        let sigma = (1.0 / dim as f64 / draws as f64).sqrt();
        assert!(mean.iter().all(|m| m.abs() < 3.0 * sigma), "{mean:?}");
    }
}
