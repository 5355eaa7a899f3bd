use crate::error::{Error, Result};

/// `max(0, 1 - y·ŷ)` for a target `y` of exactly +1 or -1.
pub fn hinge_loss(y: f64, score: f64) -> Result<f64> {
    check_target(y)?;
    Ok(hinge(y, score))
}

/// Subgradient of the hinge loss with respect to the score; zero at the kink.
pub fn hinge_grad(y: f64, score: f64) -> Result<f64> {
    check_target(y)?;
    Ok(hinge_slope(y, score))
}

pub(crate) fn hinge(y: f64, score: f64) -> f64 {
    (1.0 - y * score).max(0.0)
}

pub(crate) fn hinge_slope(y: f64, score: f64) -> f64 {
    if y * score < 1.0 {
        -y
    } else {
        0.0
    }
}

fn check_target(y: f64) -> Result<()> {
    if y == 1.0 || y == -1.0 {
        Ok(())
    } else {
        Err(Error::Contract(format!("target must be +1 or -1, got {y}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values() {
        assert_eq!(hinge_loss(1.0, 2.0).unwrap(), 0.0);
        assert_eq!(hinge_loss(1.0, 0.5).unwrap(), 0.5);
        assert_eq!(hinge_loss(-1.0, 0.5).unwrap(), 1.5);
    }

    #[test]
    fn subgradient() {
        assert_eq!(hinge_grad(1.0, 0.5).unwrap(), -1.0);
        assert_eq!(hinge_grad(-1.0, 0.5).unwrap(), 1.0);
        assert_eq!(hinge_grad(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(hinge_grad(-1.0, -3.0).unwrap(), 0.0);
    }

    #[test]
    fn bad_target() {
        assert!(hinge_loss(0.0, 1.0).is_err());
        assert!(hinge_grad(2.0, 1.0).is_err());
    }
}
