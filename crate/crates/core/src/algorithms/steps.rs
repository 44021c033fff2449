use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Primal-dual step sizes. `alpha` and `beta` are derived from the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub alpha_tilde: f64,
    pub theta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// `α = 1/(1/α̃ + θM)`, `β = α/α̃`.
pub fn compute_stepsizes(alpha_tilde: f64, theta: f64, eta: f64, gamma: f64, m: f64) -> Result<StepSizes> {
    let positive = |v: f64| v > 0.0 && v.is_finite();
    if !positive(alpha_tilde) || !positive(theta) || !positive(eta) || !positive(m) {
        return Err(Error::StepSizes(format!(
            "alpha_tilde, theta, eta, M must be positive and finite (got {alpha_tilde}, {theta}, {eta}, {m})"
        )));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::StepSizes(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let alpha = 1.0 / (1.0 / alpha_tilde + theta * m);
    Ok(StepSizes {
        alpha_tilde,
        theta,
        eta,
        gamma,
        alpha,
        beta: alpha / alpha_tilde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-15 * b.abs().max(1.0)
    }

    #[test]
    fn examples() {
        let s = compute_stepsizes(0.1, 1.0, 0.5, 1.0, 4.0).unwrap();
        assert!(close(s.alpha, 1.0 / 14.0));
        assert!(close(s.beta, 10.0 / 14.0));

        let s = compute_stepsizes(1.0, 2.0, 0.5, 1.0, 3.0).unwrap();
        assert!(close(s.alpha, 1.0 / 7.0));
        assert!(close(s.beta, 1.0 / 7.0));

        let s = compute_stepsizes(0.1, 1.0, 1.0, 1.0, 2.0).unwrap();
        assert!(close(s.alpha, 1.0 / 12.0));
        assert!(close(s.beta, 5.0 / 6.0));
    }

    #[test]
    fn vanishing_theta_limit() {
        let s = compute_stepsizes(0.1, 1e-300, 1.0, 1.0, 4.0).unwrap();
        assert_eq!(s.alpha, 0.1);
        assert_eq!(s.beta, 1.0);
    }

    #[test]
    fn invariants() {
        for &(at, th, m) in &[(0.01, 0.5, 2.0), (3.0, 7.0, 4.0), (1e-3, 1e3, 8.0)] {
            let s = compute_stepsizes(at, th, 1.0, 1.0, m).unwrap();
            assert!(s.alpha > 0.0 && s.beta > 0.0 && s.beta < 1.0);
            assert!((s.alpha - s.beta * s.alpha_tilde).abs() <= 1e-15 * s.alpha);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(compute_stepsizes(0.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(compute_stepsizes(0.1, 1.0, -1.0, 1.0, 1.0).is_err());
        assert!(compute_stepsizes(0.1, 1.0, 1.0, 1.5, 1.0).is_err());
        assert!(compute_stepsizes(0.1, 1.0, 1.0, 0.0, 1.0).is_err());
    }
}
