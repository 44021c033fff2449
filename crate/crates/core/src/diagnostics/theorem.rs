use serde::{Deserialize, Serialize};

use crate::algorithms::{compute_stepsizes, AgentState, StepSizes};
use crate::objectives::Objective;
use crate::topology::SpectralInfo;
use crate::{Error, Result};

use super::{centered, consensus_error, network_mean};

/// Step-size thresholds of the convergence guarantee, plus the inputs they
/// were computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    pub delta: f64,
    pub eta: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub l: f64,
    pub n: usize,
    pub m: f64,
    pub a: f64,
    pub delta_tilde: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub theta_lb: f64,
    pub alpha_ub: f64,
}

/// `δ̃ = max{(1−δ)²(1−δ/2)² / ((1−δ/2)² − (1−δ)²), 1}`.
pub fn delta_tilde(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::StepSizes(format!("delta must lie in (0, 1], got {delta}")));
    }
    let p = (1.0 - delta).powi(2);
    let h = (1.0 - delta / 2.0).powi(2);
    Ok((p * h / (h - p)).max(1.0))
}

#[allow(clippy::too_many_arguments)]
pub fn theorem_constants(
    delta: f64,
    eta: f64,
    rho1: f64,
    rho2: f64,
    l: f64,
    n: usize,
    m: f64,
    a: f64,
) -> Result<TheoremConstants> {
    let dt = delta_tilde(delta)?;
    for (name, v) in [("eta", eta), ("rho1", rho1), ("rho2", rho2), ("L", l), ("M", m), ("a", a)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::StepSizes(format!("{name} must be positive and finite, got {v}")));
        }
    }
    if n == 0 {
        return Err(Error::StepSizes("n must be positive".into()));
    }
    let nf = n as f64;
    let delta2 = (16.0 * eta / delta).max(1.0);
    let delta1 = 12.0 * 2f64.max(2.0 / (rho2 * eta)).max(delta2 * dt);
    let theta_lb = (4.0 * l * l / (nf * rho2 * a)).max(
        (2.0 / rho2)
            * (1.0
                + 2.0 * l
                + 8.0 * eta * rho1 * rho1 / rho2
                + delta1 * (1.5 + 3.0 * l * l + eta * rho1 + rho1 * rho1 / 2.0)),
    );
    let mut c = TheoremConstants {
        delta,
        eta,
        rho1,
        rho2,
        l,
        n,
        m,
        a,
        delta_tilde: dt,
        delta1,
        delta2,
        theta_lb,
        alpha_ub: 0.0,
    };
    c.alpha_ub = c.alpha_ub_at(theta_lb);
    Ok(c)
}

impl TheoremConstants {
    /// `α_ub` for a given `θ`: `max{16η, δ}/(320θ²)·min{1/M², na/M², 1/ρ₁²}`.
    pub fn alpha_ub_at(&self, theta: f64) -> f64 {
        let m2 = self.m * self.m;
        let cap = (1.0 / m2).min(self.n as f64 * self.a / m2).min(1.0 / (self.rho1 * self.rho1));
        (16.0 * self.eta).max(self.delta) / (320.0 * theta * theta) * cap
    }

    /// Step sizes with `θ = θ_lb` and `α` just under `α_ub`, solving
    /// `α = 1/(1/α̃ + θM)` for `α̃`.
    pub fn compliant_steps(&self, gamma: f64) -> Result<StepSizes> {
        let theta = self.theta_lb;
        let alpha = self.alpha_ub * (1.0 - 1e-9);
        let inv = 1.0 / alpha - theta * self.m;
        if !(inv > 0.0) {
            return Err(Error::StepSizes("no proximal weight realizes alpha_ub".into()));
        }
        let steps = compute_stepsizes(1.0 / inv, theta, self.eta, gamma, self.m)?;
        if steps.alpha > self.alpha_ub {
            return Err(Error::StepSizes(format!(
                "derived alpha {} exceeds alpha_ub {}",
                steps.alpha, self.alpha_ub
            )));
        }
        Ok(steps)
    }

    /// True when the given steps satisfy `θ ≥ θ_lb` and `α ≤ α_ub(θ)`.
    pub fn admits(&self, steps: &StepSizes) -> bool {
        steps.theta >= self.theta_lb && steps.alpha <= self.alpha_ub_at(steps.theta)
    }
}

/// `v = α(λ̃ + ∇f(1 ⊗ x̄))`: each agent's dual plus its local gradient at the
/// network average.
pub fn auxiliary_v(lambda: &[Vec<f64>], obj: &dyn Objective, x_bar: &[f64], alpha: f64) -> Vec<Vec<f64>> {
    let mut g = vec![0.0; x_bar.len()];
    lambda
        .iter()
        .enumerate()
        .map(|(i, l)| {
            obj.local_grad(i, x_bar, &mut g);
            l.iter().zip(&g).map(|(a, b)| alpha * (a + b)).collect()
        })
        .collect()
}

/// The potential `F_t`:
///
/// `f(x̄) − f* + (a/(ηα))‖v‖²_{Q̃ + cK̃} + a‖X‖²_K̃ + δ₁a⟨X, v⟩_K̃ + δ₂a‖X̂ − X‖²`
/// with `c = α((δ₁/2)(θ+η) − θ − δ₂θ)`.
pub fn lyapunov(
    agents: &[AgentState],
    obj: &dyn Objective,
    spectral: &SpectralInfo,
    constants: &TheoremConstants,
    steps: &StepSizes,
) -> Result<f64> {
    let f_star = obj
        .f_star()
        .ok_or_else(|| Error::Unsupported("potential needs a known optimal value".into()))?;
    let StepSizes { alpha, theta, eta, .. } = *steps;
    let TheoremConstants { a, delta1, delta2, .. } = *constants;

    let x: Vec<Vec<f64>> = agents.iter().map(|s| s.x.clone()).collect();
    let lambda: Vec<Vec<f64>> = agents.iter().map(|s| s.lambda.clone()).collect();
    let x_bar = network_mean(&x);
    let v = auxiliary_v(&lambda, obj, &x_bar, alpha);

    let kx = centered(&x);
    let kv = centered(&v);
    let kv_sq: f64 = kv.iter().flatten().map(|z| z * z).sum();
    let cross: f64 = kx.iter().flatten().zip(kv.iter().flatten()).map(|(p, q)| p * q).sum();
    let gap: f64 = agents
        .iter()
        .flat_map(|s| s.xhat.iter().zip(&s.x).map(|(h, x)| (h - x) * (h - x)))
        .sum();
    let c = alpha * ((delta1 / 2.0) * (theta + eta) - theta - delta2 * theta);

    Ok(obj.global_loss(&x_bar) - f_star
        + a / (eta * alpha) * (spectral.pinv_quadratic_form(&v) + c * kv_sq)
        + a * consensus_error(&x)
        + delta1 * a * cross
        + delta2 * a * gap)
}
