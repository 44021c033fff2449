//! Monte-Carlo check of `E‖Q(x) − x‖² ≤ (1 − δ)² ‖x‖²`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Compressor, RngStream};
use crate::{Error, Result};

pub const MIN_TRIALS: usize = 1000;

/// Absolute slack for comparing against the bound, covering roundoff in
/// cases where the ratio sits exactly on it.
const ROUNDOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub trials: usize,
    /// Mean of `‖Q(x) − x‖² / ‖x‖²`.
    pub empirical_ratio: f64,
    pub standard_error: f64,
    pub delta: f64,
    /// `(1 − δ)²`.
    pub certified_bound: f64,
    pub pass: bool,
}

fn summarize(c: &Compressor, ratios: &[f64]) -> ContractionReport {
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let se = (var / n).sqrt();
    let delta = c.certified_delta();
    let bound = (1.0 - delta).powi(2);
    ContractionReport {
        trials: ratios.len(),
        empirical_ratio: mean,
        standard_error: se,
        delta,
        certified_bound: bound,
        pass: mean <= bound + 3.0 * se + ROUNDOFF,
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::Unsupported(format!(
            "contraction test needs at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    Ok(())
}

/// Draws `trials` uniformly random unit vectors and averages the relative
/// compression error.
pub fn contraction_test(c: &Compressor, trials: usize, stream: RngStream) -> Result<ContractionReport> {
    check_trials(trials)?;
    let mut rng = stream.rng();
    let mut ratios = Vec::with_capacity(trials);
    let mut x = vec![0.0; c.d];
    for _ in 0..trials {
        let norm = loop {
            for v in x.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                break n;
            }
        };
        x.iter_mut().for_each(|v| *v /= norm);
        let q = c.compress(&x, &mut rng)?;
        ratios.push(sq_dist(&q, &x));
    }
    Ok(summarize(c, &ratios))
}

/// Same check on one fixed nonzero input.
pub fn contraction_test_on(
    c: &Compressor,
    x: &[f64],
    trials: usize,
    stream: RngStream,
) -> Result<ContractionReport> {
    check_trials(trials)?;
    let norm2: f64 = x.iter().map(|v| v * v).sum();
    if norm2 == 0.0 {
        return Err(Error::Unsupported("contraction test input must be nonzero".into()));
    }
    let mut rng = stream.rng();
    let mut ratios = Vec::with_capacity(trials);
    for _ in 0..trials {
        let q = c.compress(x, &mut rng)?;
        ratios.push(sq_dist(&q, x) / norm2);
    }
    Ok(summarize(c, &ratios))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum()
}
