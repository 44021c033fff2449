//! Per-agent smooth objectives `f_i : R^d → R`.
//!
//! The global objective evaluated at a common point is the average
//! `f(x) = (1/n) Σ f_i(x)`, and `∇f(x) = (1/n) Σ ∇f_i(x)`.

mod data;
mod least_squares;
mod logistic;
mod mlp;
mod quadratic;

use rand::Rng;
use rand_distr::StandardNormal;

pub use data::{
    encode_idx_images, encode_idx_labels, load_idx, parse_idx, parse_idx_image_header,
    partition_by_label, DataPartition, Dataset, IdxImageHeader, PartitionMode,
};
pub use least_squares::{least_squares, LeastSquares};
pub use logistic::{logistic_regression, Logistic};
pub use mlp::{two_layer_mlp, Mlp, DEFAULT_MLP_SMOOTHNESS};
pub use quadratic::{quadratic_consensus, QuadraticConsensus};

use crate::compression::RngStream;

/// A model that maps parameters and a feature vector to a class.
pub trait Classifier {
    fn num_classes(&self) -> usize;
    fn predict(&self, params: &[f64], features: &[f64]) -> usize;
}

pub trait Objective: Send + Sync {
    fn num_agents(&self) -> usize;

    fn dim(&self) -> usize;

    fn local_loss(&self, agent: usize, x: &[f64]) -> f64;

    /// Writes `∇f_agent(x)` into `out`.
    fn local_grad(&self, agent: usize, x: &[f64], out: &mut [f64]);

    /// Smoothness constant `L` shared by every `f_i`.
    fn smoothness(&self) -> f64;

    /// False when `L` is a configured guess rather than a proven bound.
    fn smoothness_verified(&self) -> bool {
        true
    }

    /// Known optimal value of the global objective.
    fn f_star(&self) -> Option<f64> {
        None
    }

    /// Known global minimizer.
    fn minimizer(&self) -> Option<&[f64]> {
        None
    }

    fn as_classifier(&self) -> Option<&dyn Classifier> {
        None
    }

    fn global_loss(&self, x: &[f64]) -> f64 {
        let n = self.num_agents();
        (0..n).map(|i| self.local_loss(i, x)).sum::<f64>() / n as f64
    }

    fn global_grad(&self, x: &[f64], out: &mut [f64]) {
        let n = self.num_agents();
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut g = vec![0.0; self.dim()];
        for i in 0..n {
            self.local_grad(i, x, &mut g);
            for (o, v) in out.iter_mut().zip(&g) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v /= n as f64);
    }
}

/// Result of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub samples: usize,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares the directional derivative `⟨∇f_i(x), u⟩` against
/// `(f_i(x + hu) − f_i(x − hu)) / 2h` at random points and directions.
pub fn finite_difference_check(
    obj: &dyn Objective,
    samples: usize,
    scale: f64,
    step: f64,
    tolerance: f64,
    stream: RngStream,
) -> GradientCheck {
    let mut rng = stream.rng();
    let d = obj.dim();
    let mut g = vec![0.0; d];
    let mut worst: f64 = 0.0;
    for k in 0..samples {
        let agent = k % obj.num_agents();
        let x: Vec<f64> = (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut u: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let un = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= un);
        obj.local_grad(agent, &x, &mut g);
        let analytic: f64 = g.iter().zip(&u).map(|(a, b)| a * b).sum();
        let plus: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + step * b).collect();
        let minus: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a - step * b).collect();
        let numeric = (obj.local_loss(agent, &plus) - obj.local_loss(agent, &minus)) / (2.0 * step);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    GradientCheck {
        samples,
        max_relative_error: worst,
        tolerance,
        pass: worst <= tolerance,
    }
}

/// Largest observed `‖∇f_i(x) − ∇f_i(y)‖ / ‖x − y‖` over random pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessCheck {
    pub pairs: usize,
    pub max_ratio: f64,
    pub smoothness: f64,
    pub pass: bool,
}

/// Samples `pairs` point pairs (cycling through agents) and checks the
/// gradient Lipschitz bound with a relative slack of `1e-8`.
pub fn smoothness_check(obj: &dyn Objective, pairs: usize, scale: f64, stream: RngStream) -> SmoothnessCheck {
    let mut rng = stream.rng();
    let d = obj.dim();
    let (mut gx, mut gy) = (vec![0.0; d], vec![0.0; d]);
    let mut worst: f64 = 0.0;
    for k in 0..pairs {
        let agent = k % obj.num_agents();
        let x: Vec<f64> = (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        obj.local_grad(agent, &x, &mut gx);
        obj.local_grad(agent, &y, &mut gy);
        let dg = gx.iter().zip(&gy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let dx = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if dx > 0.0 {
            worst = worst.max(dg / dx);
        }
    }
    let l = obj.smoothness();
    SmoothnessCheck {
        pairs,
        max_ratio: worst,
        smoothness: l,
        pass: worst <= l * (1.0 + 1e-8),
    }
}

/// Plain gradient descent on the global objective with step `1/L`, used to
/// estimate `f*` when no closed form exists.
pub fn centralized_descent(obj: &dyn Objective, x0: &[f64], iters: usize) -> (Vec<f64>, f64) {
    let step = 1.0 / obj.smoothness();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; x.len()];
    for _ in 0..iters {
        obj.global_grad(&x, &mut g);
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= step * gi;
        }
    }
    let f = obj.global_loss(&x);
    (x, f)
}

/// Largest eigenvalue of `FᵀF` for a row-major `m × p` matrix, computed on
/// the smaller of the two Gram matrices.
pub(crate) fn gram_lambda_max(rows: &[f64], m: usize, p: usize) -> f64 {
    use nalgebra::{DMatrix, SymmetricEigen};
    if m == 0 || p == 0 {
        return 0.0;
    }
    let f = DMatrix::from_row_slice(m, p, rows);
    let gram = if m <= p {
        &f * f.transpose()
    } else {
        f.transpose() * &f
    };
    SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compression::Purpose;

    #[test]
    fn gram_lambda_max_matches_known_value() {
        // F = [[1, 2], [3, 4], [0, 1]]: FᵀF = [[10, 14], [14, 21]]
        let f = [1.0, 2.0, 3.0, 4.0, 0.0, 1.0];
        let expected = (31.0 + (11.0f64 * 11.0 + 4.0 * 196.0).sqrt()) / 2.0;
        assert!((gram_lambda_max(&f, 3, 2) - expected).abs() < 1e-10);
        assert!((gram_lambda_max(&f[..4], 1, 4) - 30.0).abs() < 1e-10);
    }

    #[test]
    fn centralized_descent_finds_quadratic_optimum() {
        let q = quadratic_consensus(vec![vec![0.0], vec![2.0]]).unwrap();
        let (x, f) = centralized_descent(&q, &[10.0], 50);
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((f - 0.5).abs() < 1e-12);
    }

    #[test]
    fn finite_difference_check_passes_for_quadratics() {
        let q = quadratic_consensus(vec![vec![1.0, -2.0, 0.5]; 3]).unwrap();
        let r = finite_difference_check(&q, 20, 1.0, 1e-6, 1e-5, RngStream::new(0, 0, 0, Purpose::Test));
        assert!(r.pass, "{r:?}");
    }
}
