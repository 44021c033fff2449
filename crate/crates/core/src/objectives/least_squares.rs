use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::Objective;
use crate::{Error, Result};

/// `f_i(x) = ½‖A_i x − b_i‖²`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    a: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
    d: usize,
    l: f64,
    minimizer: Vec<f64>,
    f_star: f64,
    unique: bool,
}

pub fn least_squares(a: Vec<DMatrix<f64>>, b: Vec<DVector<f64>>) -> Result<LeastSquares> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::InvalidObjective(format!(
            "{} matrices for {} right-hand sides",
            a.len(),
            b.len()
        )));
    }
    let d = a[0].ncols();
    for (ai, bi) in a.iter().zip(&b) {
        if ai.ncols() != d {
            return Err(Error::Dimension {
                expected: d,
                got: ai.ncols(),
            });
        }
        if ai.nrows() != bi.len() {
            return Err(Error::Dimension {
                expected: ai.nrows(),
                got: bi.len(),
            });
        }
    }

    let l = a
        .iter()
        .map(|ai| {
            SymmetricEigen::new(ai.transpose() * ai)
                .eigenvalues
                .iter()
                .copied()
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);

    // Stacked normal equations (Σ AᵢᵀAᵢ) x = Σ Aᵢᵀbᵢ, minimum-norm solution.
    let mut h = DMatrix::<f64>::zeros(d, d);
    let mut r = DVector::<f64>::zeros(d);
    for (ai, bi) in a.iter().zip(&b) {
        h += ai.transpose() * ai;
        r += ai.transpose() * bi;
    }
    let svd = h.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-12 * smax.max(1.0) * d as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let x = svd
        .solve(&r, tol)
        .map_err(|e| Error::InvalidObjective(e.to_string()))?;

    let mut obj = LeastSquares {
        a,
        b,
        d,
        l,
        minimizer: x.iter().copied().collect(),
        f_star: 0.0,
        unique: rank == d,
    };
    obj.f_star = obj.global_loss(&obj.minimizer.clone());
    Ok(obj)
}

impl LeastSquares {
    /// False when the stacked system is rank deficient; `f*` is still the
    /// minimum value but the minimizer is one of many.
    pub fn has_unique_minimizer(&self) -> bool {
        self.unique
    }
}

impl Objective for LeastSquares {
    fn num_agents(&self) -> usize {
        self.a.len()
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn local_loss(&self, agent: usize, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * (&self.a[agent] * x - &self.b[agent]).norm_squared()
    }

    fn local_grad(&self, agent: usize, x: &[f64], out: &mut [f64]) {
        let xv = DVector::from_column_slice(x);
        let resid = &self.a[agent] * xv - &self.b[agent];
        let g = self.a[agent].tr_mul(&resid);
        out.copy_from_slice(g.as_slice());
    }

    fn smoothness(&self) -> f64 {
        self.l
    }

    fn f_star(&self) -> Option<f64> {
        Some(self.f_star)
    }

    fn minimizer(&self) -> Option<&[f64]> {
        Some(&self.minimizer)
    }
}
