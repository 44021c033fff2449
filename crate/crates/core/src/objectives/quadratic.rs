use super::Objective;
use crate::{Error, Result};

/// `f_i(x) = ½‖x − c_i‖²`. The consensus optimum is the mean of the centers.
#[derive(Debug, Clone)]
pub struct QuadraticConsensus {
    centers: Vec<Vec<f64>>,
    mean: Vec<f64>,
    f_star: f64,
}

pub fn quadratic_consensus(centers: Vec<Vec<f64>>) -> Result<QuadraticConsensus> {
    let d = centers
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidObjective("no agents".into()))?;
    if d == 0 {
        return Err(Error::InvalidObjective("dimension must be positive".into()));
    }
    if let Some(c) = centers.iter().find(|c| c.len() != d) {
        return Err(Error::Dimension {
            expected: d,
            got: c.len(),
        });
    }
    let n = centers.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|k| centers.iter().map(|c| c[k]).sum::<f64>() / n)
        .collect();
    let f_star = centers
        .iter()
        .map(|c| 0.5 * c.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n;
    Ok(QuadraticConsensus {
        centers,
        mean,
        f_star,
    })
}

impl QuadraticConsensus {
    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }
}

impl Objective for QuadraticConsensus {
    fn num_agents(&self) -> usize {
        self.centers.len()
    }

    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn local_loss(&self, agent: usize, x: &[f64]) -> f64 {
        0.5 * x
            .iter()
            .zip(&self.centers[agent])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
    }

    fn local_grad(&self, agent: usize, x: &[f64], out: &mut [f64]) {
        for ((o, a), b) in out.iter_mut().zip(x).zip(&self.centers[agent]) {
            *o = a - b;
        }
    }

    fn smoothness(&self) -> f64 {
        1.0
    }

    fn f_star(&self) -> Option<f64> {
        Some(self.f_star)
    }

    fn minimizer(&self) -> Option<&[f64]> {
        Some(&self.mean)
    }
}
