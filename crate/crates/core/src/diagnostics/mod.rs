//! Run metrics, step-size thresholds and the convergence potential.

mod theorem;

use serde::{Deserialize, Serialize};

pub use theorem::{auxiliary_v, delta_tilde, lyapunov, theorem_constants, TheoremConstants};

use crate::algorithms::{AgentState, Simulation};
use crate::objectives::{Classifier, Dataset, Objective};
use crate::topology::{Graph, SpectralInfo};
use crate::{Error, Result};

/// One recorded iteration. Columns are written to CSV in field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: usize,
    pub loss_max: f64,
    pub grad_norm_avg: f64,
    pub consensus_err: f64,
    pub bits_cum: u64,
    pub lyapunov: Option<f64>,
    pub test_acc: Option<f64>,
}

pub const CSV_HEADER: [&str; 7] = [
    "t",
    "loss_max",
    "grad_norm_avg",
    "consensus_err",
    "bits_cum",
    "lyapunov",
    "test_acc",
];

pub fn network_mean(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len() as f64;
    let d = x.first().map_or(0, Vec::len);
    let mut m = vec![0.0; d];
    for row in x {
        for (a, b) in m.iter_mut().zip(row) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|v| *v /= n);
    m
}

/// `K̃X`: every row minus the network mean.
pub fn centered(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = network_mean(x);
    x.iter()
        .map(|row| row.iter().zip(&m).map(|(a, b)| a - b).collect())
        .collect()
}

/// `Σ_i ‖X_i − x̄‖²`.
pub fn consensus_error(x: &[Vec<f64>]) -> f64 {
    centered(x).iter().flatten().map(|v| v * v).sum()
}

/// `‖∇f(x̄)‖²` for the averaged objective.
pub fn grad_norm_sq(obj: &dyn Objective, x_bar: &[f64]) -> f64 {
    let mut g = vec![0.0; x_bar.len()];
    obj.global_grad(x_bar, &mut g);
    g.iter().map(|v| v * v).sum()
}

/// `max_i f(X_i)`, each local model scored on the averaged objective.
pub fn loss_max(obj: &dyn Objective, x: &[Vec<f64>]) -> f64 {
    x.iter().map(|row| obj.global_loss(row)).fold(f64::NEG_INFINITY, f64::max)
}

/// Bits for one round in which agent `i` sends a `bits[i]`-bit message to
/// each of its neighbors.
pub fn round_bits(graph: &Graph, bits: &[u64]) -> u64 {
    bits.iter()
        .enumerate()
        .map(|(i, b)| b * graph.degree(i) as u64)
        .sum()
}

/// Running totals of per-round bit counts.
pub fn bits_accounting(rounds: &[u64]) -> Vec<u64> {
    rounds
        .iter()
        .scan(0u64, |acc, b| {
            *acc += b;
            Some(*acc)
        })
        .collect()
}

pub fn accuracy(model: &dyn Classifier, params: &[f64], data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = (0..data.len())
        .filter(|&j| model.predict(params, data.sample(j)) == data.labels()[j])
        .count();
    hits as f64 / data.len() as f64
}

/// Held-out accuracy of the worst local model.
pub fn test_accuracy(x: &[Vec<f64>], obj: &dyn Objective, data: &Dataset) -> Result<f64> {
    let model = obj
        .as_classifier()
        .ok_or_else(|| Error::Unsupported("objective is not a classifier".into()))?;
    Ok(x.iter()
        .map(|p| accuracy(model, p, data))
        .fold(f64::INFINITY, f64::min))
}

/// What to compute besides the always-on columns.
#[derive(Default)]
pub struct MetricsContext<'a> {
    /// Enables the potential column.
    pub potential: Option<(SpectralInfo, TheoremConstants)>,
    pub test_set: Option<&'a Dataset>,
}

impl MetricsContext<'_> {
    pub fn row(&self, sim: &Simulation<'_>) -> Result<MetricsRow> {
        let obj = sim.objective();
        let x: Vec<Vec<f64>> = sim.agents().iter().map(|a| a.x.clone()).collect();
        let x_bar = network_mean(&x);
        let lyapunov = match (&self.potential, sim.steps()) {
            (Some((spec, c)), Some(steps)) => Some(lyapunov(sim.agents(), obj, spec, c, steps)?),
            _ => None,
        };
        let test_acc = self.test_set.map(|d| test_accuracy(&x, obj, d)).transpose()?;
        Ok(MetricsRow {
            t: sim.t(),
            loss_max: loss_max(obj, &x),
            grad_norm_avg: grad_norm_sq(obj, &x_bar),
            consensus_err: consensus_error(&x),
            bits_cum: sim.bits_cum(),
            lyapunov,
            test_acc,
        })
    }
}

/// `Σ_i ‖X̂_i − X_i‖²`.
pub fn surrogate_gap(agents: &[AgentState]) -> f64 {
    agents
        .iter()
        .flat_map(|a| a.xhat.iter().zip(&a.x).map(|(h, x)| (h - x) * (h - x)))
        .sum()
}
