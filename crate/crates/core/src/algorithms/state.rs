use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::compression::{Purpose, RngStream};
use crate::objectives::Objective;
use crate::topology::Graph;
use crate::{Error, Result};

/// Local state of one agent.
///
/// Besides its own surrogate, each agent keeps a copy of every neighbor's
/// surrogate, updated from received messages with the same arithmetic the
/// sender applies to its own copy. `xhat_neighbors` is their sum taken in
/// ascending neighbor order.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub xhat: Vec<f64>,
    pub xhat_neighbors: Vec<f64>,
    pub(crate) mirrors: Vec<Vec<f64>>,
}

impl AgentState {
    /// Copies of the neighbors' surrogates, in ascending neighbor order.
    pub fn neighbor_surrogates(&self) -> &[Vec<f64>] {
        &self.mirrors
    }

    pub fn degree(&self) -> usize {
        self.mirrors.len()
    }

    pub(crate) fn refresh_aggregate(&mut self) {
        self.xhat_neighbors.iter_mut().for_each(|v| *v = 0.0);
        for m in &self.mirrors {
            for (a, b) in self.xhat_neighbors.iter_mut().zip(m) {
                *a += b;
            }
        }
    }
}

/// How `X⁰` is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    Zeros,
    /// Independent `N(0, scale²)` entries per agent.
    Gaussian { scale: f64 },
    /// One `N(0, scale²)` draw shared by every agent.
    Identical { scale: f64 },
    /// Rows given verbatim.
    Explicit { x: Vec<Vec<f64>> },
}

/// Initial surrogate `X̂⁰`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateInit {
    /// `X̂⁰ = X⁰`, so the first message carries a zero difference.
    #[default]
    Primal,
    Zero,
}

fn gaussian_row(d: usize, scale: f64, stream: RngStream) -> Vec<f64> {
    let mut rng = stream.rng();
    (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Builds `X⁰`, sets `X̂⁰ = X⁰` and `λ̃⁰ = 0`.
pub fn init_state(obj: &dyn Objective, graph: &Graph, init: &InitMode, seed: u64) -> Result<Vec<AgentState>> {
    let (n, d) = (graph.n(), obj.dim());
    if obj.num_agents() != n {
        return Err(Error::Dimension {
            expected: n,
            got: obj.num_agents(),
        });
    }
    let x: Vec<Vec<f64>> = match init {
        InitMode::Zeros => vec![vec![0.0; d]; n],
        InitMode::Gaussian { scale } => (0..n)
            .map(|i| gaussian_row(d, *scale, RngStream::new(seed, i, 0, Purpose::Init)))
            .collect(),
        InitMode::Identical { scale } => {
            vec![gaussian_row(d, *scale, RngStream::new(seed, 0, 0, Purpose::Init)); n]
        }
        InitMode::Explicit { x } => {
            if x.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: x.len(),
                });
            }
            if let Some(r) = x.iter().find(|r| r.len() != d) {
                return Err(Error::Dimension {
                    expected: d,
                    got: r.len(),
                });
            }
            x.clone()
        }
    };
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial iterate"));
    }
    let mut agents: Vec<AgentState> = x
        .into_iter()
        .map(|x| AgentState {
            lambda: vec![0.0; d],
            xhat: x.clone(),
            xhat_neighbors: vec![0.0; d],
            mirrors: Vec::new(),
            x,
        })
        .collect();
    sync_mirrors(&mut agents, graph);
    Ok(agents)
}

/// Overwrites every surrogate and resynchronizes the neighbor copies.
pub fn set_surrogates(agents: &mut [AgentState], graph: &Graph, xhat: &[Vec<f64>]) -> Result<()> {
    if xhat.len() != agents.len() {
        return Err(Error::Dimension {
            expected: agents.len(),
            got: xhat.len(),
        });
    }
    for (a, h) in agents.iter_mut().zip(xhat) {
        if h.len() != a.x.len() {
            return Err(Error::Dimension {
                expected: a.x.len(),
                got: h.len(),
            });
        }
        a.xhat.clone_from(h);
    }
    sync_mirrors(agents, graph);
    Ok(())
}

pub(crate) fn sync_mirrors(agents: &mut [AgentState], graph: &Graph) {
    let own: Vec<Vec<f64>> = agents.iter().map(|a| a.xhat.clone()).collect();
    for (i, a) in agents.iter_mut().enumerate() {
        a.mirrors = graph.neighbors(i).iter().map(|&j| own[j].clone()).collect();
        a.refresh_aggregate();
    }
}

pub fn primal_matrix(agents: &[AgentState]) -> Vec<Vec<f64>> {
    agents.iter().map(|a| a.x.clone()).collect()
}
