use super::exec::Exec;
use super::state::AgentState;
use crate::compression::{decode, Compressor, Purpose, RngStream};
use crate::objectives::Objective;
use crate::topology::Graph;
use crate::{Error, Result};

/// Metropolis mixing matrix `W_ij = 1/(1 + max(deg_i, deg_j))` on edges,
/// `W_ii = 1 − Σ_j W_ij`. Stored sparsely, neighbors in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixing {
    pub self_weight: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
}

pub fn metropolis_weights(graph: &Graph) -> Mixing {
    let deg = graph.degrees();
    let weights: Vec<Vec<f64>> = (0..graph.n())
        .map(|i| {
            graph
                .neighbors(i)
                .iter()
                .map(|&j| 1.0 / (1 + deg[i].max(deg[j])) as f64)
                .collect()
        })
        .collect();
    let self_weight = weights.iter().map(|w| 1.0 - w.iter().sum::<f64>()).collect();
    Mixing { self_weight, weights }
}

impl Mixing {
    pub fn to_dense(&self, graph: &Graph) -> Vec<Vec<f64>> {
        let n = graph.n();
        let mut w = vec![vec![0.0; n]; n];
        for i in 0..n {
            w[i][i] = self.self_weight[i];
            for (&j, &v) in graph.neighbors(i).iter().zip(&self.weights[i]) {
                w[i][j] = v;
            }
        }
        w
    }
}

/// `X_i ← W_ii X_i + Σ_j W_ij Y_j − s∇f_i(X_i)`, where `Y_j` is what agent
/// `j` sent: its exact iterate for plain DGD, `Q(X_j)` for the quantized
/// variant. Returns the total bits sent.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dgd_step(
    exec: &Exec,
    agents: &mut [AgentState],
    graph: &Graph,
    obj: &dyn Objective,
    mixing: &Mixing,
    stepsize: f64,
    compressor: Option<&Compressor>,
    seed: u64,
    t: usize,
) -> Result<u64> {
    let d = obj.dim();
    let (sent, bits): (Vec<Vec<f64>>, u64) = match compressor {
        None => (
            agents.iter().map(|a| a.x.clone()).collect(),
            Compressor::identity(d).message_bits(),
        ),
        Some(c) => {
            let msgs = exec
                .map(agents, |i, a| {
                    let m = c.encode_stream(&a.x, RngStream::new(seed, i, t, Purpose::DirectQuantize))?;
                    Ok::<_, Error>((decode(&m)?, m.bit_length))
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            let bits = msgs.first().map_or(0, |m| m.1);
            (msgs.into_iter().map(|m| m.0).collect(), bits)
        }
    };
    exec.map(agents, |i, a| {
        let mut g = vec![0.0; d];
        obj.local_grad(i, &a.x, &mut g);
        let wii = mixing.self_weight[i];
        let mut finite = true;
        for k in 0..d {
            let mut mix = wii * a.x[k];
            for (&j, &w) in graph.neighbors(i).iter().zip(&mixing.weights[i]) {
                mix += w * sent[j][k];
            }
            let v = mix - stepsize * g[k];
            finite &= v.is_finite();
            a.x[k] = v;
        }
        if finite {
            Ok(())
        } else {
            Err(Error::Diverged { t })
        }
    })
    .into_iter()
    .collect::<Result<()>>()?;
    Ok(bits * graph.directed_edges() as u64)
}

/// Gradient plus gossip on the surrogates:
/// `X_i ← X_i − s∇f_i(X_i) + g Σ_j W_ij (X̂_j − X̂_i)`.
pub(crate) fn choco_primal_step(
    exec: &Exec,
    agents: &mut [AgentState],
    obj: &dyn Objective,
    mixing: &Mixing,
    stepsize: f64,
    gossip: f64,
    t: usize,
) -> Result<()> {
    exec.map(agents, |i, a| {
        let d = a.x.len();
        let mut g = vec![0.0; d];
        obj.local_grad(i, &a.x, &mut g);
        let mut finite = true;
        for k in 0..d {
            let mut mix = 0.0;
            for (m, &w) in a.mirrors.iter().zip(&mixing.weights[i]) {
                mix += w * (m[k] - a.xhat[k]);
            }
            let v = a.x[k] - stepsize * g[k] + gossip * mix;
            finite &= v.is_finite();
            a.x[k] = v;
        }
        if finite {
            Ok(())
        } else {
            Err(Error::Diverged { t })
        }
    })
    .into_iter()
    .collect()
}
