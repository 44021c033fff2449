use super::exec::Exec;
use super::state::AgentState;
use super::steps::StepSizes;
use crate::compression::{decode, Compressor, EncodedMessage, RngStream};
use crate::objectives::Objective;
use crate::topology::Graph;
use crate::{Error, Result};

/// What an agent broadcasts after updating its surrogate.
///
/// `Increment` carries `ENC(X_i − X̂_i)`. A lossless compressor with `γ = 1`
/// makes the new surrogate equal `X_i`; in that case the sender ships
/// `ENC(X_i)` as a `Replace` so both ends hold `X_i` exactly instead of
/// `X̂_i + (X_i − X̂_i)`. Both variants cost the same on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SurrogateMessage {
    Increment(EncodedMessage),
    Replace(EncodedMessage),
}

impl SurrogateMessage {
    pub fn encoded(&self) -> &EncodedMessage {
        match self {
            SurrogateMessage::Increment(m) | SurrogateMessage::Replace(m) => m,
        }
    }

    pub fn bit_length(&self) -> u64 {
        self.encoded().bit_length
    }
}

fn apply(target: &mut [f64], msg: &SurrogateMessage, gamma: f64) -> Result<()> {
    let v = decode(msg.encoded())?;
    if v.len() != target.len() {
        return Err(Error::Dimension {
            expected: target.len(),
            got: v.len(),
        });
    }
    match msg {
        SurrogateMessage::Increment(_) => {
            for (t, q) in target.iter_mut().zip(&v) {
                *t += gamma * q;
            }
        }
        SurrogateMessage::Replace(_) => target.copy_from_slice(&v),
    }
    Ok(())
}

/// `X̂_i ← X̂_i + γ·Q(X_i − X̂_i)` for every agent; returns each agent's
/// outgoing message. `stream(i)` supplies agent `i`'s randomness.
pub fn surrogate_update(
    agents: &mut [AgentState],
    compressor: &Compressor,
    gamma: f64,
    stream: impl Fn(usize) -> RngStream + Sync,
) -> Result<Vec<SurrogateMessage>> {
    surrogate_update_in(&Exec::sequential(), agents, compressor, gamma, stream)
}

pub(crate) fn surrogate_update_in(
    exec: &Exec,
    agents: &mut [AgentState],
    compressor: &Compressor,
    gamma: f64,
    stream: impl Fn(usize) -> RngStream + Sync,
) -> Result<Vec<SurrogateMessage>> {
    let replace = compressor.is_lossless() && gamma == 1.0;
    exec.map(agents, |i, a| {
        let msg = if replace {
            SurrogateMessage::Replace(compressor.encode_stream(&a.x, stream(i))?)
        } else {
            let diff: Vec<f64> = a.x.iter().zip(&a.xhat).map(|(x, h)| x - h).collect();
            SurrogateMessage::Increment(compressor.encode_stream(&diff, stream(i))?)
        };
        apply(&mut a.xhat, &msg, gamma)?;
        Ok(msg)
    })
    .into_iter()
    .collect()
}

/// Routes each agent's message to all of its neighbors. `inbox[i]` lists
/// `(sender, message)` pairs in ascending sender order.
pub fn deliver<'m>(graph: &Graph, outgoing: &'m [SurrogateMessage]) -> Vec<Vec<(usize, &'m SurrogateMessage)>> {
    (0..graph.n())
        .map(|i| graph.neighbors(i).iter().map(|&j| (j, &outgoing[j])).collect())
        .collect()
}

/// Applies received messages to the neighbor copies and refreshes
/// `X̂_{i,−i}`. Each agent must receive exactly one message from each
/// neighbor and nothing else.
pub fn aggregate_messages(
    agents: &mut [AgentState],
    graph: &Graph,
    inbox: &[Vec<(usize, &SurrogateMessage)>],
    gamma: f64,
) -> Result<()> {
    aggregate_messages_in(&Exec::sequential(), agents, graph, inbox, gamma)
}

pub(crate) fn aggregate_messages_in(
    exec: &Exec,
    agents: &mut [AgentState],
    graph: &Graph,
    inbox: &[Vec<(usize, &SurrogateMessage)>],
    gamma: f64,
) -> Result<()> {
    if inbox.len() != agents.len() {
        return Err(Error::Delivery(format!(
            "{} inboxes for {} agents",
            inbox.len(),
            agents.len()
        )));
    }
    for (i, msgs) in inbox.iter().enumerate() {
        let mut senders: Vec<usize> = msgs.iter().map(|(j, _)| *j).collect();
        senders.sort_unstable();
        if let Some(w) = senders.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Delivery(format!("agent {i} got two messages from {}", w[0])));
        }
        if senders != graph.neighbors(i) {
            return Err(Error::Delivery(format!(
                "agent {i} expected messages from {:?}, got {senders:?}",
                graph.neighbors(i)
            )));
        }
    }
    exec.map(agents, |i, a| {
        for (j, msg) in &inbox[i] {
            let slot = graph
                .neighbors(i)
                .binary_search(j)
                .map_err(|_| Error::Delivery(format!("{j} is not a neighbor of {i}")))?;
            apply(&mut a.mirrors[slot], msg, gamma)?;
        }
        a.refresh_aggregate();
        Ok(())
    })
    .into_iter()
    .collect()
}

/// Simultaneous primal and dual update from the current surrogates:
///
/// `X_i ← βX_i + (1−β)X̂_i − α[∇f_i(X_i) + λ̃_i + θ(|N_i|X̂_i − X̂_{i,−i})]`,
/// `λ̃_i ← λ̃_i + η(|N_i|X̂_i − X̂_{i,−i})`.
///
/// `t` is only used to label a divergence error.
pub fn primal_dual_step(agents: &mut [AgentState], obj: &dyn Objective, steps: &StepSizes, t: usize) -> Result<()> {
    primal_dual_step_in(&Exec::sequential(), agents, obj, steps, t)
}

pub(crate) fn primal_dual_step_in(
    exec: &Exec,
    agents: &mut [AgentState],
    obj: &dyn Objective,
    steps: &StepSizes,
    t: usize,
) -> Result<()> {
    let StepSizes {
        alpha,
        beta,
        theta,
        eta,
        ..
    } = *steps;
    exec.map(agents, |i, a| {
        let deg = a.degree() as f64;
        let mut g = vec![0.0; a.x.len()];
        obj.local_grad(i, &a.x, &mut g);
        let mut finite = true;
        for k in 0..a.x.len() {
            let lap = deg * a.xhat[k] - a.xhat_neighbors[k];
            let x = beta * a.x[k] + (1.0 - beta) * a.xhat[k] - alpha * (g[k] + a.lambda[k] + theta * lap);
            let l = a.lambda[k] + eta * lap;
            finite &= x.is_finite() && l.is_finite();
            a.x[k] = x;
            a.lambda[k] = l;
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
