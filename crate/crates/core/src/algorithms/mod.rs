//! Decentralized solvers.
//!
//! [`Simulation`] drives one of five methods over a [`Graph`]:
//!
//! * `ticopd`: compressed primal-dual iteration with surrogate tracking,
//! * `exact_pd`: the same primal-dual recursion with uncompressed exchange,
//! * `dgd`: decentralized gradient descent with Metropolis mixing,
//! * `dgd_quantized`: DGD that mixes directly quantized neighbor iterates,
//! * `choco`: gradient step plus error-feedback gossip on surrogates.
//!
//! Every round is barrier-synchronized: agents read the previous round's
//! state, then commit. Randomness is keyed per `(seed, agent, iteration)`,
//! so results do not depend on the number of worker threads.

mod baselines;
mod exec;
mod state;
mod steps;
mod ticopd;

use serde::{Deserialize, Serialize};

pub use baselines::{metropolis_weights, Mixing};
pub use state::{init_state, primal_matrix, set_surrogates, AgentState, InitMode, SurrogateInit};
pub use steps::{compute_stepsizes, StepSizes};
pub use ticopd::{aggregate_messages, deliver, primal_dual_step, surrogate_update, SurrogateMessage};

use crate::compression::{Compressor, CompressorKind, Purpose, RngStream};
use crate::diagnostics::round_bits;
use crate::objectives::Objective;
use crate::topology::{spectral_info, Graph};
use crate::{Error, Result};
use exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Ticopd,
    ExactPd,
    Dgd,
    DgdQuantized,
    Choco,
}

impl AlgorithmKind {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Ticopd => "ticopd",
            AlgorithmKind::ExactPd => "exact_pd",
            AlgorithmKind::Dgd => "dgd",
            AlgorithmKind::DgdQuantized => "dgd_quantized",
            AlgorithmKind::Choco => "choco",
        }
    }

    pub fn is_primal_dual(self) -> bool {
        matches!(self, AlgorithmKind::Ticopd | AlgorithmKind::ExactPd)
    }
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    /// Label used for output files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub algorithm: AlgorithmKind,
    #[serde(default)]
    pub alpha_tilde: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    /// Dual step; defaults to the compressor's certified `δ`.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "one")]
    pub gamma: f64,
    /// Gradient step for `dgd`, `dgd_quantized` and `choco`.
    #[serde(default)]
    pub stepsize: Option<f64>,
    /// Gossip step for `choco`.
    #[serde(default = "one")]
    pub gossip: f64,
    #[serde(default)]
    pub compressor: CompressorKind,
    #[serde(default = "one_usize")]
    pub inner_steps: usize,
    #[serde(rename = "T")]
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub init: InitMode,
    #[serde(default)]
    pub surrogate_init: SurrogateInit,
    #[serde(default = "one_usize")]
    pub threads: usize,
}

impl AlgorithmConfig {
    pub fn new(algorithm: AlgorithmKind, iterations: usize) -> Self {
        AlgorithmConfig {
            name: None,
            algorithm,
            alpha_tilde: None,
            theta: None,
            eta: None,
            gamma: 1.0,
            stepsize: None,
            gossip: 1.0,
            compressor: CompressorKind::Identity,
            inner_steps: 1,
            iterations,
            seed: None,
            init: InitMode::Zeros,
            surrogate_init: SurrogateInit::Primal,
            threads: 1,
        }
    }

    pub fn primal_dual(mut self, alpha_tilde: f64, theta: f64, eta: Option<f64>) -> Self {
        self.alpha_tilde = Some(alpha_tilde);
        self.theta = Some(theta);
        self.eta = eta;
        self
    }

    pub fn with_stepsize(mut self, stepsize: f64) -> Self {
        self.stepsize = Some(stepsize);
        self
    }

    pub fn with_compressor(mut self, kind: CompressorKind) -> Self {
        self.compressor = kind;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_init(mut self, init: InitMode) -> Self {
        self.init = init;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub iterations: usize,
    /// Iteration at which a non-finite value appeared, if any.
    pub diverged_at: Option<usize>,
    pub bits_cum: u64,
}

enum Method {
    PrimalDual { steps: StepSizes, exact: bool },
    Dgd { mixing: Mixing, stepsize: f64, quantized: bool },
    Choco { mixing: Mixing, stepsize: f64 },
}

/// A configured run, advanced one round at a time.
pub struct Simulation<'a> {
    config: AlgorithmConfig,
    obj: &'a dyn Objective,
    graph: &'a Graph,
    compressor: Compressor,
    method: Method,
    agents: Vec<AgentState>,
    t: usize,
    bits_cum: u64,
    exec: Exec,
}

fn positive(name: &str, v: Option<f64>) -> Result<f64> {
    match v {
        Some(v) if v > 0.0 && v.is_finite() => Ok(v),
        Some(v) => Err(Error::StepSizes(format!("{name} must be positive, got {v}"))),
        None => Err(Error::StepSizes(format!("{name} is required"))),
    }
}

impl<'a> Simulation<'a> {
    pub fn new(config: AlgorithmConfig, obj: &'a dyn Objective, graph: &'a Graph) -> Result<Self> {
        if obj.num_agents() != graph.n() {
            return Err(Error::Dimension {
                expected: graph.n(),
                got: obj.num_agents(),
            });
        }
        if config.inner_steps == 0 {
            return Err(Error::StepSizes("inner_steps must be at least 1".into()));
        }
        if !(config.gamma > 0.0 && config.gamma <= 1.0) {
            return Err(Error::StepSizes(format!("gamma must lie in (0, 1], got {}", config.gamma)));
        }
        let compressor = Compressor::new(config.compressor, obj.dim())?;
        let method = match config.algorithm {
            AlgorithmKind::Ticopd | AlgorithmKind::ExactPd => {
                let exact = config.algorithm == AlgorithmKind::ExactPd;
                let delta = if exact { 1.0 } else { compressor.certified_delta() };
                let spec = spectral_info(graph)?;
                let steps = compute_stepsizes(
                    positive("alpha_tilde", config.alpha_tilde)?,
                    positive("theta", config.theta)?,
                    config.eta.unwrap_or(delta),
                    config.gamma,
                    spec.m,
                )?;
                Method::PrimalDual { steps, exact }
            }
            AlgorithmKind::Dgd | AlgorithmKind::DgdQuantized => Method::Dgd {
                mixing: metropolis_weights(graph),
                stepsize: positive("stepsize", config.stepsize)?,
                quantized: config.algorithm == AlgorithmKind::DgdQuantized,
            },
            AlgorithmKind::Choco => {
                if !(config.gossip > 0.0 && config.gossip <= 1.0) {
                    return Err(Error::StepSizes(format!("gossip must lie in (0, 1], got {}", config.gossip)));
                }
                Method::Choco {
                    mixing: metropolis_weights(graph),
                    stepsize: positive("stepsize", config.stepsize)?,
                }
            }
        };
        let mut agents = init_state(obj, graph, &config.init, config.seed())?;
        if config.surrogate_init == SurrogateInit::Zero {
            let zeros = vec![vec![0.0; obj.dim()]; graph.n()];
            set_surrogates(&mut agents, graph, &zeros)?;
        }
        let exec = Exec::with_threads(config.threads)?;
        Ok(Simulation {
            config,
            obj,
            graph,
            compressor,
            method,
            agents,
            t: 0,
            bits_cum: 0,
            exec,
        })
    }

    pub fn config(&self) -> &AlgorithmConfig {
        &self.config
    }

    pub fn objective(&self) -> &'a dyn Objective {
        self.obj
    }

    pub fn graph(&self) -> &'a Graph {
        self.graph
    }

    pub fn compressor(&self) -> &Compressor {
        &self.compressor
    }

    /// Primal-dual step sizes, for `ticopd` and `exact_pd`.
    pub fn steps(&self) -> Option<&StepSizes> {
        match &self.method {
            Method::PrimalDual { steps, .. } => Some(steps),
            _ => None,
        }
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    /// Number of completed rounds.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Bits sent over all directed links so far.
    pub fn bits_cum(&self) -> u64 {
        self.bits_cum
    }

    /// One round of messages and updates. On error the state may be partly
    /// updated and the simulation should not be advanced further.
    pub fn step(&mut self) -> Result<()> {
        let t = self.t;
        let seed = self.config.seed();
        let gamma = self.config.gamma;
        match &self.method {
            Method::PrimalDual { steps, exact: false } => {
                for k in 0..self.config.inner_steps {
                    let msgs = ticopd::surrogate_update_in(&self.exec, &mut self.agents, &self.compressor, gamma, |i| {
                        RngStream::new(seed, i, t, Purpose::Surrogate).with_sub(k as u32)
                    })?;
                    let bits: Vec<u64> = msgs.iter().map(SurrogateMessage::bit_length).collect();
                    self.bits_cum += round_bits(self.graph, &bits);
                    let inbox = deliver(self.graph, &msgs);
                    ticopd::aggregate_messages_in(&self.exec, &mut self.agents, self.graph, &inbox, gamma)?;
                }
                ticopd::primal_dual_step_in(&self.exec, &mut self.agents, self.obj, steps, t)?;
            }
            Method::PrimalDual { steps, exact: true } => {
                for a in self.agents.iter_mut() {
                    a.xhat.clone_from(&a.x);
                }
                state::sync_mirrors(&mut self.agents, self.graph);
                self.bits_cum += Compressor::identity(self.obj.dim()).message_bits() * self.graph.directed_edges() as u64;
                ticopd::primal_dual_step_in(&self.exec, &mut self.agents, self.obj, steps, t)?;
            }
            Method::Dgd {
                mixing,
                stepsize,
                quantized,
            } => {
                let c = quantized.then_some(&self.compressor);
                self.bits_cum += baselines::dgd_step(
                    &self.exec,
                    &mut self.agents,
                    self.graph,
                    self.obj,
                    mixing,
                    *stepsize,
                    c,
                    seed,
                    t,
                )?;
            }
            Method::Choco { mixing, stepsize } => {
                baselines::choco_primal_step(&self.exec, &mut self.agents, self.obj, mixing, *stepsize, self.config.gossip, t)?;
                let msgs = ticopd::surrogate_update_in(&self.exec, &mut self.agents, &self.compressor, gamma, |i| {
                    RngStream::new(seed, i, t, Purpose::Surrogate)
                })?;
                let bits: Vec<u64> = msgs.iter().map(SurrogateMessage::bit_length).collect();
                self.bits_cum += round_bits(self.graph, &bits);
                let inbox = deliver(self.graph, &msgs);
                ticopd::aggregate_messages_in(&self.exec, &mut self.agents, self.graph, &inbox, gamma)?;
            }
        }
        self.t += 1;
        Ok(())
    }

    /// Runs the configured number of rounds. `observe` sees the initial state
    /// and the state after every round. A non-finite iterate stops the run and
    /// is reported in the outcome rather than as an error.
    pub fn run<F>(&mut self, mut observe: F) -> Result<RunOutcome>
    where
        F: FnMut(&Simulation<'a>) -> Result<()>,
    {
        observe(self)?;
        let mut diverged_at = None;
        while self.t < self.config.iterations {
            match self.step() {
                Ok(()) => observe(self)?,
                Err(Error::Diverged { .. } | Error::NonFinite(_)) => {
                    diverged_at = Some(self.t + 1);
                    log::warn!("{} diverged at iteration {}", self.config.algorithm.name(), self.t + 1);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(RunOutcome {
            iterations: self.t,
            diverged_at,
            bits_cum: self.bits_cum,
        })
    }
}

/// Builds and runs a simulation in one call.
pub fn run<F>(config: AlgorithmConfig, obj: &dyn Objective, graph: &Graph, observe: F) -> Result<RunOutcome>
where
    F: FnMut(&Simulation<'_>) -> Result<()>,
{
    let mut sim = Simulation::new(config, obj, graph)?;
    sim.run(observe)
}

fn run_as<F>(kind: AlgorithmKind, mut config: AlgorithmConfig, obj: &dyn Objective, graph: &Graph, observe: F) -> Result<RunOutcome>
where
    F: FnMut(&Simulation<'_>) -> Result<()>,
{
    config.algorithm = kind;
    run(config, obj, graph, observe)
}

pub fn run_ticopd<F>(config: AlgorithmConfig, obj: &dyn Objective, graph: &Graph, observe: F) -> Result<RunOutcome>
where
    F: FnMut(&Simulation<'_>) -> Result<()>,
{
    run_as(AlgorithmKind::Ticopd, config, obj, graph, observe)
}

pub fn run_exact_pd<F>(config: AlgorithmConfig, obj: &dyn Objective, graph: &Graph, observe: F) -> Result<RunOutcome>
where
    F: FnMut(&Simulation<'_>) -> Result<()>,
{
    run_as(AlgorithmKind::ExactPd, config, obj, graph, observe)
}

pub fn run_dgd<F>(config: AlgorithmConfig, obj: &dyn Objective, graph: &Graph, observe: F) -> Result<RunOutcome>
where
    F: FnMut(&Simulation<'_>) -> Result<()>,
{
    run_as(AlgorithmKind::Dgd, config, obj, graph, observe)
}

pub fn run_dgd_quantized<F>(config: AlgorithmConfig, obj: &dyn Objective, graph: &Graph, observe: F) -> Result<RunOutcome>
where
    F: FnMut(&Simulation<'_>) -> Result<()>,
{
    run_as(AlgorithmKind::DgdQuantized, config, obj, graph, observe)
}

pub fn run_choco<F>(config: AlgorithmConfig, obj: &dyn Objective, graph: &Graph, observe: F) -> Result<RunOutcome>
where
    F: FnMut(&Simulation<'_>) -> Result<()>,
{
    run_as(AlgorithmKind::Choco, config, obj, graph, observe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::quadratic_consensus;
    use crate::topology::{build_graph, GraphKind};

    fn path2() -> Graph {
        build_graph(GraphKind::Path, 2, None, None).unwrap()
    }

    #[test]
    fn hand_primal_dual_step() {
        let g = path2();
        let obj = quadratic_consensus(vec![vec![0.0], vec![2.0]]).unwrap();
        let init = InitMode::Explicit {
            x: vec![vec![0.0], vec![2.0]],
        };
        let mut agents = init_state(&obj, &g, &init, 0).unwrap();
        let eta = 0.3;
        let steps = compute_stepsizes(0.1, 1.0, eta, 1.0, 2.0).unwrap();
        primal_dual_step(&mut agents, &obj, &steps, 0).unwrap();
        assert!((agents[0].x[0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((agents[0].lambda[0] + 2.0 * eta).abs() < 1e-15);
        assert_eq!(agents[0].lambda[0] + agents[1].lambda[0], 0.0);
    }

    #[test]
    fn stationary_point_is_fixed() {
        let g = build_graph(GraphKind::Ring, 5, None, None).unwrap();
        let obj = quadratic_consensus(vec![vec![1.0, -1.0]; 5]).unwrap();
        let mut agents = init_state(&obj, &g, &InitMode::Explicit { x: vec![vec![1.0, -1.0]; 5] }, 0).unwrap();
        let before = agents.clone();
        let steps = compute_stepsizes(0.5, 2.0, 1.0, 1.0, 4.0).unwrap();
        primal_dual_step(&mut agents, &obj, &steps, 0).unwrap();
        assert_eq!(agents, before);
    }

    #[test]
    fn consensus_error_at_init() {
        let g = path2();
        let obj = quadratic_consensus(vec![vec![0.0], vec![2.0]]).unwrap();
        let a = init_state(&obj, &g, &InitMode::Explicit { x: vec![vec![1.0], vec![3.0]] }, 0).unwrap();
        let xbar = (a[0].x[0] + a[1].x[0]) / 2.0;
        let err: f64 = a.iter().map(|s| (s.x[0] - xbar).powi(2)).sum();
        assert_eq!(err, 2.0);

        let obj = quadratic_consensus(vec![vec![0.0; 3]; 4]).unwrap();
        let g = build_graph(GraphKind::Ring, 4, None, None).unwrap();
        for init in [InitMode::Zeros, InitMode::Identical { scale: 2.0 }] {
            let a = init_state(&obj, &g, &init, 7).unwrap();
            assert!(a.iter().all(|s| s.x == a[0].x && s.xhat == s.x && s.lambda == vec![0.0; 3]));
        }
    }

    #[test]
    fn identity_surrogate_is_exact() {
        let g = build_graph(GraphKind::Ring, 4, None, None).unwrap();
        let obj = quadratic_consensus(vec![vec![0.0; 3]; 4]).unwrap();
        let mut a = init_state(&obj, &g, &InitMode::Gaussian { scale: 1.0 }, 3).unwrap();
        set_surrogates(&mut a, &g, &vec![vec![0.0; 3]; 4]).unwrap();
        let c = Compressor::identity(3);
        let msgs = surrogate_update(&mut a, &c, 1.0, |i| RngStream::new(0, i, 0, Purpose::Surrogate)).unwrap();
        assert!(a.iter().all(|s| s.xhat == s.x));
        aggregate_messages(&mut a, &g, &deliver(&g, &msgs), 1.0).unwrap();
        for i in 0..4 {
            let mut expected = vec![0.0; 3];
            for &j in g.neighbors(i) {
                for k in 0..3 {
                    expected[k] += a[j].x[k];
                }
            }
            assert_eq!(a[i].xhat_neighbors, expected);
        }
    }

    #[test]
    fn zero_difference_messages_change_nothing() {
        let g = build_graph(GraphKind::Ring, 4, None, None).unwrap();
        let obj = quadratic_consensus(vec![vec![0.0; 8]; 4]).unwrap();
        let mut a = init_state(&obj, &g, &InitMode::Gaussian { scale: 1.0 }, 3).unwrap();
        let before = a.clone();
        let c = Compressor::new(CompressorKind::Qsgd { s: 4 }, 8).unwrap();
        let msgs = surrogate_update(&mut a, &c, 1.0, |i| RngStream::new(0, i, 0, Purpose::Surrogate)).unwrap();
        for m in &msgs {
            assert_eq!(crate::compression::decode(m.encoded()).unwrap(), vec![0.0; 8]);
        }
        aggregate_messages(&mut a, &g, &deliver(&g, &msgs), 1.0).unwrap();
        assert_eq!(a, before);
    }

    #[test]
    fn delivery_must_be_exact() {
        let g = build_graph(GraphKind::Ring, 4, None, None).unwrap();
        let obj = quadratic_consensus(vec![vec![0.0; 2]; 4]).unwrap();
        let mut a = init_state(&obj, &g, &InitMode::Zeros, 0).unwrap();
        let c = Compressor::identity(2);
        let msgs = surrogate_update(&mut a, &c, 1.0, |i| RngStream::new(0, i, 0, Purpose::Surrogate)).unwrap();

        let mut inbox = deliver(&g, &msgs);
        inbox[0].pop();
        assert!(matches!(aggregate_messages(&mut a, &g, &inbox, 1.0), Err(Error::Delivery(_))));

        let mut inbox = deliver(&g, &msgs);
        let dup = inbox[0][0];
        inbox[0].push(dup);
        assert!(matches!(aggregate_messages(&mut a, &g, &inbox, 1.0), Err(Error::Delivery(_))));

        let mut inbox = deliver(&g, &msgs);
        inbox[0][0].0 = 2;
        assert!(matches!(aggregate_messages(&mut a, &g, &inbox, 1.0), Err(Error::Delivery(_))));
    }

    #[test]
    fn divergence_is_reported() {
        let g = path2();
        let obj = quadratic_consensus(vec![vec![0.0], vec![2.0]]).unwrap();
        let mut agents = init_state(&obj, &g, &InitMode::Explicit { x: vec![vec![f64::MAX], vec![-f64::MAX]] }, 0).unwrap();
        let steps = compute_stepsizes(0.1, 1.0, 1.0, 1.0, 2.0).unwrap();
        assert!(matches!(primal_dual_step(&mut agents, &obj, &steps, 4), Err(Error::Diverged { t: 4 })));

        let cfg = AlgorithmConfig::new(AlgorithmKind::Dgd, 1000)
            .with_stepsize(1e3)
            .with_init(InitMode::Gaussian { scale: 1.0 });
        let out = run(cfg, &obj, &g, |_| Ok(())).unwrap();
        assert!(out.diverged_at.is_some());
        assert!(out.iterations < 1000);
    }

    #[test]
    fn metropolis_is_doubly_stochastic() {
        for g in [
            build_graph(GraphKind::Ring, 10, None, None).unwrap(),
            build_graph(GraphKind::Star, 6, None, None).unwrap(),
            build_graph(GraphKind::ErdosRenyi, 12, Some(0.3), Some(5)).unwrap(),
        ] {
            let w = metropolis_weights(&g).to_dense(&g);
            for i in 0..g.n() {
                assert!((w[i].iter().sum::<f64>() - 1.0).abs() < 1e-15);
                for j in 0..g.n() {
                    assert_eq!(w[i][j], w[j][i]);
                    assert!(w[i][j] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = AlgorithmConfig::new(AlgorithmKind::Ticopd, 10)
            .primal_dual(0.1, 1.0, None)
            .with_compressor(CompressorKind::Qsgd { s: 4 });
        let s = serde_json::to_string(&cfg).unwrap();
        assert!(s.contains("\"T\":10"));
        let back: AlgorithmConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
        let min: AlgorithmConfig = serde_json::from_str(r#"{"algorithm": "dgd", "T": 5, "stepsize": 0.1}"#).unwrap();
        assert_eq!(min.inner_steps, 1);
        assert_eq!(min.gamma, 1.0);
    }

    #[test]
    fn missing_steps_are_config_errors() {
        let g = path2();
        let obj = quadratic_consensus(vec![vec![0.0], vec![2.0]]).unwrap();
        assert!(Simulation::new(AlgorithmConfig::new(AlgorithmKind::Ticopd, 1), &obj, &g).is_err());
        assert!(Simulation::new(AlgorithmConfig::new(AlgorithmKind::Dgd, 1), &obj, &g).is_err());
        let mut cfg = AlgorithmConfig::new(AlgorithmKind::Ticopd, 1).primal_dual(0.1, 1.0, None);
        cfg.inner_steps = 0;
        assert!(Simulation::new(cfg, &obj, &g).is_err());
    }

    #[test]
    fn default_eta_is_certified_delta() {
        let g = path2();
        let obj = quadratic_consensus(vec![vec![0.0; 16], vec![2.0; 16]]).unwrap();
        let cfg = AlgorithmConfig::new(AlgorithmKind::Ticopd, 1)
            .primal_dual(0.1, 1.0, None)
            .with_compressor(CompressorKind::Qsgd { s: 4 });
        let sim = Simulation::new(cfg, &obj, &g).unwrap();
        assert_eq!(sim.steps().unwrap().eta, sim.compressor().certified_delta());
    }
}
