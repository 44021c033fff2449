use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algorithms::AlgorithmConfig;
use crate::compression::{contraction_test, Compressor, CompressorKind, Purpose, RngStream};
use crate::objectives::{finite_difference_check, smoothness_check, Objective};
use crate::topology::{laplacian_eigenvalues, GraphSpec};
use crate::Result;

use super::config::ObjectiveSpec;

fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_default().replace('"', "")
}

fn default_trials() -> usize {
    10_000
}

fn default_samples() -> usize {
    20
}

/// What `check` should examine. Unknown keys are ignored, so a full
/// experiment config is also accepted; its runs' compressors are tested at
/// the objective's dimension.
#[derive(Debug, Clone, Deserialize)]
pub struct CheckSpec {
    #[serde(default)]
    pub compressor: Option<CompressorKind>,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub graph: Option<GraphSpec>,
    #[serde(default)]
    pub objective: Option<ObjectiveSpec>,
    #[serde(default)]
    pub runs: Vec<AlgorithmConfig>,
    #[serde(default)]
    pub seed: u64,
    /// Gradient-check samples.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl CheckSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| crate::Error::Config(format!("invalid check spec: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }

    fn push(&mut self, name: impl Into<String>, pass: bool, detail: String) {
        self.items.push(CheckItem {
            name: name.into(),
            pass,
            detail,
        });
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.items {
            writeln!(f, "{} {}: {}", if i.pass { "PASS" } else { "FAIL" }, i.name, i.detail)?;
        }
        Ok(())
    }
}

fn check_compressor(report: &mut CheckReport, kind: CompressorKind, d: usize, trials: usize, seed: u64) -> Result<()> {
    let c = Compressor::new(kind, d)?;
    let r = contraction_test(&c, trials, RngStream::new(seed, 0, 0, Purpose::Contraction))?;
    report.push(
        format!("contraction {kind} d={d}"),
        r.pass,
        format!(
            "mean ratio {:.6} (se {:.2e}) vs bound (1-delta)^2 = {:.6}, delta = {:.6}, {} trials",
            r.empirical_ratio, r.standard_error, r.certified_bound, r.delta, r.trials
        ),
    );
    Ok(())
}

/// Runs every check `spec` asks for. Failed checks are reported, not
/// returned as errors; errors mean the check config itself could not be built.
pub fn check(spec: &CheckSpec, base: &Path) -> Result<CheckReport> {
    let mut report = CheckReport::default();
    let mut n_agents = 1;
    if let Some(g) = &spec.graph {
        let graph = g.build_unchecked()?;
        n_agents = graph.n();
        let ev = laplacian_eigenvalues(&graph);
        let rho1 = ev.last().copied().unwrap_or(0.0);
        let tol = 1e-9 * rho1.max(1.0);
        let zeros = ev.iter().filter(|v| v.abs() <= tol).count();
        let connected = zeros == 1;
        let rho2 = if connected { ev[1] } else { 0.0 };
        report.push(
            format!("graph {} n={}", label(&g.kind), graph.n()),
            connected,
            format!(
                "{} edges, rho1 = {rho1:.6}, rho2 = {rho2:.6}, {zeros} zero eigenvalue(s){}",
                graph.num_edges(),
                if connected { "" } else { ", disconnected" }
            ),
        );
    }
    let mut dim = spec.d;
    if let Some(o) = &spec.objective {
        let problem = o.build(n_agents, spec.seed, base)?;
        let obj: &dyn Objective = problem.objective.as_ref();
        dim = dim.or(Some(obj.dim()));
        let tol = if o.is_convex() { 1e-5 } else { 1e-4 };
        let g = finite_difference_check(
            obj,
            spec.samples,
            1.0,
            1e-6,
            tol,
            RngStream::new(spec.seed, 0, 0, Purpose::Test),
        );
        report.push(
            format!("gradient {} d={}", o.kind(), obj.dim()),
            g.pass,
            format!(
                "max relative error {:.3e} over {} samples, tolerance {:.0e}",
                g.max_relative_error, g.samples, g.tolerance
            ),
        );
        let s = smoothness_check(obj, 100, 1.0, RngStream::new(spec.seed, 0, 0, Purpose::Test).with_sub(1));
        let verified = obj.smoothness_verified();
        report.push(
            format!("smoothness {}", o.kind()),
            s.pass || !verified,
            format!(
                "max gradient ratio {:.6} vs L = {:.6} over {} pairs{}",
                s.max_ratio,
                s.smoothness,
                s.pairs,
                if verified { "" } else { " (L is configured, not proven)" }
            ),
        );
    }
    if let Some(kind) = spec.compressor {
        let d = dim.ok_or_else(|| crate::Error::Config("compressor check needs d or an objective".into()))?;
        check_compressor(&mut report, kind, d, spec.trials, spec.seed)?;
    }
    if let Some(d) = dim {
        let mut seen = Vec::new();
        for r in &spec.runs {
            if r.compressor != CompressorKind::Identity && Some(r.compressor) != spec.compressor && !seen.contains(&r.compressor) {
                seen.push(r.compressor);
                check_compressor(&mut report, r.compressor, d, spec.trials, spec.seed)?;
            }
        }
    }
    Ok(report)
}
