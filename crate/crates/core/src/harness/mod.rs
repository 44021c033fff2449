//! Experiment orchestration: config loading, runs, sweeps, checks and
//! comparisons, with CSV and JSON persistence.
//!
//! Output layout for a run or sweep directory:
//!
//! ```text
//! <out>/config.json      resolved config
//! <out>/manifest.json    hashes, status and final metrics per run
//! <out>/<run>.csv        one row per recorded iteration
//! ```

mod check;
mod compare;
mod config;
mod record;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

pub use check::{check, CheckItem, CheckReport, CheckSpec};
pub use compare::{compare, Comparison};
pub use config::{DataSpec, ExperimentConfig, ObjectiveSpec, Problem, SCHEMA_VERSION};
pub use record::{hash_json, read_csv, rows_to_csv, write_atomic, Manifest, ManifestRun, RunRecord, RunStatus};

use crate::algorithms::{AlgorithmConfig, AlgorithmKind, Simulation};
use crate::diagnostics::{theorem_constants, MetricsContext};
use crate::topology::{spectral_info, Graph, GraphSpec};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub stride: Option<usize>,
    pub threads: Option<usize>,
}

/// Keys a sweep grid may vary.
pub const SWEEP_KEYS: [&str; 6] = ["alpha_tilde", "theta", "eta", "gamma", "stepsize", "gossip"];

/// A validated experiment with its graph and objective built, ready to run.
/// Nothing has been written to disk yet.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub graph: Graph,
    pub problem: Problem,
    pub runs: Vec<AlgorithmConfig>,
    pub out_dir: PathBuf,
    sweep: bool,
    threads: usize,
}

#[derive(Serialize)]
struct ProblemKey<'a> {
    graph: &'a GraphSpec,
    objective: &'a ObjectiveSpec,
    seed: u64,
}

fn apply_overrides(mut cfg: ExperimentConfig, ov: &Overrides) -> ExperimentConfig {
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(s) = ov.stride {
        cfg.stride = Some(s);
    }
    if let Some(t) = ov.threads {
        for r in &mut cfg.runs {
            r.threads = t;
        }
    }
    cfg
}

fn build(cfg: ExperimentConfig, ov: &Overrides, base: &Path, runs: Vec<AlgorithmConfig>, sweep: bool) -> Result<Prepared> {
    cfg.validate()?;
    let graph = cfg.graph.build()?;
    let problem = cfg.objective.build(graph.n(), cfg.seed, base)?;
    for r in &runs {
        Simulation::new(r.clone(), problem.objective.as_ref(), &graph)
            .map_err(|e| Error::Config(format!("run {}: {e}", r.name.as_deref().unwrap_or("?"))))?;
    }
    let out_dir = ov
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.name()));
    Ok(Prepared {
        graph,
        problem,
        runs,
        out_dir,
        sweep,
        threads: ov.threads.unwrap_or(1).max(1),
        config: cfg,
    })
}

/// Validates `cfg` and builds everything a plain run needs.
pub fn prepare(cfg: ExperimentConfig, ov: &Overrides, base: &Path) -> Result<Prepared> {
    let cfg = apply_overrides(cfg, ov);
    cfg.validate()?;
    let runs = (0..cfg.runs.len()).map(|i| cfg.resolved_run(i)).collect();
    build(cfg, ov, base, runs, false)
}

/// Expands the config's `sweep` grid over every configured run.
pub fn prepare_sweep(cfg: ExperimentConfig, ov: &Overrides, base: &Path) -> Result<Prepared> {
    let cfg = apply_overrides(cfg, ov);
    cfg.validate()?;
    let grid = cfg
        .sweep
        .clone()
        .filter(|g| !g.is_empty())
        .ok_or_else(|| Error::Config("sweep needs a non-empty \"sweep\" grid".into()))?;
    for (k, vals) in &grid {
        if !SWEEP_KEYS.contains(&k.as_str()) {
            return Err(Error::Config(format!("cannot sweep over {k:?}; allowed: {SWEEP_KEYS:?}")));
        }
        if vals.is_empty() {
            return Err(Error::Config(format!("sweep key {k:?} has no values")));
        }
    }
    let mut cells = Vec::new();
    for i in 0..cfg.runs.len() {
        let base_run = cfg.resolved_run(i);
        for point in grid_points(&grid) {
            cells.push(grid_cell(&base_run, &point)?);
        }
    }
    build(cfg, ov, base, cells, true)
}

fn grid_points(grid: &BTreeMap<String, Vec<f64>>) -> Vec<Vec<(String, f64)>> {
    let mut points: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for (k, vals) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push((k.clone(), v));
                    q
                })
            })
            .collect();
    }
    points
}

fn grid_cell(base: &AlgorithmConfig, point: &[(String, f64)]) -> Result<AlgorithmConfig> {
    let mut value = serde_json::to_value(base)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::Config("run config is not an object".into()))?;
    let mut name = base.name.clone().unwrap_or_default();
    for (k, v) in point {
        obj.insert(k.clone(), serde_json::json!(v));
        write!(name, "__{k}={v}").expect("writing to a String");
    }
    obj.insert("name".into(), serde_json::json!(name));
    serde_json::from_value(value).map_err(|e| Error::Config(format!("sweep cell {name}: {e}")))
}

/// Results of [`Prepared::execute`].
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub records: Vec<RunRecord>,
}

impl ExperimentOutput {
    pub fn any_diverged(&self) -> bool {
        self.records.iter().any(|r| matches!(r.status, RunStatus::Diverged { .. }))
    }

    pub fn exit_code(&self) -> i32 {
        if self.any_diverged() {
            EXIT_DIVERGED
        } else {
            EXIT_OK
        }
    }

    /// One line per run.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            let status = match r.status {
                RunStatus::Completed => "completed".to_string(),
                RunStatus::Diverged { t } => format!("diverged at t={t}"),
            };
            write!(s, "{}: {status}", r.name).unwrap();
            if let Some(m) = r.last() {
                write!(
                    s,
                    " t={} grad_norm_avg={:.3e} consensus_err={:.3e} loss_max={:.6} bits={}",
                    m.t, m.grad_norm_avg, m.consensus_err, m.loss_max, m.bits_cum
                )
                .unwrap();
                match m.lyapunov {
                    Some(f) => write!(s, " lyapunov: {f:.3e}").unwrap(),
                    None => s.push_str(" lyapunov: n/a"),
                }
                if let Some(a) = m.test_acc {
                    write!(s, " test_acc={a:.4}").unwrap();
                }
            }
            s.push('\n');
        }
        if !self.manifest.best.is_empty() {
            s.push_str("best per algorithm:\n");
            for b in &self.manifest.best {
                writeln!(s, "  {b}").unwrap();
            }
        }
        s
    }
}

impl Prepared {
    fn metrics_context(&self, sim: &Simulation<'_>) -> Result<MetricsContext<'_>> {
        let obj = self.problem.objective.as_ref();
        let potential = match (sim.steps(), obj.f_star()) {
            (Some(steps), Some(_)) => {
                let spec = spectral_info(&self.graph)?;
                let delta = if sim.config().algorithm == AlgorithmKind::ExactPd {
                    1.0
                } else {
                    sim.compressor().certified_delta()
                };
                let c = theorem_constants(
                    delta,
                    steps.eta,
                    spec.rho1,
                    spec.rho2,
                    obj.smoothness(),
                    self.graph.n(),
                    spec.m,
                    self.config.potential_a,
                )?;
                Some((spec, c))
            }
            _ => None,
        };
        Ok(MetricsContext {
            potential,
            test_set: self.problem.test_set.as_ref(),
        })
    }

    /// Runs one configuration and collects its rows in memory.
    pub fn run_one(&self, run: &AlgorithmConfig) -> Result<RunRecord> {
        let obj = self.problem.objective.as_ref();
        let stride = self.config.stride_for(run);
        let mut sim = Simulation::new(run.clone(), obj, &self.graph)?;
        let ctx = self.metrics_context(&sim)?;
        let mut rows = Vec::with_capacity(run.iterations / stride + 1);
        let outcome = sim.run(|s| {
            if s.t() % stride == 0 {
                rows.push(ctx.row(s)?);
            }
            Ok(())
        })?;
        Ok(RunRecord {
            name: run.name.clone().unwrap_or_else(|| run.algorithm.name().into()),
            config: run.clone(),
            rows,
            status: match outcome.diverged_at {
                None => RunStatus::Completed,
                Some(t) => RunStatus::Diverged { t },
            },
            bits_cum: outcome.bits_cum,
        })
    }

    pub fn problem_hash(&self) -> Result<String> {
        hash_json(&ProblemKey {
            graph: &self.config.graph,
            objective: &self.config.objective,
            seed: self.config.seed,
        })
    }

    /// Runs everything, then writes CSVs, the resolved config and the manifest.
    pub fn execute(&self) -> Result<ExperimentOutput> {
        let records: Vec<RunRecord> = if self.sweep && self.threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.threads)
                .build()
                .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?;
            pool.install(|| self.runs.par_iter().map(|r| self.run_one(r)).collect::<Result<_>>())?
        } else {
            self.runs.iter().map(|r| self.run_one(r)).collect::<Result<_>>()?
        };

        let dir = &self.out_dir;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut hashed = self.config.clone();
        for r in &mut hashed.runs {
            r.threads = 1;
        }
        let mut manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            name: self.config.name().to_string(),
            config_hash: hash_json(&hashed)?,
            problem_hash: self.problem_hash()?,
            runs: Vec::with_capacity(records.len()),
            best: Vec::new(),
        };
        for rec in &records {
            let csv = PathBuf::from(format!("{}.csv", rec.name));
            write_atomic(&dir.join(&csv), &rec.to_csv()?)?;
            manifest.runs.push(ManifestRun {
                name: rec.name.clone(),
                csv,
                rows: rec.rows.len(),
                status: rec.status,
                bits_cum: rec.bits_cum,
                config: rec.config.clone(),
                final_metrics: rec.last().cloned(),
            });
        }
        if self.sweep {
            manifest.best = best_per_algorithm(&records);
        }
        let mut cfg_json = serde_json::to_vec_pretty(&self.config)?;
        cfg_json.push(b'\n');
        write_atomic(&dir.join("config.json"), &cfg_json)?;
        write_atomic(&dir.join("manifest.json"), &manifest.to_json()?)?;
        Ok(ExperimentOutput {
            dir: dir.clone(),
            manifest,
            records,
        })
    }
}

/// Names of the completed cells with the smallest final gradient norm, one
/// per algorithm, formatted as `algorithm: cell (value)`.
fn best_per_algorithm(records: &[RunRecord]) -> Vec<String> {
    let mut best: BTreeMap<&str, (&str, f64)> = BTreeMap::new();
    for r in records {
        let Some(last) = r.last() else { continue };
        if r.status != RunStatus::Completed || !last.grad_norm_avg.is_finite() {
            continue;
        }
        let alg = r.config.algorithm.name();
        match best.get(alg) {
            Some((_, g)) if *g <= last.grad_norm_avg => {}
            _ => {
                best.insert(alg, (&r.name, last.grad_norm_avg));
            }
        }
    }
    best.into_iter()
        .map(|(alg, (name, g))| format!("{alg}: {name} ({g:e})"))
        .collect()
}

/// Loads, runs and persists a config file.
pub fn run_file(path: &Path, ov: &Overrides) -> Result<ExperimentOutput> {
    let cfg = ExperimentConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    prepare(cfg, ov, base)?.execute()
}
