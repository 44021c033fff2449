use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algorithms::AlgorithmConfig;
use crate::compression::{Purpose, RngStream};
use crate::objectives::{
    least_squares, load_idx, logistic_regression, partition_by_label, quadratic_consensus, two_layer_mlp,
    Dataset, Objective, PartitionMode,
};
use crate::topology::GraphSpec;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// A complete, reproducible experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    /// Master seed; fills in every run that does not set its own.
    #[serde(default)]
    pub seed: u64,
    pub graph: GraphSpec,
    pub objective: ObjectiveSpec,
    pub runs: Vec<AlgorithmConfig>,
    /// Record every `stride` iterations. Defaults to 1, or 10 when `T > 10⁴`.
    #[serde(default)]
    pub stride: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Free weight `a` of the potential column.
    #[serde(default = "one")]
    pub potential_a: f64,
    /// Parameter grid used by `sweep`: key → values.
    #[serde(default)]
    pub sweep: Option<BTreeMap<String, Vec<f64>>>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.runs.is_empty() {
            return Err(Error::Config("no runs configured".into()));
        }
        if self.stride == Some(0) {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if !(self.potential_a > 0.0 && self.potential_a.is_finite()) {
            return Err(Error::Config("potential_a must be positive".into()));
        }
        let mut names: Vec<String> = (0..self.runs.len()).map(|i| self.run_name(i)).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate run name {:?}", w[0])));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("experiment")
    }

    /// File-safe label of run `i`.
    pub fn run_name(&self, i: usize) -> String {
        match &self.runs[i].name {
            Some(n) => n.clone(),
            None => format!("{:02}_{}", i, self.runs[i].algorithm.name()),
        }
    }

    pub fn stride_for(&self, run: &AlgorithmConfig) -> usize {
        self.stride
            .unwrap_or(if run.iterations > 10_000 { 10 } else { 1 })
    }

    /// Run `i` with the master seed filled in.
    pub fn resolved_run(&self, i: usize) -> AlgorithmConfig {
        let mut r = self.runs[i].clone();
        r.seed.get_or_insert(self.seed);
        r.name = Some(self.run_name(i));
        r
    }
}

/// Objective selection, keyed by `"objective"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "objective", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// Explicit `centers`, or `dim` random centers with entries `N(0, scale²)`.
    Quadratic {
        #[serde(default)]
        centers: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        dim: Option<usize>,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Explicit `a` (row-major per agent) and `b`, or random `rows × dim` blocks.
    LeastSquares {
        #[serde(default)]
        a: Option<Vec<Vec<Vec<f64>>>>,
        #[serde(default)]
        b: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        dim: Option<usize>,
        #[serde(default)]
        rows: Option<usize>,
    },
    Logistic {
        data: DataSpec,
        #[serde(default)]
        partition: PartitionMode,
        #[serde(default)]
        l2: f64,
        #[serde(default = "yes")]
        bias: bool,
    },
    Mlp {
        data: DataSpec,
        #[serde(default)]
        partition: PartitionMode,
        hidden: usize,
        #[serde(default)]
        smoothness: Option<f64>,
        #[serde(default)]
        bias: bool,
    },
}

impl ObjectiveSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ObjectiveSpec::Quadratic { .. } => "quadratic",
            ObjectiveSpec::LeastSquares { .. } => "least_squares",
            ObjectiveSpec::Logistic { .. } => "logistic",
            ObjectiveSpec::Mlp { .. } => "mlp",
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, ObjectiveSpec::Mlp { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// Synthetic clusters; the last `test_per_class` samples of each class
    /// form the held-out set.
    GaussianMixture {
        classes: usize,
        per_class: usize,
        dim: usize,
        #[serde(default = "one")]
        separation: f64,
        #[serde(default = "one")]
        noise: f64,
        #[serde(default)]
        test_per_class: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// IDX image/label files. Relative paths resolve against the config file.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        limit: Option<usize>,
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
}

impl DataSpec {
    /// Training set and optional held-out set.
    pub fn load(&self, seed: u64, base: &Path) -> Result<(Dataset, Option<Dataset>)> {
        match self {
            DataSpec::GaussianMixture {
                classes,
                per_class,
                dim,
                separation,
                noise,
                test_per_class,
                seed: own,
            } => {
                let all = Dataset::gaussian_mixture(
                    *classes,
                    per_class + test_per_class,
                    *dim,
                    *separation,
                    *noise,
                    own.unwrap_or(seed),
                )?;
                let split = classes * per_class;
                let train: Vec<usize> = (0..split).collect();
                let test: Vec<usize> = (split..all.len()).collect();
                let test = (!test.is_empty()).then(|| all.select(&test));
                Ok((all.select(&train), test))
            }
            DataSpec::Idx {
                images,
                labels,
                limit,
                test_images,
                test_labels,
                test_limit,
            } => {
                let train = truncate(load_idx(&base.join(images), &base.join(labels))?, *limit);
                let test = match (test_images, test_labels) {
                    (Some(i), Some(l)) => Some(truncate(load_idx(&base.join(i), &base.join(l))?, *test_limit)),
                    (None, None) => None,
                    _ => return Err(Error::Config("test_images and test_labels go together".into())),
                };
                Ok((train, test))
            }
        }
    }
}

fn truncate(d: Dataset, limit: Option<usize>) -> Dataset {
    match limit {
        Some(m) if m < d.len() => d.select(&(0..m).collect::<Vec<_>>()),
        _ => d,
    }
}

/// A built objective plus the held-out set for accuracy, if any.
pub struct Problem {
    pub objective: Box<dyn Objective>,
    pub test_set: Option<Dataset>,
}

fn gaussian_rows(rows: usize, cols: usize, scale: f64, stream: RngStream) -> Vec<Vec<f64>> {
    let mut rng = stream.rng();
    (0..rows)
        .map(|_| (0..cols).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

impl ObjectiveSpec {
    /// Builds the objective for `n` agents. `base` anchors relative data paths.
    pub fn build(&self, n: usize, seed: u64, base: &Path) -> Result<Problem> {
        let objective: Box<dyn Objective> = match self {
            ObjectiveSpec::Quadratic { centers, dim, scale } => {
                let c = match (centers, dim) {
                    (Some(c), None) => c.clone(),
                    (None, Some(d)) => (0..n)
                        .map(|i| gaussian_rows(1, *d, *scale, RngStream::new(seed, i, 0, Purpose::Data)).remove(0))
                        .collect(),
                    _ => return Err(Error::Config("quadratic needs exactly one of centers, dim".into())),
                };
                if c.len() != n {
                    return Err(Error::Config(format!("{} centers for {n} agents", c.len())));
                }
                Box::new(quadratic_consensus(c)?)
            }
            ObjectiveSpec::LeastSquares { a, b, dim, rows } => {
                let (am, bv): (Vec<DMatrix<f64>>, Vec<DVector<f64>>) = match (a, b, dim, rows) {
                    (Some(a), Some(b), None, None) => {
                        let mut am = Vec::new();
                        for m in a {
                            let r = m.len();
                            let c = m.first().map_or(0, Vec::len);
                            if m.iter().any(|row| row.len() != c) {
                                return Err(Error::Config("ragged least-squares matrix".into()));
                            }
                            am.push(DMatrix::from_row_iterator(r, c, m.iter().flatten().copied()));
                        }
                        (am, b.iter().map(|v| DVector::from_column_slice(v)).collect())
                    }
                    (None, None, Some(d), Some(r)) => (0..n)
                        .map(|i| {
                            let s = RngStream::new(seed, i, 0, Purpose::Data);
                            let a = gaussian_rows(*r, *d, 1.0 / (*r as f64).sqrt(), s);
                            let b = gaussian_rows(1, *r, 1.0, s.with_sub(1)).remove(0);
                            (
                                DMatrix::from_row_iterator(*r, *d, a.into_iter().flatten()),
                                DVector::from_vec(b),
                            )
                        })
                        .unzip(),
                    _ => {
                        return Err(Error::Config(
                            "least_squares needs either (a, b) or (dim, rows)".into(),
                        ))
                    }
                };
                if am.len() != n {
                    return Err(Error::Config(format!("{} blocks for {n} agents", am.len())));
                }
                Box::new(least_squares(am, bv)?)
            }
            ObjectiveSpec::Logistic {
                data,
                partition,
                l2,
                bias,
            } => {
                let (train, test) = data.load(seed, base)?;
                let (train, test) = with_bias(train, test, *bias);
                let part = partition_by_label(train.labels(), n, *partition)?;
                let obj = logistic_regression(&train, &part, *l2)?;
                return Ok(Problem {
                    objective: Box::new(obj),
                    test_set: test,
                });
            }
            ObjectiveSpec::Mlp {
                data,
                partition,
                hidden,
                smoothness,
                bias,
            } => {
                let (train, test) = data.load(seed, base)?;
                let (train, test) = with_bias(train, test, *bias);
                let part = partition_by_label(train.labels(), n, *partition)?;
                let obj = two_layer_mlp((train.dim(), *hidden, train.classes()), &train, &part, *smoothness)?;
                return Ok(Problem {
                    objective: Box::new(obj),
                    test_set: test,
                });
            }
        };
        Ok(Problem {
            objective,
            test_set: None,
        })
    }
}

fn with_bias(train: Dataset, test: Option<Dataset>, bias: bool) -> (Dataset, Option<Dataset>) {
    if bias {
        (train.with_bias(), test.map(|t| t.with_bias()))
    } else {
        (train, test)
    }
}
