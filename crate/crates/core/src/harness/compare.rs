use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::diagnostics::MetricsRow;
use crate::{Error, Result};

use super::record::{Manifest, RunRecord};

/// Number of checkpoints per table.
const CHECKPOINTS: usize = 11;

/// Runs from one or more result directories aligned two ways: at equal
/// iteration counts and at equal cumulative bit budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub columns: Vec<String>,
    /// Iteration counts recorded by every run, with each run's row there.
    pub by_iteration: Vec<(usize, Vec<Option<MetricsRow>>)>,
    /// Bit budgets, with each run's last row whose `bits_cum` fits the budget.
    pub by_bits: Vec<(u64, Vec<Option<MetricsRow>>)>,
}

fn spread<T: Copy>(v: &[T]) -> Vec<T> {
    if v.len() <= CHECKPOINTS {
        return v.to_vec();
    }
    (0..CHECKPOINTS)
        .map(|k| v[k * (v.len() - 1) / (CHECKPOINTS - 1)])
        .collect()
}

fn bit_budgets(records: &[RunRecord]) -> Vec<u64> {
    let lo = records
        .iter()
        .flat_map(|r| r.rows.iter().map(|m| m.bits_cum).find(|&b| b > 0))
        .min();
    let hi = records.iter().filter_map(|r| r.last().map(|m| m.bits_cum)).max();
    let (Some(lo), Some(hi)) = (lo, hi) else {
        return Vec::new();
    };
    if lo >= hi {
        return vec![hi];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<u64> = (0..CHECKPOINTS)
        .map(|k| (a + (b - a) * k as f64 / (CHECKPOINTS - 1) as f64).exp().round() as u64)
        .collect();
    out[0] = lo;
    out[CHECKPOINTS - 1] = hi;
    out.dedup();
    out
}

/// Loads `manifest.json` from each directory and aligns all their runs.
/// Fails when the directories were produced from different problems.
pub fn compare(dirs: &[PathBuf]) -> Result<Comparison> {
    if dirs.is_empty() {
        return Err(Error::Config("compare needs at least one result directory".into()));
    }
    let mut hash: Option<String> = None;
    let mut columns = Vec::new();
    let mut records = Vec::new();
    for dir in dirs {
        let m = Manifest::load(&dir.join("manifest.json"))?;
        match &hash {
            None => hash = Some(m.problem_hash.clone()),
            Some(h) if *h != m.problem_hash => {
                return Err(Error::Config(format!(
                    "{} was produced from a different problem (problem_hash {} vs {h})",
                    dir.display(),
                    m.problem_hash
                )))
            }
            Some(_) => {}
        }
        for r in m.records(dir)? {
            columns.push(if dirs.len() > 1 {
                format!("{}/{}", label(dir), r.name)
            } else {
                r.name.clone()
            });
            records.push(r);
        }
    }

    let mut common: Vec<usize> = records[0].rows.iter().map(|m| m.t).collect();
    for r in &records[1..] {
        common.retain(|t| r.rows.iter().any(|m| m.t == *t));
    }
    let by_iteration = spread(&common)
        .into_iter()
        .map(|t| {
            let row = records
                .iter()
                .map(|r| r.rows.iter().find(|m| m.t == t).cloned())
                .collect();
            (t, row)
        })
        .collect();
    let by_bits = bit_budgets(&records)
        .into_iter()
        .map(|b| {
            let row = records
                .iter()
                .map(|r| r.rows.iter().take_while(|m| m.bits_cum <= b).last().cloned())
                .collect();
            (b, row)
        })
        .collect();
    Ok(Comparison {
        columns,
        by_iteration,
        by_bits,
    })
}

fn label(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn cell(m: &Option<MetricsRow>) -> String {
    match m {
        Some(m) => format!("{:.3e}/{:.3e}", m.grad_norm_avg, m.consensus_err),
        None => "-".into(),
    }
}

fn table<K: std::fmt::Display>(out: &mut String, key: &str, columns: &[String], rows: &[(K, Vec<Option<MetricsRow>>)]) {
    let w = columns.iter().map(String::len).max().unwrap_or(0).max(21);
    write!(out, "{key:>14}").unwrap();
    for c in columns {
        write!(out, "  {c:>w$}").unwrap();
    }
    out.push('\n');
    for (k, cells) in rows {
        write!(out, "{k:>14}").unwrap();
        for c in cells {
            write!(out, "  {:>w$}", cell(c)).unwrap();
        }
        out.push('\n');
    }
}

impl Comparison {
    /// Two plain-text tables of `grad_norm_avg/consensus_err`.
    pub fn render(&self) -> String {
        let mut s = String::from("grad_norm_avg/consensus_err at matched iterations\n");
        table(&mut s, "t", &self.columns, &self.by_iteration);
        s.push_str("\ngrad_norm_avg/consensus_err at matched bit budgets\n");
        table(&mut s, "bits", &self.columns, &self.by_bits);
        s
    }
}
