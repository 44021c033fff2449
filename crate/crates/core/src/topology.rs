//! Communication graphs, their oriented incidence operator and the Laplacian
//! spectrum the step-size rules depend on.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Redraws attempted before an Erdős–Rényi spec is declared disconnected.
pub const RANDOM_GRAPH_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Ring,
    Path,
    Complete,
    Star,
    ErdosRenyi,
    /// Explicit edge list in [`GraphSpec::edges`].
    Custom,
}

/// Graph description as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub kind: GraphKind,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(usize, usize)>>,
}

impl GraphSpec {
    pub fn new(kind: GraphKind, n: usize) -> Self {
        GraphSpec {
            kind,
            n,
            p: None,
            seed: None,
            edges: None,
        }
    }

    pub fn build(&self) -> Result<Graph> {
        match self.kind {
            GraphKind::Custom => Graph::from_edges(self.n, self.custom_edges()?),
            kind => build_graph(kind, self.n, self.p, self.seed),
        }
    }

    /// Like [`GraphSpec::build`] but keeps disconnected results, taking a
    /// single draw for random kinds.
    pub fn build_unchecked(&self) -> Result<Graph> {
        match self.kind {
            GraphKind::Custom => Graph::from_edges_unchecked(self.n, self.custom_edges()?),
            GraphKind::ErdosRenyi => {
                let p = self.p.ok_or_else(|| Error::InvalidGraph("erdos_renyi needs p".into()))?;
                erdos_renyi_draw(self.n, p, self.seed.unwrap_or(0))
            }
            kind => build_graph(kind, self.n, self.p, self.seed),
        }
    }

    fn custom_edges(&self) -> Result<&[(usize, usize)]> {
        self.edges
            .as_deref()
            .ok_or_else(|| Error::InvalidGraph("custom graph needs an edge list".into()))
    }
}

/// Undirected simple graph. Edges are stored as `(i, j)` with `i < j`, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list and rejects self-loops, out-of-range
    /// endpoints, duplicates and disconnected results.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let g = Self::from_edges_unchecked(n, edges)?;
        if !g.is_connected() {
            return Err(Error::Disconnected(format!(
                "{} nodes, {} edges",
                g.n,
                g.edges.len()
            )));
        }
        Ok(g)
    }

    /// Same validation as [`Graph::from_edges`] minus the connectivity check.
    /// Used by diagnostics that need to report on disconnected draws.
    pub fn from_edges_unchecked(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!("need at least 2 nodes, got {n}")));
        }
        let mut norm = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) out of range for n = {n}")));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        let before = norm.len();
        norm.dedup();
        if norm.len() != before {
            return Err(Error::InvalidGraph("duplicate edge".into()));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &norm {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Ok(Graph {
            n,
            edges: norm,
            neighbors,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Sorted neighbour list of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    /// Sorted neighbour lists for every node.
    pub fn neighbor_sets(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    /// Number of directed transmissions per communication round.
    pub fn directed_edges(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &self.neighbors[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n
    }

    pub fn incidence(&self) -> IncidenceOperator {
        IncidenceOperator {
            n: self.n,
            edges: self.edges.clone(),
        }
    }

    /// Integer Laplacian `D - Adj`.
    pub fn laplacian(&self) -> DMatrix<i64> {
        let mut l = DMatrix::<i64>::zeros(self.n, self.n);
        for (i, nb) in self.neighbors.iter().enumerate() {
            l[(i, i)] = nb.len() as i64;
            for &j in nb {
                l[(i, j)] = -1;
            }
        }
        l
    }

    /// Applies the Laplacian to one scalar per node as `Σ_j (x_i − x_j)`,
    /// which is exactly zero on constant vectors.
    pub fn laplacian_apply(&self, x: &[f64]) -> Vec<f64> {
        self.neighbors
            .iter()
            .enumerate()
            .map(|(i, nb)| nb.iter().map(|&j| x[i] - x[j]).sum())
            .collect()
    }
}

/// Oriented edge-node incidence matrix: row `e = (i, j)` with `i < j` has `+1`
/// in column `i` and `-1` in column `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidenceOperator {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl IncidenceOperator {
    pub fn rows(&self) -> usize {
        self.edges.len()
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn to_dense(&self) -> DMatrix<i64> {
        let mut a = DMatrix::<i64>::zeros(self.edges.len(), self.n);
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            a[(e, i)] = 1;
            a[(e, j)] = -1;
        }
        a
    }

    /// `AᵀA` in exact integer arithmetic.
    pub fn gram(&self) -> DMatrix<i64> {
        let a = self.to_dense();
        a.transpose() * a
    }

    /// `A x` for one scalar per node.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.edges.iter().map(|&(i, j)| x[i] - x[j]).collect()
    }

    /// `Aᵀ y` for one scalar per edge.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (&(i, j), &v) in self.edges.iter().zip(y) {
            out[i] += v;
            out[j] -= v;
        }
        out
    }
}

/// Spectral constants of `AᵀA`.
#[derive(Debug, Clone)]
pub struct SpectralInfo {
    /// Largest Laplacian eigenvalue.
    pub rho1: f64,
    /// Smallest nonzero Laplacian eigenvalue (algebraic connectivity).
    pub rho2: f64,
    /// Spectral norm of the Laplacian; equals `rho1`.
    pub m: f64,
    /// All eigenvalues in ascending order.
    pub eigenvalues: Vec<f64>,
    /// Dense Moore-Penrose pseudoinverse of the Laplacian.
    pub laplacian_pinv: DMatrix<f64>,
}

impl SpectralInfo {
    /// `vᵀ Q v` summed over coordinates, where `v` holds one `d`-vector per
    /// node and `Q` is the pseudoinverse acting per coordinate.
    pub fn pinv_quadratic_form(&self, v: &[Vec<f64>]) -> f64 {
        let n = v.len();
        let d = v.first().map_or(0, Vec::len);
        let q = &self.laplacian_pinv;
        let mut total = 0.0;
        for k in 0..d {
            for i in 0..n {
                let mut row = 0.0;
                for j in 0..n {
                    row += q[(i, j)] * v[j][k];
                }
                total += v[i][k] * row;
            }
        }
        total
    }
}

fn zero_tolerance(max_eig: f64) -> f64 {
    1e-9 * max_eig.max(1.0)
}

/// Ascending Laplacian eigenvalues; does not require connectivity.
pub fn laplacian_eigenvalues(g: &Graph) -> Vec<f64> {
    let l = g.laplacian().map(|v| v as f64);
    let mut ev: Vec<f64> = SymmetricEigen::new(l).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn spectral_info(g: &Graph) -> Result<SpectralInfo> {
    let l = g.laplacian().map(|v| v as f64);
    let eig = SymmetricEigen::new(l);
    let n = g.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let rho1 = eigenvalues[n - 1];
    let tol = zero_tolerance(rho1);
    let zeros = eigenvalues.iter().filter(|&&v| v.abs() <= tol).count();
    if zeros != 1 {
        return Err(Error::Disconnected(format!(
            "Laplacian has {zeros} zero eigenvalues"
        )));
    }
    let rho2 = eigenvalues[1];

    let mut pinv = DMatrix::<f64>::zeros(n, n);
    for &k in &order[1..] {
        let u = eig.eigenvectors.column(k);
        let inv = 1.0 / eig.eigenvalues[k];
        for i in 0..n {
            for j in 0..n {
                pinv[(i, j)] += inv * u[i] * u[j];
            }
        }
    }

    Ok(SpectralInfo {
        rho1,
        rho2,
        m: rho1,
        eigenvalues,
        laplacian_pinv: pinv,
    })
}

fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One Erdős–Rényi draw, possibly disconnected.
pub fn erdos_renyi_draw(n: usize, p: f64, seed: u64) -> Result<Graph> {
    let mut rng = seeded(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges_unchecked(n, &edges)
}

pub fn build_graph(kind: GraphKind, n: usize, p: Option<f64>, seed: Option<u64>) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidGraph(format!("need at least 2 nodes, got {n}")));
    }
    let edges: Vec<(usize, usize)> = match kind {
        GraphKind::Ring if n == 2 => vec![(0, 1)],
        GraphKind::Ring => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        GraphKind::Path => (0..n - 1).map(|i| (i, i + 1)).collect(),
        GraphKind::Complete => (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect(),
        GraphKind::Star => (1..n).map(|j| (0, j)).collect(),
        GraphKind::ErdosRenyi => {
            let p = p.ok_or_else(|| Error::InvalidGraph("erdos_renyi needs p".into()))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidGraph(format!("p = {p} outside [0, 1]")));
            }
            let base = seed.unwrap_or(0);
            for attempt in 0..RANDOM_GRAPH_RETRIES as u64 {
                let g = erdos_renyi_draw(n, p, base.wrapping_add(attempt))?;
                if g.is_connected() {
                    return Ok(g);
                }
            }
            return Err(Error::Disconnected(format!(
                "no connected Erdős–Rényi draw (n = {n}, p = {p}) in {RANDOM_GRAPH_RETRIES} attempts"
            )));
        }
        GraphKind::Custom => {
            return Err(Error::InvalidGraph("custom graphs are built from GraphSpec::edges".into()))
        }
    };
    Graph::from_edges(n, &edges)
}
