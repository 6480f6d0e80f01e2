//! Network topologies and combination matrices.
//!
//! Neighborhoods always contain the node itself, so every adjacency matrix
//! carries a true diagonal. Combination matrices are stored with the
//! convention `entries[(l, k)] = a_{lk}`: the weight node `k` assigns to
//! neighbor `l`. Columns sum to one.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Undirected connected graph with forced self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    n_agents: usize,
    adjacency: Vec<Vec<bool>>,
}

impl NetworkTopology {
    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn is_linked(&self, l: usize, k: usize) -> bool {
        self.adjacency[l][k]
    }

    pub fn adjacency(&self) -> &[Vec<bool>] {
        &self.adjacency
    }

    /// Neighborhood of `k`, including `k`.
    pub fn neighbors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[k]
            .iter()
            .enumerate()
            .filter_map(|(l, &linked)| linked.then_some(l))
    }

    /// Cardinality of the neighborhood of `k` (self included).
    pub fn neighborhood_size(&self, k: usize) -> usize {
        self.neighbors(k).count()
    }

    /// Undirected edges `(u, v)` with `u < v`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for u in 0..self.n_agents {
            for v in (u + 1)..self.n_agents {
                if self.adjacency[u][v] {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Mean number of neighbors, self excluded.
    pub fn average_degree(&self) -> f64 {
        2.0 * self.edges().len() as f64 / self.n_agents as f64
    }

    /// Parses the plain-text fixture format: node count on the first line,
    /// then one `u v` edge per line. Blank lines and `#` comments are skipped.
    pub fn from_fixture_str(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("topology fixture is empty".into()))?;
        let n_agents: usize = header
            .parse()
            .map_err(|_| Error::Config(format!("bad node count line {header:?}")))?;
        let mut edges = Vec::new();
        for line in lines {
            let mut parts = line.split_whitespace();
            let (Some(u), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Config(format!("bad edge line {line:?}")));
            };
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad node index {s:?}")))
            };
            edges.push((parse(u)?, parse(v)?));
        }
        build_topology(n_agents, &edges)
    }

    pub fn from_fixture_file(path: &Path) -> Result<Self> {
        Self::from_fixture_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_fixture_string(&self) -> String {
        let mut out = format!("{}\n", self.n_agents);
        for (u, v) in self.edges() {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }
}

/// Builds a symmetric topology with self-loops and verifies connectivity.
pub fn build_topology(n_agents: usize, edges: &[(usize, usize)]) -> Result<NetworkTopology> {
    if n_agents == 0 {
        return Err(Error::InvalidInput("a network needs at least one agent".into()));
    }
    let mut adjacency = vec![vec![false; n_agents]; n_agents];
    for (k, row) in adjacency.iter_mut().enumerate() {
        row[k] = true;
    }
    for &(u, v) in edges {
        for index in [u, v] {
            if index >= n_agents {
                return Err(Error::IndexOutOfRange { index, n_agents });
            }
        }
        adjacency[u][v] = true;
        adjacency[v][u] = true;
    }
    let unreachable = unreachable_from_zero(&adjacency);
    if !unreachable.is_empty() {
        return Err(Error::Disconnected { unreachable });
    }
    Ok(NetworkTopology { n_agents, adjacency })
}

fn unreachable_from_zero(adjacency: &[Vec<bool>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if adjacency[u][v] && !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    (0..n).filter(|&v| !seen[v]).collect()
}

/// Connects every pair of points closer than `radius`. Points are arbitrary
/// dimension; fails if the resulting graph is disconnected.
pub fn geometric_topology(points: &[Vec<f64>], radius: f64) -> Result<NetworkTopology> {
    let mut edges = Vec::new();
    for u in 0..points.len() {
        for v in (u + 1)..points.len() {
            let d2: f64 = points[u]
                .iter()
                .zip(&points[v])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d2 < radius * radius {
                edges.push((u, v));
            }
        }
    }
    build_topology(points.len(), &edges)
}

/// Random geometric graph in the unit square; redraws until connected.
pub fn random_geometric_topology<R: Rng + ?Sized>(
    n_agents: usize,
    radius: f64,
    rng: &mut R,
    max_attempts: usize,
) -> Result<NetworkTopology> {
    let mut last_err = Error::InvalidInput("max_attempts must be positive".into());
    for _ in 0..max_attempts {
        let points: Vec<Vec<f64>> = (0..n_agents)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        match geometric_topology(&points, radius) {
            Ok(t) => return Ok(t),
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

/// The 12-agent validation network shipped with the crate.
pub fn validation_fixture() -> NetworkTopology {
    NetworkTopology::from_fixture_str(include_str!("../fixtures/topology12.txt"))
        .expect("bundled topology fixture is valid")
}

/// Left-stochastic combination weights `a_{lk}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix {
    entries: DMatrix<f64>,
    doubly_stochastic: bool,
}

impl CombinationMatrix {
    /// Validates a user-supplied matrix against a topology.
    pub fn new(entries: DMatrix<f64>, topology: &NetworkTopology) -> Result<Self> {
        let n = topology.n_agents();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "combination matrix is {}x{}, topology has {n} agents",
                entries.nrows(),
                entries.ncols()
            )));
        }
        for l in 0..n {
            for k in 0..n {
                let a = entries[(l, k)];
                if a < 0.0 || !a.is_finite() {
                    return Err(Error::InvalidInput(format!("a[{l}][{k}] = {a} is negative")));
                }
                if a != 0.0 && !topology.is_linked(l, k) {
                    return Err(Error::InvalidInput(format!(
                        "a[{l}][{k}] = {a} but {l} is not a neighbor of {k}"
                    )));
                }
            }
        }
        for k in 0..n {
            let s = entries.column(k).sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidInput(format!("column {k} sums to {s}")));
            }
        }
        Ok(Self::from_checked(entries))
    }

    fn from_checked(entries: DMatrix<f64>) -> Self {
        let doubly_stochastic = (0..entries.nrows())
            .all(|l| (entries.row(l).sum() - 1.0).abs() <= STOCHASTIC_TOL);
        Self { entries, doubly_stochastic }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn weight(&self, l: usize, k: usize) -> f64 {
        self.entries[(l, k)]
    }

    pub fn n_agents(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_doubly_stochastic(&self) -> bool {
        self.doubly_stochastic
    }

    pub fn is_identity(&self) -> bool {
        let n = self.n_agents();
        (0..n).all(|l| (0..n).all(|k| self.entries[(l, k)] == if l == k { 1.0 } else { 0.0 }))
    }
}

/// `a_{lk} = 1/|N_k|` for `l` in the neighborhood of `k`.
pub fn uniform_combination(topology: &NetworkTopology) -> CombinationMatrix {
    let n = topology.n_agents();
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n {
        let w = 1.0 / topology.neighborhood_size(k) as f64;
        for l in topology.neighbors(k) {
            a[(l, k)] = w;
        }
    }
    CombinationMatrix::from_checked(a)
}

/// Metropolis rule: `a_{lk} = 1/max(|N_k|, |N_l|)` off the diagonal, the
/// diagonal absorbing the remainder. Symmetric, hence doubly stochastic.
pub fn metropolis_combination(topology: &NetworkTopology) -> CombinationMatrix {
    let n = topology.n_agents();
    let sizes: Vec<usize> = (0..n).map(|k| topology.neighborhood_size(k)).collect();
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut off = 0.0;
        for l in topology.neighbors(k).filter(|&l| l != k) {
            let w = 1.0 / sizes[k].max(sizes[l]) as f64;
            a[(l, k)] = w;
            off += w;
        }
        a[(k, k)] = 1.0 - off;
    }
    CombinationMatrix::from_checked(a)
}

/// No cooperation.
pub fn identity_combination(n_agents: usize) -> CombinationMatrix {
    CombinationMatrix::from_checked(DMatrix::identity(n_agents, n_agents))
}
