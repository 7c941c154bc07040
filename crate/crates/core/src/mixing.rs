//! Random strongly connected digraphs and their column-stochastic mixing
//! matrices.
//!
//! Edge `(i, j)` means agent `j` sends to agent `i`; indices are 0-based.
//! Self-loops are implicit and never stored.

use std::collections::BTreeSet;
use std::ops::Deref;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::induced_pi_norm;
use crate::seeding::stream;

pub const MAX_GRAPH_ATTEMPTS: u32 = 100;
pub const PERRON_TOL: f64 = 1e-12;
pub const PERRON_MAX_ITERS: usize = 100_000;

/// Tolerance used when revalidating a loaded or constructed network.
const INVARIANT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectedGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl DirectedGraph {
    /// Builds a graph and checks the edge invariants and strong connectivity.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("graph needs at least one vertex"));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::invalid(format!("edge ({i},{j}) out of range for n={n}")));
            }
            if i == j {
                return Err(Error::invalid(format!("explicit self-loop ({i},{i})")));
            }
            if !set.insert((i, j)) {
                return Err(Error::invalid(format!("duplicate edge ({i},{j})")));
            }
        }
        let g = Self { n, edges: set };
        if !g.is_strongly_connected() {
            return Err(Error::invalid("graph is not strongly connected"));
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i == j || self.edges.contains(&(i, j))
    }

    /// Forward reachability from vertex 0 plus reachability of vertex 0.
    pub fn is_strongly_connected(&self) -> bool {
        strongly_connected(self.n, &self.edges)
    }
}

fn strongly_connected(n: usize, edges: &BTreeSet<(usize, usize)>) -> bool {
    let mut forward = vec![Vec::new(); n];
    let mut backward = vec![Vec::new(); n];
    for &(i, j) in edges {
        forward[j].push(i);
        backward[i].push(j);
    }
    reaches_all(&forward) && reaches_all(&backward)
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Samples each off-diagonal arc independently with probability `p`,
/// rejecting graphs that are not strongly connected.
///
/// Attempt `a` draws from the stream seeded with `seed + a`, so the result
/// is a pure function of `(n, p, seed)`.
pub fn generate_digraph(n: usize, p: f64, seed: u64) -> Result<DirectedGraph> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid(format!("edge probability {p} outside (0, 1]")));
    }
    for attempt in 0..MAX_GRAPH_ATTEMPTS {
        let mut rng = stream(seed.wrapping_add(attempt as u64));
        let mut edges = BTreeSet::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen::<f64>() < p {
                    edges.insert((i, j));
                }
            }
        }
        if strongly_connected(n, &edges) {
            return Ok(DirectedGraph { n, edges });
        }
    }
    Err(Error::FailedConnectivity {
        n,
        p,
        attempts: MAX_GRAPH_ATTEMPTS,
    })
}

/// Positive right eigenvector of `W` for eigenvalue 1, normalized to sum 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PerronVector(Vec<f64>);

impl PerronVector {
    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `Σ_k 1/π_k`.
    pub fn inverse_sum(&self) -> f64 {
        self.0.iter().map(|p| 1.0 / p).sum()
    }
}

impl Deref for PerronVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Power iteration on `W` from the uniform vector, renormalizing to unit
/// sum each step, until `‖Wπ − π‖_∞ ≤ tol`.
pub fn compute_perron(w: &DMatrix<f64>, tol: f64) -> Result<PerronVector> {
    compute_perron_with_limit(w, tol, PERRON_MAX_ITERS)
}

pub fn compute_perron_with_limit(
    w: &DMatrix<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<PerronVector> {
    let n = w.nrows();
    if n == 0 || w.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: w.ncols(),
        });
    }
    let mut pi = nalgebra::DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..max_iters {
        let next = w * &pi;
        let residual = (&next - &pi).amax();
        if residual <= tol {
            return finish_perron(polish(w, pi, residual));
        }
        let s = next.sum();
        pi = next / s;
    }
    Err(Error::NoConvergence {
        what: "Perron power iteration",
        iterations: max_iters,
    })
}

/// Keeps iterating past `tol` while the residual still shrinks, so that
/// `1/(nπ_j)` is accurate to rounding rather than to `tol`.
fn polish(w: &DMatrix<f64>, mut pi: nalgebra::DVector<f64>, mut residual: f64) -> nalgebra::DVector<f64> {
    for _ in 0..200 {
        let next = w * &pi;
        let s = next.sum();
        let next = next / s;
        let r = (w * &next - &next).amax();
        if !(r < residual) {
            break;
        }
        pi = next;
        residual = r;
    }
    pi
}

fn finish_perron(pi: nalgebra::DVector<f64>) -> Result<PerronVector> {
    if pi.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::invalid("Perron vector has a non-positive entry"));
    }
    let s = pi.sum();
    Ok(PerronVector(pi.iter().map(|p| p / s).collect()))
}

/// A directed graph with its mixing matrix and spectral objects.
#[derive(Clone, Debug)]
pub struct MixingNetwork {
    graph: DirectedGraph,
    w: DMatrix<f64>,
    pi: PerronVector,
    w_inf: DMatrix<f64>,
    rho: f64,
}

/// `W_ij = 1/(|N_j|+1)` for `i ∈ N_j ∪ {j}`, with `N_j` the out-neighbours of `j`.
pub fn uniform_weights(g: &DirectedGraph) -> DMatrix<f64> {
    let n = g.n();
    let mut out_deg = vec![0usize; n];
    for (_, j) in g.edges() {
        out_deg[j] += 1;
    }
    let mut w = DMatrix::zeros(n, n);
    for j in 0..n {
        w[(j, j)] = 1.0 / (out_deg[j] + 1) as f64;
    }
    for (i, j) in g.edges() {
        w[(i, j)] = 1.0 / (out_deg[j] + 1) as f64;
    }
    w
}

pub fn build_mixing_matrix(g: &DirectedGraph) -> Result<MixingNetwork> {
    MixingNetwork::from_weights(g.clone(), uniform_weights(g))
}

/// Induced π-norm of `W − W^∞`.
pub fn compute_rho(net: &MixingNetwork) -> Result<f64> {
    induced_pi_norm(&(&net.w - &net.w_inf), &net.pi)
}

impl MixingNetwork {
    /// Accepts an arbitrary weight matrix consistent with `g` and computes
    /// π, `W^∞` and ρ.
    pub fn from_weights(graph: DirectedGraph, w: DMatrix<f64>) -> Result<Self> {
        check_weights(&graph, &w)?;
        let pi = compute_perron(&w, PERRON_TOL)?;
        let n = graph.n();
        let w_inf = DMatrix::from_fn(n, n, |i, _| pi[i]);
        let mut net = Self {
            graph,
            w,
            pi,
            w_inf,
            rho: 0.0,
        };
        net.rho = compute_rho(&net)?;
        net.validate()?;
        Ok(net)
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn pi(&self) -> &PerronVector {
        &self.pi
    }

    pub fn w_inf(&self) -> &DMatrix<f64> {
        &self.w_inf
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn pi_min(&self) -> f64 {
        self.pi.min()
    }

    /// Checks every structural and spectral invariant.
    pub fn validate(&self) -> Result<()> {
        check_weights(&self.graph, &self.w)?;
        let n = self.n();
        let pi = &self.pi;
        if pi.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: pi.len(),
            });
        }
        if pi.iter().any(|&p| !(p > 0.0)) || (pi.iter().sum::<f64>() - 1.0).abs() > INVARIANT_TOL {
            return Err(Error::invalid("π must be positive and sum to 1"));
        }
        for i in 0..n {
            let wp: f64 = (0..n).map(|j| self.w[(i, j)] * pi[j]).sum();
            if (wp - pi[i]).abs() > INVARIANT_TOL {
                return Err(Error::invalid(format!("Wπ ≠ π at row {i}")));
            }
            if (0..n).any(|j| self.w_inf[(i, j)] != pi[i]) {
                return Err(Error::invalid("W^∞ columns must equal π"));
            }
        }
        if !(self.rho >= 0.0 && self.rho < 1.0) {
            return Err(Error::invalid(format!("ρ = {} outside [0, 1)", self.rho)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> NetworkFile {
        NetworkFile {
            n: self.n(),
            edges: self.graph.edges().map(|(i, j)| [i, j]).collect(),
            w: row_major(&self.w),
            pi: self.pi.to_vec(),
            rho: self.rho,
        }
    }

    /// Loads a network file, recomputing π and ρ and revalidating all
    /// invariants. Stored π and ρ must agree with the recomputed values.
    pub fn from_json(file: &NetworkFile) -> Result<Self> {
        let n = file.n;
        if file.w.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: file.w.len(),
            });
        }
        let graph = DirectedGraph::new(n, file.edges.iter().map(|e| (e[0], e[1])))?;
        let w = DMatrix::from_row_slice(n, n, &file.w);
        let net = Self::from_weights(graph, w)?;
        if file.pi.len() != n
            || file
                .pi
                .iter()
                .zip(net.pi.iter())
                .any(|(a, b)| (a - b).abs() > 1e-10)
        {
            return Err(Error::invalid("stored π disagrees with recomputed Perron vector"));
        }
        if (file.rho - net.rho).abs() > 1e-10 {
            return Err(Error::invalid("stored ρ disagrees with recomputed value"));
        }
        Ok(net)
    }
}

fn check_weights(g: &DirectedGraph, w: &DMatrix<f64>) -> Result<()> {
    let n = g.n();
    if w.nrows() != n || w.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: w.nrows(),
        });
    }
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..n {
            let x = w[(i, j)];
            if !x.is_finite() || x < 0.0 {
                return Err(Error::invalid(format!("W[{i},{j}] = {x} is negative")));
            }
            if (x > 0.0) != g.contains(i, j) {
                return Err(Error::invalid(format!(
                    "W[{i},{j}] sparsity does not match the edge set"
                )));
            }
            col += x;
        }
        if (col - 1.0).abs() > INVARIANT_TOL {
            return Err(Error::invalid(format!("column {j} of W sums to {col}")));
        }
    }
    Ok(())
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// On-disk network: `W` is row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(rename = "W")]
    pub w: Vec<f64>,
    pub pi: Vec<f64>,
    pub rho: f64,
}
