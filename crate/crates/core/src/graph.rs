//! Communication topology shared by the consensus dynamics.
//!
//! Every edge carries the same coupling gain `alpha`, so the adjacency matrix
//! has entries in `{0, alpha}` and the Laplacian is `alpha` times the
//! combinatorial Laplacian of the edge set.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph needs at least one agent")]
    Empty,
    #[error("coupling gain must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("edge ({0}, {1}) references an agent outside 0..{2}")]
    IndexOutOfRange(usize, usize, usize),
    #[error("self-loop on agent {0}")]
    SelfLoop(usize),
    #[error("graph is not connected")]
    Disconnected,
}

/// Undirected communication graph with uniform coupling gain.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    n: usize,
    alpha: f64,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Builds a graph from an unordered edge list. Duplicate edges (in either
    /// orientation) collapse into one.
    pub fn new(n: usize, edges: &[(usize, usize)], alpha: f64) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(GraphError::InvalidAlpha(alpha));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(GraphError::IndexOutOfRange(a, b, n));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &set {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            alpha,
            edges: set.into_iter().collect(),
            neighbors,
        })
    }

    /// Cycle `0-1-...-(n-1)-0`. For `n = 2` this is a single edge.
    pub fn ring(n: usize, alpha: f64) -> Result<Self, GraphError> {
        let edges: Vec<_> = if n >= 2 {
            (0..n).map(|i| (i, (i + 1) % n)).collect()
        } else {
            Vec::new()
        };
        Self::new(n, &edges, alpha)
    }

    pub fn path(n: usize, alpha: f64) -> Result<Self, GraphError> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::new(n, &edges, alpha)
    }

    pub fn full(n: usize, alpha: f64) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j));
            }
        }
        Self::new(n, &edges, alpha)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Canonical edge list, each pair ordered `(low, high)` and sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Adjacency weight `a_ij`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if self.neighbors[i].binary_search(&j).is_ok() {
            self.alpha
        } else {
            0.0
        }
    }

    /// `L = D - A` with `d_i = sum_j a_ij`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for &(a, b) in &self.edges {
            l[(a, b)] -= self.alpha;
            l[(b, a)] -= self.alpha;
            l[(a, a)] += self.alpha;
            l[(b, b)] += self.alpha;
        }
        l
    }

    /// Breadth-first reachability from agent 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }

    pub fn require_connected(&self) -> Result<(), GraphError> {
        if self.is_connected() {
            Ok(())
        } else {
            Err(GraphError::Disconnected)
        }
    }
}

/// Topology as written in scenario files: either a named family sized to the
/// bus, or an explicit edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "topology", rename_all = "lowercase")]
pub enum GraphSpec {
    Ring { alpha: f64 },
    Path { alpha: f64 },
    Full { alpha: f64 },
    Edges { alpha: f64, edges: Vec<(usize, usize)> },
}

impl Default for GraphSpec {
    fn default() -> Self {
        GraphSpec::Ring { alpha: 10.0 }
    }
}

impl GraphSpec {
    pub fn alpha(&self) -> f64 {
        match self {
            GraphSpec::Ring { alpha }
            | GraphSpec::Path { alpha }
            | GraphSpec::Full { alpha }
            | GraphSpec::Edges { alpha, .. } => *alpha,
        }
    }

    pub fn build(&self, n: usize) -> Result<CommGraph, GraphError> {
        match self {
            GraphSpec::Ring { alpha } => CommGraph::ring(n, *alpha),
            GraphSpec::Path { alpha } => CommGraph::path(n, *alpha),
            GraphSpec::Full { alpha } => CommGraph::full(n, *alpha),
            GraphSpec::Edges { alpha, edges } => CommGraph::new(n, edges, *alpha),
        }
    }
}
