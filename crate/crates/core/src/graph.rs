//! Undirected formation graphs with a fixed orientation.
//!
//! Every edge `{i, j}` is stored with `tail = min(i, j)` and `head = max(i, j)`
//! and the edge list is sorted lexicographically, which fixes the row order of
//! the incidence matrix. Downstream quantities (graph Laplacian, bearing
//! Laplacian) do not depend on the orientation.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::{kron_identity, max_eigenvalue, rank_report, RankReport};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("a formation needs at least 2 agents, got {0}")]
    TooFewVertices(usize),
    #[error("ambient dimension must be at least 2, got {0}")]
    UnsupportedDimension(usize),
    #[error("edge set is empty")]
    EmptyEdgeSet,
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(usize, usize),
    #[error("vertex {vertex} out of range 1..={n}")]
    VertexOutOfRange { vertex: usize, n: usize },
}

/// An oriented edge, 0-based vertex indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
}

impl Edge {
    /// The 1-indexed `(tail, head)` pair used in external interfaces.
    pub fn one_based(&self) -> (usize, usize) {
        (self.tail + 1, self.head + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormationGraph {
    n: usize,
    d: usize,
    edges: Vec<Edge>,
    // neighbors[i] = (j, edge id), sorted by j
    neighbors: Vec<Vec<(usize, usize)>>,
}

impl FormationGraph {
    /// Builds a graph from 1-indexed vertex pairs.
    pub fn new(n: usize, d: usize, edges: &[[usize; 2]]) -> Result<Self, GraphError> {
        if n < 2 {
            return Err(GraphError::TooFewVertices(n));
        }
        if d < 2 {
            return Err(GraphError::UnsupportedDimension(d));
        }
        if edges.is_empty() {
            return Err(GraphError::EmptyEdgeSet);
        }
        let mut set = BTreeSet::new();
        for &[a, b] in edges {
            for v in [a, b] {
                if v == 0 || v > n {
                    return Err(GraphError::VertexOutOfRange { vertex: v, n });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let e = Edge {
                tail: a.min(b) - 1,
                head: a.max(b) - 1,
            };
            if !set.insert(e) {
                return Err(GraphError::DuplicateEdge(a.min(b), a.max(b)));
            }
        }
        let edges: Vec<Edge> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            neighbors[e.tail].push((e.head, k));
            neighbors[e.head].push((e.tail, k));
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            d,
            edges,
            neighbors,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Stacked configuration length `d * n`.
    pub fn dn(&self) -> usize {
        self.d * self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// 1-indexed edge list in row order.
    pub fn edge_list(&self) -> Vec<[usize; 2]> {
        self.edges
            .iter()
            .map(|e| [e.tail + 1, e.head + 1])
            .collect()
    }

    /// Neighbors of agent `i` (0-based) as `(j, edge id)` pairs.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.neighbors[i]
    }

    /// Signed incidence matrix `H` (m x n): `-1` at the tail, `+1` at the head.
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.m(), self.n);
        for (k, e) in self.edges.iter().enumerate() {
            h[(k, e.tail)] = -1.0;
            h[(k, e.head)] = 1.0;
        }
        h
    }

    /// `H ⊗ I_d` (dm x dn).
    pub fn lifted_incidence(&self) -> DMatrix<f64> {
        kron_identity(&self.incidence_matrix(), self.d)
    }

    /// Graph Laplacian `L = H̄ᵀ H̄` (dn x dn).
    pub fn laplacian(&self) -> DMatrix<f64> {
        let hb = self.lifted_incidence();
        hb.transpose() * hb
    }

    /// `‖H̄‖²` in the spectral norm, i.e. `λ_max(L)`.
    pub fn incidence_norm_sq(&self) -> f64 {
        max_eigenvalue(&self.laplacian())
    }

    pub fn incidence_rank(&self, rel_tol: f64) -> RankReport {
        rank_report(&self.incidence_matrix(), rel_tol)
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.n];
        let mut count = 0;
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &(w, _) in &self.neighbors[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        count
    }

    pub fn has_spanning_tree(&self) -> bool {
        self.component_count() == 1
    }

    /// A forest has exactly `n - components` edges.
    pub fn is_acyclic(&self) -> bool {
        self.m() == self.n - self.component_count()
    }

    /// Same vertex set and dimension with extra 1-indexed edges appended.
    pub fn with_added_vertex(&self, new_edges: &[[usize; 2]]) -> Result<Self, GraphError> {
        let mut all = self.edge_list();
        all.extend_from_slice(new_edges);
        Self::new(self.n + 1, self.d, &all)
    }
}

/// Minimal number of edges for which a formation can have
/// `rank(L_B) = dn - d - 1`.
pub fn min_rigid_edge_count(n: usize, d: usize) -> usize {
    let (small, general) = rigid_edge_count_branches(n, d);
    small.or(general).expect("one branch always applies")
}

/// Both branches of the minimal edge count formula: the first applies for
/// `n <= d + 1`, the second for `n >= d + 1`; at `n = d + 1` both are defined.
pub fn rigid_edge_count_branches(n: usize, d: usize) -> (Option<usize>, Option<usize>) {
    assert!(
        n >= 2 && d >= 2,
        "min_rigid_edge_count needs n >= 2 and d >= 2"
    );
    let small = (n <= d + 1).then_some(n);
    let general = (n > d).then(|| {
        let q = (n - 2) / (d - 1);
        let r = (n - 2) % (d - 1);
        1 + q * d + r + usize::from(r > 0)
    });
    (small, general)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn path4() -> FormationGraph {
        FormationGraph::new(4, 2, &[[1, 2], [2, 3], [3, 4]]).unwrap()
    }

    #[test]
    fn single_edge() {
        let g = FormationGraph::new(2, 2, &[[2, 1]]).unwrap();
        assert_eq!(g.m(), 1);
        assert_eq!(g.edges()[0].one_based(), (1, 2));
        assert_eq!(
            g.incidence_matrix(),
            DMatrix::from_row_slice(1, 2, &[-1.0, 1.0])
        );
    }

    #[test]
    fn validation_errors() {
        assert_eq!(
            FormationGraph::new(4, 2, &[[1, 2], [1, 2]]),
            Err(GraphError::DuplicateEdge(1, 2))
        );
        assert_eq!(
            FormationGraph::new(4, 2, &[[1, 2], [2, 1]]),
            Err(GraphError::DuplicateEdge(1, 2))
        );
        assert_eq!(
            FormationGraph::new(4, 2, &[[3, 3]]),
            Err(GraphError::SelfLoop(3))
        );
        assert_eq!(
            FormationGraph::new(4, 2, &[[1, 5]]),
            Err(GraphError::VertexOutOfRange { vertex: 5, n: 4 })
        );
        assert_eq!(
            FormationGraph::new(4, 2, &[[0, 1]]),
            Err(GraphError::VertexOutOfRange { vertex: 0, n: 4 })
        );
        assert_eq!(
            FormationGraph::new(4, 2, &[]),
            Err(GraphError::EmptyEdgeSet)
        );
        assert_eq!(
            FormationGraph::new(1, 2, &[[1, 1]]),
            Err(GraphError::TooFewVertices(1))
        );
        assert_eq!(
            FormationGraph::new(2, 1, &[[1, 2]]),
            Err(GraphError::UnsupportedDimension(1))
        );
    }

    #[test]
    fn edges_sorted_lexicographically() {
        let g = FormationGraph::new(4, 2, &[[4, 3], [2, 1], [3, 1]]).unwrap();
        assert_eq!(g.edge_list(), vec![[1, 2], [1, 3], [3, 4]]);
    }

    #[test]
    fn path_structure() {
        let g = path4();
        assert_eq!(g.m(), 3);
        assert!(g.has_spanning_tree());
        assert!(g.is_acyclic());
        assert_eq!(g.incidence_rank(1e-9).rank, 3);
        let h = g.incidence_matrix();
        for r in 0..h.nrows() {
            assert_eq!(h.row(r).sum(), 0.0);
        }
    }

    #[test]
    fn cycle_and_disconnected() {
        let c4 = FormationGraph::new(4, 2, &[[1, 2], [2, 3], [3, 4], [4, 1]]).unwrap();
        assert!(c4.has_spanning_tree());
        assert!(!c4.is_acyclic());
        let split = FormationGraph::new(4, 2, &[[1, 2], [3, 4]]).unwrap();
        assert!(!split.has_spanning_tree());
        assert!(split.is_acyclic());
        assert_eq!(split.component_count(), 2);
        assert_eq!(split.incidence_rank(1e-9).rank, 2);
    }

    #[test]
    fn laplacian_spectrum_of_path() {
        // P4 eigenvalues are 2 - 2cos(k pi / 4), each with multiplicity d.
        let g = path4();
        let l = g.laplacian();
        let mut eig: Vec<f64> = l.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        let mut expected: Vec<f64> = (0..4)
            .flat_map(|k| {
                let v = 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / 4.0).cos();
                [v, v]
            })
            .collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in eig.iter().zip(&expected) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        // smallest positive eigenvalue
        assert_relative_eq!(eig[2], 2.0 - 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(g.incidence_norm_sq(), 2.0 + 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn k2_laplacian_in_3d() {
        let g = FormationGraph::new(2, 3, &[[1, 2]]).unwrap();
        let eig = g.laplacian().symmetric_eigenvalues();
        let nonzero: Vec<f64> = eig.iter().copied().filter(|v| v.abs() > 1e-12).collect();
        assert_eq!(nonzero.len(), 3);
        for v in nonzero {
            assert_relative_eq!(v, 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rigid_edge_counts() {
        assert_eq!(min_rigid_edge_count(4, 3), 4);
        assert_eq!(min_rigid_edge_count(4, 2), 5);
        assert_eq!(min_rigid_edge_count(8, 3), 10);
        assert_eq!(min_rigid_edge_count(2, 2), 2);
        // n - 2 = 5, d - 1 = 2: 1 + 2*3 + 1 + 1
        assert_eq!(min_rigid_edge_count(7, 3), 9);
        for d in 2..=6 {
            let (a, b) = rigid_edge_count_branches(d + 1, d);
            assert_eq!(a, Some(d + 1));
            assert_eq!(a, b);
        }
    }
}
