//! Bearings, orthogonal projectors and the bearing Laplacian.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::graph::FormationGraph;
use crate::linalg::{psd_null_space, rank_report, RankReport};
use crate::EPS_COINCIDENT;

/// Tolerance on `|‖y‖ - 1|` accepted by [`projector`].
pub const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BearingError {
    #[error("vector is not unit length (norm {norm})")]
    NotUnitVector { norm: f64 },
    #[error("{}", coincident_message(*.edge, *.separation))]
    CoincidentAgents {
        /// 1-indexed `(tail, head)` when the bearing belongs to a graph edge.
        edge: Option<(usize, usize)>,
        separation: f64,
    },
    #[error("configuration has {got} entries, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

fn coincident_message(edge: Option<(usize, usize)>, separation: f64) -> String {
    match edge {
        Some((i, j)) => format!("agents {i} and {j} coincide (separation {separation:e})"),
        None => format!("points coincide (separation {separation:e})"),
    }
}

/// Stacked positions of `n` agents in `ℝ^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    d: usize,
    p: DVector<f64>,
}

impl Configuration {
    pub fn new(d: usize, p: DVector<f64>) -> Result<Self, BearingError> {
        if d == 0 || !p.len().is_multiple_of(d) {
            return Err(BearingError::DimensionMismatch {
                expected: d * (p.len() / d.max(1)),
                got: p.len(),
            });
        }
        Ok(Self { d, p })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self, BearingError> {
        let d = points.first().map_or(0, Vec::len);
        if let Some(bad) = points.iter().find(|q| q.len() != d) {
            return Err(BearingError::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        Self::new(
            d,
            DVector::from_iterator(d * points.len(), points.iter().flatten().copied()),
        )
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.p.len() / self.d
    }

    pub fn stacked(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn into_stacked(self) -> DVector<f64> {
        self.p
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.p.as_slice()[i * self.d..(i + 1) * self.d]
    }
}

/// Orthogonal projector `I - y yᵀ` onto the complement of `y`.
///
/// Vectors within [`UNIT_TOL`] of unit length are renormalised first.
pub fn projector(y: &DVector<f64>) -> Result<DMatrix<f64>, BearingError> {
    let norm = y.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
        return Err(BearingError::NotUnitVector { norm });
    }
    let u = y / norm;
    Ok(DMatrix::identity(y.len(), y.len()) - &u * u.transpose())
}

/// Bearing of `pj` seen from `pi`: `(pj - pi) / ‖pj - pi‖`.
pub fn bearing(pi: &[f64], pj: &[f64]) -> Result<DVector<f64>, BearingError> {
    relative_bearing(pi, pj)
        .map(|(g, _)| g)
        .map_err(|separation| BearingError::CoincidentAgents {
            edge: None,
            separation,
        })
}

/// Unit bearing and length from `pi` to `pj`; `Err(separation)` below
/// [`EPS_COINCIDENT`].
pub(crate) fn relative_bearing(pi: &[f64], pj: &[f64]) -> Result<(DVector<f64>, f64), f64> {
    let diff = DVector::from_iterator(pi.len(), pj.iter().zip(pi).map(|(b, a)| b - a));
    let len = diff.norm();
    if !(len > EPS_COINCIDENT) {
        return Err(len);
    }
    Ok((diff / len, len))
}

/// Applies `π_g` to `x` without forming the matrix.
pub(crate) fn project_out(g: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    x - g * g.dot(x)
}

/// Per-edge bearings of a formation and the assembled bearing Laplacian.
#[derive(Debug, Clone)]
pub struct BearingState {
    d: usize,
    /// Unit bearing `ḡ_k` of each oriented edge, tail to head.
    pub bearings: Vec<DVector<f64>>,
    /// Edge lengths `‖p̄_k‖`.
    pub lengths: Vec<f64>,
    /// `L_B = H̄ᵀ Π H̄`.
    pub laplacian: DMatrix<f64>,
}

/// Numerical rank of `L_B` plus a basis of its null space.
#[derive(Debug, Clone)]
pub struct BearingRank {
    pub report: RankReport,
    /// Orthonormal columns spanning the numerical null space.
    pub null_basis: DMatrix<f64>,
}

impl BearingState {
    /// Block-diagonal `Π = diag(π_{ḡ_k})` (dm x dm).
    pub fn projector_matrix(&self) -> DMatrix<f64> {
        let d = self.d;
        let mut pi = DMatrix::zeros(d * self.bearings.len(), d * self.bearings.len());
        for (k, g) in self.bearings.iter().enumerate() {
            let block = DMatrix::identity(d, d) - g * g.transpose();
            pi.view_mut((k * d, k * d), (d, d)).copy_from(&block);
        }
        pi
    }

    pub fn rank(&self, rel_tol: f64) -> BearingRank {
        BearingRank {
            report: rank_report(&self.laplacian, rel_tol),
            null_basis: psd_null_space(&self.laplacian, rel_tol),
        }
    }
}

pub(crate) fn edge_bearings(
    g: &FormationGraph,
    p: &DVector<f64>,
) -> Result<(Vec<DVector<f64>>, Vec<f64>), BearingError> {
    let d = g.d();
    if p.len() != g.dn() {
        return Err(BearingError::DimensionMismatch {
            expected: g.dn(),
            got: p.len(),
        });
    }
    let s = p.as_slice();
    let mut bearings = Vec::with_capacity(g.m());
    let mut lengths = Vec::with_capacity(g.m());
    for e in g.edges() {
        let (gk, len) = relative_bearing(
            &s[e.tail * d..(e.tail + 1) * d],
            &s[e.head * d..(e.head + 1) * d],
        )
        .map_err(|separation| BearingError::CoincidentAgents {
            edge: Some(e.one_based()),
            separation,
        })?;
        bearings.push(gk);
        lengths.push(len);
    }
    Ok((bearings, lengths))
}

/// Assembles `L_B(p)` edge by edge.
pub fn bearing_laplacian_matrix(
    g: &FormationGraph,
    p: &DVector<f64>,
) -> Result<DMatrix<f64>, BearingError> {
    let (bearings, _) = edge_bearings(g, p)?;
    Ok(assemble(g, &bearings))
}

fn assemble(g: &FormationGraph, bearings: &[DVector<f64>]) -> DMatrix<f64> {
    let d = g.d();
    let mut l = DMatrix::zeros(g.dn(), g.dn());
    for (e, gk) in g.edges().iter().zip(bearings) {
        let (i, j) = (e.tail * d, e.head * d);
        for r in 0..d {
            for c in 0..d {
                let v = if r == c { 1.0 } else { 0.0 } - gk[r] * gk[c];
                l[(i + r, i + c)] += v;
                l[(j + r, j + c)] += v;
                l[(i + r, j + c)] -= v;
                l[(j + r, i + c)] -= v;
            }
        }
    }
    l
}

pub fn bearing_laplacian(
    g: &FormationGraph,
    p: &Configuration,
) -> Result<BearingState, BearingError> {
    let (bearings, lengths) = edge_bearings(g, p.stacked())?;
    let laplacian = assemble(g, &bearings);
    Ok(BearingState {
        d: g.d(),
        bearings,
        lengths,
        laplacian,
    })
}
