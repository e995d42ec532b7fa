//! Persistence-of-excitation certificates.
//!
//! Every certificate fixes one window length `T`, samples the integrand on a
//! uniform grid of step `h` and scans window starts `t = 0, h, 2h, ...` up to
//! the scan horizon, taking the worst window. Window averages use composite
//! Simpson quadrature on the shared grid, so each integrand sample is
//! evaluated once. Results hold over the scanned horizon only.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::bearing::{bearing_laplacian_matrix, projector, BearingError};
use crate::graph::{min_rigid_edge_count, FormationGraph, GraphError};
use crate::linalg::{min_eigenvalue, rank_report, RangePencil};
use crate::trajectory::{AnchoredAgent, ExtendedTrajectory, Trajectory, TrajectoryError};
use crate::RANK_TOL;

/// Default number of quadrature intervals per window.
pub const DEFAULT_INTERVALS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PeError {
    #[error("invalid PE window: T = {window}, step = {step} (need T > 0 and step <= T/10)")]
    InvalidWindow { window: f64, step: f64 },
    #[error("at least one direction is required")]
    EmptyDirectionSet,
    #[error("graph is not connected")]
    DisconnectedGraph,
    #[error("graph contains a cycle")]
    NotAcyclic,
    #[error("{m} edges cannot connect {n} agents")]
    TooFewEdges { m: usize, n: usize },
    #[error("base formation is not BPE (mu = {mu})")]
    BaseNotBPE { mu: f64 },
    #[error("invalid new edges: {0}")]
    InvalidNewEdges(String),
    #[error("rank(L_B) = {rank} at t = {t}, expected {expected}")]
    RankHypothesisFails {
        t: f64,
        rank: usize,
        expected: usize,
    },
    #[error(transparent)]
    Bearing(#[from] BearingError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Window, threshold and sampling settings shared by all certificates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeOptions {
    /// Window length `T` in seconds.
    pub window: f64,
    /// Verdict threshold on the achieved `μ`.
    pub mu_min: f64,
    /// Quadrature step and scan stride; `T / 200` when `None`.
    pub step: Option<f64>,
    /// Last window start; one period for periodic trajectories, else `3T`.
    pub horizon: Option<f64>,
}

impl PeOptions {
    pub fn new(window: f64) -> Self {
        Self {
            window,
            mu_min: 1e-3,
            step: None,
            horizon: None,
        }
    }

    pub fn with_mu_min(mut self, mu_min: f64) -> Self {
        self.mu_min = mu_min;
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = Some(step);
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    /// Even interval count and the matching step `T / N`.
    fn grid(&self) -> Result<(usize, f64), PeError> {
        let t = self.window;
        let requested = self.step.unwrap_or(t / DEFAULT_INTERVALS as f64);
        if !(t > 0.0)
            || !t.is_finite()
            || !(requested > 0.0)
            || requested > t / 10.0 * (1.0 + 1e-12)
        {
            return Err(PeError::InvalidWindow {
                window: t,
                step: requested,
            });
        }
        let mut n = (t / requested - 1e-9).ceil() as usize;
        n += n % 2;
        Ok((n, t / n as f64))
    }

    fn scan_horizon(&self, period: Option<f64>) -> f64 {
        self.horizon
            .or(period)
            .unwrap_or(3.0 * self.window)
            .max(0.0)
    }
}

/// Outcome of one PE scan.
#[derive(Debug, Clone, PartialEq)]
pub struct PeCertificate {
    pub window: f64,
    /// Minimum over windows of the per-window excitation level.
    pub mu: f64,
    pub mu_min: f64,
    /// Window start times that were scanned.
    pub starts: Vec<f64>,
    /// Per-window excitation level, aligned with `starts`.
    pub window_minima: Vec<f64>,
    /// Quadrature step actually used.
    pub step: f64,
    /// Last scanned window start.
    pub horizon: f64,
    pub is_pe: bool,
}

impl PeCertificate {
    fn from_minima(
        opts: &PeOptions,
        step: f64,
        horizon: f64,
        starts: Vec<f64>,
        minima: Vec<f64>,
    ) -> Self {
        let mu = minima.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            window: opts.window,
            mu,
            mu_min: opts.mu_min,
            starts,
            window_minima: minima,
            step,
            horizon,
            is_pe: mu >= opts.mu_min,
        }
    }

    /// Start time of the worst window.
    pub fn worst_start(&self) -> f64 {
        self.window_minima
            .iter()
            .zip(&self.starts)
            .min_by(|a, b| a.0.total_cmp(b.0))
            .map_or(0.0, |(_, &t)| t)
    }
}

/// `(1/T) ∫_t^{t+T} M(τ) dτ` by composite Simpson with step at most `step`.
pub fn window_average<E>(
    m: impl Fn(f64) -> Result<DMatrix<f64>, E>,
    t: f64,
    window: f64,
    step: f64,
) -> Result<DMatrix<f64>, PeError>
where
    PeError: From<E>,
{
    let (n, h) = PeOptions::new(window).with_step(step).grid()?;
    let samples = (0..=n)
        .map(|k| m(t + k as f64 * h))
        .collect::<Result<Vec<_>, E>>()?;
    Ok(simpson_average(&samples, h, window))
}

fn simpson_average(samples: &[DMatrix<f64>], h: f64, window: f64) -> DMatrix<f64> {
    let n = samples.len() - 1;
    let mut acc = samples[0].clone() + &samples[n];
    for (k, s) in samples.iter().enumerate().take(n).skip(1) {
        acc += s * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * (h / (3.0 * window))
}

/// Samples `f` on the scan grid and reduces every window average with
/// `level`, returning the certificate.
fn scan<F, G>(
    opts: &PeOptions,
    period: Option<f64>,
    f: F,
    level: G,
) -> Result<PeCertificate, PeError>
where
    F: Fn(f64) -> Result<DMatrix<f64>, PeError>,
    G: Fn(&DMatrix<f64>) -> f64,
{
    let (n, h) = opts.grid()?;
    let horizon = opts.scan_horizon(period);
    let last_start = (horizon / h + 1e-9).floor() as usize;
    let samples = (0..=last_start + n)
        .map(|k| f(k as f64 * h))
        .collect::<Result<Vec<_>, _>>()?;
    let mut starts = Vec::with_capacity(last_start + 1);
    let mut minima = Vec::with_capacity(last_start + 1);
    for s in 0..=last_start {
        let avg = simpson_average(&samples[s..=s + n], h, opts.window);
        starts.push(s as f64 * h);
        minima.push(level(&avg));
    }
    Ok(PeCertificate::from_minima(opts, h, horizon, starts, minima))
}

/// A time-indexed unit direction.
pub type Direction<'a> = &'a (dyn Fn(f64) -> Result<DVector<f64>, PeError> + Sync);

/// Certifies that `π_{y(t)}` is PE: `μ` is the smallest eigenvalue of the
/// window-averaged projector, minimised over windows.
pub fn certify_direction_pe(
    y: Direction<'_>,
    period: Option<f64>,
    opts: &PeOptions,
) -> Result<PeCertificate, PeError> {
    scan(opts, period, |t| Ok(projector(&y(t)?)?), min_eigenvalue)
}

/// Which sufficient condition made a projector sum PE.
#[derive(Debug, Clone, PartialEq)]
pub enum SufficientCondition {
    /// Direction `index` (0-based) is PE on its own.
    PeMember { index: usize, mu: f64 },
    /// Directions `i` and `j` stay uniformly non-collinear:
    /// `|y_iᵀ y_j| <= 1 - epsilon` at every sample.
    NonCollinearPair { i: usize, j: usize, epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorSumReport {
    pub certificate: PeCertificate,
    pub condition: Option<SufficientCondition>,
}

/// Certifies `Q(t) = Σ_i π_{y_i(t)}` and reports which sufficient condition
/// holds, if any.
pub fn certify_projector_sum_pe(
    directions: &[Direction<'_>],
    period: Option<f64>,
    opts: &PeOptions,
) -> Result<ProjectorSumReport, PeError> {
    if directions.is_empty() {
        return Err(PeError::EmptyDirectionSet);
    }
    let certificate = scan(
        opts,
        period,
        |t| {
            let mut q: Option<DMatrix<f64>> = None;
            for y in directions {
                let p = projector(&y(t)?)?;
                q = Some(match q {
                    Some(acc) => acc + p,
                    None => p,
                });
            }
            Ok(q.expect("non-empty direction set"))
        },
        min_eigenvalue,
    )?;

    let mut condition = None;
    for (index, y) in directions.iter().enumerate() {
        let member = certify_direction_pe(*y, period, opts)?;
        if member.is_pe {
            condition = Some(SufficientCondition::PeMember {
                index,
                mu: member.mu,
            });
            break;
        }
    }
    if condition.is_none() {
        let times: Vec<f64> = {
            let (n, h) = opts.grid()?;
            let horizon = opts.scan_horizon(period);
            let last = (horizon / h + 1e-9).floor() as usize + n;
            (0..=last).map(|k| k as f64 * h).collect()
        };
        let sampled = directions
            .iter()
            .map(|y| times.iter().map(|&t| y(t)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..sampled.len() {
            for j in i + 1..sampled.len() {
                let worst = sampled[i]
                    .iter()
                    .zip(&sampled[j])
                    .map(|(a, b)| a.dot(b).abs() / (a.norm() * b.norm()))
                    .fold(0.0_f64, f64::max);
                let eps = 1.0 - worst;
                if best.is_none_or(|(_, _, e)| eps > e) {
                    best = Some((i, j, eps));
                }
            }
        }
        if let Some((i, j, epsilon)) = best {
            if epsilon >= opts.mu_min {
                condition = Some(SufficientCondition::NonCollinearPair { i, j, epsilon });
            }
        }
    }
    Ok(ProjectorSumReport {
        certificate,
        condition,
    })
}

/// Certifies `(1/T) ∫ L_B(p*(τ)) dτ >= μ L` on `range(L)`.
pub fn certify_bearing_laplacian_pe(
    g: &FormationGraph,
    traj: &dyn Trajectory,
    opts: &PeOptions,
) -> Result<PeCertificate, PeError> {
    if !g.has_spanning_tree() {
        return Err(PeError::DisconnectedGraph);
    }
    let pencil = RangePencil::new(&g.laplacian(), RANK_TOL);
    scan(
        opts,
        traj.period(),
        |t| Ok(bearing_laplacian_matrix(g, &traj.positions(t)?)?),
        |m| pencil.min_generalized_eigenvalue(m),
    )
}

/// Generalized eigenvalue of a constant bearing Laplacian against `L`, the
/// level every window reaches when the formation does not move.
pub fn static_bearing_laplacian_mu(g: &FormationGraph, p: &DVector<f64>) -> Result<f64, PeError> {
    let pencil = RangePencil::new(&g.laplacian(), RANK_TOL);
    Ok(pencil.min_generalized_eigenvalue(&bearing_laplacian_matrix(g, p)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpeVerdict {
    pub has_spanning_tree: bool,
    /// Absent when the graph is disconnected.
    pub certificate: Option<PeCertificate>,
    pub is_bpe: bool,
}

/// A formation is BPE when its graph is connected and its bearing Laplacian
/// is PE.
pub fn is_bpe(
    g: &FormationGraph,
    traj: &dyn Trajectory,
    opts: &PeOptions,
) -> Result<BpeVerdict, PeError> {
    if !g.has_spanning_tree() {
        return Ok(BpeVerdict {
            has_spanning_tree: false,
            certificate: None,
            is_bpe: false,
        });
    }
    let certificate = certify_bearing_laplacian_pe(g, traj, opts)?;
    Ok(BpeVerdict {
        has_spanning_tree: true,
        is_bpe: certificate.is_pe,
        certificate: Some(certificate),
    })
}

/// Desired bearing of edge `k` as a function of time.
pub fn edge_direction<'a>(
    g: &'a FormationGraph,
    traj: &'a dyn Trajectory,
    k: usize,
) -> impl Fn(f64) -> Result<DVector<f64>, PeError> + Sync + 'a {
    move |t| {
        let p = traj.positions(t)?;
        let e = g.edges()[k];
        let d = g.d();
        let diff = p.rows(e.head * d, d) - p.rows(e.tail * d, d);
        let len = diff.norm();
        if !(len > crate::EPS_COINCIDENT) {
            return Err(BearingError::CoincidentAgents {
                edge: Some(e.one_based()),
                separation: len,
            }
            .into());
        }
        Ok(diff / len)
    }
}

/// Per-edge direction certificates, in edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePeReport {
    /// 1-indexed `(tail, head)` with the certificate of its bearing.
    pub edges: Vec<((usize, usize), PeCertificate)>,
    pub is_bpe: bool,
}

impl EdgePeReport {
    /// Edges whose bearing is not PE.
    pub fn offending(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .filter(|(_, c)| !c.is_pe)
            .map(|(e, _)| *e)
            .collect()
    }
}

fn per_edge_certificates(
    g: &FormationGraph,
    traj: &dyn Trajectory,
    opts: &PeOptions,
) -> Result<Vec<((usize, usize), PeCertificate)>, PeError> {
    (0..g.m())
        .map(|k| {
            let dir = edge_direction(g, traj, k);
            Ok((
                g.edges()[k].one_based(),
                certify_direction_pe(&dir, traj.period(), opts)?,
            ))
        })
        .collect()
}

/// For a tree, the formation is BPE exactly when every bearing is PE.
pub fn acyclic_bpe_check(
    g: &FormationGraph,
    traj: &dyn Trajectory,
    opts: &PeOptions,
) -> Result<EdgePeReport, PeError> {
    if !g.is_acyclic() {
        return Err(PeError::NotAcyclic);
    }
    if !g.has_spanning_tree() {
        return Err(PeError::DisconnectedGraph);
    }
    let edges = per_edge_certificates(g, traj, opts)?;
    let is_bpe = edges.iter().all(|(_, c)| c.is_pe);
    Ok(EdgePeReport { edges, is_bpe })
}

/// Lower bound on the number of PE bearings a BPE formation with `m` edges
/// must contain.
pub fn min_pe_bearing_lower_bound(m: usize, n: usize, d: usize) -> Result<usize, PeError> {
    if m + 1 < n {
        return Err(PeError::TooFewEdges { m, n });
    }
    let f = min_rigid_edge_count(n, d);
    if m >= f {
        return Ok(1);
    }
    let j = (f - m) as i64;
    let (d, n, f) = (d as i64, n as i64, f as i64);
    let bound = (d - 1) * j - (d - 1) * f + d * n - d;
    Ok(bound.max(1) as usize)
}

/// Result of extending a BPE formation by one agent.
#[derive(Debug, Clone)]
pub struct VertexAddition {
    pub graph: FormationGraph,
    pub trajectory: Arc<dyn Trajectory>,
    /// Certificate of the sum of the new edges' projectors.
    pub new_edges: ProjectorSumReport,
    pub is_bpe: bool,
}

/// Adds agent `n + 1` following `new_agent`, linked to the 1-indexed base
/// agents in `neighbors`. The extension is declared BPE when the projector
/// sum over the new edges is PE.
pub fn vertex_addition(
    base: &FormationGraph,
    base_traj: Arc<dyn Trajectory>,
    new_agent: Arc<dyn Trajectory>,
    neighbors: &[usize],
    opts: &PeOptions,
) -> Result<VertexAddition, PeError> {
    if neighbors.is_empty() {
        return Err(PeError::InvalidNewEdges("no edges to the new agent".into()));
    }
    if new_agent.agents() != 1 || new_agent.dim() != base.d() {
        return Err(PeError::InvalidNewEdges(
            "new agent trajectory must describe exactly one agent of matching dimension".into(),
        ));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &j in neighbors {
        if j == 0 || j > base.n() {
            return Err(PeError::InvalidNewEdges(format!(
                "vertex {j} is not in the base graph"
            )));
        }
        if !seen.insert(j) {
            return Err(PeError::InvalidNewEdges(format!("vertex {j} listed twice")));
        }
    }
    let base_verdict = is_bpe(base, base_traj.as_ref(), opts)?;
    if !base_verdict.is_bpe {
        return Err(PeError::BaseNotBPE {
            mu: base_verdict.certificate.map_or(0.0, |c| c.mu),
        });
    }

    let new_index = base.n() + 1;
    let edges: Vec<[usize; 2]> = neighbors.iter().map(|&j| [j, new_index]).collect();
    let graph = base.with_added_vertex(&edges)?;
    let trajectory: Arc<dyn Trajectory> = Arc::new(ExtendedTrajectory::new(base_traj, new_agent));

    let d = base.d();
    let n = base.n();
    let dirs: Vec<Box<dyn Fn(f64) -> Result<DVector<f64>, PeError> + Sync>> = neighbors
        .iter()
        .map(|&j| {
            let traj = trajectory.clone();
            Box::new(move |t: f64| {
                let p = traj.positions(t)?;
                let diff = p.rows(n * d, d) - p.rows((j - 1) * d, d);
                let len = diff.norm();
                if !(len > crate::EPS_COINCIDENT) {
                    return Err(BearingError::CoincidentAgents {
                        edge: Some((j, n + 1)),
                        separation: len,
                    }
                    .into());
                }
                Ok(diff / len)
            }) as Box<dyn Fn(f64) -> Result<DVector<f64>, PeError> + Sync>
        })
        .collect();
    let refs: Vec<Direction<'_>> = dirs.iter().map(|b| b.as_ref() as Direction<'_>).collect();
    let new_edges = certify_projector_sum_pe(&refs, trajectory.period(), opts)?;
    let is_bpe = new_edges.certificate.is_pe;
    Ok(VertexAddition {
        graph,
        trajectory,
        new_edges,
        is_bpe,
    })
}

/// Convenience wrapper: a new agent rigidly attached to base agent `anchor`
/// (1-indexed) at a constant offset.
pub fn anchored_new_agent(
    base_traj: Arc<dyn Trajectory>,
    anchor: usize,
    offset: DVector<f64>,
) -> Arc<dyn Trajectory> {
    Arc::new(AnchoredAgent::new(base_traj, anchor - 1, offset))
}

/// Under `rank(L_B(p*(t))) = dn - d - 1` at every sample, the formation is BPE
/// exactly when at least one bearing is PE.
pub fn rank_based_bpe_check(
    g: &FormationGraph,
    traj: &dyn Trajectory,
    opts: &PeOptions,
) -> Result<EdgePeReport, PeError> {
    if !g.has_spanning_tree() {
        return Err(PeError::DisconnectedGraph);
    }
    let expected = g.dn() - g.d() - 1;
    let (n, h) = opts.grid()?;
    let horizon = opts.scan_horizon(traj.period());
    let last = (horizon / h + 1e-9).floor() as usize + n;
    for k in 0..=last {
        let t = k as f64 * h;
        let l = bearing_laplacian_matrix(g, &traj.positions(t)?)?;
        let rank = rank_report(&l, RANK_TOL).rank;
        if rank != expected {
            return Err(PeError::RankHypothesisFails { t, rank, expected });
        }
    }
    let edges = per_edge_certificates(g, traj, opts)?;
    let is_bpe = edges.iter().any(|(_, c)| c.is_pe);
    Ok(EdgePeReport { edges, is_bpe })
}

/// Rank of `L_B(p*(t))` sampled every `step` over `[0, horizon]`.
pub fn rank_history(
    g: &FormationGraph,
    traj: &dyn Trajectory,
    horizon: f64,
    step: f64,
) -> Result<Vec<(f64, usize)>, PeError> {
    let count = (horizon / step + 1e-9).floor() as usize;
    (0..=count)
        .map(|k| {
            let t = k as f64 * step;
            let p = traj.positions(t)?;
            let l = bearing_laplacian_matrix(g, &p)?;
            Ok((t, rank_report(&l, RANK_TOL).rank))
        })
        .collect()
}
