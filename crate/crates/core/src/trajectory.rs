//! Analytic desired trajectories.
//!
//! The main family is the similarity transform
//! `p_i*(t) = s(t) R(t)ᵀ p_i*(0) + c(t)`, whose velocities and accelerations
//! are obtained by the product rule from analytic derivatives of `s`, `R`
//! and `c`. No quantity here is differentiated numerically.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use thiserror::Error;

use crate::graph::FormationGraph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("time {t} is outside the trajectory horizon [0, {horizon}]")]
    OutsideHorizon { t: f64, horizon: f64 },
    #[error(
        "rotations are only built in for d = 2 and d = 3 (got d = {0}); supply a custom rotation"
    )]
    UnsupportedDimension(usize),
    #[error("a 3-D rotation needs a rotation axis")]
    MissingAxis,
    #[error("rotation axis must be a nonzero vector")]
    DegenerateAxis,
    #[error("scale must stay positive (minimum {0})")]
    NonPositiveScale(f64),
    #[error("base configuration has {got} entries, expected a multiple of d = {d}")]
    BadBase { d: usize, got: usize },
    #[error("translation has dimension {got}, expected {expected}")]
    TranslationDimension { expected: usize, got: usize },
}

/// Position, velocity and acceleration of every agent of a desired formation.
pub trait Trajectory: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn agents(&self) -> usize;
    /// Period of the desired bearings, when they are periodic.
    fn period(&self) -> Option<f64>;
    fn positions(&self, t: f64) -> Result<DVector<f64>, TrajectoryError>;
    fn velocities(&self, t: f64) -> Result<DVector<f64>, TrajectoryError>;
    fn accelerations(&self, t: f64) -> Result<DVector<f64>, TrajectoryError>;
}

/// `s(t)` with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleLaw {
    Const(f64),
    /// `amplitude * sin(frequency * t) + offset`, frequency in rad/s.
    Sine {
        amplitude: f64,
        frequency: f64,
        offset: f64,
    },
}

impl ScaleLaw {
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        match *self {
            ScaleLaw::Const(v) => (v, 0.0, 0.0),
            ScaleLaw::Sine {
                amplitude,
                frequency,
                offset,
            } => {
                let (s, c) = (frequency * t).sin_cos();
                (
                    amplitude * s + offset,
                    amplitude * frequency * c,
                    -amplitude * frequency * frequency * s,
                )
            }
        }
    }

    /// Lower bound of `s(t)` over all `t`.
    pub fn min_value(&self) -> f64 {
        match *self {
            ScaleLaw::Const(v) => v,
            ScaleLaw::Sine {
                amplitude,
                frequency,
                offset,
            } => {
                if frequency == 0.0 {
                    offset
                } else {
                    offset - amplitude.abs()
                }
            }
        }
    }
}

/// `R(t)`, `Ṙ(t)`, `R̈(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationSample {
    pub r: DMatrix<f64>,
    pub r_dot: DMatrix<f64>,
    pub r_ddot: DMatrix<f64>,
}

pub type RotationFn = Arc<dyn Fn(f64) -> RotationSample + Send + Sync>;

#[derive(Clone)]
pub enum RotationLaw {
    Identity {
        d: usize,
    },
    /// Planar rotation by `rate * t` (d = 2).
    Planar {
        rate: f64,
    },
    /// Rotation by `rate * t` about a fixed unit axis (d = 3).
    Axis {
        axis: Vector3<f64>,
        rate: f64,
    },
    /// Explicit callable, for dimensions without a built-in law.
    Custom {
        d: usize,
        period: Option<f64>,
        f: RotationFn,
    },
}

impl fmt::Debug for RotationLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RotationLaw::Identity { d } => write!(f, "Identity {{ d: {d} }}"),
            RotationLaw::Planar { rate } => write!(f, "Planar {{ rate: {rate} }}"),
            RotationLaw::Axis { axis, rate } => {
                write!(
                    f,
                    "Axis {{ axis: [{}, {}, {}], rate: {rate} }}",
                    axis.x, axis.y, axis.z
                )
            }
            RotationLaw::Custom { d, period, .. } => {
                write!(f, "Custom {{ d: {d}, period: {period:?} }}")
            }
        }
    }
}

/// Constant-rate rotation: planar for `d = 2`, about `axis` for `d = 3`.
pub fn rotation_about_axis(
    d: usize,
    axis: Option<[f64; 3]>,
    rate: f64,
) -> Result<RotationLaw, TrajectoryError> {
    match d {
        2 => Ok(RotationLaw::Planar { rate }),
        3 => {
            let a = axis.ok_or(TrajectoryError::MissingAxis)?;
            let v = Vector3::from(a);
            let norm = v.norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(TrajectoryError::DegenerateAxis);
            }
            Ok(RotationLaw::Axis {
                axis: v / norm,
                rate,
            })
        }
        _ => Err(TrajectoryError::UnsupportedDimension(d)),
    }
}

fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

fn to_dmatrix(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |r, c| m[(r, c)])
}

impl RotationLaw {
    pub fn dim(&self) -> usize {
        match self {
            RotationLaw::Identity { d } | RotationLaw::Custom { d, .. } => *d,
            RotationLaw::Planar { .. } => 2,
            RotationLaw::Axis { .. } => 3,
        }
    }

    pub fn eval(&self, t: f64) -> RotationSample {
        match self {
            RotationLaw::Identity { d } => RotationSample {
                r: DMatrix::identity(*d, *d),
                r_dot: DMatrix::zeros(*d, *d),
                r_ddot: DMatrix::zeros(*d, *d),
            },
            RotationLaw::Planar { rate } => {
                let (s, c) = (rate * t).sin_cos();
                let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
                let r_dot = DMatrix::from_row_slice(2, 2, &[-s, -c, c, -s]) * *rate;
                let r_ddot = &r * (-rate * rate);
                RotationSample { r, r_dot, r_ddot }
            }
            RotationLaw::Axis { axis, rate } => {
                let k = skew(axis);
                let k2 = k * k;
                let (s, c) = (rate * t).sin_cos();
                let r = Matrix3::identity() + k * s + k2 * (1.0 - c);
                let r_dot = (k * c + k2 * s) * *rate;
                let r_ddot = (k * (-s) + k2 * c) * (rate * rate);
                RotationSample {
                    r: to_dmatrix(&r),
                    r_dot: to_dmatrix(&r_dot),
                    r_ddot: to_dmatrix(&r_ddot),
                }
            }
            RotationLaw::Custom { f, .. } => f(t),
        }
    }

    /// Period of `R(t)`, if it rotates at a nonzero constant rate.
    pub fn period(&self) -> Option<f64> {
        match self {
            RotationLaw::Identity { .. } => None,
            RotationLaw::Planar { rate } | RotationLaw::Axis { rate, .. } => {
                (*rate != 0.0).then(|| TAU / rate.abs())
            }
            RotationLaw::Custom { period, .. } => *period,
        }
    }
}

/// `c(t) = Σ_k a_k t^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationLaw {
    coefficients: Vec<DVector<f64>>,
    d: usize,
}

impl TranslationLaw {
    pub fn none(d: usize) -> Self {
        Self {
            coefficients: Vec::new(),
            d,
        }
    }

    pub fn linear(velocity: DVector<f64>) -> Self {
        let d = velocity.len();
        Self {
            coefficients: vec![DVector::zeros(d), velocity],
            d,
        }
    }

    pub fn polynomial(coefficients: Vec<DVector<f64>>) -> Result<Self, TrajectoryError> {
        let d = coefficients.first().map_or(0, |c| c.len());
        if let Some(bad) = coefficients.iter().find(|c| c.len() != d) {
            return Err(TrajectoryError::TranslationDimension {
                expected: d,
                got: bad.len(),
            });
        }
        Ok(Self { coefficients, d })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn coefficients(&self) -> &[DVector<f64>] {
        &self.coefficients
    }

    /// `(c, ċ, c̈)` at `t`.
    pub fn eval(&self, t: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let mut c = DVector::zeros(self.d);
        let mut c1 = DVector::zeros(self.d);
        let mut c2 = DVector::zeros(self.d);
        for (k, a) in self.coefficients.iter().enumerate() {
            let k = k as i32;
            c += a * t.powi(k);
            if k >= 1 {
                c1 += a * (k as f64 * t.powi(k - 1));
            }
            if k >= 2 {
                c2 += a * ((k * (k - 1)) as f64 * t.powi(k - 2));
            }
        }
        (c, c1, c2)
    }
}

/// Similarity-transform trajectory `p_i*(t) = s(t) R(t)ᵀ p_i*(0) + c(t)`.
#[derive(Debug, Clone)]
pub struct DesiredTrajectory {
    d: usize,
    base: DVector<f64>,
    scale: ScaleLaw,
    rotation: RotationLaw,
    translation: TranslationLaw,
    period: Option<f64>,
    horizon: Option<f64>,
}

impl DesiredTrajectory {
    pub fn new(
        d: usize,
        base: DVector<f64>,
        scale: ScaleLaw,
        rotation: RotationLaw,
        translation: TranslationLaw,
    ) -> Result<Self, TrajectoryError> {
        if d == 0 || base.is_empty() || !base.len().is_multiple_of(d) {
            return Err(TrajectoryError::BadBase { d, got: base.len() });
        }
        if rotation.dim() != d {
            return Err(TrajectoryError::UnsupportedDimension(rotation.dim()));
        }
        if translation.dim() != d && !translation.coefficients.is_empty() {
            return Err(TrajectoryError::TranslationDimension {
                expected: d,
                got: translation.dim(),
            });
        }
        let s_min = scale.min_value();
        if !(s_min > 0.0) {
            return Err(TrajectoryError::NonPositiveScale(s_min));
        }
        let translation = if translation.coefficients.is_empty() {
            TranslationLaw::none(d)
        } else {
            translation
        };
        Ok(Self {
            d,
            base,
            scale,
            rotation,
            translation,
            period: None,
            horizon: None,
        })
    }

    /// A formation that never moves.
    pub fn fixed(d: usize, base: DVector<f64>) -> Result<Self, TrajectoryError> {
        Self::new(
            d,
            base,
            ScaleLaw::Const(1.0),
            RotationLaw::Identity { d },
            TranslationLaw::none(d),
        )
    }

    /// Overrides the bearing period (defaults to the rotation period).
    pub fn with_period(mut self, period: Option<f64>) -> Self {
        self.period = period;
        self
    }

    /// Restricts evaluation to `[0, horizon]`.
    pub fn with_horizon(mut self, horizon: Option<f64>) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn base(&self) -> &DVector<f64> {
        &self.base
    }

    pub fn scale(&self) -> &ScaleLaw {
        &self.scale
    }

    pub fn rotation(&self) -> &RotationLaw {
        &self.rotation
    }

    pub fn translation(&self) -> &TranslationLaw {
        &self.translation
    }

    pub fn declared_period(&self) -> Option<f64> {
        self.period
    }

    pub fn horizon(&self) -> Option<f64> {
        self.horizon
    }

    fn check(&self, t: f64) -> Result<(), TrajectoryError> {
        let horizon = self.horizon.unwrap_or(f64::INFINITY);
        let slack = 1e-9 * horizon.abs().max(1.0);
        if t < -1e-12 || t > horizon + slack || !t.is_finite() {
            return Err(TrajectoryError::OutsideHorizon { t, horizon });
        }
        Ok(())
    }

    /// Applies `Mᵀ` to every base point, scaled, and adds `shift`.
    fn map_base(&self, m: &DMatrix<f64>, scale: f64, shift: &DVector<f64>, out: &mut DVector<f64>) {
        let d = self.d;
        let mt = m.transpose();
        for i in 0..self.base.len() / d {
            let b = self.base.rows(i * d, d);
            let mapped = &mt * b * scale + shift;
            out.rows_mut(i * d, d).copy_from(&mapped);
        }
    }

    fn add_base(&self, m: &DMatrix<f64>, scale: f64, out: &mut DVector<f64>) {
        let d = self.d;
        let mt = m.transpose();
        for i in 0..self.base.len() / d {
            let b = self.base.rows(i * d, d);
            let mut block = out.rows_mut(i * d, d);
            block += &mt * b * scale;
        }
    }
}

impl Trajectory for DesiredTrajectory {
    fn dim(&self) -> usize {
        self.d
    }

    fn agents(&self) -> usize {
        self.base.len() / self.d
    }

    fn period(&self) -> Option<f64> {
        self.period.or_else(|| self.rotation.period())
    }

    fn positions(&self, t: f64) -> Result<DVector<f64>, TrajectoryError> {
        self.check(t)?;
        let (s, _, _) = self.scale.eval(t);
        let rot = self.rotation.eval(t);
        let (c, _, _) = self.translation.eval(t);
        let mut out = DVector::zeros(self.base.len());
        self.map_base(&rot.r, s, &c, &mut out);
        Ok(out)
    }

    fn velocities(&self, t: f64) -> Result<DVector<f64>, TrajectoryError> {
        self.check(t)?;
        let (s, s1, _) = self.scale.eval(t);
        let rot = self.rotation.eval(t);
        let (_, c1, _) = self.translation.eval(t);
        let mut out = DVector::zeros(self.base.len());
        self.map_base(&rot.r, s1, &c1, &mut out);
        self.add_base(&rot.r_dot, s, &mut out);
        Ok(out)
    }

    fn accelerations(&self, t: f64) -> Result<DVector<f64>, TrajectoryError> {
        self.check(t)?;
        let (s, s1, s2) = self.scale.eval(t);
        let rot = self.rotation.eval(t);
        let (_, _, c2) = self.translation.eval(t);
        let mut out = DVector::zeros(self.base.len());
        self.map_base(&rot.r, s2, &c2, &mut out);
        self.add_base(&rot.r_dot, 2.0 * s1, &mut out);
        self.add_base(&rot.r_ddot, s, &mut out);
        Ok(out)
    }
}

/// A single agent rigidly attached to agent `anchor` of another trajectory
/// at a constant offset, so its bearing to the anchor never changes.
#[derive(Debug, Clone)]
pub struct AnchoredAgent {
    base: Arc<dyn Trajectory>,
    anchor: usize,
    offset: DVector<f64>,
}

impl AnchoredAgent {
    /// `anchor` is 0-based.
    pub fn new(base: Arc<dyn Trajectory>, anchor: usize, offset: DVector<f64>) -> Self {
        assert!(anchor < base.agents(), "anchor agent out of range");
        assert_eq!(offset.len(), base.dim(), "offset dimension mismatch");
        Self {
            base,
            anchor,
            offset,
        }
    }

    fn block(&self, x: DVector<f64>) -> DVector<f64> {
        let d = self.base.dim();
        x.rows(self.anchor * d, d).into_owned()
    }
}

impl Trajectory for AnchoredAgent {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn agents(&self) -> usize {
        1
    }

    fn period(&self) -> Option<f64> {
        self.base.period()
    }

    fn positions(&self, t: f64) -> Result<DVector<f64>, TrajectoryError> {
        Ok(self.block(self.base.positions(t)?) + &self.offset)
    }

    fn velocities(&self, t: f64) -> Result<DVector<f64>, TrajectoryError> {
        Ok(self.block(self.base.velocities(t)?))
    }

    fn accelerations(&self, t: f64) -> Result<DVector<f64>, TrajectoryError> {
        Ok(self.block(self.base.accelerations(t)?))
    }
}

/// Agents of `base` followed by the agents of `added`.
#[derive(Debug, Clone)]
pub struct ExtendedTrajectory {
    base: Arc<dyn Trajectory>,
    added: Arc<dyn Trajectory>,
}

impl ExtendedTrajectory {
    pub fn new(base: Arc<dyn Trajectory>, added: Arc<dyn Trajectory>) -> Self {
        assert_eq!(base.dim(), added.dim(), "dimension mismatch");
        Self { base, added }
    }

    fn stack(a: DVector<f64>, b: DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
    }
}

impl Trajectory for ExtendedTrajectory {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn agents(&self) -> usize {
        self.base.agents() + self.added.agents()
    }

    fn period(&self) -> Option<f64> {
        match (self.base.period(), self.added.period()) {
            (Some(a), Some(b)) if (a - b).abs() <= 1e-12 * a.abs().max(1.0) => Some(a),
            _ => None,
        }
    }

    fn positions(&self, t: f64) -> Result<DVector<f64>, TrajectoryError> {
        Ok(Self::stack(
            self.base.positions(t)?,
            self.added.positions(t)?,
        ))
    }

    fn velocities(&self, t: f64) -> Result<DVector<f64>, TrajectoryError> {
        Ok(Self::stack(
            self.base.velocities(t)?,
            self.added.velocities(t)?,
        ))
    }

    fn accelerations(&self, t: f64) -> Result<DVector<f64>, TrajectoryError> {
        Ok(Self::stack(
            self.base.accelerations(t)?,
            self.added.accelerations(t)?,
        ))
    }
}

/// Smallest desired edge length over `t ∈ [0, horizon]` sampled every `step`.
pub fn min_edge_separation(
    g: &FormationGraph,
    traj: &dyn Trajectory,
    horizon: f64,
    step: f64,
) -> Result<f64, TrajectoryError> {
    let d = g.d();
    let samples = (horizon / step).ceil().max(0.0) as usize;
    let mut best = f64::INFINITY;
    for k in 0..=samples {
        let t = (k as f64 * step).min(horizon);
        let p = traj.positions(t)?;
        for e in g.edges() {
            let sep = (p.rows(e.head * d, d) - p.rows(e.tail * d, d)).norm();
            best = best.min(sep);
        }
    }
    Ok(best)
}
