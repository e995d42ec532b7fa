//! Closed-loop simulation with fixed-step classical RK4.
//!
//! The engine advances the physical agent dynamics. At every right-hand-side
//! evaluation each agent receives only its own measurement list and
//! feedforward terms and returns its command through [`control_single`] or
//! [`control_double`]. A run aborts with [`SimError::BearingLoss`] as soon as
//! two neighbours come closer than [`EPS_COINCIDENT`]; the samples recorded up
//! to that point travel with the error.

pub mod bounds;
pub mod control;

use std::fmt;

use nalgebra::DVector;
use thiserror::Error;

use crate::bearing::BearingError;
use crate::graph::FormationGraph;
use crate::linalg::{block_mean, remove_block_mean};
use crate::trajectory::{Trajectory, TrajectoryError};
use crate::EPS_COINCIDENT;

pub use bounds::{
    basin_radius_double, basin_radius_single, dissipation_constant, dissipation_matrices,
    fit_exponential_rate, rate_bound, validate_gains, DissipationConstant, DoubleBasin, GainCheck,
    GainSet, RateFit, RateInputs, StabilityBound,
};
pub use control::{control_double, control_single, measure_all, observer_rhs, NeighborMeasurement};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("bearing lost at t = {t}: agents {} and {} are {separation:e} apart", .edge.0, .edge.1)]
    BearingLoss {
        t: f64,
        /// 1-indexed edge.
        edge: (usize, usize),
        separation: f64,
        /// Samples recorded before the loss.
        partial: Box<SimTrace>,
    },
    #[error("gain condition violated: k_d = {k_d} must exceed {required}")]
    GainConditionViolated { k_d: f64, required: f64 },
    #[error("invalid gain: {0}")]
    InvalidGain(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("cannot fit a rate: sample at t = {t} is {value}")]
    NonPositiveSamples { t: f64, value: f64 },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Bearing(#[from] BearingError),
}

/// Which closed loop a run integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dynamics {
    Single,
    Double,
    Observer,
}

impl Dynamics {
    pub fn as_str(&self) -> &'static str {
        match self {
            Dynamics::Single => "single",
            Dynamics::Double => "double",
            Dynamics::Observer => "observer",
        }
    }
}

impl fmt::Display for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    pub horizon: f64,
    /// Record every `record_every`-th step (the final step is always kept).
    pub record_every: usize,
}

impl SimOptions {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            horizon,
            record_every: 1,
        }
    }

    pub fn with_record_every(mut self, k: usize) -> Self {
        self.record_every = k.max(1);
        self
    }

    fn steps(&self) -> Result<usize, SimError> {
        if !(self.dt > 0.0)
            || !(self.horizon >= 0.0)
            || !self.dt.is_finite()
            || !self.horizon.is_finite()
        {
            return Err(SimError::InvalidInput(format!(
                "dt = {} and horizon = {} must be positive and finite",
                self.dt, self.horizon
            )));
        }
        Ok((self.horizon / self.dt - 1e-9).ceil().max(0.0) as usize)
    }
}

/// Time-indexed record of a run.
///
/// For observer runs `positions` holds the estimate `p̂`, `err_p` is
/// `‖p̂ - p‖`, `err_delta` is `‖ζ‖` and `q0` is the constant offset `ξ₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub dynamics: Dynamics,
    pub d: usize,
    pub n: usize,
    pub t: Vec<f64>,
    pub positions: Vec<DVector<f64>>,
    /// Double integrator only.
    pub velocities: Vec<DVector<f64>>,
    /// Velocity (single) or acceleration (double) commands; empty for the
    /// observer.
    pub controls: Vec<DVector<f64>>,
    /// `‖p̃‖`.
    pub err_p: Vec<f64>,
    /// `‖δ‖ = ‖p̃ - U q₀‖`.
    pub err_delta: Vec<f64>,
    /// `‖ṽ‖`; zero for first-order runs.
    pub err_v: Vec<f64>,
    pub q0: Vec<DVector<f64>>,
    pub q0_dot: Vec<DVector<f64>>,
    /// Smallest edge separation since the previous sample.
    pub min_sep: Vec<f64>,
    /// Storage function: `½‖δ‖²`, `x̃ᵀPx̃` or `½‖ζ‖²`.
    pub lyapunov: Vec<f64>,
}

/// Error norm selectable for rate fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceField {
    ErrP,
    ErrDelta,
    ErrV,
}

impl SimTrace {
    fn empty(dynamics: Dynamics, d: usize, n: usize) -> Self {
        Self {
            dynamics,
            d,
            n,
            t: Vec::new(),
            positions: Vec::new(),
            velocities: Vec::new(),
            controls: Vec::new(),
            err_p: Vec::new(),
            err_delta: Vec::new(),
            err_v: Vec::new(),
            q0: Vec::new(),
            q0_dot: Vec::new(),
            min_sep: Vec::new(),
            lyapunov: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn field(&self, field: TraceField) -> &[f64] {
        match field {
            TraceField::ErrP => &self.err_p,
            TraceField::ErrDelta => &self.err_delta,
            TraceField::ErrV => &self.err_v,
        }
    }

    /// Index of the first sample with `t >= at`.
    pub fn index_at(&self, at: f64) -> Option<usize> {
        self.t.iter().position(|&t| t >= at - 1e-9)
    }

    /// Value of `field` at the first sample with `t >= at`.
    pub fn value_at(&self, field: TraceField, at: f64) -> Option<f64> {
        self.index_at(at).map(|i| self.field(field)[i])
    }

    /// Exponential rate of `field` over samples with `from <= t <= to`.
    pub fn fit_rate(&self, field: TraceField, from: f64, to: f64) -> Result<RateFit, SimError> {
        let (t, y): (Vec<f64>, Vec<f64>) = self
            .t
            .iter()
            .zip(self.field(field))
            .filter(|(t, _)| **t >= from - 1e-9 && **t <= to + 1e-9)
            .map(|(t, y)| (*t, *y))
            .unzip();
        fit_exponential_rate(&t, &y)
    }

    /// Largest `‖q₀(t) - q₀(0)‖` over the run.
    pub fn centroid_drift(&self) -> f64 {
        self.q0.first().map_or(0.0, |q| {
            self.q0.iter().map(|x| (x - q).norm()).fold(0.0, f64::max)
        })
    }

    pub fn final_value(&self, field: TraceField) -> Option<f64> {
        self.field(field).last().copied()
    }
}

type Rhs<'a> = dyn FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, SimError> + 'a;

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step(
    f: &mut Rhs<'_>,
    t: f64,
    x: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>, SimError> {
    let k1 = f(t, x)?;
    let k2 = f(t + dt / 2.0, &(x + &k1 * (dt / 2.0)))?;
    let k3 = f(t + dt / 2.0, &(x + &k2 * (dt / 2.0)))?;
    let k4 = f(t + dt, &(x + &k3 * dt))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Smallest edge separation and the 1-indexed edge attaining it.
fn closest_edge(g: &FormationGraph, p: &DVector<f64>) -> (f64, (usize, usize)) {
    let d = g.d();
    let mut best = (f64::INFINITY, (0, 0));
    for e in g.edges() {
        let sep = (p.rows(e.head * d, d) - p.rows(e.tail * d, d)).norm();
        if sep < best.0 {
            best = (sep, e.one_based());
        }
    }
    best
}

fn check_len(what: &str, x: &DVector<f64>, expected: usize) -> Result<(), SimError> {
    if x.len() != expected {
        return Err(SimError::InvalidInput(format!(
            "{what} has {} entries, expected {expected}",
            x.len()
        )));
    }
    Ok(())
}

/// Converts a coincidence raised inside a right-hand side into a bearing
/// loss carrying the partial trace.
fn as_loss(err: SimError, t: f64, trace: &SimTrace) -> SimError {
    match err {
        SimError::Bearing(BearingError::CoincidentAgents { edge, separation }) => {
            SimError::BearingLoss {
                t,
                edge: edge.unwrap_or((0, 0)),
                separation,
                partial: Box::new(trace.clone()),
            }
        }
        other => other,
    }
}

/// Drives the shared stepping loop: integrates `rhs`, calls `record` on the
/// recording schedule and aborts on coincidence.
fn run<F, R>(
    g: &FormationGraph,
    opts: &SimOptions,
    x0: DVector<f64>,
    trace: &mut SimTrace,
    positions_of: fn(&DVector<f64>, usize) -> DVector<f64>,
    mut rhs: F,
    mut record: R,
) -> Result<(), SimError>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, SimError>,
    R: FnMut(&mut SimTrace, f64, &DVector<f64>, f64) -> Result<(), SimError>,
{
    let steps = opts.steps()?;
    let dn = g.dn();
    let mut x = x0;
    let (sep0, edge0) = closest_edge(g, &positions_of(&x, dn));
    if !(sep0 > EPS_COINCIDENT) {
        return Err(SimError::BearingLoss {
            t: 0.0,
            edge: edge0,
            separation: sep0,
            partial: Box::new(trace.clone()),
        });
    }
    record(trace, 0.0, &x, sep0).map_err(|e| as_loss(e, 0.0, trace))?;
    let mut window_min = f64::INFINITY;
    for k in 1..=steps {
        let t_prev = (k - 1) as f64 * opts.dt;
        let dt = opts.dt.min(opts.horizon - t_prev);
        let t = if k == steps {
            opts.horizon
        } else {
            k as f64 * opts.dt
        };
        x = rk4_step(&mut rhs, t_prev, &x, dt).map_err(|e| as_loss(e, t_prev, trace))?;
        let (sep, edge) = closest_edge(g, &positions_of(&x, dn));
        if !(sep > EPS_COINCIDENT) {
            return Err(SimError::BearingLoss {
                t,
                edge,
                separation: sep,
                partial: Box::new(trace.clone()),
            });
        }
        window_min = window_min.min(sep);
        if k % opts.record_every == 0 || k == steps {
            record(trace, t, &x, window_min).map_err(|e| as_loss(e, t, trace))?;
            window_min = f64::INFINITY;
        }
    }
    Ok(())
}

fn head(x: &DVector<f64>, dn: usize) -> DVector<f64> {
    x.rows(0, dn).into_owned()
}

/// Single-integrator run `ṗ_i = v_i` under [`control_single`].
pub fn simulate_single(
    g: &FormationGraph,
    traj: &dyn Trajectory,
    p0: &DVector<f64>,
    k_p: f64,
    opts: &SimOptions,
) -> Result<SimTrace, SimError> {
    GainSet::single(k_p)?;
    check_len("initial positions", p0, g.dn())?;
    let (d, n) = (g.d(), g.n());
    let velocity = |t: f64, p: &DVector<f64>| -> Result<DVector<f64>, SimError> {
        let p_star = traj.positions(t)?;
        let v_star = traj.velocities(t)?;
        let meas = measure_all(g, p, &p_star)?;
        let mut out = DVector::zeros(g.dn());
        for (i, mi) in meas.iter().enumerate() {
            let vi = control_single(mi, &v_star.rows(i * d, d).into_owned(), k_p);
            out.rows_mut(i * d, d).copy_from(&vi);
        }
        Ok(out)
    };
    let mut trace = SimTrace::empty(Dynamics::Single, d, n);
    run(
        g,
        opts,
        p0.clone(),
        &mut trace,
        head,
        velocity,
        |tr, t, p, sep| {
            let e = p - traj.positions(t)?;
            let q0 = block_mean(&e, d);
            let delta = remove_block_mean(&e, d);
            tr.controls.push(velocity(t, p)?);
            tr.t.push(t);
            tr.positions.push(p.clone());
            tr.err_p.push(e.norm());
            tr.err_delta.push(delta.norm());
            tr.err_v.push(0.0);
            tr.q0_dot.push(DVector::zeros(d));
            tr.q0.push(q0);
            tr.min_sep.push(sep);
            tr.lyapunov.push(0.5 * delta.norm_squared());
            Ok(())
        },
    )?;
    Ok(trace)
}

/// Double-integrator run `ṗ_i = v_i, v̇_i = u_i` under [`control_double`].
pub fn simulate_double(
    g: &FormationGraph,
    traj: &dyn Trajectory,
    p0: &DVector<f64>,
    v0: &DVector<f64>,
    gains: &GainSet,
    opts: &SimOptions,
) -> Result<SimTrace, SimError> {
    let k_p = gains.k_p;
    let k_d = gains.require_k_d()?;
    check_len("initial positions", p0, g.dn())?;
    check_len("initial velocities", v0, g.dn())?;
    let (d, n, dn) = (g.d(), g.n(), g.dn());
    let accel = |t: f64, x: &DVector<f64>| -> Result<DVector<f64>, SimError> {
        let p = x.rows(0, dn).into_owned();
        let v = x.rows(dn, dn);
        let p_star = traj.positions(t)?;
        let v_star = traj.velocities(t)?;
        let u_star = traj.accelerations(t)?;
        let meas = measure_all(g, &p, &p_star)?;
        let mut u = DVector::zeros(dn);
        for (i, mi) in meas.iter().enumerate() {
            let v_err = v.rows(i * d, d) - v_star.rows(i * d, d);
            let ui = control_double(mi, &v_err, &u_star.rows(i * d, d).into_owned(), k_p, k_d);
            u.rows_mut(i * d, d).copy_from(&ui);
        }
        Ok(u)
    };
    let rhs = |t: f64, x: &DVector<f64>| -> Result<DVector<f64>, SimError> {
        let u = accel(t, x)?;
        let mut out = DVector::zeros(2 * dn);
        out.rows_mut(0, dn).copy_from(&x.rows(dn, dn));
        out.rows_mut(dn, dn).copy_from(&u);
        Ok(out)
    };
    let mut x0 = DVector::zeros(2 * dn);
    x0.rows_mut(0, dn).copy_from(p0);
    x0.rows_mut(dn, dn).copy_from(v0);
    let mut trace = SimTrace::empty(Dynamics::Double, d, n);
    run(g, opts, x0, &mut trace, head, rhs, |tr, t, x, sep| {
        let p = x.rows(0, dn).into_owned();
        let v = x.rows(dn, dn).into_owned();
        let ep = &p - traj.positions(t)?;
        let ev = &v - traj.velocities(t)?;
        let delta = remove_block_mean(&ep, d);
        let v_rel = remove_block_mean(&ev, d);
        // x̃ᵀ P x̃ with P = ½[[k_d I, I], [I, I]].
        let storage =
            0.5 * (k_d * delta.norm_squared() + 2.0 * delta.dot(&v_rel) + v_rel.norm_squared());
        tr.controls.push(accel(t, x)?);
        tr.t.push(t);
        tr.positions.push(p);
        tr.velocities.push(v);
        tr.err_p.push(ep.norm());
        tr.err_delta.push(delta.norm());
        tr.err_v.push(ev.norm());
        tr.q0.push(block_mean(&ep, d));
        tr.q0_dot.push(block_mean(&ev, d));
        tr.min_sep.push(sep);
        tr.lyapunov.push(storage);
        Ok(())
    })?;
    Ok(trace)
}

/// Centroid of the position error and its rate under the double integrator:
/// `q₀(t) = q₀(0) + (1 - e^{-k_d t}) q̇₀(0) / k_d`, `q̇₀(t) = e^{-k_d t} q̇₀(0)`.
pub fn double_centroid(
    q0: &DVector<f64>,
    q0_dot: &DVector<f64>,
    k_d: f64,
    t: f64,
) -> (DVector<f64>, DVector<f64>) {
    let decay = (-k_d * t).exp();
    (q0 + q0_dot * ((1.0 - decay) / k_d), q0_dot * decay)
}

/// Observer run `dp̂/dt = v - L_B(p) p̂` along the motion `traj`.
pub fn simulate_observer(
    g: &FormationGraph,
    motion: &dyn Trajectory,
    p_hat0: &DVector<f64>,
    opts: &SimOptions,
) -> Result<SimTrace, SimError> {
    check_len("initial estimate", p_hat0, g.dn())?;
    let (d, n) = (g.d(), g.n());
    let rhs = |t: f64, p_hat: &DVector<f64>| -> Result<DVector<f64>, SimError> {
        let p = motion.positions(t)?;
        let v = motion.velocities(t)?;
        Ok(observer_rhs(g, &p, &v, p_hat)?)
    };
    let mut trace = SimTrace::empty(Dynamics::Observer, d, n);
    // Coincidence is a property of the observed motion, not of the estimate.
    let steps = opts.steps()?;
    let mut x = p_hat0.clone();
    let record =
        |tr: &mut SimTrace, t: f64, p_hat: &DVector<f64>, sep: f64| -> Result<(), SimError> {
            let e = p_hat - motion.positions(t)?;
            let zeta = remove_block_mean(&e, d);
            tr.t.push(t);
            tr.positions.push(p_hat.clone());
            tr.err_p.push(e.norm());
            tr.err_delta.push(zeta.norm());
            tr.err_v.push(0.0);
            tr.q0.push(block_mean(&e, d));
            tr.q0_dot.push(DVector::zeros(d));
            tr.min_sep.push(sep);
            tr.lyapunov.push(0.5 * zeta.norm_squared());
            Ok(())
        };
    let separation = |t: f64| -> Result<(f64, (usize, usize)), SimError> {
        Ok(closest_edge(g, &motion.positions(t)?))
    };
    let (sep0, edge0) = separation(0.0)?;
    if !(sep0 > EPS_COINCIDENT) {
        return Err(SimError::BearingLoss {
            t: 0.0,
            edge: edge0,
            separation: sep0,
            partial: Box::new(trace),
        });
    }
    record(&mut trace, 0.0, &x, sep0)?;
    let mut rhs = rhs;
    let mut window_min = f64::INFINITY;
    for k in 1..=steps {
        let t_prev = (k - 1) as f64 * opts.dt;
        let dt = opts.dt.min(opts.horizon - t_prev);
        let t = if k == steps {
            opts.horizon
        } else {
            k as f64 * opts.dt
        };
        x = rk4_step(&mut rhs, t_prev, &x, dt).map_err(|e| as_loss(e, t_prev, &trace))?;
        let (sep, edge) = separation(t)?;
        if !(sep > EPS_COINCIDENT) {
            return Err(SimError::BearingLoss {
                t,
                edge,
                separation: sep,
                partial: Box::new(trace),
            });
        }
        window_min = window_min.min(sep);
        if k % opts.record_every == 0 || k == steps {
            record(&mut trace, t, &x, window_min)?;
            window_min = f64::INFINITY;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{rotation_about_axis, DesiredTrajectory, ScaleLaw, TranslationLaw};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn rotating_square() -> (FormationGraph, DesiredTrajectory) {
        let g = FormationGraph::new(4, 2, &[[1, 2], [2, 3], [3, 4]]).unwrap();
        let traj = DesiredTrajectory::new(
            2,
            DVector::from_vec(vec![0.5, 0.5, 0.5, -0.5, -0.5, -0.5, -0.5, 0.5]),
            ScaleLaw::Const(1.0),
            rotation_about_axis(2, None, PI / 3.0).unwrap(),
            TranslationLaw::none(2),
        )
        .unwrap();
        (g, traj)
    }

    #[test]
    fn rk4_is_exact_enough_on_exponential() {
        let mut f = |_t: f64, x: &DVector<f64>| Ok(-x.clone());
        let mut x = DVector::from_element(1, 1.0);
        for k in 0..1000 {
            x = rk4_step(&mut f, k as f64 * 1e-3, &x, 1e-3).unwrap();
        }
        assert_relative_eq!(x[0], (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn starting_on_target_stays_on_target() {
        let (g, traj) = rotating_square();
        let p0 = traj.positions(0.0).unwrap();
        let tr = simulate_single(&g, &traj, &p0, 2.0, &SimOptions::new(1e-3, 3.0)).unwrap();
        assert!(tr.err_p.iter().all(|e| *e < 1e-9));
        let v0 = traj.velocities(0.0).unwrap();
        let gains = GainSet::double(8.0, 11.0).unwrap();
        let tr = simulate_double(&g, &traj, &p0, &v0, &gains, &SimOptions::new(1e-3, 3.0)).unwrap();
        assert!(tr.err_p.iter().all(|e| *e < 1e-9));
        assert!(tr.err_v.iter().all(|e| *e < 1e-9));
    }

    #[test]
    fn recording_schedule() {
        let (g, traj) = rotating_square();
        let p0 = traj.positions(0.0).unwrap();
        let opts = SimOptions::new(1e-2, 1.005).with_record_every(10);
        let tr = simulate_single(&g, &traj, &p0, 1.0, &opts).unwrap();
        assert_eq!(tr.len(), 12);
        assert_relative_eq!(*tr.t.last().unwrap(), 1.005);
        assert_relative_eq!(tr.t[1], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn centroid_is_invariant_for_single_integrator() {
        let (g, traj) = rotating_square();
        let p0 = traj.positions(0.0).unwrap()
            + DVector::from_vec(vec![0.1, 0.0, 0.0, 0.1, -0.1, 0.05, 0.0, 0.0]);
        let tr = simulate_single(&g, &traj, &p0, 2.0, &SimOptions::new(1e-3, 5.0)).unwrap();
        assert!(tr.centroid_drift() < 1e-12);
        for k in 0..tr.len() {
            let uq = tr.q0[k].norm_squared() * 4.0;
            assert_relative_eq!(
                tr.err_p[k].powi(2),
                tr.err_delta[k].powi(2) + uq,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn double_centroid_follows_closed_form() {
        let (g, traj) = rotating_square();
        let p0 = traj.positions(0.0).unwrap()
            + DVector::from_vec(vec![0.1, 0.0, 0.0, 0.1, -0.1, 0.05, 0.0, 0.0]);
        let v0 = traj.velocities(0.0).unwrap()
            + DVector::from_vec(vec![0.2, 0.0, 0.0, 0.0, 0.0, 0.1, 0.0, 0.0]);
        let gains = GainSet::double(8.0, 11.0).unwrap();
        let tr = simulate_double(&g, &traj, &p0, &v0, &gains, &SimOptions::new(1e-3, 3.0)).unwrap();
        for k in 0..tr.len() {
            let (q, qd) = double_centroid(&tr.q0[0], &tr.q0_dot[0], 11.0, tr.t[k]);
            assert!((&tr.q0[k] - q).norm() < 1e-9);
            assert!((&tr.q0_dot[k] - qd).norm() < 1e-9);
        }
    }

    #[test]
    fn head_on_collision_raises_bearing_loss() {
        let g = FormationGraph::new(2, 2, &[[1, 2]]).unwrap();
        // Desired offset is perpendicular to the current bearing, so the
        // command keeps agents on the line; the feedforward drives them
        // through each other.
        #[derive(Debug)]
        struct Crossing;
        impl Trajectory for Crossing {
            fn dim(&self) -> usize {
                2
            }
            fn agents(&self) -> usize {
                2
            }
            fn period(&self) -> Option<f64> {
                None
            }
            fn positions(&self, t: f64) -> Result<DVector<f64>, TrajectoryError> {
                Ok(DVector::from_vec(vec![-1.0 + t, 0.0, 1.0 - t, 0.0]))
            }
            fn velocities(&self, _t: f64) -> Result<DVector<f64>, TrajectoryError> {
                Ok(DVector::from_vec(vec![1.0, 0.0, -1.0, 0.0]))
            }
            fn accelerations(&self, _t: f64) -> Result<DVector<f64>, TrajectoryError> {
                Ok(DVector::zeros(4))
            }
        }
        let p0 = DVector::from_vec(vec![-1.0, 0.0, 1.0, 0.0]);
        let err =
            simulate_single(&g, &Crossing, &p0, 1.0, &SimOptions::new(1e-3, 2.0)).unwrap_err();
        match err {
            SimError::BearingLoss {
                t, edge, partial, ..
            } => {
                assert_eq!(edge, (1, 2));
                assert!(t > 0.9 && t < 1.1, "loss at {t}");
                assert!(!partial.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn observer_from_truth_stays_exact() {
        let (g, traj) = rotating_square();
        let p0 = traj.positions(0.0).unwrap();
        let tr = simulate_observer(&g, &traj, &p0, &SimOptions::new(1e-3, 2.0)).unwrap();
        assert!(tr.err_delta.iter().all(|z| *z < 1e-10));
    }
}
