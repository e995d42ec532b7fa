//! Gain conditions, basin radii and convergence-rate calculators.

use nalgebra::DMatrix;

use crate::graph::FormationGraph;
use crate::linalg::min_eigenvalue;
use crate::trajectory::{min_edge_separation, Trajectory};

use super::SimError;

/// Controller gains; `k_d` is only used by the double integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSet {
    pub k_p: f64,
    pub k_d: Option<f64>,
}

impl GainSet {
    pub fn single(k_p: f64) -> Result<Self, SimError> {
        if !(k_p > 0.0) || !k_p.is_finite() {
            return Err(SimError::InvalidGain(format!(
                "k_p must be positive, got {k_p}"
            )));
        }
        Ok(Self { k_p, k_d: None })
    }

    pub fn double(k_p: f64, k_d: f64) -> Result<Self, SimError> {
        let mut g = Self::single(k_p)?;
        if !(k_d > 0.0) || !k_d.is_finite() {
            return Err(SimError::InvalidGain(format!(
                "k_d must be positive, got {k_d}"
            )));
        }
        g.k_d = Some(k_d);
        Ok(g)
    }

    pub fn require_k_d(&self) -> Result<f64, SimError> {
        self.k_d
            .ok_or_else(|| SimError::InvalidGain("double-integrator dynamics need k_d".into()))
    }
}

/// Double-integrator gain condition `k_d > (k_p/4) ‖H̄‖² + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainCheck {
    /// `‖H̄‖² = λ_max(L)`.
    pub incidence_norm_sq: f64,
    /// Threshold `k_d` must exceed.
    pub required_k_d: f64,
    /// `k_d - required_k_d`.
    pub margin: f64,
    pub passes: bool,
}

pub fn validate_gains(g: &FormationGraph, k_p: f64, k_d: f64) -> GainCheck {
    let s = g.incidence_norm_sq();
    let required_k_d = k_p / 4.0 * s + 1.0;
    let margin = k_d - required_k_d;
    GainCheck {
        incidence_norm_sq: s,
        required_k_d,
        margin,
        passes: margin > 0.0,
    }
}

/// Half the smallest desired edge length over `[0, horizon]`.
pub fn basin_radius_single(
    g: &FormationGraph,
    traj: &dyn Trajectory,
    horizon: f64,
    step: f64,
) -> Result<f64, SimError> {
    Ok(0.5 * min_edge_separation(g, traj, horizon, step)?)
}

/// Eigenvalues of `P = ½[[k_d I, I], [I, I]]` and the resulting basin factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleBasin {
    pub p_min: f64,
    pub p_max: f64,
    /// `max{√(λ_max/λ_min), √2}`.
    pub b: f64,
    /// `min edge length / (2b)`; zero when no trajectory was supplied.
    pub radius: f64,
}

/// Closed-form spectrum of `P` for a given `k_d`.
pub fn lyapunov_weight_spectrum(k_d: f64) -> Result<(f64, f64), SimError> {
    if !(k_d > 1.0) {
        return Err(SimError::InvalidGain(format!(
            "k_d must exceed 1, got {k_d}"
        )));
    }
    let root = ((k_d - 1.0).powi(2) + 4.0).sqrt();
    Ok(((k_d + 1.0 - root) / 4.0, (k_d + 1.0 + root) / 4.0))
}

pub fn double_basin_factor(k_d: f64) -> Result<DoubleBasin, SimError> {
    let (p_min, p_max) = lyapunov_weight_spectrum(k_d)?;
    let b = (p_max / p_min).sqrt().max(2f64.sqrt());
    Ok(DoubleBasin {
        p_min,
        p_max,
        b,
        radius: 0.0,
    })
}

pub fn basin_radius_double(
    g: &FormationGraph,
    traj: &dyn Trajectory,
    k_d: f64,
    horizon: f64,
    step: f64,
) -> Result<DoubleBasin, SimError> {
    let mut basin = double_basin_factor(k_d)?;
    basin.radius = min_edge_separation(g, traj, horizon, step)? / (2.0 * basin.b);
    Ok(basin)
}

/// Constants of the windowed exponential-stability bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateInputs {
    /// Lower and upper quadratic bounds of the storage function.
    pub lambda1: f64,
    pub lambda2: f64,
    /// Upper bound on `‖Σ(t)‖`.
    pub lambda_sigma: f64,
    pub gamma: f64,
    /// Window excitation level relative to the identity.
    pub mu: f64,
    pub window: f64,
    /// Dissipation constant: `L̇ <= -(1/c) ‖f‖²`.
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityBound {
    pub inputs: RateInputs,
    pub rho: f64,
    /// Per-window contraction of the storage function.
    pub sigma: f64,
    /// Storage-function decay coefficient `(1/T) ln(1/(1-σ))`.
    pub b: f64,
    /// Certified exponential rate `σ/(2T)` of the state norm.
    pub decay_rate: f64,
    /// `√(λ₂ / (λ₁(1-σ)))`.
    pub amplitude: f64,
}

pub fn rate_bound(inputs: RateInputs) -> Result<StabilityBound, SimError> {
    let RateInputs {
        lambda1,
        lambda2,
        lambda_sigma,
        gamma,
        mu,
        window,
        c,
    } = inputs;
    for (name, v) in [
        ("lambda1", lambda1),
        ("lambda2", lambda2),
        ("lambda_sigma", lambda_sigma),
        ("gamma", gamma),
        ("mu", mu),
        ("window", window),
        ("c", c),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(SimError::InvalidInput(format!(
                "{name} must be positive and finite, got {v}"
            )));
        }
    }
    if mu > lambda_sigma * (1.0 + 1e-12) {
        return Err(SimError::InvalidInput(format!(
            "mu = {mu} exceeds the excitation bound lambda_sigma = {lambda_sigma}"
        )));
    }
    if lambda1 > lambda2 {
        return Err(SimError::InvalidInput(
            "lambda1 must not exceed lambda2".into(),
        ));
    }
    let rho = lambda2 / (mu * window * gamma);
    let sigma = 1.0 / ((1.0 + rho) * (1.0 + rho * c * window * window * gamma * lambda_sigma));
    Ok(StabilityBound {
        inputs,
        rho,
        sigma,
        b: -(1.0 - sigma).ln() / window,
        decay_rate: sigma / (2.0 * window),
        amplitude: (lambda2 / (lambda1 * (1.0 - sigma))).sqrt(),
    })
}

/// `γ = k_p (1 - 2‖p̃(0)‖ / (2‖p̃(0)‖ + min_k ‖p̄*_k‖))²` for the single
/// integrator.
pub fn gamma_single(k_p: f64, initial_error: f64, min_desired_edge: f64) -> f64 {
    let r = 2.0 * initial_error / (2.0 * initial_error + min_desired_edge);
    k_p * (1.0 - r).powi(2)
}

/// Smallest eigenvalue bound `λ_M` of the double-integrator dissipation.
pub fn dissipation_floor(g: &FormationGraph, k_p: f64, k_d: f64) -> f64 {
    let s = g.incidence_norm_sq();
    (k_p * (k_d - 1.0) - k_p * k_p / 4.0 * s) / (k_d - 1.0 + k_p)
}

/// `γ = λ_M (1 - 2b‖x(0)‖ / (2b‖x(0)‖ + min_k ‖p̄*_k‖))²` for the double
/// integrator.
pub fn gamma_double(lambda_m: f64, b: f64, initial_state: f64, min_desired_edge: f64) -> f64 {
    let r = 2.0 * b * initial_state / (2.0 * b * initial_state + min_desired_edge);
    lambda_m * (1.0 - r).powi(2)
}

/// Rate bound for the single-integrator error `δ` with storage `½‖δ‖²`.
///
/// `mu_certificate` is the generalized excitation level against `L`; it is
/// converted to a level against the identity on `range(L)` by multiplying
/// with the smallest positive eigenvalue of `L`.
pub fn single_integrator_bound(
    g: &FormationGraph,
    k_p: f64,
    mu_certificate: f64,
    window: f64,
    initial_error: f64,
    min_desired_edge: f64,
) -> Result<StabilityBound, SimError> {
    let (values, _) = crate::linalg::sorted_symmetric_eigen(&g.laplacian());
    let d = g.d();
    let lambda_small = values[d];
    let lambda_max = *values.last().expect("non-empty spectrum");
    rate_bound(RateInputs {
        lambda1: 0.5,
        lambda2: 0.5,
        lambda_sigma: lambda_max,
        gamma: gamma_single(k_p, initial_error, min_desired_edge),
        mu: mu_certificate * lambda_small,
        window,
        c: k_p * lambda_max,
    })
}

/// `M_Q` and `M_A`, the edge-space factors of the double-integrator
/// dissipation and of `AᵀA`.
pub fn dissipation_matrices(
    g: &FormationGraph,
    k_p: f64,
    k_d: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let h = g.lifted_incidence();
    let (dm, dn) = h.shape();
    let mut mq = DMatrix::zeros(dm + dn, dm + dn);
    let mut ma = DMatrix::zeros(dm + dn, dm + dn);
    mq.view_mut((0, 0), (dm, dm)).fill_with_identity();
    mq.view_mut((0, 0), (dm, dm)).scale_mut(k_p);
    mq.view_mut((0, dm), (dm, dn))
        .copy_from(&(&h * (k_p / 2.0)));
    mq.view_mut((dm, 0), (dn, dm))
        .copy_from(&(h.transpose() * (k_p / 2.0)));
    mq.view_mut((dm, dm), (dn, dn)).fill_with_identity();
    mq.view_mut((dm, dm), (dn, dn)).scale_mut(k_d - 1.0);

    ma.view_mut((0, 0), (dm, dm))
        .copy_from(&(&h * h.transpose() * (k_p * k_p)));
    ma.view_mut((0, dm), (dm, dn))
        .copy_from(&(&h * (k_p * k_d)));
    ma.view_mut((dm, 0), (dn, dm))
        .copy_from(&(h.transpose() * (k_p * k_d)));
    ma.view_mut((dm, dm), (dn, dn)).fill_with_identity();
    ma.view_mut((dm, dm), (dn, dn)).scale_mut(1.0 + k_d * k_d);
    (mq, ma)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationConstant {
    pub c: f64,
    /// `max{k_p ‖H̄‖², (k_d² + 1)/(k_d - 1)}`.
    pub floor: f64,
    /// Real roots of the quadratic condition, if any.
    pub roots: Option<(f64, f64)>,
    /// `λ_min(c M_Q - M_A)`.
    pub min_eigenvalue: f64,
}

/// Smallest `c` meeting both the quadratic condition and the floor, which
/// makes `c Q - AᵀA` positive semi-definite.
pub fn dissipation_constant(
    g: &FormationGraph,
    k_p: f64,
    k_d: f64,
) -> Result<DissipationConstant, SimError> {
    let check = validate_gains(g, k_p, k_d);
    if !check.passes {
        return Err(SimError::GainConditionViolated {
            k_d,
            required: check.required_k_d,
        });
    }
    let s = check.incidence_norm_sq;
    let a = k_p * k_d - k_p - k_p * k_p * s / 4.0;
    let b = k_p * k_d * k_d + k_p - k_p * k_p * s;
    let e = k_p * k_p * s;
    let quad = |c: f64| a * c * c - b * c + e;
    let floor = (k_p * s).max((k_d * k_d + 1.0) / (k_d - 1.0));
    let disc = b * b - 4.0 * a * e;
    let roots = (disc >= 0.0).then(|| {
        let r = disc.sqrt();
        ((b - r) / (2.0 * a), (b + r) / (2.0 * a))
    });
    let c = match roots {
        Some((_, r2)) if quad(floor) < 0.0 => r2,
        _ => floor,
    };
    let (mq, ma) = dissipation_matrices(g, k_p, k_d);
    let min_eigenvalue = min_eigenvalue(&(mq * c - ma));
    Ok(DissipationConstant {
        c,
        floor,
        roots,
        min_eigenvalue,
    })
}

/// Least-squares exponential fit `log y ≈ a - rate · t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

pub fn fit_exponential_rate(t: &[f64], y: &[f64]) -> Result<RateFit, SimError> {
    assert_eq!(t.len(), y.len(), "time and value series differ in length");
    if t.len() < 2 {
        return Err(SimError::InvalidInput(
            "need at least two samples to fit a rate".into(),
        ));
    }
    if let Some(i) = y.iter().position(|v| !(*v > 0.0)) {
        return Err(SimError::NonPositiveSamples {
            t: t[i],
            value: y[i],
        });
    }
    let n = t.len() as f64;
    let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let tm = t.iter().sum::<f64>() / n;
    let lm = logs.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|x| (x - tm).powi(2)).sum();
    let stl: f64 = t.iter().zip(&logs).map(|(x, l)| (x - tm) * (l - lm)).sum();
    let slope = stl / stt;
    let intercept = lm - slope * tm;
    let ss_tot: f64 = logs.iter().map(|l| (l - lm).powi(2)).sum();
    let ss_res: f64 = t
        .iter()
        .zip(&logs)
        .map(|(x, l)| (l - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok(RateFit {
        rate: -slope,
        intercept,
        r_squared,
        samples: t.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::DesiredTrajectory;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn path4() -> FormationGraph {
        FormationGraph::new(4, 2, &[[1, 2], [2, 3], [3, 4]]).unwrap()
    }

    #[test]
    fn gain_condition_on_path() {
        let g = path4();
        let ok = validate_gains(&g, 8.0, 11.0);
        assert_relative_eq!(ok.incidence_norm_sq, 2.0 + 2f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(
            ok.required_k_d,
            2.0 * (2.0 + 2f64.sqrt()) + 1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(ok.margin, 6.0 - 2.0 * 2f64.sqrt(), epsilon = 1e-12);
        assert!(ok.passes);
        assert!(!validate_gains(&g, 8.0, 7.5).passes);
        let k2 = FormationGraph::new(2, 3, &[[1, 2]]).unwrap();
        assert!(validate_gains(&k2, 7.0, 10.0).passes);
    }

    #[test]
    fn unit_square_basin() {
        let g = FormationGraph::new(4, 2, &[[1, 2], [2, 3], [3, 4], [1, 4]]).unwrap();
        let sq =
            DesiredTrajectory::fixed(2, DVector::from_vec(vec![0., 0., 1., 0., 1., 1., 0., 1.]))
                .unwrap();
        assert_relative_eq!(basin_radius_single(&g, &sq, 1.0, 0.1).unwrap(), 0.5);
    }

    #[test]
    fn weight_spectrum_closed_form() {
        let (lo, hi) = lyapunov_weight_spectrum(11.0).unwrap();
        assert_relative_eq!(lo, (12.0 - 104f64.sqrt()) / 4.0, epsilon = 1e-14);
        assert_relative_eq!(hi, (12.0 + 104f64.sqrt()) / 4.0, epsilon = 1e-14);
        // Against a dense eigen-decomposition of P with d n = 3.
        let k_d = 11.0;
        let mut p = DMatrix::zeros(6, 6);
        for i in 0..3 {
            p[(i, i)] = k_d / 2.0;
            p[(i, i + 3)] = 0.5;
            p[(i + 3, i)] = 0.5;
            p[(i + 3, i + 3)] = 0.5;
        }
        let ev = p.symmetric_eigenvalues();
        assert_relative_eq!(ev.min(), lo, epsilon = 1e-12);
        assert_relative_eq!(ev.max(), hi, epsilon = 1e-12);
        let basin = double_basin_factor(11.0).unwrap();
        assert_relative_eq!(basin.b, (hi / lo).sqrt(), epsilon = 1e-12);
        assert!(double_basin_factor(1.0).is_err());
    }

    #[test]
    fn basin_factor_never_uses_the_sqrt2_branch() {
        // λ_max/λ_min >= 2 for every k_d > 1; the ratio bottoms out near 5.83.
        let mut k = 1.0001;
        while k < 1e4 {
            let basin = double_basin_factor(k).unwrap();
            assert!(basin.p_max / basin.p_min > 2.0);
            assert_relative_eq!(basin.b, (basin.p_max / basin.p_min).sqrt());
            k *= 1.01;
        }
    }

    #[test]
    fn basin_factor_grows_with_damping() {
        let mut prev = double_basin_factor(5.0).unwrap().b;
        for k in (6..=1000).map(f64::from) {
            let b = double_basin_factor(k).unwrap().b;
            assert!(b > prev);
            prev = b;
        }
    }

    #[test]
    fn sigma_in_unit_interval() {
        let base = RateInputs {
            lambda1: 0.5,
            lambda2: 0.5,
            lambda_sigma: 4.0,
            gamma: 0.3,
            mu: 0.1,
            window: 6.0,
            c: 4.0,
        };
        let b = rate_bound(base).unwrap();
        assert!(b.sigma > 0.0 && b.sigma < 1.0);
        assert!(b.b > b.sigma / base.window);
        let tiny = rate_bound(RateInputs { mu: 1e-12, ..base }).unwrap();
        assert!(tiny.sigma < 1e-10);
        assert!(rate_bound(RateInputs { mu: 5.0, ..base }).is_err());
        assert!(rate_bound(RateInputs { gamma: 0.0, ..base }).is_err());
    }

    #[test]
    fn dissipation_constant_on_k2() {
        let g = FormationGraph::new(2, 2, &[[1, 2]]).unwrap();
        let dc = dissipation_constant(&g, 1.0, 3.0).unwrap();
        assert_relative_eq!(dc.floor, 5.0);
        assert_relative_eq!(dc.c, (8.0 + 52f64.sqrt()) / 3.0, epsilon = 1e-12);
        assert!(dc.min_eigenvalue >= -1e-9);
        let (mq, ma) = dissipation_matrices(&g, 1.0, 3.0);
        assert!(min_eigenvalue(&(mq * (0.99 * dc.c) - ma)) < 0.0);
        assert!(matches!(
            dissipation_constant(&g, 8.0, 3.0),
            Err(SimError::GainConditionViolated { .. })
        ));
    }

    #[test]
    fn dissipation_matrices_factor_q() {
        // Q = Sᵀ M_Q S with S = diag(Π H̄, I).
        let g = path4();
        let p = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.3, 2.0, -0.4, 2.5, 1.0]);
        let state =
            crate::bearing::bearing_laplacian(&g, &crate::Configuration::new(2, p).unwrap())
                .unwrap();
        let (k_p, k_d) = (8.0, 11.0);
        let h = g.lifted_incidence();
        let pih = state.projector_matrix() * &h;
        let (dm, dn) = h.shape();
        let mut s = DMatrix::zeros(dm + dn, 2 * dn);
        s.view_mut((0, 0), (dm, dn)).copy_from(&pih);
        s.view_mut((dm, dn), (dn, dn)).fill_with_identity();
        let (mq, ma) = dissipation_matrices(&g, k_p, k_d);
        let lb = &state.laplacian;
        let mut q = DMatrix::zeros(2 * dn, 2 * dn);
        q.view_mut((0, 0), (dn, dn)).copy_from(&(lb * k_p));
        q.view_mut((0, dn), (dn, dn)).copy_from(&(lb * (k_p / 2.0)));
        q.view_mut((dn, 0), (dn, dn)).copy_from(&(lb * (k_p / 2.0)));
        q.view_mut((dn, dn), (dn, dn)).fill_with_identity();
        q.view_mut((dn, dn), (dn, dn)).scale_mut(k_d - 1.0);
        assert!((s.transpose() * &mq * &s - &q).norm() < 1e-10);
        let mut a = DMatrix::zeros(2 * dn, 2 * dn);
        a.view_mut((0, dn), (dn, dn)).fill_with_identity();
        a.view_mut((0, dn), (dn, dn)).scale_mut(-1.0);
        a.view_mut((dn, 0), (dn, dn)).copy_from(&(lb * k_p));
        a.view_mut((dn, dn), (dn, dn)).fill_with_identity();
        a.view_mut((dn, dn), (dn, dn)).scale_mut(k_d);
        assert!((s.transpose() * &ma * &s - a.transpose() * &a).norm() < 1e-9);
    }

    #[test]
    fn exponential_fit() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.05).collect();
        let y: Vec<f64> = t.iter().map(|x| 3.0 * (-2.0 * x).exp()).collect();
        let fit = fit_exponential_rate(&t, &y).unwrap();
        assert_relative_eq!(fit.rate, 2.0, epsilon = 1e-6);
        assert!(fit.r_squared > 0.999_999);
        let flat = fit_exponential_rate(&t, &vec![1.5; t.len()]).unwrap();
        assert!(flat.rate.abs() < 1e-12);
        assert!(matches!(
            fit_exponential_rate(&[0.0, 1.0], &[1.0, 0.0]),
            Err(SimError::NonPositiveSamples { .. })
        ));
    }
}
