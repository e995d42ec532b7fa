//! Agent-local control laws and the bearing observer.
//!
//! Each law sees only what one agent measures: bearings to its neighbours,
//! its own velocity error, and the desired feedforward terms.

use nalgebra::DVector;

use crate::bearing::{edge_bearings, project_out, BearingError};
use crate::graph::FormationGraph;

/// What agent `i` knows about neighbour `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborMeasurement {
    /// Measured bearing `g_ij` from `i` towards `j`.
    pub bearing: DVector<f64>,
    /// Desired relative position `p*_ij = p*_j - p*_i`.
    pub desired_relative: DVector<f64>,
}

/// `-Σ_j π_{g_ij} p*_ij`, the bearing feedback shared by both laws.
fn bearing_feedback(measurements: &[NeighborMeasurement], d: usize) -> DVector<f64> {
    let mut acc = DVector::zeros(d);
    for m in measurements {
        acc -= project_out(&m.bearing, &m.desired_relative);
    }
    acc
}

/// Velocity command `v_i = -k_p Σ_j π_{g_ij} p*_ij + v_i*`.
pub fn control_single(
    measurements: &[NeighborMeasurement],
    v_star: &DVector<f64>,
    k_p: f64,
) -> DVector<f64> {
    bearing_feedback(measurements, v_star.len()) * k_p + v_star
}

/// Acceleration command `u_i = -k_p Σ_j π_{g_ij} p*_ij - k_d ṽ_i + u_i*`.
pub fn control_double(
    measurements: &[NeighborMeasurement],
    v_err: &DVector<f64>,
    u_star: &DVector<f64>,
    k_p: f64,
    k_d: f64,
) -> DVector<f64> {
    bearing_feedback(measurements, u_star.len()) * k_p - v_err * k_d + u_star
}

/// Splits the global state into per-agent measurement lists.
pub fn measure_all(
    g: &FormationGraph,
    p: &DVector<f64>,
    p_star: &DVector<f64>,
) -> Result<Vec<Vec<NeighborMeasurement>>, BearingError> {
    let d = g.d();
    let (bearings, _) = edge_bearings(g, p)?;
    let mut out = vec![Vec::new(); g.n()];
    for (e, gk) in g.edges().iter().zip(&bearings) {
        let rel = p_star.rows(e.head * d, d) - p_star.rows(e.tail * d, d);
        out[e.tail].push(NeighborMeasurement {
            bearing: gk.clone(),
            desired_relative: rel.clone(),
        });
        out[e.head].push(NeighborMeasurement {
            bearing: -gk,
            desired_relative: -rel,
        });
    }
    Ok(out)
}

/// Observer vector field `v - L_B(p) p̂`, assembled edge by edge.
pub fn observer_rhs(
    g: &FormationGraph,
    p: &DVector<f64>,
    v: &DVector<f64>,
    p_hat: &DVector<f64>,
) -> Result<DVector<f64>, BearingError> {
    let d = g.d();
    let (bearings, _) = edge_bearings(g, p)?;
    let mut out = v.clone();
    for (e, gk) in g.edges().iter().zip(&bearings) {
        let diff = p_hat.rows(e.head * d, d) - p_hat.rows(e.tail * d, d);
        let w = project_out(gk, &diff.into_owned());
        let mut tail = out.rows_mut(e.tail * d, d);
        tail += &w;
        let mut head = out.rows_mut(e.head * d, d);
        head -= &w;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bearing::bearing_laplacian_matrix;
    use crate::linalg::block_mean;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn hand_evaluated_single_law() {
        let g = FormationGraph::new(2, 2, &[[1, 2]]).unwrap();
        let p = v(&[0.0, 0.0, 1.0, 0.0]);
        let p_star = v(&[0.0, 0.0, 0.0, 2.0]);
        let m = measure_all(&g, &p, &p_star).unwrap();
        let zero = DVector::zeros(2);
        assert_eq!(control_single(&m[0], &zero, 1.0), v(&[0.0, -2.0]));
        assert_eq!(control_single(&m[1], &zero, 1.0), v(&[0.0, 2.0]));
    }

    #[test]
    fn on_target_returns_feedforward() {
        let g = FormationGraph::new(3, 2, &[[1, 2], [2, 3]]).unwrap();
        let p_star = v(&[0.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let scaled = &p_star * 2.5;
        for p in [&p_star, &scaled] {
            let m = measure_all(&g, p, &p_star).unwrap();
            let vs = v(&[0.3, -0.1]);
            for mi in &m {
                assert!((control_single(mi, &vs, 4.0) - &vs).norm() < 1e-15);
                let u = control_double(mi, &DVector::zeros(2), &vs, 4.0, 2.0);
                assert!((u - &vs).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn pure_damping() {
        let u = control_double(&[], &v(&[1.0, 0.0]), &DVector::zeros(2), 8.0, 2.0);
        assert_eq!(u, v(&[-2.0, 0.0]));
    }

    #[test]
    fn observer_matches_matrix_form_and_keeps_centroid() {
        let g = FormationGraph::new(4, 2, &[[1, 2], [2, 3], [3, 4], [1, 3]]).unwrap();
        let p = v(&[0.0, 0.0, 1.0, 0.2, 1.3, 1.1, -0.2, 0.9]);
        let vel = v(&[0.1, 0.0, 0.0, 0.3, -0.2, 0.1, 0.0, 0.0]);
        let p_hat = v(&[0.4, -0.3, 1.0, 1.0, 2.0, 0.5, 0.1, 0.1]);
        let lb = bearing_laplacian_matrix(&g, &p).unwrap();
        let rhs = observer_rhs(&g, &p, &vel, &p_hat).unwrap();
        assert!((&rhs - (&vel - &lb * &p_hat)).norm() < 1e-14);
        assert!(block_mean(&(&rhs - &vel), 2).norm() < 1e-15);

        assert!((observer_rhs(&g, &p, &vel, &p).unwrap() - &vel).norm() < 1e-14);
        let shifted = DVector::from_fn(8, |r, _| p[r] + if r % 2 == 0 { 3.0 } else { -1.0 });
        assert!((observer_rhs(&g, &p, &vel, &shifted).unwrap() - &vel).norm() < 1e-14);
    }

    #[test]
    fn coincident_measurement_is_refused() {
        let g = FormationGraph::new(2, 2, &[[1, 2]]).unwrap();
        let p = v(&[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            measure_all(&g, &p, &p),
            Err(BearingError::CoincidentAgents {
                edge: Some((1, 2)),
                ..
            })
        ));
    }
}
