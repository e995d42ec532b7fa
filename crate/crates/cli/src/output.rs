//! Trace CSV emission with byte-stable number formatting.
//!
//! Columns: `t`, stacked positions `p{i}{x|y|z}`, stacked velocities
//! `v{i}{x|y|z}` (double integrator only), then `err_p`, `err_delta`, `err_v`
//! and `min_sep`. Axes beyond the third are named by index (`p1c4`).

use std::io::Write;
use std::path::Path;

use bearing_forms::{Dynamics, SimTrace};

use crate::CliError;

/// Shortest round-trip decimal; exponent notation outside `[1e-4, 1e15)`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn axis(c: usize) -> String {
    match c {
        0 => "x".into(),
        1 => "y".into(),
        2 => "z".into(),
        _ => format!("c{}", c + 1),
    }
}

pub fn trace_header(trace: &SimTrace) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    let mut block = |prefix: &str| {
        for i in 0..trace.n {
            for c in 0..trace.d {
                cols.push(format!("{prefix}{}{}", i + 1, axis(c)));
            }
        }
    };
    block("p");
    if trace.dynamics == Dynamics::Double {
        block("v");
    }
    cols.extend(["err_p", "err_delta", "err_v", "min_sep"].map(String::from));
    cols
}

/// The full trace as CSV bytes.
pub fn trace_csv(trace: &SimTrace) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(trace_header(trace)).map_err(csv_err)?;
    let double = trace.dynamics == Dynamics::Double;
    for k in 0..trace.len() {
        let mut row = Vec::with_capacity(1 + 2 * trace.n * trace.d + 4);
        row.push(fmt_f64(trace.t[k]));
        row.extend(trace.positions[k].iter().map(|&x| fmt_f64(x)));
        if double {
            row.extend(trace.velocities[k].iter().map(|&x| fmt_f64(x)));
        }
        for x in [
            trace.err_p[k],
            trace.err_delta[k],
            trace.err_v[k],
            trace.min_sep[k],
        ] {
            row.push(fmt_f64(x));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

/// Rows of `section,key,value`.
pub fn key_value_csv(rows: &[(String, String, String)]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["section", "key", "value"])
        .map_err(csv_err)?;
    for (s, k, v) in rows {
        w.write_record([s, k, v]).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    let mut f = std::fs::File::create(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    f.write_all(bytes)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use bearing_forms::sim::simulate_double;
    use bearing_forms::{DesiredTrajectory, FormationGraph, GainSet, SimOptions};
    use nalgebra::DVector;

    #[test]
    fn number_format_round_trips() {
        for x in [
            0.0,
            1.0,
            -2.5,
            1e-3,
            0.1 + 0.2,
            1e-300,
            3.5e20,
            -7.25e-9,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(0.001), "0.001");
        assert_eq!(fmt_f64(2e-9), "2e-9");
    }

    #[test]
    fn header_and_column_count() {
        let g = FormationGraph::new(2, 3, &[[1, 2]]).unwrap();
        let traj =
            DesiredTrajectory::fixed(3, DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]))
                .unwrap();
        let p0 = DVector::from_vec(vec![0.0, 0.1, 0.0, 1.0, 0.0, 0.2]);
        let trace = simulate_double(
            &g,
            &traj,
            &p0,
            &DVector::zeros(6),
            &GainSet::double(1.0, 3.0).unwrap(),
            &SimOptions::new(0.01, 0.05),
        )
        .unwrap();
        let bytes = trace_csv(&trace).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,p1x,p1y,p1z,p2x,p2y,p2z,v1x,v1y,v1z,v2x,v2y,v2z,err_p,err_delta,err_v,min_sep"
        );
        for l in lines {
            assert_eq!(l.split(',').count(), 1 + 2 * 6 + 4);
        }
        assert_eq!(trace_csv(&trace).unwrap(), bytes);
    }
}
