//! Parameter sweeps: a Cartesian grid over `k_p`, `k_d`, perturbation
//! fraction, step size and seed, run in parallel with ordered output.
//!
//! Grid axes are given as `name=v1,v2,...` or `name=start:stop:count`
//! (inclusive, evenly spaced). Later axes vary fastest.

use std::path::Path;

use rayon::prelude::*;

use crate::commands::run_scenario;
use crate::output::{fmt_f64, write_file};
use crate::scenario::{InitialCondition, Scenario};
use crate::CliError;
use bearing_forms::sim::validate_gains;
use bearing_forms::{Dynamics, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    KP,
    KD,
    Fraction,
    Dt,
    Seed,
}

impl Param {
    fn parse(name: &str) -> Result<Self, CliError> {
        Ok(match name {
            "k_p" => Param::KP,
            "k_d" => Param::KD,
            "fraction" => Param::Fraction,
            "dt" => Param::Dt,
            "seed" => Param::Seed,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown sweep parameter `{other}` (expected k_p, k_d, fraction, dt or seed)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub param: Param,
    pub values: Vec<f64>,
}

/// Parses `name=v1,v2` or `name=start:stop:count`.
pub fn parse_axis(spec: &str) -> Result<Axis, CliError> {
    let bad = |why: &str| CliError::Usage(format!("bad --grid `{spec}`: {why}"));
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| bad("expected name=values"))?;
    let param = Param::parse(name.trim())?;
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| bad(&format!("`{s}` is not a number")))
    };
    let values = if values.contains(':') {
        let parts: Vec<&str> = values.split(':').collect();
        let [a, b, c] = parts[..] else {
            return Err(bad("ranges are start:stop:count"));
        };
        let (a, b) = (num(a)?, num(b)?);
        let count: usize = c
            .trim()
            .parse()
            .map_err(|_| bad("count must be a positive integer"))?;
        match count {
            0 => return Err(bad("count must be a positive integer")),
            1 => vec![a],
            _ => (0..count)
                .map(|k| a + (b - a) * k as f64 / (count - 1) as f64)
                .collect(),
        }
    } else {
        values.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() {
        return Err(bad("no values"));
    }
    if param == Param::Seed && values.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
        return Err(bad("seeds are non-negative integers"));
    }
    Ok(Axis { param, values })
}

/// One grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub k_p: f64,
    pub k_d: Option<f64>,
    pub fraction: Option<f64>,
    pub dt: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub run: usize,
    pub params: RunParams,
    pub gain_pass: Option<bool>,
    pub status: String,
    pub converged: bool,
    pub err_p: Option<f64>,
    pub err_delta: Option<f64>,
    pub err_v: Option<f64>,
    pub rate: Option<f64>,
    pub r_squared: Option<f64>,
    pub note: String,
}

pub const SWEEP_HEADER: [&str; 15] = [
    "run",
    "k_p",
    "k_d",
    "fraction",
    "dt",
    "seed",
    "gain_pass",
    "status",
    "converged",
    "err_p",
    "err_delta",
    "err_v",
    "rate",
    "r_squared",
    "note",
];

/// Expands the grid against the scenario's own values.
pub fn grid_points(s: &Scenario, axes: &[Axis]) -> Vec<RunParams> {
    let (fraction, seed) = match s.initial {
        InitialCondition::Perturbed { seed, fraction } => (Some(fraction), Some(seed)),
        InitialCondition::Explicit { .. } => (None, None),
    };
    let mut points = vec![RunParams {
        k_p: s.gains.k_p,
        k_d: s.gains.k_d,
        fraction,
        dt: s.sim.dt,
        seed,
    }];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |&v| {
                    let mut q = p.clone();
                    match axis.param {
                        Param::KP => q.k_p = v,
                        Param::KD => q.k_d = Some(v),
                        Param::Fraction => q.fraction = Some(v),
                        Param::Dt => q.dt = v,
                        Param::Seed => q.seed = Some(v as u64),
                    }
                    q
                })
            })
            .collect();
    }
    points
}

fn configure(base: &Scenario, p: &RunParams) -> Result<Scenario, CliError> {
    let mut s = base.clone();
    s.gains.k_p = p.k_p;
    s.gains.k_d = p.k_d;
    if !(p.k_p > 0.0) || p.k_d.is_some_and(|k| !(k > 0.0)) {
        return Err(CliError::Invalid("gains must be positive".into()));
    }
    if !(p.dt > 0.0) {
        return Err(CliError::Invalid("dt must be positive".into()));
    }
    s.sim.dt = p.dt;
    if let Some(fraction) = p.fraction {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(CliError::Invalid(format!(
                "fraction {fraction} is not in (0, 1]"
            )));
        }
        s.initial = InitialCondition::Perturbed {
            seed: p.seed.unwrap_or(0),
            fraction,
        };
    }
    Ok(s)
}

fn run_one(base: &Scenario, run: usize, params: RunParams, tol: f64) -> SweepRow {
    let mut row = SweepRow {
        run,
        gain_pass: None,
        status: "ok".into(),
        converged: false,
        err_p: None,
        err_delta: None,
        err_v: None,
        rate: None,
        r_squared: None,
        note: String::new(),
        params,
    };
    let s = match configure(base, &row.params) {
        Ok(s) => s,
        Err(e) => {
            row.status = "invalid".into();
            row.note = e.to_string();
            return row;
        }
    };
    if s.dynamics == Dynamics::Double {
        if let Some(k_d) = s.gains.k_d {
            row.gain_pass = Some(validate_gains(&s.graph, s.gains.k_p, k_d).passes);
        }
    }
    let seed = match s.initial {
        InitialCondition::Perturbed { seed, .. } => Some(seed),
        InitialCondition::Explicit { .. } => None,
    };
    match run_scenario(&s, seed, true) {
        Ok(out) => {
            let tr = &out.trace;
            row.err_p = tr.err_p.last().copied();
            row.err_delta = tr.err_delta.last().copied();
            row.err_v = (s.dynamics == Dynamics::Double)
                .then(|| tr.err_v.last().copied())
                .flatten();
            if let Some(SimError::BearingLoss { t, edge, .. }) = &out.loss {
                row.status = "bearing_loss".into();
                row.note = format!("edge {}-{} at t = {}", edge.0, edge.1, fmt_f64(*t));
            } else {
                row.converged =
                    row.err_delta.is_some_and(|e| e < tol) && row.err_v.is_none_or(|e| e < tol);
            }
            let last = tr.t.last().copied().unwrap_or(0.0);
            if let Ok(fit) = tr.fit_rate(bearing_forms::sim::TraceField::ErrDelta, 0.5 * last, last)
            {
                if fit.samples >= 2 {
                    row.rate = Some(fit.rate);
                    row.r_squared = Some(fit.r_squared);
                }
            }
        }
        Err(e) => {
            row.status = "error".into();
            row.note = e.to_string();
        }
    }
    row
}

/// Runs every grid point on a pool of `jobs` threads; rows come back in grid
/// order whatever the scheduling.
pub fn run_sweep(
    s: &Scenario,
    axes: &[Axis],
    jobs: usize,
    tol: f64,
) -> Result<Vec<SweepRow>, CliError> {
    let points = grid_points(s, axes);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        points
            .into_par_iter()
            .enumerate()
            .map(|(k, p)| run_one(s, k + 1, p, tol))
            .collect()
    }))
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(SWEEP_HEADER).map_err(err)?;
    for r in rows {
        let p = &r.params;
        w.write_record([
            r.run.to_string(),
            fmt_f64(p.k_p),
            opt(p.k_d),
            opt(p.fraction),
            fmt_f64(p.dt),
            p.seed.map(|s| s.to_string()).unwrap_or_default(),
            r.gain_pass.map(|b| b.to_string()).unwrap_or_default(),
            r.status.clone(),
            r.converged.to_string(),
            opt(r.err_p),
            opt(r.err_delta),
            opt(r.err_v),
            opt(r.rate),
            opt(r.r_squared),
            r.note.clone(),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn cmd_sweep(
    spec: &str,
    grid: &[String],
    jobs: usize,
    tol: f64,
    horizon: Option<f64>,
    out: &Path,
) -> Result<Vec<SweepRow>, CliError> {
    let (mut s, _) = Scenario::load(spec)?;
    if let Some(h) = horizon {
        if !(h > 0.0) {
            return Err(CliError::Usage(format!(
                "--horizon must be positive, got {h}"
            )));
        }
        s.sim.horizon = h;
    }
    let axes = grid
        .iter()
        .map(|g| parse_axis(g))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = run_sweep(&s, &axes, jobs, tol)?;
    let path = out.join("sweep.csv");
    write_file(&path, &sweep_csv(&rows)?)?;
    let converged = rows.iter().filter(|r| r.converged).count();
    println!("scenario: {} (sha256 {})", s.name, s.hash);
    println!("runs: {}  converged: {converged}  jobs: {jobs}", rows.len());
    println!("wrote {}", path.display());
    Ok(rows)
}
