//! `analyze`, `simulate`, `observe` and `scenarios`.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use bearing_forms::pe::{acyclic_bpe_check, is_bpe, min_pe_bearing_lower_bound, rank_history};
use bearing_forms::sim::bounds::{dissipation_constant, single_integrator_bound};
use bearing_forms::sim::{
    basin_radius_double, basin_radius_single, simulate_double, simulate_observer, simulate_single,
    validate_gains, TraceField,
};
use bearing_forms::trajectory::min_edge_separation;
use bearing_forms::{min_rigid_edge_count, Dynamics, SimError, SimTrace, Trajectory};
use nalgebra::DVector;

use crate::output::{fmt_f64, key_value_csv, trace_csv, write_file};
use crate::perturb::sample_centered_direction;
use crate::plot::{error_plot, trajectory_plot};
use crate::scenario::{sha256_hex, Scenario, BASIN_SAMPLE_STEP, BUILTIN_FILES};
use crate::{CliError, EXIT_NEGATIVE, EXIT_OK};

/// Everything a command reports, as `section, key, value` rows in emission
/// order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub rows: Vec<(String, String, String)>,
}

impl RunReport {
    pub fn add(&mut self, section: &str, key: &str, value: impl Display) {
        self.rows
            .push((section.into(), key.into(), value.to_string()));
    }

    pub fn num(&mut self, section: &str, key: &str, value: f64) {
        self.add(section, key, fmt_f64(value));
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.rows
            .iter()
            .find(|(s, k, _)| s == section && k == key)
            .map(|(_, _, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for (s, k, v) in &self.rows {
            if s != current {
                out.push_str(&format!("[{s}]\n"));
                current = s;
            }
            out.push_str(&format!("  {k}: {v}\n"));
        }
        out
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Structural, rank and PE analysis. Returns the exit code (0 when BPE, 2
/// otherwise) and the report.
pub fn analyze(s: &Scenario) -> Result<(i32, RunReport), CliError> {
    let g = &s.graph;
    let traj = &s.trajectory;
    let mut r = RunReport::default();
    r.add("scenario", "name", &s.name);
    r.add("scenario", "sha256", &s.hash);
    r.add("graph", "n", g.n());
    r.add("graph", "d", g.d());
    r.add("graph", "m", g.m());
    let connected = g.has_spanning_tree();
    let acyclic = g.is_acyclic();
    r.add("graph", "connected", yes_no(connected));
    r.add("graph", "acyclic", yes_no(acyclic));
    let f = min_rigid_edge_count(g.n(), g.d());
    r.add("graph", "rigid_edge_count", f);
    r.add(
        "graph",
        "edges_vs_rigid_count",
        if g.m() >= f {
            "m >= f(n,d)"
        } else {
            "m < f(n,d)"
        },
    );
    match min_pe_bearing_lower_bound(g.m(), g.n(), g.d()) {
        Ok(b) => r.add("graph", "min_pe_bearings", b),
        Err(e) => r.add("graph", "min_pe_bearings", format!("n/a ({e})")),
    }

    let verdict = is_bpe(g, traj, &s.pe)?;
    let window = s.pe.window;
    let step =
        s.pe.step
            .unwrap_or(window / bearing_forms::pe::DEFAULT_INTERVALS as f64);
    let span = verdict
        .certificate
        .as_ref()
        .map_or(3.0 * window, |c| c.horizon)
        + window;
    let ranks = rank_history(g, traj, span, step)?;
    let (rmin, rmax) = ranks
        .iter()
        .fold((usize::MAX, 0), |(lo, hi), &(_, k)| (lo.min(k), hi.max(k)));
    r.add("rank", "expected_rigid", g.dn() - g.d() - 1);
    r.add("rank", "min", rmin);
    r.add("rank", "max", rmax);
    r.add("rank", "samples", ranks.len());
    r.num("rank", "span", span);

    match &verdict.certificate {
        Some(c) => {
            r.num("pe", "T", c.window);
            r.num("pe", "step", c.step);
            r.num("pe", "scan_horizon", c.horizon);
            r.add("pe", "windows", c.starts.len());
            r.num("pe", "mu", c.mu);
            r.num("pe", "mu_min", c.mu_min);
            r.num("pe", "worst_window_start", c.worst_start());
        }
        None => r.add("pe", "certificate", "n/a (graph is disconnected)"),
    }
    if acyclic && connected {
        let report = acyclic_bpe_check(g, traj, &s.pe)?;
        for ((i, j), c) in &report.edges {
            r.add(
                "edges",
                &format!("{i}-{j}"),
                format!("mu={} pe={}", fmt_f64(c.mu), yes_no(c.is_pe)),
            );
        }
        r.add("edges", "all_pe", yes_no(report.is_bpe));
    }
    r.add("verdict", "bpe", yes_no(verdict.is_bpe));

    stability_section(s, verdict.certificate.as_ref().map(|c| c.mu), &mut r)?;
    let code = if verdict.is_bpe {
        EXIT_OK
    } else {
        EXIT_NEGATIVE
    };
    Ok((code, r))
}

/// Gain margins, basin radii and certified rates.
fn stability_section(s: &Scenario, mu: Option<f64>, r: &mut RunReport) -> Result<(), CliError> {
    let g = &s.graph;
    let horizon = s.sim.horizon;
    let min_edge = min_edge_separation(g, &s.trajectory, horizon, BASIN_SAMPLE_STEP)?;
    r.num("stability", "min_desired_edge", min_edge);
    match s.dynamics {
        Dynamics::Double => {
            let k_d = s.gains.require_k_d()?;
            let check = validate_gains(g, s.gains.k_p, k_d);
            r.num("stability", "incidence_norm_sq", check.incidence_norm_sq);
            r.num("stability", "required_k_d", check.required_k_d);
            r.num("stability", "gain_margin", check.margin);
            r.add("stability", "gains_pass", yes_no(check.passes));
            let basin = basin_radius_double(g, &s.trajectory, k_d, horizon, BASIN_SAMPLE_STEP)?;
            r.num("stability", "basin_factor_b", basin.b);
            r.num("stability", "basin_radius", basin.radius);
            if check.passes {
                let c = dissipation_constant(g, s.gains.k_p, k_d)?;
                r.num("stability", "dissipation_constant", c.c);
            }
        }
        Dynamics::Single => {
            let radius = basin_radius_single(g, &s.trajectory, horizon, BASIN_SAMPLE_STEP)?;
            r.num("stability", "basin_radius", radius);
            let state = s.initial_state(None)?;
            let e0 = (&state.positions - s.trajectory.positions(0.0)?).norm();
            r.num("stability", "initial_error", e0);
            r.add("stability", "inside_basin", yes_no(e0 < radius));
            if let Some(mu) = mu.filter(|&m| m > 0.0) {
                match single_integrator_bound(g, s.gains.k_p, mu, s.pe.window, e0, min_edge) {
                    Ok(b) => {
                        r.num("stability", "sigma", b.sigma);
                        r.num("stability", "certified_rate", b.decay_rate);
                    }
                    Err(e) => r.add("stability", "certified_rate", format!("n/a ({e})")),
                }
            }
        }
        Dynamics::Observer => {}
    }
    Ok(())
}

/// Flags shared by `simulate` and `observe`.
#[derive(Debug, Clone, Default)]
pub struct RunFlags {
    pub out: PathBuf,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub force: bool,
}

impl RunFlags {
    pub fn apply(&self, s: &mut Scenario) -> Result<(), CliError> {
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(CliError::Usage(format!("--dt must be positive, got {dt}")));
            }
            s.sim.dt = dt;
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0) {
                return Err(CliError::Usage(format!(
                    "--horizon must be positive, got {h}"
                )));
            }
            s.sim.horizon = h;
        }
        Ok(())
    }
}

/// Outcome of a closed-loop run, before anything is written.
pub struct RunOutcome {
    pub trace: SimTrace,
    pub loss: Option<SimError>,
    pub report: RunReport,
}

/// Runs the scenario's controller (or observer) in memory.
pub fn run_scenario(s: &Scenario, seed: Option<u64>, force: bool) -> Result<RunOutcome, CliError> {
    if s.dynamics == Dynamics::Observer {
        return run_observer(s, seed, None);
    }
    let mut r = RunReport::default();
    r.add("scenario", "name", &s.name);
    r.add("scenario", "sha256", &s.hash);
    r.add("scenario", "dynamics", s.dynamics);
    r.num("integrator", "dt", s.sim.dt);
    r.num("integrator", "horizon", s.sim.horizon);
    let state = s.initial_state(seed)?;
    if let Some(radius) = state.ball_radius {
        r.num("initial", "sample_radius", radius);
    }
    let e0 = (&state.positions - s.trajectory.positions(0.0)?).norm();
    r.num("initial", "err_p", e0);
    let result = match s.dynamics {
        Dynamics::Double => {
            let k_d = s.gains.require_k_d()?;
            let check = validate_gains(&s.graph, s.gains.k_p, k_d);
            r.num("gains", "margin", check.margin);
            r.add("gains", "pass", yes_no(check.passes));
            if !check.passes {
                if !force {
                    return Err(CliError::GainViolation {
                        k_d,
                        required: check.required_k_d,
                    });
                }
                log::warn!(
                    "{}: k_d = {k_d} does not exceed {}; running anyway (--force)",
                    s.name,
                    check.required_k_d
                );
            }
            let v0 = state
                .velocities
                .clone()
                .expect("double dynamics carry velocities");
            let basin = basin_radius_double(
                &s.graph,
                &s.trajectory,
                k_d,
                s.sim.horizon,
                BASIN_SAMPLE_STEP,
            )?;
            let x0 = (e0.powi(2) + (&v0 - s.trajectory.velocities(0.0)?).norm_squared()).sqrt();
            r.num("initial", "basin_radius", basin.radius);
            r.add("initial", "inside_basin", yes_no(x0 < basin.radius));
            if x0 >= basin.radius {
                log::warn!(
                    "{}: initial error {x0:.4} lies outside the basin radius {:.4}",
                    s.name,
                    basin.radius
                );
            }
            simulate_double(
                &s.graph,
                &s.trajectory,
                &state.positions,
                &v0,
                &s.gains,
                &s.sim,
            )
        }
        _ => {
            let radius =
                basin_radius_single(&s.graph, &s.trajectory, s.sim.horizon, BASIN_SAMPLE_STEP)?;
            r.num("initial", "basin_radius", radius);
            r.add("initial", "inside_basin", yes_no(e0 < radius));
            if e0 >= radius {
                log::warn!(
                    "{}: initial error {e0:.4} lies outside the basin radius {radius:.4}",
                    s.name
                );
            }
            simulate_single(
                &s.graph,
                &s.trajectory,
                &state.positions,
                s.gains.k_p,
                &s.sim,
            )
        }
    };
    finish(result, r)
}

fn finish(result: Result<SimTrace, SimError>, mut r: RunReport) -> Result<RunOutcome, CliError> {
    let (trace, loss) = match result {
        Ok(t) => (t, None),
        Err(SimError::BearingLoss {
            t,
            edge,
            separation,
            partial,
        }) => {
            let trace = *partial.clone();
            (
                trace,
                Some(SimError::BearingLoss {
                    t,
                    edge,
                    separation,
                    partial,
                }),
            )
        }
        Err(e) => return Err(e.into()),
    };
    summarize(&trace, &mut r);
    if let Some(SimError::BearingLoss {
        t,
        edge,
        separation,
        ..
    }) = &loss
    {
        r.num("bearing_loss", "t", *t);
        r.add("bearing_loss", "edge", format!("{}-{}", edge.0, edge.1));
        r.num("bearing_loss", "separation", *separation);
    }
    Ok(RunOutcome {
        trace,
        loss,
        report: r,
    })
}

fn summarize(trace: &SimTrace, r: &mut RunReport) {
    let Some(last) = trace.t.last().copied() else {
        return;
    };
    r.num("terminal", "t", last);
    for (key, f) in [
        ("err_p", TraceField::ErrP),
        ("err_delta", TraceField::ErrDelta),
        ("err_v", TraceField::ErrV),
    ] {
        if let Some(v) = trace.final_value(f) {
            r.num("terminal", key, v);
        }
    }
    r.num("terminal", "centroid_drift", trace.centroid_drift());
    let from = 0.5 * last;
    match trace.fit_rate(TraceField::ErrDelta, from, last) {
        Ok(fit) if fit.samples >= 2 => {
            r.num("rate", "window_start", from);
            r.num("rate", "err_delta_rate", fit.rate);
            r.num("rate", "r_squared", fit.r_squared);
        }
        Ok(_) => r.add("rate", "err_delta_rate", "n/a (too few samples)"),
        Err(e) => r.add("rate", "err_delta_rate", format!("n/a ({e})")),
    }
}

/// Observer run on the scenario's desired motion. The estimate starts from
/// the scenario's explicit positions for observer scenarios, from the
/// perturbation ball when one is configured, and otherwise at
/// `p*(0) + ζ₀` with a seeded centred `ζ₀` of norm `zeta0` (default 1).
pub fn run_observer(
    s: &Scenario,
    seed: Option<u64>,
    zeta0: Option<f64>,
) -> Result<RunOutcome, CliError> {
    let mut r = RunReport::default();
    r.add("scenario", "name", &s.name);
    r.add("scenario", "sha256", &s.hash);
    r.add("scenario", "dynamics", Dynamics::Observer);
    r.num("integrator", "dt", s.sim.dt);
    r.num("integrator", "horizon", s.sim.horizon);
    let p_star = s.trajectory.positions(0.0)?;
    let use_file = zeta0.is_none()
        && match &s.initial {
            crate::scenario::InitialCondition::Explicit { .. } => s.dynamics == Dynamics::Observer,
            crate::scenario::InitialCondition::Perturbed { .. } => true,
        };
    let p_hat0: DVector<f64> = if use_file {
        s.initial_state(seed)?.positions
    } else {
        let norm = zeta0.unwrap_or(1.0);
        let seed = seed.unwrap_or(match s.initial {
            crate::scenario::InitialCondition::Perturbed { seed, .. } => seed,
            _ => 0,
        });
        r.add("initial", "seed", seed);
        &p_star + sample_centered_direction(s.graph.n(), s.graph.d(), seed) * norm
    };
    let result = simulate_observer(&s.graph, &s.trajectory, &p_hat0, &s.sim);
    let mut out = finish(result, r)?;
    let tr = &out.trace;
    if let (Some(first), Some(last)) = (tr.err_delta.first(), tr.err_delta.last()) {
        out.report.num("observer", "zeta_initial", *first);
        out.report.num("observer", "zeta_final", *last);
        if *last > 0.0 {
            out.report.num("observer", "contraction", first / last);
        }
        out.report.num("observer", "xi0_drift", tr.centroid_drift());
    }
    Ok(out)
}

/// Writes the trace CSV and plots. Returns the written paths and the trace
/// sha256.
pub fn write_artifacts(
    s: &Scenario,
    trace: &SimTrace,
    out: &Path,
    stem: &str,
) -> Result<(Vec<PathBuf>, String), CliError> {
    let csv = trace_csv(trace)?;
    let hash = sha256_hex(&csv);
    let csv_path = out.join(format!("{stem}.csv"));
    write_file(&csv_path, &csv)?;
    let err_path = out.join(format!("{stem}_errors.svg"));
    write_file(
        &err_path,
        error_plot(trace, &format!("{}: error norms", s.name)).as_bytes(),
    )?;
    let mut paths = vec![csv_path, err_path];
    let traj_path = out.join(format!("{stem}_paths.svg"));
    let title = if trace.dynamics == Dynamics::Observer {
        format!("{}: estimates (dots) and true formation (squares)", s.name)
    } else {
        format!("{}: agents (dots) and desired formation (squares)", s.name)
    };
    write_file(
        &traj_path,
        trajectory_plot(trace, &s.graph, &s.trajectory, 5, &title).as_bytes(),
    )?;
    paths.push(traj_path);
    Ok((paths, hash))
}

/// Shared tail of `simulate` and `observe`: write artifacts, print the
/// report, map a bearing loss to its exit code.
fn emit(
    s: &Scenario,
    outcome: RunOutcome,
    out: &Path,
    stem: &str,
) -> Result<(i32, RunReport), CliError> {
    let RunOutcome {
        trace,
        loss,
        mut report,
    } = outcome;
    let (paths, hash) = write_artifacts(s, &trace, out, stem)?;
    report.add("artifacts", "trace_sha256", &hash);
    report.add("artifacts", "dir", out.display());
    // Names relative to the output directory keep the report CSV
    // byte-identical wherever the run is written.
    for p in &paths {
        report.add(
            "artifacts",
            "file",
            p.strip_prefix(out).unwrap_or(p).display(),
        );
    }
    let saved: Vec<_> = report
        .rows
        .iter()
        .filter(|(s, k, _)| !(s == "artifacts" && k == "dir"))
        .cloned()
        .collect();
    write_file(
        &out.join(format!("{stem}_report.csv")),
        &key_value_csv(&saved)?,
    )?;
    print!("{}", report.render());
    match loss {
        Some(e) => Err(CliError::BearingLoss(e.to_string())),
        None => Ok((EXIT_OK, report)),
    }
}

pub fn cmd_analyze(spec: &str, out: &Path) -> Result<(i32, RunReport), CliError> {
    let (s, _) = Scenario::load(spec)?;
    let (code, report) = analyze(&s)?;
    write_file(&out.join("analysis.csv"), &key_value_csv(&report.rows)?)?;
    print!("{}", report.render());
    Ok((code, report))
}

pub fn cmd_simulate(spec: &str, flags: &RunFlags) -> Result<(i32, RunReport), CliError> {
    let (mut s, _) = Scenario::load(spec)?;
    flags.apply(&mut s)?;
    let outcome = run_scenario(&s, flags.seed, flags.force)?;
    emit(&s, outcome, &flags.out, "trace")
}

pub fn cmd_observe(
    spec: &str,
    flags: &RunFlags,
    zeta0: Option<f64>,
) -> Result<(i32, RunReport), CliError> {
    let (mut s, _) = Scenario::load(spec)?;
    flags.apply(&mut s)?;
    if let Some(z) = zeta0 {
        if !(z > 0.0) {
            return Err(CliError::Usage(format!(
                "--zeta0 must be positive, got {z}"
            )));
        }
    }
    let outcome = run_observer(&s, flags.seed, zeta0)?;
    emit(&s, outcome, &flags.out, "observer")
}

pub fn cmd_scenarios_list() -> String {
    let mut out = String::new();
    for (name, description) in crate::scenario::builtin_listing() {
        out.push_str(&format!("{name}\t{description}\n"));
    }
    out
}

pub fn cmd_scenarios_export(name: &str) -> Result<&'static str, CliError> {
    crate::scenario::builtin_source(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown scenario `{name}` (built-ins: {})",
            BUILTIN_FILES.map(|(n, _)| n).join(", ")
        ))
    })
}
