//! Scenario files: a TOML document describing graph, motion, gains, initial
//! condition, integrator and PE settings.
//!
//! ```toml
//! name = "square4_2d"
//! dynamics = "double"            # "single" | "double" | "observer"
//!
//! [graph]
//! n = 4
//! d = 2
//! edges = [[1, 2], [2, 3], [3, 4]]   # 1-indexed
//!
//! [trajectory]
//! type = "similarity"
//! base = [[0.5, 0.5], [0.5, -0.5], [-0.5, -0.5], [-0.5, 0.5]]
//! scale = { kind = "const", value = 1.0 }   # or { kind = "sin", amp, freq, offset }
//! rotation = { rate = 1.0471975511965976 }  # add axis = [x, y, z] in 3-D
//! translation = { velocity = [0.0, 0.0] }   # or { coefficients = [[c0...], [c1...], ...] }
//! # period = 6.0                           # optional bearing period override
//! # horizon = 30.0                         # optional evaluation horizon
//!
//! [gains]
//! k_p = 8.0
//! k_d = 11.0
//!
//! [initial]
//! positions = [[...], ...]
//! velocities = [[...], ...]           # double integrator only
//! # perturb = { seed = 7, fraction = 0.5 }  # instead of explicit values
//!
//! [integrator]
//! dt = 0.001
//! horizon = 30.0
//! record_every = 10
//!
//! [pe]
//! T = 6.0
//! mu_min = 0.001
//! # step = 0.03
//! # horizon = 6.0
//! ```

use std::fmt;
use std::path::Path;

use bearing_forms::scenarios::{builtin_scenarios, ScenarioFixture};
use bearing_forms::sim::basin_radius_double;
use bearing_forms::sim::basin_radius_single;
use bearing_forms::trajectory::{rotation_about_axis, RotationLaw, ScaleLaw, TranslationLaw};
use bearing_forms::{
    DesiredTrajectory, Dynamics, FormationGraph, GainSet, PeOptions, SimOptions, Trajectory,
};
use nalgebra::DVector;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::perturb::sample_ball;
use crate::CliError;

/// Step used to sample desired edge lengths when sizing basins.
pub const BASIN_SAMPLE_STEP: f64 = 0.01;

/// The shipped scenario files, byte-exact.
pub const BUILTIN_FILES: [(&str, &str); 3] = [
    ("cube8_3d", include_str!("../scenarios/cube8_3d.toml")),
    ("square4_2d", include_str!("../scenarios/square4_2d.toml")),
    ("pyramid4_3d", include_str!("../scenarios/pyramid4_3d.toml")),
];

pub fn builtin_source(name: &str) -> Option<&'static str> {
    BUILTIN_FILES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
}

/// A TOML error pinned to a 1-based line and column.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub origin: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}: {}",
            self.origin, self.line, self.column, self.message
        )
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: Option<String>,
    description: Option<String>,
    dynamics: DynamicsName,
    graph: GraphSection,
    trajectory: TrajectorySection,
    gains: GainsSection,
    #[serde(default)]
    initial: InitialSection,
    integrator: IntegratorSection,
    pe: PeSection,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DynamicsName {
    Single,
    Double,
    Observer,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphSection {
    n: usize,
    d: usize,
    edges: Vec<[usize; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectorySection {
    #[serde(rename = "type")]
    kind: TrajectoryKind,
    base: Vec<Vec<f64>>,
    scale: Option<ScaleSpec>,
    rotation: Option<RotationSpec>,
    translation: Option<TranslationSpec>,
    period: Option<f64>,
    horizon: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
enum TrajectoryKind {
    Similarity,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum ScaleSpec {
    Const { value: f64 },
    Sin { amp: f64, freq: f64, offset: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RotationSpec {
    axis: Option<[f64; 3]>,
    rate: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TranslationSpec {
    velocity: Option<Vec<f64>>,
    coefficients: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainsSection {
    k_p: f64,
    k_d: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    positions: Option<Vec<Vec<f64>>>,
    velocities: Option<Vec<Vec<f64>>>,
    perturb: Option<PerturbSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerturbSpec {
    seed: u64,
    fraction: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegratorSection {
    #[serde(default = "default_dt")]
    dt: f64,
    horizon: f64,
    #[serde(default = "default_record_every")]
    record_every: usize,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PeSection {
    #[serde(rename = "T")]
    window: f64,
    mu_min: Option<f64>,
    step: Option<f64>,
    horizon: Option<f64>,
}

/// How the run starts.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Explicit {
        positions: DVector<f64>,
        velocities: Option<DVector<f64>>,
    },
    /// Uniform sample from the ball of radius `fraction` times the basin
    /// radius around the desired initial state.
    Perturbed { seed: u64, fraction: f64 },
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub graph: FormationGraph,
    pub trajectory: DesiredTrajectory,
    pub gains: GainSet,
    pub dynamics: Dynamics,
    pub initial: InitialCondition,
    pub sim: SimOptions,
    pub pe: PeOptions,
    /// sha256 of the source text.
    pub hash: String,
}

/// Resolved initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub positions: DVector<f64>,
    pub velocities: Option<DVector<f64>>,
    /// Radius of the sampling ball, when the state was sampled.
    pub ball_radius: Option<f64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn invalid(origin: &str, msg: impl fmt::Display) -> CliError {
    CliError::Invalid(format!("{origin}: {msg}"))
}

fn stack(
    origin: &str,
    what: &str,
    rows: &[Vec<f64>],
    n: usize,
    d: usize,
) -> Result<DVector<f64>, CliError> {
    if rows.len() != n {
        return Err(invalid(
            origin,
            format!("{what} lists {} agents, expected {n}", rows.len()),
        ));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(invalid(
            origin,
            format!(
                "{what}: agent {} has {} coordinates, expected {d}",
                i + 1,
                r.len()
            ),
        ));
    }
    Ok(DVector::from_iterator(
        n * d,
        rows.iter().flatten().copied(),
    ))
}

impl Scenario {
    /// Parses and validates scenario text; `origin` names it in messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
            CliError::Parse(ParseError {
                origin: origin.to_string(),
                line,
                column,
                message: e.message().to_string(),
            })
        })?;
        let mut scenario = Self::from_file(file, origin)?;
        scenario.hash = sha256_hex(text.as_bytes());
        Ok(scenario)
    }

    /// Reads a file, or a built-in scenario when `spec` names one and no such
    /// file exists.
    pub fn load(spec: &str) -> Result<(Self, String), CliError> {
        let path = Path::new(spec);
        let text = if path.exists() {
            std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{spec}: {e}")))?
        } else if let Some(src) = builtin_source(spec) {
            src.to_string()
        } else {
            return Err(CliError::Usage(format!(
                "{spec}: no such file or built-in scenario (built-ins: {})",
                BUILTIN_FILES.map(|(n, _)| n).join(", ")
            )));
        };
        Ok((Self::parse(&text, spec)?, text))
    }

    fn from_file(f: ScenarioFile, origin: &str) -> Result<Self, CliError> {
        let ScenarioFile {
            name,
            description,
            dynamics,
            graph,
            trajectory,
            gains,
            initial,
            integrator,
            pe,
        } = f;
        let (n, d) = (graph.n, graph.d);
        let g = FormationGraph::new(n, d, &graph.edges)
            .map_err(|e| invalid(origin, format!("[graph] {e}")))?;

        let base = stack(origin, "[trajectory] base", &trajectory.base, n, d)?;
        let TrajectoryKind::Similarity = trajectory.kind;
        let scale = match trajectory.scale {
            None => ScaleLaw::Const(1.0),
            Some(ScaleSpec::Const { value }) => ScaleLaw::Const(value),
            Some(ScaleSpec::Sin { amp, freq, offset }) => ScaleLaw::Sine {
                amplitude: amp,
                frequency: freq,
                offset,
            },
        };
        let rotation = match trajectory.rotation {
            None => RotationLaw::Identity { d },
            Some(r) => rotation_about_axis(d, r.axis, r.rate)
                .map_err(|e| invalid(origin, format!("[trajectory] {e}")))?,
        };
        let translation =
            match trajectory.translation {
                None => TranslationLaw::none(d),
                Some(TranslationSpec {
                    velocity: Some(v),
                    coefficients: None,
                }) => TranslationLaw::linear(DVector::from_vec(v)),
                Some(TranslationSpec {
                    velocity: None,
                    coefficients: Some(c),
                }) => TranslationLaw::polynomial(c.into_iter().map(DVector::from_vec).collect())
                    .map_err(|e| invalid(origin, format!("[trajectory] {e}")))?,
                Some(_) => return Err(invalid(
                    origin,
                    "[trajectory] translation needs exactly one of `velocity` or `coefficients`",
                )),
            };
        let traj = DesiredTrajectory::new(d, base, scale, rotation, translation)
            .map_err(|e| invalid(origin, format!("[trajectory] {e}")))?;
        let traj = match trajectory.period {
            Some(p) if !(p > 0.0) => {
                return Err(invalid(origin, "[trajectory] period must be positive"))
            }
            Some(p) => traj.with_period(Some(p)),
            None => traj,
        };
        let traj = traj.with_horizon(trajectory.horizon);

        let dynamics = match dynamics {
            DynamicsName::Single => Dynamics::Single,
            DynamicsName::Double => Dynamics::Double,
            DynamicsName::Observer => Dynamics::Observer,
        };
        let gains = match (dynamics, gains.k_d) {
            (Dynamics::Double, None) => {
                return Err(invalid(origin, "[gains] double dynamics require k_d"))
            }
            (_, Some(k_d)) => GainSet::double(gains.k_p, k_d),
            (_, None) => GainSet::single(gains.k_p),
        }
        .map_err(|e| invalid(origin, format!("[gains] {e}")))?;

        let initial = match initial {
            InitialSection {
                positions: None,
                velocities: None,
                perturb: Some(PerturbSpec { seed, fraction }),
            } => {
                if !(fraction > 0.0 && fraction <= 1.0) {
                    return Err(invalid(
                        origin,
                        format!("[initial] perturb fraction {fraction} is not in (0, 1]"),
                    ));
                }
                InitialCondition::Perturbed { seed, fraction }
            }
            InitialSection {
                positions: Some(p),
                velocities,
                perturb: None,
            } => {
                let positions = stack(origin, "[initial] positions", &p, n, d)?;
                let velocities = match (dynamics, velocities) {
                    (Dynamics::Double, None) => {
                        return Err(invalid(
                            origin,
                            "[initial] double dynamics require velocities",
                        ))
                    }
                    (Dynamics::Double, Some(v)) => {
                        Some(stack(origin, "[initial] velocities", &v, n, d)?)
                    }
                    (_, Some(_)) => {
                        return Err(invalid(
                            origin,
                            "[initial] velocities are only used by double dynamics",
                        ))
                    }
                    (_, None) => None,
                };
                InitialCondition::Explicit {
                    positions,
                    velocities,
                }
            }
            _ => return Err(invalid(
                origin,
                "[initial] give either positions (and velocities) or perturb = { seed, fraction }",
            )),
        };

        if !(integrator.dt > 0.0) || !(integrator.horizon > 0.0) || integrator.record_every == 0 {
            return Err(invalid(
                origin,
                "[integrator] dt and horizon must be positive and record_every at least 1",
            ));
        }
        let sim = SimOptions::new(integrator.dt, integrator.horizon)
            .with_record_every(integrator.record_every);

        let mut pe_opts = PeOptions::new(pe.window);
        if let Some(mu_min) = pe.mu_min {
            pe_opts = pe_opts.with_mu_min(mu_min);
        }
        if let Some(step) = pe.step {
            pe_opts = pe_opts.with_step(step);
        }
        if let Some(h) = pe.horizon {
            pe_opts = pe_opts.with_horizon(h);
        }
        if !(pe.window > 0.0) {
            return Err(invalid(origin, "[pe] T must be positive"));
        }

        Ok(Self {
            name: name.unwrap_or_else(|| origin.to_string()),
            description: description.unwrap_or_default(),
            graph: g,
            trajectory: traj,
            gains,
            dynamics,
            initial,
            sim,
            pe: pe_opts,
            hash: String::new(),
        })
    }

    /// The same experiment as the library fixture type.
    pub fn fixture_view(&self) -> Option<ScenarioFixture> {
        let InitialCondition::Explicit {
            positions,
            velocities,
        } = &self.initial
        else {
            return None;
        };
        Some(ScenarioFixture {
            name: self.name.clone(),
            description: self.description.clone(),
            graph: self.graph.clone(),
            trajectory: self.trajectory.clone(),
            gains: self.gains,
            dynamics: self.dynamics,
            initial_positions: positions.clone(),
            initial_velocities: velocities.clone(),
            sim: self.sim,
            pe: self.pe,
        })
    }

    /// Basin radius around the desired state: the single-integrator radius
    /// for first-order runs, the joint position/velocity radius for the
    /// double integrator.
    pub fn basin_radius(&self) -> Result<f64, CliError> {
        let horizon = self.sim.horizon;
        Ok(match self.dynamics {
            Dynamics::Double => {
                basin_radius_double(
                    &self.graph,
                    &self.trajectory,
                    self.gains.require_k_d()?,
                    horizon,
                    BASIN_SAMPLE_STEP,
                )?
                .radius
            }
            _ => basin_radius_single(&self.graph, &self.trajectory, horizon, BASIN_SAMPLE_STEP)?,
        })
    }

    /// Resolves the initial condition; `seed` overrides a perturbation seed.
    pub fn initial_state(&self, seed: Option<u64>) -> Result<InitialState, CliError> {
        match &self.initial {
            InitialCondition::Explicit {
                positions,
                velocities,
            } => {
                if seed.is_some() {
                    log::warn!(
                        "{}: --seed ignored, the initial condition is explicit",
                        self.name
                    );
                }
                Ok(InitialState {
                    positions: positions.clone(),
                    velocities: velocities.clone(),
                    ball_radius: None,
                })
            }
            InitialCondition::Perturbed { seed: s, fraction } => {
                let radius = fraction * self.basin_radius()?;
                let seed = seed.unwrap_or(*s);
                let p_star = self.trajectory.positions(0.0)?;
                let dn = p_star.len();
                if self.dynamics == Dynamics::Double {
                    let x = sample_ball(2 * dn, radius, seed);
                    let v_star = self.trajectory.velocities(0.0)?;
                    Ok(InitialState {
                        positions: p_star + x.rows(0, dn),
                        velocities: Some(v_star + x.rows(dn, dn)),
                        ball_radius: Some(radius),
                    })
                } else {
                    Ok(InitialState {
                        positions: p_star + sample_ball(dn, radius, seed),
                        velocities: None,
                        ball_radius: Some(radius),
                    })
                }
            }
        }
    }
}

/// Every built-in scenario parsed from its shipped file.
pub fn builtin_parsed() -> Vec<Scenario> {
    BUILTIN_FILES
        .iter()
        .map(|(name, src)| Scenario::parse(src, name).expect("built-in scenarios parse"))
        .collect()
}

/// Names and descriptions of the built-ins, from the library fixtures.
pub fn builtin_listing() -> Vec<(String, String)> {
    builtin_scenarios()
        .into_iter()
        .map(|s| (s.name, s.description))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use bearing_forms::scenarios::scenario_by_name;

    #[test]
    fn builtin_files_match_library_fixtures_exactly() {
        for s in builtin_parsed() {
            let fx = scenario_by_name(&s.name).unwrap();
            let view = s.fixture_view().unwrap();
            assert_eq!(view.description, fx.description);
            assert_eq!(view.graph.edge_list(), fx.graph.edge_list());
            assert_eq!(
                (view.graph.n(), view.graph.d()),
                (fx.graph.n(), fx.graph.d())
            );
            assert_eq!(view.gains, fx.gains);
            assert_eq!(view.dynamics, fx.dynamics);
            assert_eq!(view.initial_positions, fx.initial_positions);
            assert_eq!(view.initial_velocities, fx.initial_velocities);
            assert_eq!(view.sim, fx.sim);
            assert_eq!(view.pe, fx.pe);
            assert_eq!(view.trajectory.base(), fx.trajectory.base());
            assert_eq!(view.trajectory.scale(), fx.trajectory.scale());
            assert_eq!(view.trajectory.translation(), fx.trajectory.translation());
            assert_eq!(view.trajectory.period(), fx.trajectory.period());
            for k in 0..50 {
                let t = 0.731 * k as f64;
                assert_eq!(
                    view.trajectory.positions(t).unwrap(),
                    fx.trajectory.positions(t).unwrap()
                );
                assert_eq!(
                    view.trajectory.velocities(t).unwrap(),
                    fx.trajectory.velocities(t).unwrap()
                );
                assert_eq!(
                    view.trajectory.accelerations(t).unwrap(),
                    fx.trajectory.accelerations(t).unwrap()
                );
            }
        }
    }

    #[test]
    fn syntax_error_reports_position() {
        let text = "dynamics = \"single\"\n[graph]\nn = 3\nd = = 2\n";
        let Err(CliError::Parse(e)) = Scenario::parse(text, "bad.toml") else {
            panic!("expected a parse error");
        };
        assert_eq!((e.line, e.column), (4, 5));
        assert!(e.to_string().starts_with("bad.toml:4:5:"));
    }

    #[test]
    fn type_error_reports_position() {
        let src = builtin_source("square4_2d")
            .unwrap()
            .replace("k_p = 8.0", "k_p = \"fast\"");
        let Err(CliError::Parse(e)) = Scenario::parse(&src, "x") else {
            panic!("expected a parse error");
        };
        let line = src.lines().position(|l| l.contains("\"fast\"")).unwrap() + 1;
        assert_eq!(e.line, line);
    }

    #[test]
    fn semantic_checks() {
        let base = builtin_source("square4_2d").unwrap();
        for (from, to) in [
            (
                "edges = [[1, 2], [2, 3], [3, 4]]",
                "edges = [[1, 2], [2, 5], [3, 4]]",
            ),
            ("k_d = 11.0\n", ""),
            (
                "velocities = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, -1.0]]\n",
                "",
            ),
            ("[-2.0, -1.0], [1.0, -1.0]]", "[-2.0, -1.0]]"),
        ] {
            let src = base.replace(from, to);
            assert_ne!(src, base);
            assert!(
                matches!(Scenario::parse(&src, "x"), Err(CliError::Invalid(_))),
                "{to}"
            );
        }
        let src = base.replace(
            "positions = [[-1.0, 1.5], [-1.0, 2.0], [-2.0, -1.0], [1.0, -1.0]]\nvelocities = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, -1.0]]",
            "perturb = { seed = 3, fraction = 1.5 }",
        );
        assert!(matches!(
            Scenario::parse(&src, "x"),
            Err(CliError::Invalid(_))
        ));
    }

    #[test]
    fn perturbed_start_stays_in_the_ball() {
        let base = builtin_source("square4_2d").unwrap().replace(
            "positions = [[-1.0, 1.5], [-1.0, 2.0], [-2.0, -1.0], [1.0, -1.0]]\nvelocities = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, -1.0]]",
            "perturb = { seed = 3, fraction = 0.5 }",
        );
        let s = Scenario::parse(&base, "x").unwrap();
        let a = s.initial_state(None).unwrap();
        let b = s.initial_state(None).unwrap();
        assert_eq!(a, b);
        let r = a.ball_radius.unwrap();
        assert!(r > 0.0);
        let dp = &a.positions - s.trajectory.positions(0.0).unwrap();
        let dv = a.velocities.as_ref().unwrap() - s.trajectory.velocities(0.0).unwrap();
        assert!((dp.norm_squared() + dv.norm_squared()).sqrt() < r);
        assert_ne!(s.initial_state(Some(4)).unwrap(), a);
    }

    #[test]
    fn hash_tracks_bytes() {
        let src = builtin_source("cube8_3d").unwrap();
        let a = Scenario::parse(src, "a").unwrap();
        let b = Scenario::parse(&format!("{src}\n"), "a").unwrap();
        assert_eq!(a.hash.len(), 64);
        assert_ne!(a.hash, b.hash);
    }
}
