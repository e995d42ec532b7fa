//! The three built-in scenarios: an 8-agent cube under single-integrator
//! control, and a 4-agent square and pyramid under double-integrator control.
//!
//! Their edge sets are reconstructions; only the geometry, motion laws,
//! initial conditions and gains are given verbatim.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::graph::FormationGraph;
use crate::pe::PeOptions;
use crate::sim::{GainSet, SimOptions};
use crate::trajectory::{rotation_about_axis, DesiredTrajectory, ScaleLaw, TranslationLaw};

pub use crate::sim::Dynamics;

/// A complete, self-describing experiment.
#[derive(Debug, Clone)]
pub struct ScenarioFixture {
    pub name: String,
    pub description: String,
    pub graph: FormationGraph,
    pub trajectory: DesiredTrajectory,
    pub gains: GainSet,
    pub dynamics: Dynamics,
    pub initial_positions: DVector<f64>,
    /// Present for double-integrator scenarios.
    pub initial_velocities: Option<DVector<f64>>,
    pub sim: SimOptions,
    pub pe: PeOptions,
}

pub const BUILTIN_NAMES: [&str; 3] = ["cube8_3d", "square4_2d", "pyramid4_3d"];

fn stack(points: &[[f64; 3]]) -> DVector<f64> {
    DVector::from_iterator(points.len() * 3, points.iter().flatten().copied())
}

fn stack2(points: &[[f64; 2]]) -> DVector<f64> {
    DVector::from_iterator(points.len() * 2, points.iter().flatten().copied())
}

/// Edges of the full cube graph: two squares of four agents and the four
/// vertical links. Not used by the built-in scenario; kept for comparison runs.
pub const CUBE_EDGES: [[usize; 2]; 12] = [
    [1, 2],
    [2, 3],
    [3, 4],
    [1, 4],
    [5, 6],
    [6, 7],
    [7, 8],
    [5, 8],
    [1, 5],
    [2, 6],
    [3, 7],
    [4, 8],
];

/// Path spanning tree 1-2-...-8 used by the cube scenario.
pub const PATH8_EDGES: [[usize; 2]; 7] = [[1, 2], [2, 3], [3, 4], [4, 5], [5, 6], [6, 7], [7, 8]];

/// Path tree used by both 4-agent scenarios.
pub const PATH4_EDGES: [[usize; 2]; 3] = [[1, 2], [2, 3], [3, 4]];

/// Cube rotating about the x-axis at π/3 rad/s with scale
/// `0.5 sin(πt/6) + 1.5`, drifting along y at 0.2 units/s; `k_p = 1`.
pub fn scenario_cube8_3d() -> ScenarioFixture {
    let r2 = 2f64.sqrt();
    let base = stack(&[
        [r2, 0.0, -1.0],
        [0.0, r2, -1.0],
        [-r2, 0.0, -1.0],
        [0.0, -r2, -1.0],
        [r2, 0.0, 1.0],
        [0.0, r2, 1.0],
        [-r2, 0.0, 1.0],
        [0.0, -r2, 1.0],
    ]);
    let trajectory = DesiredTrajectory::new(
        3,
        base,
        ScaleLaw::Sine {
            amplitude: 0.5,
            frequency: PI / 6.0,
            offset: 1.5,
        },
        rotation_about_axis(3, Some([1.0, 0.0, 0.0]), PI / 3.0).expect("valid axis"),
        TranslationLaw::linear(DVector::from_vec(vec![0.0, 0.2, 0.0])),
    )
    .expect("valid cube trajectory");
    let initial = stack(&[
        [1.0, 0.0, 0.0],
        [-1.0, 2.5, 1.0],
        [-2.0, -1.0, -1.0],
        [-0.5, 0.5, 1.0],
        [1.5, 0.0, 1.0],
        [-1.0, 0.0, 1.0],
        [0.0, -1.0, -1.0],
        [2.0, 0.0, -2.0],
    ]);
    ScenarioFixture {
        name: "cube8_3d".into(),
        description:
            "8 agents on a scaled cube rotating about x and translating along y (single integrator)"
                .into(),
        graph: FormationGraph::new(8, 3, &PATH8_EDGES).expect("valid path"),
        trajectory,
        gains: GainSet::single(1.0).expect("positive gain"),
        dynamics: Dynamics::Single,
        initial_positions: initial,
        initial_velocities: None,
        sim: SimOptions::new(1e-3, 50.0).with_record_every(10),
        pe: PeOptions::new(6.0),
    }
}

/// Unit square rotating in the plane at π/3 rad/s; `k_p = 8`, `k_d = 11`.
pub fn scenario_square4_2d() -> ScenarioFixture {
    let trajectory = DesiredTrajectory::new(
        2,
        stack2(&[[0.5, 0.5], [0.5, -0.5], [-0.5, -0.5], [-0.5, 0.5]]),
        ScaleLaw::Const(1.0),
        rotation_about_axis(2, None, PI / 3.0).expect("planar rotation"),
        TranslationLaw::none(2),
    )
    .expect("valid square trajectory");
    ScenarioFixture {
        name: "square4_2d".into(),
        description: "4 agents on a unit square rotating about its centre (double integrator)"
            .into(),
        graph: FormationGraph::new(4, 2, &PATH4_EDGES).expect("valid path"),
        trajectory,
        gains: GainSet::double(8.0, 11.0).expect("positive gains"),
        dynamics: Dynamics::Double,
        initial_positions: stack2(&[[-1.0, 1.5], [-1.0, 2.0], [-2.0, -1.0], [1.0, -1.0]]),
        initial_velocities: Some(stack2(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, -1.0]])),
        sim: SimOptions::new(1e-3, 30.0).with_record_every(10),
        pe: PeOptions::new(6.0),
    }
}

/// Pyramid rotating about the z-axis through agent 1 at π/4 rad/s;
/// `k_p = 7`, `k_d = 10`.
pub fn scenario_pyramid4_3d() -> ScenarioFixture {
    let r3 = 3f64.sqrt();
    let trajectory = DesiredTrajectory::new(
        3,
        stack(&[
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.5, -r3 / 2.0, 0.0],
            [r3 / 2.0, -0.5, 1.0],
        ]),
        ScaleLaw::Const(1.0),
        rotation_about_axis(3, Some([0.0, 0.0, 1.0]), PI / 4.0).expect("valid axis"),
        TranslationLaw::none(3),
    )
    .expect("valid pyramid trajectory");
    ScenarioFixture {
        name: "pyramid4_3d".into(),
        description:
            "4 agents on a pyramid rotating about the z-axis through agent 1 (double integrator)"
                .into(),
        graph: FormationGraph::new(4, 3, &PATH4_EDGES).expect("valid path"),
        trajectory,
        gains: GainSet::double(7.0, 10.0).expect("positive gains"),
        dynamics: Dynamics::Double,
        initial_positions: stack(&[
            [-2.0, -1.0, -1.0],
            [-1.0, 2.0, 1.0],
            [-2.0, -1.0, -1.0],
            [-0.5, -0.5, 1.0],
        ]),
        initial_velocities: Some(stack(&[
            [0.0, 0.0, -1.0],
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 0.0, -1.0],
        ])),
        sim: SimOptions::new(1e-3, 30.0).with_record_every(10),
        pe: PeOptions::new(8.0),
    }
}

pub fn builtin_scenarios() -> Vec<ScenarioFixture> {
    vec![
        scenario_cube8_3d(),
        scenario_square4_2d(),
        scenario_pyramid4_3d(),
    ]
}

pub fn scenario_by_name(name: &str) -> Option<ScenarioFixture> {
    match name {
        "cube8_3d" => Some(scenario_cube8_3d()),
        "square4_2d" => Some(scenario_square4_2d()),
        "pyramid4_3d" => Some(scenario_pyramid4_3d()),
        _ => None,
    }
}
