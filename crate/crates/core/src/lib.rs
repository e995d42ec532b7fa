//! Bearing persistence-of-excitation (BPE) analysis and bearing-only
//! formation control for single- and double-integrator multi-agent systems.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: undirected formation graphs, incidence and Laplacian matrices,
//!   structural predicates and the minimal rigid edge count.
//! * [`bearing`]: bearings, orthogonal projectors and the bearing Laplacian.
//! * [`trajectory`]: analytic similarity-transform trajectories and the three
//!   built-in scenario fixtures.
//! * [`pe`]: numerical certificates for persistence of excitation of
//!   directions, projector sums and bearing Laplacians.
//! * [`sim`]: distributed control laws, the bearing observer, fixed-step RK4
//!   closed-loop simulation, basin/gain checks and convergence-rate bounds.
//!
//! Vertices are 1-indexed wherever they cross the public API as edge lists
//! (`[[1, 2], [2, 3]]`); everything else (agent indices in stacked vectors,
//! edge ids) is 0-based.

pub mod bearing;
pub mod graph;
pub mod linalg;
pub mod pe;
pub mod scenarios;
pub mod sim;
pub mod trajectory;

pub use bearing::{
    bearing, bearing_laplacian, projector, BearingError, BearingState, Configuration,
};
pub use graph::{min_rigid_edge_count, FormationGraph, GraphError};
pub use pe::{PeCertificate, PeError, PeOptions};
pub use scenarios::ScenarioFixture;
pub use sim::{Dynamics, GainSet, SimError, SimOptions, SimTrace};
pub use trajectory::{DesiredTrajectory, Trajectory, TrajectoryError};

/// Separation (world units) below which two agents are treated as coincident
/// and their bearing is undefined.
pub const EPS_COINCIDENT: f64 = 1e-9;

/// Default relative tolerance for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-9;
