//! Real-time trajectory planning with two coupled gradient-based MPC instances.
//!
//! * [`integrators`]: fixed-step RK4 forward integration and the matching discrete adjoint.
//! * [`pgm`]: projected gradient solver with Barzilai-Borwein steps.
//! * [`vehicle`]: kinematic vehicle model and its tracking cost.
//! * [`course`]: curvature-fitting model for sampled reference courses.
//! * [`concurrent`]: the coupling loop that runs both instances side by side.

// `!(a > b)` comparisons deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod concurrent;
pub mod course;
pub mod error;
pub mod integrators;
pub mod pgm;
pub mod vehicle;

pub use concurrent::{ConcurrentMpc, CouplingConfig, CouplingState, CycleOutput, ExecutionMode};
pub use course::{CourseMpc, CourseMpcConfig, CourseState, CourseWeights, CurvatureProfile, SampledCourse};
pub use error::{Error, Result};
pub use integrators::{ControlTrajectory, Grid, StateTrajectory};
pub use pgm::{MpcSolution, OcpProblem, PgmSolver, SolverConfig};
pub use vehicle::{LateralAccelTerm, LateralVelocityTerm, VehicleControl, VehicleParams, VehicleProblem, VehicleState, XiState};
