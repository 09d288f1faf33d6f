//! Concurrent operation of the course-fitting MPC and the vehicle MPC.
//!
//! Every cycle both instances solve against the snapshots published at the
//! end of the previous cycle. Afterwards the fitting window is moved to the
//! vehicle's predicted arc length and the fitted curvature becomes the
//! vehicle's new reference profile.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::course::{CourseMpc, CourseMpcConfig, CurvatureProfile, SampledCourse};
use crate::error::{Error, Result};
use crate::integrators::ControlTrajectory;
use crate::pgm::{warm_start_delayed, MpcSolution, PgmSolver, SolverConfig};
use crate::vehicle::{VehicleParams, VehicleProblem, VehicleState, INPUT_DIM, S_R};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    /// Course step, then vehicle step, on the calling thread.
    #[default]
    Sequential,
    /// Both steps on separate workers.
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConfig {
    /// Cycle period: how long each applied control is held, s.
    pub dt: f64,
    /// Vehicle MPC prediction horizon, s.
    pub t_hor: f64,
    /// Vehicle MPC intervals per horizon.
    pub horizon_steps: usize,
    pub vehicle_solver: SolverConfig,
    pub course: CourseMpcConfig,
    /// Initial fitting window length; `None` sizes it as `2 * v0 * T_hor`.
    pub initial_window: Option<f64>,
    /// Extra arc length beyond the vehicle's predicted horizon end, m.
    pub margin: f64,
    /// Lower bound on every window length, m.
    pub window_floor: f64,
    pub mode: ExecutionMode,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            t_hor: 2.0,
            horizon_steps: 20,
            vehicle_solver: SolverConfig::default(),
            course: CourseMpcConfig::default(),
            initial_window: None,
            margin: 5.0,
            window_floor: 5.0,
            mode: ExecutionMode::Sequential,
        }
    }
}

impl CouplingConfig {
    pub fn horizon_time(&self) -> f64 {
        self.t_hor
    }

    /// Length of one vehicle MPC interval, s.
    pub fn horizon_step(&self) -> f64 {
        self.t_hor / self.horizon_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_hor > 0.0) || self.horizon_steps == 0 {
            return Err(Error::InvalidConfig("vehicle horizon needs a positive period, length and at least one interval".into()));
        }
        if self.dt > self.t_hor {
            return Err(Error::InvalidConfig("cycle period exceeds the prediction horizon".into()));
        }
        if !(self.margin >= 0.0) || !(self.window_floor > 0.0) {
            return Err(Error::InvalidConfig("window margin must be non-negative and floor positive".into()));
        }
        if let Some(s0) = self.initial_window {
            if !(s0 > 0.0) {
                return Err(Error::InvalidConfig("initial window must be positive".into()));
            }
        }
        self.vehicle_solver.validate()
    }
}

/// Data exchanged between the two instances.
#[derive(Debug, Clone)]
pub struct CouplingState {
    /// Curvature snapshot the vehicle MPC solves against.
    pub current_profile: Arc<CurvatureProfile>,
    /// Fitting window `[s_start, s_end]`, m.
    pub course_window: (f64, f64),
    /// Latest `s_r*(T_hor) - s_r(now)`, m.
    pub v_horizon_arc: f64,
    pub cycle_counter: u64,
    /// Predicted arc lengths that fell outside the profile used for the prediction.
    pub extrapolated_evaluations: u64,
    /// Course solves that failed; the previous profile was kept.
    pub failed_course_cycles: u64,
}

/// Outcome of one coupled cycle.
#[derive(Debug, Clone)]
pub struct CycleOutput {
    pub vehicle: MpcSolution,
    /// The snapshot the vehicle solution was computed against.
    pub profile_used: Arc<CurvatureProfile>,
    pub course: Option<MpcSolution>,
    pub course_time: Duration,
    pub vehicle_time: Duration,
    /// Both solves plus the exchange.
    pub cycle_time: Duration,
}

pub struct ConcurrentMpc {
    course_mpc: CourseMpc,
    vehicle_solver: PgmSolver,
    params: Arc<VehicleParams>,
    config: CouplingConfig,
    state: CouplingState,
    vehicle_warm: ControlTrajectory,
}

/// Default initial window: twice the distance covered over one horizon, never below the floor.
pub fn initial_window_length(v0: f64, horizon_time: f64, floor: f64) -> f64 {
    (2.0 * v0.abs() * horizon_time).max(floor)
}

impl ConcurrentMpc {
    pub fn init(
        course: Arc<SampledCourse>,
        x0: &VehicleState,
        params: Arc<VehicleParams>,
        config: CouplingConfig,
    ) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        if !x0.is_finite() {
            return Err(Error::NonFiniteState { node: 0 });
        }
        let s0 = config
            .initial_window
            .unwrap_or_else(|| initial_window_length(x0.v, config.horizon_time(), config.window_floor))
            .max(config.window_floor);
        let available = course.length() - x0.s_r;
        if s0 > available {
            return Err(Error::CourseTooShort {
                requested: s0,
                available,
            });
        }
        let course_mpc = CourseMpc::new(Arc::clone(&course), config.course)?;
        let grid = crate::integrators::Grid::new(0.0, config.horizon_step(), config.horizon_steps)?;
        let state = CouplingState {
            current_profile: course_mpc.raw_profile(),
            course_window: (x0.s_r, x0.s_r + s0),
            v_horizon_arc: 0.0,
            cycle_counter: 0,
            extrapolated_evaluations: 0,
            failed_course_cycles: 0,
        };
        Ok(Self {
            course_mpc,
            vehicle_solver: PgmSolver::new(),
            params,
            vehicle_warm: ControlTrajectory::zeros(grid, INPUT_DIM),
            config,
            state,
        })
    }

    pub fn state(&self) -> &CouplingState {
        &self.state
    }

    pub fn config(&self) -> &CouplingConfig {
        &self.config
    }

    pub fn params(&self) -> &Arc<VehicleParams> {
        &self.params
    }

    pub fn course(&self) -> &Arc<SampledCourse> {
        self.course_mpc.course()
    }

    pub fn raw_profile(&self) -> Arc<CurvatureProfile> {
        self.course_mpc.raw_profile()
    }

    /// Runs both solves for the current vehicle state, then performs the mutual update.
    pub fn step_cycle(&mut self, x_now: &VehicleState) -> Result<CycleOutput> {
        let cycle_start = Instant::now();
        let profile = Arc::clone(&self.state.current_profile);
        let (s_start, s_end) = self.state.course_window;
        let problem = VehicleProblem::new(Arc::clone(&self.params), Arc::clone(&profile), self.vehicle_warm.grid());
        let x0 = x_now.to_array();

        let course_mpc = &mut self.course_mpc;
        let vehicle_solver = &mut self.vehicle_solver;
        let warm = &self.vehicle_warm;
        let vcfg = self.config.vehicle_solver;

        let mut course_job = move || {
            let t = Instant::now();
            let r = course_mpc.solve_window(s_start, s_end);
            (r, t.elapsed())
        };
        let mut vehicle_job = move || {
            let t = Instant::now();
            let r = vehicle_solver.solve_step(&problem, &x0, warm, &vcfg);
            (r, t.elapsed())
        };
        let ((course_res, course_time), (vehicle_res, vehicle_time)) = match self.config.mode {
            ExecutionMode::Sequential => {
                let c = course_job();
                let v = vehicle_job();
                (c, v)
            }
            ExecutionMode::Parallel => rayon::join(course_job, vehicle_job),
        };
        let vehicle = vehicle_res?;

        // mutual update
        let s_now = x_now.s_r;
        let s_horizon = vehicle.x_star.last()[S_R];
        let profile_domain = profile.domain();
        for node in vehicle.x_star.nodes() {
            let s = node[S_R];
            if s < profile_domain.0 || s > profile_domain.1 {
                self.state.extrapolated_evaluations += 1;
            }
        }
        self.state.v_horizon_arc = s_horizon - s_now;
        let total = self.course_mpc.course().length();
        let lo = s_now.clamp(0.0, total);
        let hi = (s_horizon + self.config.margin).max(lo + self.config.window_floor).min(total);
        self.state.course_window = (lo, hi.max(lo));

        let course = match course_res {
            Ok(window) => {
                self.state.current_profile = Arc::new(window.profile);
                Some(window.solution)
            }
            Err(_) => {
                self.state.failed_course_cycles += 1;
                None
            }
        };
        self.vehicle_warm = warm_start_delayed(&vehicle.u_star, self.config.dt);
        self.state.cycle_counter += 1;

        Ok(CycleOutput {
            vehicle,
            profile_used: profile,
            course,
            course_time,
            vehicle_time,
            cycle_time: cycle_start.elapsed(),
        })
    }
}
