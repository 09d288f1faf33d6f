//! Scenario and parameter files.
//!
//! Both are flat TOML key-value files. Angles are given in degrees and
//! converted to radians here; everything downstream works in radians.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use trajplan_core::concurrent::{CouplingConfig, ExecutionMode};
use trajplan_core::course::{read_course_csv, CourseMpcConfig, CourseWeights, SampledCourse};
use trajplan_core::pgm::SolverConfig;
use trajplan_core::vehicle::{LateralAccelTerm, LateralVelocityTerm, VehicleParams};
use trajplan_core::{Error, Result, VehicleState};

use crate::courses::{generate_circle, generate_lying_eight, generate_straight, generate_turn};

/// Tuning of both planners and the vehicle model.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsFile {
    pub q: [f64; 6],
    pub r: [f64; 2],
    pub course_q: [f64; 2],
    pub course_r: f64,
    pub dt_s: f64,
    pub ds_m: f64,
    pub m_iterations: usize,
    pub course_m_iterations: Option<usize>,
    pub t_hor_s: f64,
    /// Vehicle MPC intervals per horizon.
    pub n_hor: usize,
    pub s0_m: Option<f64>,
    pub margin_m: f64,
    pub window_floor_m: f64,
    pub ell_m: f64,
    pub v_ch_mps: f64,
    pub delta_max_deg: f64,
    pub ddelta_max_degps: f64,
    pub a_min_mps2: f64,
    pub a_max_mps2: f64,
    pub a_lat_max_mps2: f64,
    pub v_sl_mps: f64,
    pub gamma: f64,
    pub d_perp_target_m: f64,
    pub denom_guard_m: f64,
    pub kappa_cap_1pm: f64,
    pub initial_step: f64,
    pub step_min: f64,
    pub step_max: f64,
    pub carry_step: bool,
    /// `curvature` or `heading`.
    pub lateral_accel: String,
    /// `reference` or `global`.
    pub lateral_velocity: String,
}

impl Default for ParamsFile {
    fn default() -> Self {
        let v = VehicleParams::default();
        let c = CourseMpcConfig::default();
        let s = SolverConfig::default();
        Self {
            q: v.q,
            r: v.r,
            course_q: c.weights.q,
            course_r: c.weights.r,
            dt_s: 0.05,
            ds_m: c.ds,
            m_iterations: s.max_iterations,
            course_m_iterations: None,
            t_hor_s: 2.0,
            n_hor: 20,
            s0_m: None,
            margin_m: 5.0,
            window_floor_m: 5.0,
            ell_m: v.length,
            v_ch_mps: v.v_ch,
            delta_max_deg: v.delta_max.to_degrees(),
            ddelta_max_degps: v.steer_rate_max.to_degrees(),
            a_min_mps2: v.accel_min,
            a_max_mps2: v.accel_max,
            a_lat_max_mps2: v.a_lat_max,
            v_sl_mps: v.v_limit,
            gamma: v.gamma,
            d_perp_target_m: v.d_perp_target,
            denom_guard_m: v.denom_guard,
            kappa_cap_1pm: c.kappa_cap,
            initial_step: s.initial_step,
            step_min: s.step_min,
            step_max: s.step_max,
            carry_step: s.carry_step,
            lateral_accel: "curvature".into(),
            lateral_velocity: "reference".into(),
        }
    }
}

/// Scenario: course, initial state, duration and execution mode.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    /// Generator name (`lying-eight`, `circle`, `straight`, `turn`) or a CSV path.
    pub course: String,
    pub kappa_peak_1pm: f64,
    pub spacing_m: f64,
    pub laps: f64,
    pub radius_m: f64,
    pub length_m: f64,
    pub heading_deg: f64,
    pub angle_deg: f64,
    pub entry_m: f64,
    pub x0_x_m: Option<f64>,
    pub x0_y_m: Option<f64>,
    pub x0_psi_deg: Option<f64>,
    pub x0_delta_deg: f64,
    pub x0_v_mps: f64,
    pub x0_d_perp_m: f64,
    pub x0_psi_r_deg: Option<f64>,
    pub x0_s_r_m: f64,
    pub duration_s: f64,
    pub seed: u64,
    /// `sequential` or `parallel`.
    pub mode: String,
    pub snapshot_times_s: Vec<f64>,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self {
            course: "lying-eight".into(),
            kappa_peak_1pm: 0.075,
            spacing_m: 0.5,
            laps: 2.0,
            radius_m: 13.0,
            length_m: 500.0,
            heading_deg: 0.0,
            angle_deg: -90.0,
            entry_m: 50.0,
            x0_x_m: None,
            x0_y_m: None,
            x0_psi_deg: None,
            x0_delta_deg: 0.0,
            x0_v_mps: 10.0,
            x0_d_perp_m: 0.0,
            x0_psi_r_deg: None,
            x0_s_r_m: 0.0,
            duration_s: 40.0,
            seed: 0,
            mode: "sequential".into(),
            snapshot_times_s: vec![12.0, 28.0],
        }
    }
}

fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("{what}: {e}")))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

impl ParamsFile {
    pub fn parse(text: &str) -> Result<Self> {
        parse_toml(text, "parameter file")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&read_text(path.as_ref())?)
    }

    pub fn vehicle_params(&self) -> Result<VehicleParams> {
        let lateral_accel = match self.lateral_accel.as_str() {
            "curvature" => LateralAccelTerm::Curvature,
            "heading" => LateralAccelTerm::HeadingProxy,
            other => return Err(Error::InvalidConfig(format!("unknown lateral_accel {other:?}"))),
        };
        let lateral_velocity = match self.lateral_velocity.as_str() {
            "reference" => LateralVelocityTerm::Reference,
            "global" => LateralVelocityTerm::GlobalHeading,
            other => return Err(Error::InvalidConfig(format!("unknown lateral_velocity {other:?}"))),
        };
        let params = VehicleParams {
            length: self.ell_m,
            v_ch: self.v_ch_mps,
            delta_min: -self.delta_max_deg.to_radians(),
            delta_max: self.delta_max_deg.to_radians(),
            steer_rate_min: -self.ddelta_max_degps.to_radians(),
            steer_rate_max: self.ddelta_max_degps.to_radians(),
            accel_min: self.a_min_mps2,
            accel_max: self.a_max_mps2,
            a_lat_max: self.a_lat_max_mps2,
            v_limit: self.v_sl_mps,
            gamma: self.gamma,
            q: self.q,
            r: self.r,
            d_perp_target: self.d_perp_target_m,
            denom_guard: self.denom_guard_m,
            lateral_accel,
            lateral_velocity,
        };
        params.validate()?;
        Ok(params)
    }

    fn solver(&self, iterations: usize) -> SolverConfig {
        SolverConfig {
            max_iterations: iterations,
            initial_step: self.initial_step,
            step_min: self.step_min,
            step_max: self.step_max,
            carry_step: self.carry_step,
        }
    }

    pub fn course_config(&self) -> CourseMpcConfig {
        CourseMpcConfig {
            weights: CourseWeights {
                q: self.course_q,
                r: self.course_r,
            },
            ds: self.ds_m,
            kappa_cap: self.kappa_cap_1pm,
            solver: self.solver(self.course_m_iterations.unwrap_or(self.m_iterations)),
        }
    }

    pub fn coupling_config(&self, mode: ExecutionMode) -> Result<CouplingConfig> {
        if !(self.dt_s > 0.0) || !(self.t_hor_s > 0.0) {
            return Err(Error::InvalidConfig("dt_s and t_hor_s must be positive".into()));
        }
        let config = CouplingConfig {
            dt: self.dt_s,
            t_hor: self.t_hor_s,
            horizon_steps: self.n_hor,
            vehicle_solver: self.solver(self.m_iterations),
            course: self.course_config(),
            initial_window: self.s0_m,
            margin: self.margin_m,
            window_floor: self.window_floor_m,
            mode,
        };
        config.validate()?;
        Ok(config)
    }
}

pub fn parse_mode(mode: &str) -> Result<ExecutionMode> {
    match mode {
        "sequential" => Ok(ExecutionMode::Sequential),
        "parallel" => Ok(ExecutionMode::Parallel),
        other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        parse_toml(text, "scenario file")
    }

    /// Loads a scenario; a relative course CSV path is resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut scenario = Self::parse(&read_text(path)?)?;
        if scenario.course.ends_with(".csv") {
            let p = PathBuf::from(&scenario.course);
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    scenario.course = dir.join(p).to_string_lossy().into_owned();
                }
            }
        }
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::InvalidConfig("duration_s must be positive".into()));
        }
        parse_mode(&self.mode)?;
        Ok(())
    }

    pub fn build_course(&self) -> Result<SampledCourse> {
        match self.course.as_str() {
            "lying-eight" => generate_lying_eight(self.kappa_peak_1pm, self.spacing_m, self.laps),
            "circle" => generate_circle(self.radius_m, self.spacing_m, self.laps),
            "straight" => generate_straight(self.length_m, self.heading_deg.to_radians(), self.spacing_m),
            "turn" => generate_turn(self.radius_m, self.angle_deg.to_radians(), self.entry_m, self.spacing_m),
            path if path.ends_with(".csv") => read_course_csv(path),
            other => Err(Error::InvalidConfig(format!("unknown course {other:?}"))),
        }
    }

    /// Initial state; unset pose entries come from the course at `x0_s_r_m`.
    pub fn initial_state(&self, course: &SampledCourse) -> VehicleState {
        let pose = course.pose_at(self.x0_s_r_m);
        let psi_r = self.x0_psi_r_deg.map_or(pose.phi, f64::to_radians);
        VehicleState {
            x: self.x0_x_m.unwrap_or(pose.x),
            y: self.x0_y_m.unwrap_or(pose.y),
            psi: self.x0_psi_deg.map_or(psi_r, f64::to_radians),
            delta: self.x0_delta_deg.to_radians(),
            v: self.x0_v_mps,
            d_perp: self.x0_d_perp_m,
            psi_r,
            s_r: self.x0_s_r_m,
        }
    }
}

/// Everything needed to run one closed-loop simulation.
#[derive(Debug, Clone)]
pub struct Setup {
    pub scenario: ScenarioFile,
    pub params: ParamsFile,
    pub sim: crate::sim::SimSetup,
}

pub fn build_setup(scenario: ScenarioFile, params: ParamsFile, mode_override: Option<ExecutionMode>) -> Result<Setup> {
    scenario.validate()?;
    let mode = match mode_override {
        Some(m) => m,
        None => parse_mode(&scenario.mode)?,
    };
    let course = Arc::new(scenario.build_course()?);
    let x0 = scenario.initial_state(&course);
    let sim = crate::sim::SimSetup {
        x0,
        duration: scenario.duration_s,
        params: Arc::new(params.vehicle_params()?),
        coupling: params.coupling_config(mode)?,
        snapshot_times: scenario.snapshot_times_s.clone(),
        course,
    };
    Ok(Setup { scenario, params, sim })
}
