//! Closed-loop simulation: the coupled planners drive a plant that uses the
//! same vehicle model and integrator as the vehicle MPC.

use std::sync::Arc;

use trajplan_core::concurrent::{ConcurrentMpc, CouplingConfig};
use trajplan_core::course::{CurvatureProfile, SampledCourse};
use trajplan_core::integrators::{integrate_forward, ControlTrajectory, Grid};
use trajplan_core::pgm::OcpProblem;
use trajplan_core::vehicle::{target_velocity, target_xi, xi_map, VehicleParams, VehicleProblem, INPUT_DIM};
use trajplan_core::{Error, VehicleControl, VehicleState};

use crate::log::{quantize, SimLogRecord};

/// Lateral offset beyond which a run is aborted, m.
pub const DIVERGENCE_LIMIT: f64 = 5.0;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("simulation diverged at t = {t} s with lateral offset {d_perp} m")]
    Diverged { t: f64, d_perp: f64, partial: Box<SimRun> },
    #[error(transparent)]
    Core(#[from] Error),
}

/// Wall-clock timings of one cycle, microseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleTiming {
    pub t: f64,
    pub course_us: f64,
    pub vehicle_us: f64,
    pub cycle_us: f64,
}

/// Predicted vehicle path at one instant, for bird's-eye plots.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub state: VehicleState,
    pub predicted: Vec<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct SimRun {
    pub records: Vec<SimLogRecord>,
    pub timings: Vec<CycleTiming>,
    pub snapshots: Vec<Snapshot>,
    /// Last published curvature profile.
    pub final_profile: Arc<CurvatureProfile>,
    pub raw_profile: Arc<CurvatureProfile>,
    /// Largest mismatch between the first predicted node and the plant
    /// replaying the first planned interval.
    pub max_prediction_gap: f64,
    /// Profile evaluations outside the published domain.
    pub extrapolated_evaluations: u64,
}

#[derive(Debug, Clone)]
pub struct SimSetup {
    pub course: Arc<SampledCourse>,
    pub x0: VehicleState,
    pub duration: f64,
    pub params: Arc<VehicleParams>,
    pub coupling: CouplingConfig,
    /// Times at which the predicted path is stored.
    pub snapshot_times: Vec<f64>,
}

/// Advances the plant by one control interval.
pub fn plant_step(
    x: &VehicleState,
    u: &VehicleControl,
    params: &Arc<VehicleParams>,
    profile: &Arc<CurvatureProfile>,
    dt: f64,
) -> Result<VehicleState, Error> {
    let grid = Grid::new(0.0, dt, 1)?;
    let problem = VehicleProblem::new(Arc::clone(params), Arc::clone(profile), grid);
    let u = ControlTrajectory::constant(grid, &u.to_array());
    let traj = integrate_forward(|t, x: &[f64], u: &[f64], dx: &mut [f64]| problem.dynamics(t, x, u, dx), &x.to_array(), &u)?;
    Ok(VehicleState::from_slice(traj.last()))
}

fn make_record(t: f64, x: &VehicleState, u: &VehicleControl, profile: &CurvatureProfile, params: &VehicleParams) -> SimLogRecord {
    let kappa = profile.eval(x.s_r);
    let target = target_xi(x.psi_r, kappa, params);
    let (v_tar, _) = target_velocity(kappa, params);
    let xi = xi_map(x, params);
    SimLogRecord {
        t: quantize(t),
        state: x.to_array().map(quantize),
        control: u.to_array().map(quantize),
        xi_hat: target.to_array().map(quantize),
        kappa_ref: quantize(kappa),
        v_tar: quantize(v_tar),
        a_perp: quantize(x.v * x.v * xi.kappa_v),
    }
}

/// Runs the coupled planners for `duration` seconds. Produces one record per
/// step, `duration / dt + 1` in total; each record holds the state and the
/// control applied from it.
pub fn run_closed_loop(setup: &SimSetup) -> Result<SimRun, SimError> {
    let dt = setup.coupling.dt;
    if !(setup.duration > 0.0) {
        return Err(Error::InvalidConfig("duration must be positive".into()).into());
    }
    let steps = (setup.duration / dt).round() as usize;
    let mut mpc = ConcurrentMpc::init(Arc::clone(&setup.course), &setup.x0, Arc::clone(&setup.params), setup.coupling.clone())?;
    let mut run = SimRun {
        records: Vec::with_capacity(steps + 1),
        timings: Vec::with_capacity(steps + 1),
        snapshots: Vec::new(),
        final_profile: Arc::clone(&mpc.state().current_profile),
        raw_profile: mpc.raw_profile(),
        max_prediction_gap: 0.0,
        extrapolated_evaluations: 0,
    };
    let mut pending_snapshots: Vec<f64> = setup.snapshot_times.clone();
    pending_snapshots.sort_by(f64::total_cmp);
    pending_snapshots.reverse();

    let mut x = setup.x0;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let out = mpc.step_cycle(&x)?;
        let u = VehicleControl::from_slice(&out.vehicle.u_star.interval(0)[..INPUT_DIM]);
        run.records.push(make_record(t, &x, &u, &out.profile_used, &setup.params));
        run.timings.push(CycleTiming {
            t,
            course_us: out.course_time.as_secs_f64() * 1e6,
            vehicle_us: out.vehicle_time.as_secs_f64() * 1e6,
            cycle_us: out.cycle_time.as_secs_f64() * 1e6,
        });
        while pending_snapshots.last().is_some_and(|&ts| ts <= t + 0.5 * dt) {
            pending_snapshots.pop();
            run.snapshots.push(Snapshot {
                t,
                state: x,
                predicted: out.vehicle.x_star.nodes().map(|n| [n[0], n[1]]).collect(),
            });
        }
        run.final_profile = Arc::clone(&mpc.state().current_profile);
        run.extrapolated_evaluations = mpc.state().extrapolated_evaluations;
        if k == steps {
            break;
        }
        let next = plant_step(&x, &u, &setup.params, &out.profile_used, dt)?;
        // the plant and the planner share one model: replaying the first
        // planned interval must land on the first predicted node
        let h = setup.coupling.horizon_step();
        let replay = if (h - dt).abs() < 1e-12 { next } else { plant_step(&x, &u, &setup.params, &out.profile_used, h)? };
        let predicted = out.vehicle.x_star.node(1);
        let gap = predicted.iter().zip(replay.to_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        run.max_prediction_gap = run.max_prediction_gap.max(gap);
        x = next;
        if !x.is_finite() || x.d_perp.abs() > DIVERGENCE_LIMIT {
            let t_next = (k + 1) as f64 * dt;
            let d_perp = x.d_perp;
            return Err(SimError::Diverged {
                t: t_next,
                d_perp,
                partial: Box::new(run),
            });
        }
    }
    Ok(run)
}
