//! Random problem instances and a finite-difference check of the assembled
//! cost gradient, shared by integration tests.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use trajplan_core::course::{build_course_problem, CourseState, CourseWeights, CurvatureProfile, SampledCourse};
use trajplan_core::integrators::{integrate_backward, integrate_with_cost_into, AdjointWorkspace};
use trajplan_core::{ControlTrajectory, Grid, OcpProblem, StateTrajectory, VehicleParams, VehicleProblem, VehicleState};

pub struct Instance {
    pub problem: Box<dyn OcpProblem>,
    pub x0: Vec<f64>,
    pub u: ControlTrajectory,
}

/// Vehicle problem on a random smooth curvature profile, 20 intervals of 0.1 s.
pub fn random_vehicle_instance(rng: &mut ChaCha8Rng) -> Instance {
    let params = VehicleParams::default();
    let (amp, wave, phase) = (rng.gen_range(0.0..0.08), rng.gen_range(8.0..30.0), rng.gen_range(0.0..6.0));
    let s: Vec<f64> = (0..=120).map(|i| i as f64 * 2.5).collect();
    let k = s.iter().map(|s| amp * (s / wave + phase).sin()).collect();
    let profile = Arc::new(CurvatureProfile::new(s, k).unwrap());
    let grid = Grid::new(0.0, 0.1, 20).unwrap();
    let psi_r = rng.gen_range(-3.0..3.0);
    let x0 = VehicleState {
        x: rng.gen_range(-50.0..50.0),
        y: rng.gen_range(-50.0..50.0),
        psi: psi_r + rng.gen_range(-0.3..0.3),
        delta: rng.gen_range(-0.3..0.3),
        v: rng.gen_range(1.0..14.0),
        d_perp: rng.gen_range(-1.0..1.0),
        psi_r,
        s_r: rng.gen_range(5.0..150.0),
    };
    let u = ControlTrajectory::from_fn(grid, 2, |_, v| {
        v[0] = rng.gen_range(params.steer_rate_min..params.steer_rate_max);
        v[1] = rng.gen_range(params.accel_min..params.accel_max);
    });
    Instance {
        problem: Box::new(VehicleProblem::new(Arc::new(params), profile, grid)),
        x0: x0.to_array().to_vec(),
        u,
    }
}

/// Curvature fit of a random arc window of a sampled circle.
pub fn random_course_instance(rng: &mut ChaCha8Rng) -> Instance {
    let radius = rng.gen_range(10.0..60.0);
    let spacing = rng.gen_range(0.3..1.5);
    let n = (60.0 / spacing) as usize;
    let pts = (0..=n)
        .map(|i| {
            let th = i as f64 * spacing / radius;
            [radius * th.sin(), radius * (1.0 - th.cos())]
        })
        .collect();
    let course = Arc::new(SampledCourse::new(pts).unwrap());
    let s_start = rng.gen_range(0.0..20.0);
    let len = rng.gen_range(5.0..30.0);
    let weights = CourseWeights {
        q: [rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)],
        r: rng.gen_range(0.001..0.1),
    };
    let problem = build_course_problem(Arc::clone(&course), s_start, s_start + len, weights, 0.5, 1.0).unwrap();
    let pose = course.pose_at(s_start);
    let x0 = CourseState {
        x: pose.x + rng.gen_range(-0.5..0.5),
        y: pose.y + rng.gen_range(-0.5..0.5),
        phi: pose.phi + rng.gen_range(-0.2..0.2),
    };
    let u = ControlTrajectory::from_fn(problem.grid(), 1, |_, v| v[0] = 1.0 / radius + rng.gen_range(-0.1..0.1));
    Instance {
        problem: Box::new(problem),
        x0: x0.to_array().to_vec(),
        u,
    }
}

fn cost(inst: &Instance, u: &ControlTrajectory) -> f64 {
    let mut x = StateTrajectory::zeros(u.grid(), inst.x0.len());
    integrate_with_cost_into(inst.problem.as_ref(), &inst.x0, u, &mut x, &mut AdjointWorkspace::default()).unwrap()
}

/// Largest violation ratio `|fd - adj| / (rel * max(|fd|, |adj|) + floor)`
/// over all control components; the check passes when it is at most 1.
pub fn gradient_violation(inst: &Instance, rel: f64, floor: f64) -> f64 {
    let p = inst.problem.as_ref();
    let mut x = StateTrajectory::zeros(inst.u.grid(), inst.x0.len());
    integrate_with_cost_into(p, &inst.x0, &inst.u, &mut x, &mut AdjointWorkspace::default()).unwrap();
    let lambda_end = vec![0.0; p.state_dim()];
    let sweep = integrate_backward(p, &lambda_end, &x, &inst.u).unwrap();
    let h = inst.u.grid().step();
    let eps = 1e-6;
    let mut worst = 0.0_f64;
    for i in 0..inst.u.len() {
        for j in 0..inst.u.dim() {
            let mut up = inst.u.clone();
            up.interval_mut(i)[j] += eps;
            let mut dn = inst.u.clone();
            dn.interval_mut(i)[j] -= eps;
            let fd = (cost(inst, &up) - cost(inst, &dn)) / (2.0 * eps);
            let adj = h * sweep.gradient.interval(i)[j];
            worst = worst.max((fd - adj).abs() / (rel * fd.abs().max(adj.abs()) + floor));
        }
    }
    worst
}
