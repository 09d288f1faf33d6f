//! Kinematic single-track vehicle coupled to a reference course, and the
//! tracking problem solved by the vehicle MPC.
//!
//! State layout: `[x, y, psi, delta, v, d_perp, psi_r, s_r]`, input layout
//! `[steer_rate, accel]`. The last three states locate the vehicle relative
//! to the reference course through differential equations driven by the
//! course curvature `kappa(s_r)`.

use std::sync::Arc;

use crate::course::CurvatureProfile;
use crate::error::{Error, Result};
use crate::integrators::Grid;
use crate::pgm::OcpProblem;

pub const STATE_DIM: usize = 8;
pub const INPUT_DIM: usize = 2;

pub const X: usize = 0;
pub const Y: usize = 1;
pub const PSI: usize = 2;
pub const DELTA: usize = 3;
pub const V: usize = 4;
pub const D_PERP: usize = 5;
pub const PSI_R: usize = 6;
pub const S_R: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Yaw, rad.
    pub psi: f64,
    /// Front steer angle, rad.
    pub delta: f64,
    /// Speed, m/s.
    pub v: f64,
    /// Signed lateral offset from the reference, m.
    pub d_perp: f64,
    /// Reference tangent angle, rad.
    pub psi_r: f64,
    /// Arc length along the reference, m.
    pub s_r: f64,
}

impl VehicleState {
    pub fn to_array(self) -> [f64; STATE_DIM] {
        [
            self.x, self.y, self.psi, self.delta, self.v, self.d_perp, self.psi_r, self.s_r,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            x: v[X],
            y: v[Y],
            psi: v[PSI],
            delta: v[DELTA],
            v: v[V],
            d_perp: v[D_PERP],
            psi_r: v[PSI_R],
            s_r: v[S_R],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleControl {
    /// rad/s
    pub steer_rate: f64,
    /// m/s^2
    pub accel: f64,
}

impl VehicleControl {
    pub fn to_array(self) -> [f64; INPUT_DIM] {
        [self.steer_rate, self.accel]
    }

    pub fn from_slice(u: &[f64]) -> Self {
        Self {
            steer_rate: u[0],
            accel: u[1],
        }
    }
}

/// How the lateral-acceleration entry of the representative state is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LateralAccelTerm {
    /// `v^2 * kappa_v`, the lateral acceleration of the kinematic model.
    #[default]
    Curvature,
    /// `v^2 * psi`, the heading-based proxy.
    HeadingProxy,
}

/// Heading frame of the lateral-velocity entry of the representative state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LateralVelocityTerm {
    /// `v (psi - psi_r)` against zero: heading measured from the reference tangent.
    #[default]
    Reference,
    /// `v psi` against `v_hat psi_r`, both in the global frame.
    GlobalHeading,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    /// Vehicle length `l`, m.
    pub length: f64,
    /// Characteristic velocity, m/s.
    pub v_ch: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub steer_rate_min: f64,
    pub steer_rate_max: f64,
    pub accel_min: f64,
    pub accel_max: f64,
    /// Maximum absolute lateral acceleration used for target-speed shaping, m/s^2.
    pub a_lat_max: f64,
    /// Speed limit, m/s.
    pub v_limit: f64,
    /// Weight of the steer-angle soft penalty.
    pub gamma: f64,
    pub q: [f64; 6],
    pub r: [f64; 2],
    pub d_perp_target: f64,
    /// Minimum magnitude of `1 - d_perp * kappa`.
    pub denom_guard: f64,
    pub lateral_accel: LateralAccelTerm,
    pub lateral_velocity: LateralVelocityTerm,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            length: 2.7,
            v_ch: 20.0,
            delta_min: (-20.0f64).to_radians(),
            delta_max: 20.0f64.to_radians(),
            steer_rate_min: (-5.0f64).to_radians(),
            steer_rate_max: 5.0f64.to_radians(),
            accel_min: -2.5,
            accel_max: 2.0,
            a_lat_max: 2.0,
            v_limit: 10.0,
            gamma: 1e3,
            q: [0.1, 0.1, 0.2, 0.2, 0.5, 0.5],
            r: [1.0, 0.1],
            d_perp_target: 0.0,
            denom_guard: 1e-3,
            lateral_accel: LateralAccelTerm::Curvature,
            lateral_velocity: LateralVelocityTerm::Reference,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidConfig(msg.to_string()))
            }
        };
        check(self.length > 0.0, "vehicle length must be positive")?;
        check(self.v_ch > 0.0, "characteristic velocity must be positive")?;
        check(self.delta_min < self.delta_max, "steer angle bounds must be ordered")?;
        check(self.steer_rate_min <= self.steer_rate_max, "steer rate bounds must be ordered")?;
        check(self.accel_min <= self.accel_max, "acceleration bounds must be ordered")?;
        check(self.a_lat_max > 0.0, "lateral acceleration limit must be positive")?;
        check(self.v_limit > 0.0, "speed limit must be positive")?;
        check(self.gamma >= 0.0, "penalty weight must be non-negative")?;
        check(self.q.iter().all(|&q| q >= 0.0), "state weights must be non-negative")?;
        check(self.r.iter().all(|&r| r > 0.0), "input weights must be positive")?;
        check(self.denom_guard > 0.0, "denominator guard must be positive")?;
        check(self.d_perp_target.is_finite(), "target offset must be finite")?;
        Ok(())
    }

    pub fn input_lower(&self) -> [f64; INPUT_DIM] {
        [self.steer_rate_min, self.accel_min]
    }

    pub fn input_upper(&self) -> [f64; INPUT_DIM] {
        [self.steer_rate_max, self.accel_max]
    }

    /// `1 / (l (1 + (v / v_ch)^2))` and its derivative in `v`.
    fn yaw_gain(&self, v: f64) -> (f64, f64) {
        let ratio = v / self.v_ch;
        let den = self.length * (1.0 + ratio * ratio);
        let h = 1.0 / den;
        let dden = 2.0 * self.length * v / (self.v_ch * self.v_ch);
        (h, -dden * h * h)
    }

    /// Steer angle that holds a steady circle of curvature `kappa` at speed `v`.
    pub fn steady_state_steer(&self, kappa: f64, v: f64) -> f64 {
        let ratio = v / self.v_ch;
        kappa * self.length * (1.0 + ratio * ratio)
    }
}

/// Lumped characteristic velocity from axle geometry, cornering stiffnesses and mass.
pub fn characteristic_velocity(c_f: f64, c_r: f64, l_f: f64, l_r: f64, mass: f64, length: f64) -> Result<f64> {
    if !(mass > 0.0) || !(length > 0.0) {
        return Err(Error::InvalidConfig("mass and length must be positive".into()));
    }
    let margin = c_r * l_r - c_f * l_f;
    if !(margin > 0.0) {
        return Err(Error::UnderSteerViolation { margin });
    }
    Ok((length * length * c_f * c_r / (mass * margin)).sqrt())
}

/// Representative states the tracking cost acts on.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct XiState {
    pub v_perp: f64,
    pub a_perp: f64,
    pub psi: f64,
    pub kappa_v: f64,
    pub d_perp: f64,
    pub v: f64,
}

impl XiState {
    pub fn to_array(self) -> [f64; 6] {
        [self.v_perp, self.a_perp, self.psi, self.kappa_v, self.d_perp, self.v]
    }
}

pub fn xi_map(state: &VehicleState, params: &VehicleParams) -> XiState {
    let (h, _) = params.yaw_gain(state.v);
    let kappa_v = state.delta * h;
    let a_perp = match params.lateral_accel {
        LateralAccelTerm::Curvature => state.v * state.v * kappa_v,
        LateralAccelTerm::HeadingProxy => state.v * state.v * state.psi,
    };
    let v_perp = match params.lateral_velocity {
        LateralVelocityTerm::Reference => state.v * (state.psi - state.psi_r),
        LateralVelocityTerm::GlobalHeading => state.v * state.psi,
    };
    XiState {
        v_perp,
        a_perp,
        psi: state.psi,
        kappa_v,
        d_perp: state.d_perp,
        v: state.v,
    }
}

/// Target speed `min(v_limit, sqrt(a_lat_max / |kappa|))` and its derivative in `kappa`.
pub fn target_velocity(kappa_r: f64, params: &VehicleParams) -> (f64, f64) {
    if kappa_r == 0.0 {
        return (params.v_limit, 0.0);
    }
    let v_max = (params.a_lat_max / kappa_r.abs()).sqrt();
    if v_max >= params.v_limit {
        (params.v_limit, 0.0)
    } else {
        (v_max, -v_max / (2.0 * kappa_r))
    }
}

pub fn target_xi(psi_r: f64, kappa_r: f64, params: &VehicleParams) -> XiState {
    let (v_hat, _) = target_velocity(kappa_r, params);
    let v_perp = match params.lateral_velocity {
        LateralVelocityTerm::Reference => 0.0,
        LateralVelocityTerm::GlobalHeading => v_hat * psi_r,
    };
    XiState {
        v_perp,
        a_perp: v_hat * v_hat * kappa_r,
        psi: psi_r,
        kappa_v: kappa_r,
        d_perp: params.d_perp_target,
        v: v_hat,
    }
}

/// Quadratic exceedance of `[lower, upper]`.
pub fn penalty(x: f64, lower: f64, upper: f64) -> f64 {
    if x > upper {
        (x - upper).powi(2)
    } else if x < lower {
        (x - lower).powi(2)
    } else {
        0.0
    }
}

pub fn penalty_derivative(x: f64, lower: f64, upper: f64) -> f64 {
    if x > upper {
        2.0 * (x - upper)
    } else if x < lower {
        2.0 * (x - lower)
    } else {
        0.0
    }
}

/// Guarded `1 - d * kappa`: magnitude at least `guard`, sign preserved.
/// Returns the value and whether it was clamped.
fn frenet_denominator(d_perp: f64, kappa: f64, guard: f64) -> (f64, bool) {
    let raw = 1.0 - d_perp * kappa;
    if raw.abs() >= guard {
        (raw, false)
    } else if raw < 0.0 {
        (-guard, true)
    } else {
        (guard, true)
    }
}

pub(crate) fn dynamics_into(x: &[f64], u: &[f64], profile: &CurvatureProfile, params: &VehicleParams, dx: &mut [f64]) {
    let v = x[V];
    let (h, _) = params.yaw_gain(v);
    let kappa = profile.eval(x[S_R]);
    let rel = x[PSI] - x[PSI_R];
    let (den, _) = frenet_denominator(x[D_PERP], kappa, params.denom_guard);
    let along = v * rel.cos() / den;
    dx[X] = v * x[PSI].cos();
    dx[Y] = v * x[PSI].sin();
    dx[PSI] = v * h * x[DELTA];
    dx[DELTA] = u[0];
    dx[V] = u[1];
    dx[D_PERP] = v * rel.sin();
    dx[PSI_R] = along * kappa;
    dx[S_R] = along;
}

pub fn vehicle_dynamics(
    state: &VehicleState,
    control: &VehicleControl,
    profile: &CurvatureProfile,
    params: &VehicleParams,
) -> [f64; STATE_DIM] {
    let mut dx = [0.0; STATE_DIM];
    dynamics_into(&state.to_array(), &control.to_array(), profile, params, &mut dx);
    dx
}

/// Row-major Jacobians of the dynamics.
pub(crate) fn jacobians_into(
    x: &[f64],
    profile: &CurvatureProfile,
    params: &VehicleParams,
    jac_x: &mut [f64],
    jac_u: &mut [f64],
) {
    let n = STATE_DIM;
    jac_x.iter_mut().for_each(|v| *v = 0.0);
    jac_u.iter_mut().for_each(|v| *v = 0.0);
    let v = x[V];
    let psi = x[PSI];
    let (h, dh) = params.yaw_gain(v);
    let (kappa, dkappa) = profile.eval_with_slope(x[S_R]);
    let rel = psi - x[PSI_R];
    let (c, sn) = (rel.cos(), rel.sin());
    let (den, clamped) = frenet_denominator(x[D_PERP], kappa, params.denom_guard);
    let (dden_dd, dden_ds) = if clamped {
        (0.0, 0.0)
    } else {
        (-kappa, -x[D_PERP] * dkappa)
    };

    jac_x[X * n + PSI] = -v * psi.sin();
    jac_x[X * n + V] = psi.cos();
    jac_x[Y * n + PSI] = v * psi.cos();
    jac_x[Y * n + V] = psi.sin();

    // psi_dot = v h(v) delta
    jac_x[PSI * n + DELTA] = v * h;
    jac_x[PSI * n + V] = (h + v * dh) * x[DELTA];

    jac_x[D_PERP * n + PSI] = v * c;
    jac_x[D_PERP * n + PSI_R] = -v * c;
    jac_x[D_PERP * n + V] = sn;

    // s_r_dot = F = v cos(rel) / den, psi_r_dot = F kappa
    let f = v * c / den;
    let df = [
        (PSI, -v * sn / den),
        (PSI_R, v * sn / den),
        (V, c / den),
        (D_PERP, -f / den * dden_dd),
        (S_R, -f / den * dden_ds),
    ];
    for (col, d) in df {
        jac_x[S_R * n + col] = d;
        jac_x[PSI_R * n + col] = kappa * d;
    }
    jac_x[PSI_R * n + S_R] += f * dkappa;

    jac_u[DELTA * INPUT_DIM] = 1.0;
    jac_u[V * INPUT_DIM + 1] = 1.0;
}

pub fn dynamics_jacobians(
    state: &VehicleState,
    profile: &CurvatureProfile,
    params: &VehicleParams,
) -> ([[f64; STATE_DIM]; STATE_DIM], [[f64; INPUT_DIM]; STATE_DIM]) {
    let mut jx = [0.0; STATE_DIM * STATE_DIM];
    let mut ju = [0.0; STATE_DIM * INPUT_DIM];
    jacobians_into(&state.to_array(), profile, params, &mut jx, &mut ju);
    let mut a = [[0.0; STATE_DIM]; STATE_DIM];
    let mut b = [[0.0; INPUT_DIM]; STATE_DIM];
    for r in 0..STATE_DIM {
        a[r].copy_from_slice(&jx[r * STATE_DIM..(r + 1) * STATE_DIM]);
        b[r].copy_from_slice(&ju[r * INPUT_DIM..(r + 1) * INPUT_DIM]);
    }
    (a, b)
}

/// Residuals `xi - xi_hat` with their state partials (columns over the 8 states).
struct Residuals {
    e: [f64; 6],
    de: [[f64; STATE_DIM]; 6],
}

fn residuals(x: &[f64], profile: &CurvatureProfile, params: &VehicleParams, with_partials: bool) -> Residuals {
    let v = x[V];
    let psi = x[PSI];
    let delta = x[DELTA];
    let psi_r = x[PSI_R];
    let (h, dh) = params.yaw_gain(v);
    let kappa_v = delta * h;
    let (kr, dkr) = profile.eval_with_slope(x[S_R]);
    let (vh, dvh_dk) = target_velocity(kr, params);

    let a_perp = match params.lateral_accel {
        LateralAccelTerm::Curvature => v * v * kappa_v,
        LateralAccelTerm::HeadingProxy => v * v * psi,
    };
    let v_perp_error = match params.lateral_velocity {
        LateralVelocityTerm::Reference => v * (psi - psi_r),
        LateralVelocityTerm::GlobalHeading => v * psi - vh * psi_r,
    };
    let e = [
        v_perp_error,
        a_perp - vh * vh * kr,
        psi - psi_r,
        kappa_v - kr,
        x[D_PERP] - params.d_perp_target,
        v - vh,
    ];
    let mut de = [[0.0; STATE_DIM]; 6];
    if with_partials {
        let dvh_ds = dvh_dk * dkr;
        match params.lateral_velocity {
            LateralVelocityTerm::Reference => {
                de[0][PSI] = v;
                de[0][V] = psi - psi_r;
                de[0][PSI_R] = -v;
            }
            LateralVelocityTerm::GlobalHeading => {
                de[0][PSI] = v;
                de[0][V] = psi;
                de[0][PSI_R] = -vh;
                de[0][S_R] = -psi_r * dvh_ds;
            }
        }

        match params.lateral_accel {
            LateralAccelTerm::Curvature => {
                de[1][DELTA] = v * v * h;
                de[1][V] = 2.0 * v * kappa_v + v * v * delta * dh;
            }
            LateralAccelTerm::HeadingProxy => {
                de[1][PSI] = v * v;
                de[1][V] = 2.0 * v * psi;
            }
        }
        de[1][S_R] = -(2.0 * vh * dvh_ds * kr + vh * vh * dkr);

        de[2][PSI] = 1.0;
        de[2][PSI_R] = -1.0;

        de[3][DELTA] = h;
        de[3][V] = delta * dh;
        de[3][S_R] = -dkr;

        de[4][D_PERP] = 1.0;

        de[5][V] = 1.0;
        de[5][S_R] = -dvh_ds;
    }
    Residuals { e, de }
}

pub(crate) fn stage_cost_slices(x: &[f64], u: &[f64], profile: &CurvatureProfile, params: &VehicleParams) -> f64 {
    let r = residuals(x, profile, params, false);
    let tracking: f64 = r.e.iter().zip(&params.q).map(|(e, q)| q * e * e).sum();
    let effort = params.r[0] * u[0] * u[0] + params.r[1] * u[1] * u[1];
    tracking + effort + params.gamma * penalty(x[DELTA], params.delta_min, params.delta_max)
}

pub(crate) fn cost_gradients_into(
    x: &[f64],
    u: &[f64],
    profile: &CurvatureProfile,
    params: &VehicleParams,
    grad_x: &mut [f64],
    grad_u: &mut [f64],
) {
    let r = residuals(x, profile, params, true);
    grad_x.iter_mut().for_each(|g| *g = 0.0);
    for i in 0..6 {
        let w = 2.0 * params.q[i] * r.e[i];
        if w != 0.0 {
            for (g, d) in grad_x.iter_mut().zip(&r.de[i]) {
                *g += w * d;
            }
        }
    }
    grad_x[DELTA] += params.gamma * penalty_derivative(x[DELTA], params.delta_min, params.delta_max);
    grad_u[0] = 2.0 * params.r[0] * u[0];
    grad_u[1] = 2.0 * params.r[1] * u[1];
}

/// `(xi - xi_hat)^T Q (xi - xi_hat) + u^T R u + gamma p(delta)`, with the
/// target evaluated at the state's own reference angle and arc length.
pub fn stage_cost(state: &VehicleState, control: &VehicleControl, profile: &CurvatureProfile, params: &VehicleParams) -> f64 {
    stage_cost_slices(&state.to_array(), &control.to_array(), profile, params)
}

pub fn cost_gradients(
    state: &VehicleState,
    control: &VehicleControl,
    profile: &CurvatureProfile,
    params: &VehicleParams,
) -> ([f64; STATE_DIM], [f64; INPUT_DIM]) {
    let mut gx = [0.0; STATE_DIM];
    let mut gu = [0.0; INPUT_DIM];
    cost_gradients_into(&state.to_array(), &control.to_array(), profile, params, &mut gx, &mut gu);
    (gx, gu)
}

/// The vehicle tracking problem over a time horizon, bound to one curvature snapshot.
#[derive(Debug, Clone)]
pub struct VehicleProblem {
    params: Arc<VehicleParams>,
    profile: Arc<CurvatureProfile>,
    grid: Grid,
    lower: [f64; INPUT_DIM],
    upper: [f64; INPUT_DIM],
}

impl VehicleProblem {
    pub fn new(params: Arc<VehicleParams>, profile: Arc<CurvatureProfile>, grid: Grid) -> Self {
        let lower = params.input_lower();
        let upper = params.input_upper();
        Self {
            params,
            profile,
            grid,
            lower,
            upper,
        }
    }

    /// Horizon of `steps` intervals of `dt` seconds starting at time zero.
    pub fn with_horizon(params: Arc<VehicleParams>, profile: Arc<CurvatureProfile>, dt: f64, steps: usize) -> Result<Self> {
        Ok(Self::new(params, profile, Grid::new(0.0, dt, steps)?))
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    pub fn profile(&self) -> &Arc<CurvatureProfile> {
        &self.profile
    }
}

impl OcpProblem for VehicleProblem {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn input_dim(&self) -> usize {
        INPUT_DIM
    }

    fn grid(&self) -> Grid {
        self.grid
    }

    fn dynamics(&self, _t: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dynamics_into(x, u, &self.profile, &self.params, dx);
    }

    fn dynamics_jacobians(&self, _t: f64, x: &[f64], _u: &[f64], jac_x: &mut [f64], jac_u: &mut [f64]) {
        jacobians_into(x, &self.profile, &self.params, jac_x, jac_u);
    }

    fn stage_cost(&self, _t: f64, x: &[f64], u: &[f64]) -> f64 {
        stage_cost_slices(x, u, &self.profile, &self.params)
    }

    fn stage_cost_gradients(&self, _t: f64, x: &[f64], u: &[f64], grad_x: &mut [f64], grad_u: &mut [f64]) {
        cost_gradients_into(x, u, &self.profile, &self.params, grad_x, grad_u);
    }

    fn input_lower(&self) -> &[f64] {
        &self.lower
    }

    fn input_upper(&self) -> &[f64] {
        &self.upper
    }
}
