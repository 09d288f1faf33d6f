//! Fixed-step RK4 integration of controlled ODEs on uniform grids.
//!
//! Controls are held constant over each grid interval. The backward sweep is
//! the exact reverse-mode derivative of the forward RK4 recursion (including
//! the RK4 quadrature of the running cost), so the control gradient it
//! produces is the true gradient of the discretized cost.

use crate::error::{Error, Result};
use crate::pgm::OcpProblem;

/// Uniform grid `start + i * step` for `i` in `0..=count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    start: f64,
    step: f64,
    count: usize,
}

impl Grid {
    pub fn new(start: f64, step: f64, count: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidGrid(format!("step must be positive, got {step}")));
        }
        if count == 0 {
            return Err(Error::InvalidGrid("count must be at least 1".into()));
        }
        if !start.is_finite() {
            return Err(Error::InvalidGrid(format!("start must be finite, got {start}")));
        }
        Ok(Self { start, step, count })
    }

    /// Smallest grid with the given step that covers `[start, start + length]`.
    /// Always at least one interval.
    pub fn covering(start: f64, length: f64, step: f64) -> Result<Self> {
        let count = if length > 0.0 {
            ((length / step) - 1e-9).ceil().max(1.0) as usize
        } else {
            1
        };
        Self::new(start, step, count)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of intervals.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn node_count(&self) -> usize {
        self.count + 1
    }

    pub fn node(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.node(self.count)
    }

    pub fn length(&self) -> f64 {
        self.count as f64 * self.step
    }

    /// Index of the interval containing `tau`, clamped to the grid.
    pub fn interval_of(&self, tau: f64) -> usize {
        let k = ((tau - self.start) / self.step).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.count - 1)
        }
    }
}

/// State values at every node of a grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    grid: Grid,
    dim: usize,
    values: Vec<f64>,
}

impl StateTrajectory {
    pub fn zeros(grid: Grid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            values: vec![0.0; grid.node_count() * dim],
        }
    }

    pub fn from_values(grid: Grid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() * dim {
            return Err(Error::DimensionMismatch {
                what: "state trajectory values",
                expected: grid.node_count() * dim,
                got: values.len(),
            });
        }
        Ok(Self { grid, dim, values })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.node_count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn first(&self) -> &[f64] {
        self.node(0)
    }

    pub fn last(&self) -> &[f64] {
        self.node(self.grid.count)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn reshape(&mut self, grid: Grid, dim: usize) {
        self.grid = grid;
        self.dim = dim;
        self.values.resize(grid.node_count() * dim, 0.0);
    }

    pub(crate) fn copy_from(&mut self, other: &StateTrajectory) {
        self.grid = other.grid;
        self.dim = other.dim;
        self.values.clear();
        self.values.extend_from_slice(&other.values);
    }
}

/// Piecewise-constant control signal: one value per grid interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrajectory {
    grid: Grid,
    dim: usize,
    values: Vec<f64>,
}

impl ControlTrajectory {
    pub fn constant(grid: Grid, value: &[f64]) -> Self {
        let mut values = Vec::with_capacity(grid.count() * value.len());
        for _ in 0..grid.count() {
            values.extend_from_slice(value);
        }
        Self {
            grid,
            dim: value.len(),
            values,
        }
    }

    pub fn zeros(grid: Grid, dim: usize) -> Self {
        Self {
            grid,
            dim,
            values: vec![0.0; grid.count() * dim],
        }
    }

    pub fn from_values(grid: Grid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.count() * dim {
            return Err(Error::DimensionMismatch {
                what: "control trajectory values",
                expected: grid.count() * dim,
                got: values.len(),
            });
        }
        Ok(Self { grid, dim, values })
    }

    /// Samples `f(midpoint)` on every interval.
    pub fn from_fn(grid: Grid, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Self {
        let mut out = Self::zeros(grid, dim);
        for i in 0..grid.count() {
            let mid = grid.node(i) + 0.5 * grid.step();
            f(mid, out.interval_mut(i));
        }
        out
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn interval(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn interval_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Zero-order-hold lookup.
    pub fn at(&self, tau: f64) -> &[f64] {
        self.interval(self.grid.interval_of(tau))
    }

    pub fn intervals(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Exact integral of the pointwise inner product of two signals.
    pub fn inner_product(&self, other: &ControlTrajectory) -> f64 {
        self.grid.step() * dot(&self.values, &other.values)
    }

    /// L2 norm of the signal over the horizon.
    pub fn l2_norm(&self) -> f64 {
        self.inner_product(self).sqrt()
    }

    pub(crate) fn reshape(&mut self, grid: Grid, dim: usize) {
        self.grid = grid;
        self.dim = dim;
        self.values.resize(grid.count() * dim, 0.0);
    }

    pub(crate) fn copy_from(&mut self, other: &ControlTrajectory) {
        self.grid = other.grid;
        self.dim = other.dim;
        self.values.clear();
        self.values.extend_from_slice(&other.values);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scratch space for one RK4 step.
#[derive(Debug, Clone, Default)]
pub struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(dim: usize) -> Self {
        let mut ws = Self::default();
        ws.resize(dim);
        ws
    }

    fn resize(&mut self, dim: usize) {
        for v in [
            &mut self.k1,
            &mut self.k2,
            &mut self.k3,
            &mut self.k4,
            &mut self.stage,
        ] {
            v.resize(dim, 0.0);
        }
    }
}

/// One classical RK4 step of `f` from `x` with the control held at `u`.
pub fn rk4_step<F>(f: &F, tau: f64, h: f64, x: &[f64], u: &[f64], out: &mut [f64], ws: &mut Rk4Workspace)
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]) + ?Sized,
{
    let n = x.len();
    ws.resize(n);
    let Rk4Workspace {
        k1,
        k2,
        k3,
        k4,
        stage,
    } = ws;
    f(tau, x, u, k1);
    for i in 0..n {
        stage[i] = x[i] + 0.5 * h * k1[i];
    }
    f(tau + 0.5 * h, stage, u, k2);
    for i in 0..n {
        stage[i] = x[i] + 0.5 * h * k2[i];
    }
    f(tau + 0.5 * h, stage, u, k3);
    for i in 0..n {
        stage[i] = x[i] + h * k3[i];
    }
    f(tau + h, stage, u, k4);
    for i in 0..n {
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrates `dx/dtau = f(tau, x, u)` over the control's grid starting at `x0`.
pub fn integrate_forward<F>(f: F, x0: &[f64], u: &ControlTrajectory) -> Result<StateTrajectory>
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]),
{
    let mut traj = StateTrajectory::zeros(u.grid(), x0.len());
    let mut ws = Rk4Workspace::new(x0.len());
    integrate_forward_into(&f, x0, u, &mut traj, &mut ws)?;
    Ok(traj)
}

pub fn integrate_forward_into<F>(
    f: &F,
    x0: &[f64],
    u: &ControlTrajectory,
    traj: &mut StateTrajectory,
    ws: &mut Rk4Workspace,
) -> Result<()>
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]) + ?Sized,
{
    let grid = u.grid();
    let n = x0.len();
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { node: 0 });
    }
    traj.reshape(grid, n);
    traj.node_mut(0).copy_from_slice(x0);
    let h = grid.step();
    for i in 0..grid.count() {
        let (head, tail) = traj.values.split_at_mut((i + 1) * n);
        let x = &head[i * n..];
        let next = &mut tail[..n];
        rk4_step(f, grid.node(i), h, x, u.interval(i), next, ws);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { node: i + 1 });
        }
    }
    Ok(())
}

/// Costate and control gradient produced by a backward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSweep {
    /// `lambda` at every node; `lambda[i]` is the sensitivity of the remaining cost to `x[i]`.
    pub costate: StateTrajectory,
    /// Gradient density `dH/du` per interval; the derivative of the total cost
    /// with respect to the control value on interval `i` is `step * gradient[i]`.
    pub gradient: ControlTrajectory,
}

/// Scratch space for the forward-with-cost and backward sweeps of an [`OcpProblem`].
#[derive(Debug, Clone, Default)]
pub struct AdjointWorkspace {
    stages: [Vec<f64>; 4],
    k: [Vec<f64>; 3],
    kbar: Vec<f64>,
    xbar_stage: Vec<f64>,
    jac_x: Vec<f64>,
    jac_u: Vec<f64>,
    grad_x: Vec<f64>,
    grad_u: Vec<f64>,
    rk4: Rk4Workspace,
}

impl AdjointWorkspace {
    pub fn new(n: usize, m: usize) -> Self {
        let mut ws = Self::default();
        ws.resize(n, m);
        ws
    }

    fn resize(&mut self, n: usize, m: usize) {
        for s in self.stages.iter_mut().chain(self.k.iter_mut()) {
            s.resize(n, 0.0);
        }
        self.kbar.resize(n, 0.0);
        self.xbar_stage.resize(n, 0.0);
        self.jac_x.resize(n * n, 0.0);
        self.jac_u.resize(n * m, 0.0);
        self.grad_x.resize(n, 0.0);
        self.grad_u.resize(m, 0.0);
        self.rk4.resize(n);
    }
}

const RK4_WEIGHTS: [f64; 4] = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];
const RK4_NODES: [f64; 4] = [0.0, 0.5, 0.5, 1.0];

/// Recomputes the four RK4 stage states of interval `[tau, tau + h]` into `ws.stages`.
fn fill_stages<P: OcpProblem + ?Sized>(problem: &P, tau: f64, h: f64, x: &[f64], u: &[f64], ws: &mut AdjointWorkspace) {
    let n = x.len();
    let AdjointWorkspace { stages, k, .. } = ws;
    stages[0].copy_from_slice(x);
    for s in 0..3 {
        let (done, rest) = stages.split_at_mut(s + 1);
        problem.dynamics(tau + RK4_NODES[s] * h, &done[s], u, &mut k[s]);
        let c = if s == 2 { h } else { 0.5 * h };
        for i in 0..n {
            rest[0][i] = x[i] + c * k[s][i];
        }
    }
}

/// Forward RK4 integration that also returns the RK4 quadrature of the running cost.
pub fn integrate_with_cost_into<P: OcpProblem + ?Sized>(
    problem: &P,
    x0: &[f64],
    u: &ControlTrajectory,
    traj: &mut StateTrajectory,
    ws: &mut AdjointWorkspace,
) -> Result<f64> {
    let n = problem.state_dim();
    let m = problem.input_dim();
    ws.resize(n, m);
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: n,
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { node: 0 });
    }
    let grid = u.grid();
    let h = grid.step();
    traj.reshape(grid, n);
    traj.node_mut(0).copy_from_slice(x0);
    let mut cost = 0.0;
    let mut k4 = std::mem::take(&mut ws.kbar);
    for i in 0..grid.count() {
        let tau = grid.node(i);
        let ui = u.interval(i);
        fill_stages(problem, tau, h, traj.node(i), ui, ws);
        problem.dynamics(tau + h, &ws.stages[3], ui, &mut k4);
        for (s, w) in RK4_WEIGHTS.iter().enumerate() {
            cost += h * w * problem.stage_cost(tau + RK4_NODES[s] * h, &ws.stages[s], ui);
        }
        let (head, tail) = traj.values.split_at_mut((i + 1) * n);
        let x = &head[i * n..];
        let next = &mut tail[..n];
        for j in 0..n {
            next[j] = x[j] + h / 6.0 * (ws.k[0][j] + 2.0 * ws.k[1][j] + 2.0 * ws.k[2][j] + k4[j]);
        }
        if next.iter().any(|v| !v.is_finite()) {
            ws.kbar = k4;
            return Err(Error::NonFiniteState { node: i + 1 });
        }
    }
    ws.kbar = k4;
    Ok(cost)
}

/// Backward sweep of the costate from `lambda_terminal` at the final node.
///
/// Along the way the control gradient of the Hamiltonian is accumulated for
/// every interval.
pub fn integrate_backward<P: OcpProblem + ?Sized>(
    problem: &P,
    lambda_terminal: &[f64],
    x: &StateTrajectory,
    u: &ControlTrajectory,
) -> Result<AdjointSweep> {
    let mut costate = StateTrajectory::zeros(x.grid(), x.dim());
    let mut gradient = ControlTrajectory::zeros(u.grid(), u.dim());
    let mut ws = AdjointWorkspace::new(problem.state_dim(), problem.input_dim());
    integrate_backward_into(problem, lambda_terminal, x, u, &mut costate, &mut gradient, &mut ws)?;
    Ok(AdjointSweep { costate, gradient })
}

pub fn integrate_backward_into<P: OcpProblem + ?Sized>(
    problem: &P,
    lambda_terminal: &[f64],
    x: &StateTrajectory,
    u: &ControlTrajectory,
    costate: &mut StateTrajectory,
    gradient: &mut ControlTrajectory,
    ws: &mut AdjointWorkspace,
) -> Result<()> {
    let n = problem.state_dim();
    let m = problem.input_dim();
    for (what, expected, got) in [
        ("costate", n, lambda_terminal.len()),
        ("state trajectory", n, x.dim()),
        ("control trajectory", m, u.dim()),
        ("grid nodes", x.grid().count(), u.grid().count()),
    ] {
        if expected != got {
            return Err(Error::DimensionMismatch { what, expected, got });
        }
    }
    ws.resize(n, m);
    let grid = u.grid();
    let h = grid.step();
    costate.reshape(grid, n);
    gradient.reshape(grid, m);
    costate.node_mut(grid.count()).copy_from_slice(lambda_terminal);

    for i in (0..grid.count()).rev() {
        let tau = grid.node(i);
        let ui = u.interval(i);
        fill_stages(problem, tau, h, x.node(i), ui, ws);

        let (head, tail) = costate.values.split_at_mut((i + 1) * n);
        let lam_next = &tail[..n];
        let lam = &mut head[i * n..];
        let gi = gradient.interval_mut(i);
        lam.copy_from_slice(lam_next);
        gi.iter_mut().for_each(|g| *g = 0.0);

        // kbar holds the adjoint of the current stage slope
        for j in 0..n {
            ws.kbar[j] = RK4_WEIGHTS[3] * h * lam_next[j];
        }
        for s in (0..4).rev() {
            let ts = tau + RK4_NODES[s] * h;
            let w = RK4_WEIGHTS[s] * h;
            problem.dynamics_jacobians(ts, &ws.stages[s], ui, &mut ws.jac_x, &mut ws.jac_u);
            problem.stage_cost_gradients(ts, &ws.stages[s], ui, &mut ws.grad_x, &mut ws.grad_u);
            // xbar_stage = jac_x^T kbar + w * grad_x
            for c in 0..n {
                let mut acc = w * ws.grad_x[c];
                for r in 0..n {
                    acc += ws.jac_x[r * n + c] * ws.kbar[r];
                }
                ws.xbar_stage[c] = acc;
            }
            for c in 0..m {
                let mut acc = w * ws.grad_u[c];
                for r in 0..n {
                    acc += ws.jac_u[r * m + c] * ws.kbar[r];
                }
                gi[c] += acc;
            }
            for j in 0..n {
                lam[j] += ws.xbar_stage[j];
            }
            if s > 0 {
                let c = if s == 3 { h } else { 0.5 * h };
                for j in 0..n {
                    ws.kbar[j] = RK4_WEIGHTS[s - 1] * h * lam_next[j] + c * ws.xbar_stage[j];
                }
            }
        }
        if lam.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { node: i });
        }
        gi.iter_mut().for_each(|g| *g /= h);
    }
    Ok(())
}
