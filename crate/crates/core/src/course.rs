//! Reference course representation and the curvature-fitting MPC.
//!
//! A course is given as ordered 2D samples tagged with cumulative chord
//! length. The fitting problem uses a unit-speed curve `(x, y, phi)` driven
//! by curvature over arc length and penalizes the squared distance to the
//! piecewise-linear interpolant of the samples.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::integrators::{rk4_step, ControlTrajectory, Grid, Rk4Workspace};
use crate::pgm::{MpcSolution, OcpProblem, PgmSolver, SolverConfig};

/// Ordered course samples with cumulative chord-length tags.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCourse {
    points: Vec<[f64; 2]>,
    s: Vec<f64>,
    headings: Vec<f64>,
}

impl SampledCourse {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidConfig(format!(
                "a course needs at least 3 points, got {}",
                points.len()
            )));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("course points must be finite".into()));
        }
        let mut s = Vec::with_capacity(points.len());
        s.push(0.0);
        for i in 1..points.len() {
            let d = chord(points[i - 1], points[i]);
            if !(d > 1e-12) {
                return Err(Error::DegenerateSpacing { index: i - 1 });
            }
            s.push(s[i - 1] + d);
        }
        let mut headings = Vec::with_capacity(points.len());
        for i in 0..points.len() {
            let idx = stencil(i, points.len());
            let (dx, _) = three_point(idx.map(|k| s[k]), idx.map(|k| points[k][0]), s[i]);
            let (dy, _) = three_point(idx.map(|k| s[k]), idx.map(|k| points[k][1]), s[i]);
            let mut h = dy.atan2(dx);
            if let Some(prev) = headings.last() {
                h = unwrap_near(h, *prev);
            }
            headings.push(h);
        }
        Ok(Self { points, s, headings })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Cumulative chord length at every sample.
    pub fn arc_lengths(&self) -> &[f64] {
        &self.s
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> f64 {
        *self.s.last().expect("course has points")
    }

    /// Piecewise-linear interpolant of the samples at arc length `s`, clamped to the course.
    pub fn interpolate(&self, s: f64) -> (f64, f64) {
        interpolate(self, s)
    }

    /// Tangent angle at `s`, from three-point derivatives at the samples,
    /// linearly interpolated and unwrapped along the course.
    pub fn tangent_angle(&self, s: f64) -> f64 {
        let (j, w) = self.segment(s);
        self.headings[j - 1] * (1.0 - w) + self.headings[j] * w
    }

    /// Pose of the interpolant at `s`.
    pub fn pose_at(&self, s: f64) -> CourseState {
        let (x, y) = self.interpolate(s);
        CourseState {
            x,
            y,
            phi: self.tangent_angle(s),
        }
    }

    /// Segment index `j` with `s[j-1] <= s <= s[j]` and the weight of `s[j]`.
    fn segment(&self, s: f64) -> (usize, f64) {
        let last = self.s.len() - 1;
        let s = s.clamp(0.0, self.s[last]);
        let j = self.s.partition_point(|&v| v < s).clamp(1, last);
        let w = (s - self.s[j - 1]) / (self.s[j] - self.s[j - 1]);
        (j, w)
    }

    /// Reversed traversal of the same samples.
    pub fn reversed(&self) -> Result<Self> {
        let mut pts = self.points.clone();
        pts.reverse();
        Self::new(pts)
    }
}

fn chord(a: [f64; 2], b: [f64; 2]) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

fn unwrap_near(angle: f64, reference: f64) -> f64 {
    use std::f64::consts::TAU;
    angle - TAU * ((angle - reference) / TAU).round()
}

fn stencil(i: usize, n: usize) -> [usize; 3] {
    if i == 0 {
        [0, 1, 2]
    } else if i == n - 1 {
        [n - 3, n - 2, n - 1]
    } else {
        [i - 1, i, i + 1]
    }
}

/// First and second derivative at `at` of the quadratic through three nodes.
fn three_point(t: [f64; 3], f: [f64; 3], at: f64) -> (f64, f64) {
    let f01 = (f[1] - f[0]) / (t[1] - t[0]);
    let f12 = (f[2] - f[1]) / (t[2] - t[1]);
    let f012 = (f12 - f01) / (t[2] - t[0]);
    (f01 + f012 * (2.0 * at - t[0] - t[1]), 2.0 * f012)
}

/// Pose of the curvature-driven unit-speed curve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CourseState {
    pub x: f64,
    pub y: f64,
    /// Tangent angle, rad.
    pub phi: f64,
}

impl CourseState {
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.phi]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            x: v[0],
            y: v[1],
            phi: v[2],
        }
    }
}

/// Curvature over arc length, piecewise linear between knots and constant
/// beyond the end knots.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureProfile {
    s: Vec<f64>,
    kappa: Vec<f64>,
}

impl CurvatureProfile {
    pub fn new(s: Vec<f64>, kappa: Vec<f64>) -> Result<Self> {
        if s.is_empty() || s.len() != kappa.len() {
            return Err(Error::DimensionMismatch {
                what: "curvature knots",
                expected: s.len().max(1),
                got: kappa.len(),
            });
        }
        if s.iter().chain(&kappa).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("curvature profile must be finite".into()));
        }
        if let Some(i) = s.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::DegenerateSpacing { index: i });
        }
        Ok(Self { s, kappa })
    }

    pub fn constant(kappa: f64) -> Self {
        Self {
            s: vec![0.0],
            kappa: vec![kappa],
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.s
    }

    pub fn values(&self) -> &[f64] {
        &self.kappa
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.s[0], self.s[self.s.len() - 1])
    }

    pub fn contains(&self, s: f64) -> bool {
        let (a, b) = self.domain();
        s >= a && s <= b
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.eval_with_slope(s).0
    }

    /// Value and slope at `s`. At a knot the slope of the segment to the
    /// right is used; outside the knots the slope is zero.
    pub fn eval_with_slope(&self, s: f64) -> (f64, f64) {
        let idx = self.s.partition_point(|&k| k <= s);
        if idx == 0 {
            return (self.kappa[0], 0.0);
        }
        if idx == self.s.len() {
            return (self.kappa[idx - 1], 0.0);
        }
        let j = idx - 1;
        let slope = (self.kappa[idx] - self.kappa[j]) / (self.s[idx] - self.s[j]);
        (self.kappa[j] + slope * (s - self.s[j]), slope)
    }

    pub fn max_abs(&self) -> f64 {
        self.kappa.iter().fold(0.0, |m, k| m.max(k.abs()))
    }

    /// Same knots with every value clamped to `[-cap, cap]`.
    pub fn clamped(mut self, cap: f64) -> Self {
        for k in &mut self.kappa {
            *k = k.clamp(-cap, cap);
        }
        self
    }
}

/// Curvature estimate at every sample from three-point finite differences
/// of `x(s)` and `y(s)` (one-sided at the ends).
pub fn numeric_curvature(course: &SampledCourse) -> Result<CurvatureProfile> {
    let n = course.len();
    let s = course.arc_lengths();
    let pts = course.points();
    let mut kappa = Vec::with_capacity(n);
    for i in 0..n {
        let idx = stencil(i, n);
        let t = idx.map(|k| s[k]);
        let (dx, ddx) = three_point(t, idx.map(|k| pts[k][0]), s[i]);
        let (dy, ddy) = three_point(t, idx.map(|k| pts[k][1]), s[i]);
        let speed2 = dx * dx + dy * dy;
        if !(speed2 > 0.0) {
            return Err(Error::DegenerateSpacing { index: i });
        }
        kappa.push((dx * ddy - ddx * dy) / (speed2 * speed2.sqrt()));
    }
    CurvatureProfile::new(s.to_vec(), kappa)
}

/// Linear interpolation of the samples at arc length `s` (clamped to the course).
pub fn interpolate(course: &SampledCourse, s: f64) -> (f64, f64) {
    let (j, _) = course.segment(s);
    let s = s.clamp(0.0, course.length());
    let (s0, s1) = (course.s[j - 1], course.s[j]);
    let (p0, p1) = (course.points[j - 1], course.points[j]);
    let w0 = (s1 - s) / (s1 - s0);
    let w1 = (s - s0) / (s1 - s0);
    (p0[0] * w0 + p1[0] * w1, p0[1] * w0 + p1[1] * w1)
}

/// Derivative of the course state over arc length.
pub fn course_dynamics(state: &CourseState, kappa: f64) -> [f64; 3] {
    [state.phi.cos(), state.phi.sin(), kappa]
}

/// Diagonal weights of the fitting cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CourseWeights {
    pub q: [f64; 2],
    pub r: f64,
}

impl Default for CourseWeights {
    fn default() -> Self {
        Self { q: [1.0, 1.0], r: 0.01 }
    }
}

pub fn course_stage_cost(state: &CourseState, kappa: f64, course: &SampledCourse, s: f64, weights: &CourseWeights) -> f64 {
    let (xh, yh) = course.interpolate(s);
    let ex = state.x - xh;
    let ey = state.y - yh;
    weights.q[0] * ex * ex + weights.q[1] * ey * ey + weights.r * kappa * kappa
}

/// Curvature-fitting problem over an arc-length window. The grid coordinate
/// is the absolute arc length on the course.
#[derive(Debug, Clone)]
pub struct CourseProblem {
    course: Arc<SampledCourse>,
    grid: Grid,
    weights: CourseWeights,
    lower: [f64; 1],
    upper: [f64; 1],
}

impl CourseProblem {
    pub fn course(&self) -> &SampledCourse {
        &self.course
    }

    pub fn weights(&self) -> &CourseWeights {
        &self.weights
    }
}

/// Builds the fitting problem on `[s_start, s_end]`, clamped to the course extent.
pub fn build_course_problem(
    course: Arc<SampledCourse>,
    s_start: f64,
    s_end: f64,
    weights: CourseWeights,
    ds: f64,
    kappa_cap: f64,
) -> Result<CourseProblem> {
    if !(kappa_cap > 0.0) {
        return Err(Error::InvalidConfig("curvature cap must be positive".into()));
    }
    let total = course.length();
    let start = s_start.clamp(0.0, total);
    let end = s_end.clamp(start, total);
    let grid = Grid::covering(start, end - start, ds)?;
    Ok(CourseProblem {
        course,
        grid,
        weights,
        lower: [-kappa_cap],
        upper: [kappa_cap],
    })
}

impl OcpProblem for CourseProblem {
    fn state_dim(&self) -> usize {
        3
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn grid(&self) -> Grid {
        self.grid
    }

    fn dynamics(&self, _s: f64, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = x[2].cos();
        dx[1] = x[2].sin();
        dx[2] = u[0];
    }

    fn dynamics_jacobians(&self, _s: f64, x: &[f64], _u: &[f64], jac_x: &mut [f64], jac_u: &mut [f64]) {
        jac_x.iter_mut().for_each(|v| *v = 0.0);
        jac_x[2] = -x[2].sin();
        jac_x[5] = x[2].cos();
        jac_u[0] = 0.0;
        jac_u[1] = 0.0;
        jac_u[2] = 1.0;
    }

    fn stage_cost(&self, s: f64, x: &[f64], u: &[f64]) -> f64 {
        course_stage_cost(&CourseState::from_slice(x), u[0], &self.course, s, &self.weights)
    }

    fn stage_cost_gradients(&self, s: f64, x: &[f64], u: &[f64], grad_x: &mut [f64], grad_u: &mut [f64]) {
        let (xh, yh) = self.course.interpolate(s);
        grad_x[0] = 2.0 * self.weights.q[0] * (x[0] - xh);
        grad_x[1] = 2.0 * self.weights.q[1] * (x[1] - yh);
        grad_x[2] = 0.0;
        grad_u[0] = 2.0 * self.weights.r * u[0];
    }

    fn input_lower(&self) -> &[f64] {
        &self.lower
    }

    fn input_upper(&self) -> &[f64] {
        &self.upper
    }
}

/// Integrates the curvature-driven curve from `x0` (located at `s_values[0]`)
/// and reports the pose at every requested arc length. Steps never exceed `max_step`.
pub fn integrate_course_at(x0: CourseState, profile: &CurvatureProfile, s_values: &[f64], max_step: f64) -> Result<Vec<CourseState>> {
    if !(max_step > 0.0) {
        return Err(Error::InvalidGrid("integration step must be positive".into()));
    }
    let f = |s: f64, x: &[f64], _u: &[f64], dx: &mut [f64]| {
        dx[0] = x[2].cos();
        dx[1] = x[2].sin();
        dx[2] = profile.eval(s);
    };
    let mut ws = Rk4Workspace::new(3);
    let mut out = Vec::with_capacity(s_values.len());
    let mut x = x0.to_array();
    let mut next = [0.0; 3];
    out.push(x0);
    for w in s_values.windows(2) {
        let span = w[1] - w[0];
        if !(span >= 0.0) {
            return Err(Error::InvalidGrid("arc lengths must be non-decreasing".into()));
        }
        let sub = (span / max_step).ceil().max(1.0) as usize;
        let h = span / sub as f64;
        for k in 0..sub {
            rk4_step(&f, w[0] + k as f64 * h, h, &x, &[], &mut next, &mut ws);
            x = next;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { node: out.len() });
        }
        out.push(CourseState::from_slice(&x));
    }
    Ok(out)
}

/// Forward integration of the course model over `[s_start, s_start + length]`
/// on a uniform grid of step `ds`.
pub fn integrate_course(x0: CourseState, profile: &CurvatureProfile, s_start: f64, length: f64, ds: f64) -> Result<Vec<CourseState>> {
    if !(length > 0.0) {
        return Err(Error::InvalidGrid("integration length must be positive".into()));
    }
    let grid = Grid::covering(s_start, length, ds)?;
    let nodes: Vec<f64> = (0..grid.node_count()).map(|i| grid.node(i).min(s_start + length)).collect();
    integrate_course_at(x0, profile, &nodes, ds)
}

/// Distance statistics between a curve integrated from a curvature profile
/// and the course samples, compared at equal arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitErrors {
    pub max: f64,
    pub rms: f64,
}

/// Integrates `profile` from the course's start pose and measures the
/// distance to every sample.
pub fn fit_errors(course: &SampledCourse, profile: &CurvatureProfile, max_step: f64) -> Result<FitErrors> {
    let states = integrate_course_at(course.pose_at(0.0), profile, course.arc_lengths(), max_step)?;
    let mut max = 0.0_f64;
    let mut sum = 0.0;
    for (st, p) in states.iter().zip(course.points()) {
        let d = (st.x - p[0]).hypot(st.y - p[1]);
        max = max.max(d);
        sum += d * d;
    }
    Ok(FitErrors {
        max,
        rms: (sum / states.len() as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CourseMpcConfig {
    pub weights: CourseWeights,
    /// Arc-length step of the fitting grid, m.
    pub ds: f64,
    pub kappa_cap: f64,
    pub solver: SolverConfig,
}

impl Default for CourseMpcConfig {
    fn default() -> Self {
        Self {
            weights: CourseWeights::default(),
            ds: 0.5,
            kappa_cap: 1.0,
            solver: SolverConfig::default(),
        }
    }
}

/// Result of one fitting window.
#[derive(Debug, Clone)]
pub struct WindowSolution {
    /// Fitted curvature with knots at the window start, interval midpoints and window end.
    pub profile: CurvatureProfile,
    pub solution: MpcSolution,
}

/// Receding-horizon curvature fitter. Keeps its own warm-start data: the
/// latest window solution, backed by the finite-difference estimate elsewhere.
#[derive(Debug, Clone)]
pub struct CourseMpc {
    course: Arc<SampledCourse>,
    config: CourseMpcConfig,
    raw: Arc<CurvatureProfile>,
    warm: Option<Arc<CurvatureProfile>>,
    solver: PgmSolver,
}

impl CourseMpc {
    pub fn new(course: Arc<SampledCourse>, config: CourseMpcConfig) -> Result<Self> {
        config.solver.validate()?;
        if !(config.ds > 0.0) {
            return Err(Error::InvalidConfig("fitting step must be positive".into()));
        }
        let raw = Arc::new(numeric_curvature(&course)?.clamped(config.kappa_cap));
        Ok(Self {
            course,
            config,
            raw,
            warm: None,
            solver: PgmSolver::new(),
        })
    }

    pub fn course(&self) -> &Arc<SampledCourse> {
        &self.course
    }

    pub fn config(&self) -> &CourseMpcConfig {
        &self.config
    }

    /// Finite-difference curvature of the samples.
    pub fn raw_profile(&self) -> Arc<CurvatureProfile> {
        Arc::clone(&self.raw)
    }

    /// Replaces the warm-start data.
    pub fn seed(&mut self, profile: Arc<CurvatureProfile>) {
        self.warm = Some(profile);
    }

    fn warm_value(&self, s: f64) -> f64 {
        match &self.warm {
            Some(w) if w.contains(s) => w.eval(s),
            _ => self.raw.eval(s),
        }
    }

    pub fn build_problem(&self, s_start: f64, s_end: f64) -> Result<CourseProblem> {
        build_course_problem(
            Arc::clone(&self.course),
            s_start,
            s_end,
            self.config.weights,
            self.config.ds,
            self.config.kappa_cap,
        )
    }

    /// Fits the window starting from the course pose at its start.
    pub fn solve_window(&mut self, s_start: f64, s_end: f64) -> Result<WindowSolution> {
        let start = s_start.clamp(0.0, self.course.length());
        let x0 = self.course.pose_at(start);
        self.solve_window_from(x0, s_start, s_end)
    }

    /// Fits the window starting from an arbitrary pose at its start.
    pub fn solve_window_from(&mut self, x0: CourseState, s_start: f64, s_end: f64) -> Result<WindowSolution> {
        let problem = self.build_problem(s_start, s_end)?;
        let grid = problem.grid();
        let u_init = ControlTrajectory::from_fn(grid, 1, |mid, out| out[0] = self.warm_value(mid));
        let x0 = x0.to_array();
        let solution = self.solver.solve_step(&problem, &x0, &u_init, &self.config.solver)?;
        let profile = profile_from_controls(&solution.u_star)?;
        self.warm = Some(Arc::new(profile.clone()));
        Ok(WindowSolution { profile, solution })
    }
}

/// Curvature profile of a piecewise-constant curvature signal: knots at the
/// grid start, every interval midpoint and the grid end.
pub fn profile_from_controls(u: &ControlTrajectory) -> Result<CurvatureProfile> {
    let grid = u.grid();
    let n = grid.count();
    let mut s = Vec::with_capacity(n + 2);
    let mut k = Vec::with_capacity(n + 2);
    s.push(grid.start());
    k.push(u.interval(0)[0]);
    for i in 0..n {
        s.push(grid.node(i) + 0.5 * grid.step());
        k.push(u.interval(i)[0]);
    }
    s.push(grid.end());
    k.push(u.interval(n - 1)[0]);
    CurvatureProfile::new(s, k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Window length, m.
    pub window: f64,
    /// Number of sweeps over the full course.
    pub passes: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { window: 25.0, passes: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct CourseFit {
    pub profile: CurvatureProfile,
    /// Fit errors after every pass.
    pub pass_errors: Vec<FitErrors>,
}

/// Sweeps the fitting window over the whole course one grid interval at a
/// time and keeps the first interval of every window. The last window keeps
/// all of its intervals. Each window starts from the pose reached by
/// integrating the curvature committed so far, so drift is fed back into the
/// fit. Later passes warm-start from the previous pass.
pub fn fit_course(course: Arc<SampledCourse>, config: CourseMpcConfig, options: FitOptions) -> Result<CourseFit> {
    if options.passes == 0 || !(options.window > 0.0) {
        return Err(Error::InvalidConfig("fit needs at least one pass and a positive window".into()));
    }
    let total = course.length();
    let global = Grid::covering(0.0, total, config.ds)?;
    let mut mpc = CourseMpc::new(Arc::clone(&course), config)?;
    let mut committed = vec![0.0; global.count()];
    let mut pass_errors = Vec::with_capacity(options.passes);
    let mut profile = (*mpc.raw_profile()).clone();
    for _ in 0..options.passes {
        if !pass_errors.is_empty() {
            mpc.seed(Arc::new(profile.clone()));
        }
        let mut k = 0;
        let mut pose = course.pose_at(0.0);
        while k < global.count() {
            let s_start = global.node(k);
            let s_end = (s_start + options.window).min(total);
            let window = mpc.solve_window_from(pose, s_start, s_end)?;
            let u = &window.solution.u_star;
            if s_end >= total || k + u.len() >= global.count() {
                for (i, v) in u.values().iter().enumerate() {
                    if k + i < committed.len() {
                        committed[k + i] = *v;
                    }
                }
                break;
            }
            committed[k] = u.values()[0];
            pose = CourseState::from_slice(window.solution.x_star.node(1));
            k += 1;
        }
        let u = ControlTrajectory::from_values(global, 1, committed.clone())?;
        profile = profile_from_controls(&u)?;
        pass_errors.push(fit_errors(&course, &profile, config.ds)?);
    }
    Ok(CourseFit { profile, pass_errors })
}

pub fn read_course_csv(path: impl AsRef<Path>) -> Result<SampledCourse> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["x_m", "y_m"] {
        return Err(Error::Io(format!("expected header x_m,y_m, got {:?}", headers)));
    }
    let mut points = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Io(format!("bad number in row {}", line + 2)))
        };
        points.push([parse(0)?, parse(1)?]);
    }
    SampledCourse::new(points)
}

pub fn write_course_csv(path: impl AsRef<Path>, course: &SampledCourse) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x_m", "y_m"])?;
    for p in course.points() {
        w.write_record([p[0].to_string(), p[1].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_profile_csv(path: impl AsRef<Path>, profile: &CurvatureProfile) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["s_m", "kappa_1pm"])?;
    for (s, k) in profile.knots().iter().zip(profile.values()) {
        w.write_record([s.to_string(), k.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_profile_csv(path: impl AsRef<Path>) -> Result<CurvatureProfile> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["s_m", "kappa_1pm"] {
        return Err(Error::Io(format!("expected header s_m,kappa_1pm, got {:?}", headers)));
    }
    let mut s = Vec::new();
    let mut k = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let v: Vec<f64> = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Io(e.to_string())))
            .collect::<Result<_>>()?;
        if v.len() != 2 {
            return Err(Error::Io("expected two columns".into()));
        }
        s.push(v[0]);
        k.push(v[1]);
    }
    CurvatureProfile::new(s, k)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{PI, TAU};

    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    fn circle(radius: f64, spacing: f64, laps: f64) -> SampledCourse {
        let dtheta = spacing / radius;
        let n = (laps * TAU / dtheta).round() as usize;
        let pts = (0..=n)
            .map(|i| {
                let th = i as f64 * dtheta;
                [radius * th.sin(), radius * (1.0 - th.cos())]
            })
            .collect();
        SampledCourse::new(pts).unwrap()
    }

    fn straight(length: f64, spacing: f64) -> SampledCourse {
        let n = (length / spacing).round() as usize;
        SampledCourse::new((0..=n).map(|i| [i as f64 * spacing, 0.0]).collect()).unwrap()
    }

    fn temp_path(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("trajplan-course-{}-{name}", std::process::id()))
    }

    #[test]
    fn collinear_samples_have_zero_curvature() {
        let c = SampledCourse::new(vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.5, 3.5]]).unwrap();
        let k = numeric_curvature(&c).unwrap();
        assert!(k.max_abs() < 1e-12);
        assert_relative_eq!(c.tangent_angle(1.0), PI / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn circle_curvature_interior_within_two_percent() {
        let c = circle(13.0, 0.5, 1.0);
        let k = numeric_curvature(&c).unwrap();
        let v = k.values();
        for &ki in &v[1..v.len() - 1] {
            assert!((ki - 1.0 / 13.0).abs() < 0.02 / 13.0, "{ki}");
        }
    }

    #[test]
    fn reversal_and_mirroring_flip_curvature_sign() {
        let c = circle(13.0, 0.5, 0.25);
        let k = numeric_curvature(&c).unwrap();
        let rev = numeric_curvature(&c.reversed().unwrap()).unwrap();
        let mirror = SampledCourse::new(c.points().iter().map(|p| [p[0], -p[1]]).collect()).unwrap();
        let km = numeric_curvature(&mirror).unwrap();
        let n = k.values().len();
        for i in 0..n {
            assert_relative_eq!(rev.values()[n - 1 - i], -k.values()[i], epsilon = 1e-9);
            assert_relative_eq!(km.values()[i], -k.values()[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn repeated_point_is_degenerate() {
        let err = SampledCourse::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpacing { index: 1 }));
        assert!(SampledCourse::new(vec![[0.0, 0.0], [1.0, 0.0]]).is_err());
        assert!(matches!(
            CurvatureProfile::new(vec![0.0, 1.0, 1.0], vec![0.0; 3]),
            Err(Error::DegenerateSpacing { index: 1 })
        ));
    }

    #[test]
    fn interpolation_hits_knots_and_midpoints() {
        let c = SampledCourse::new(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 3.0]]).unwrap();
        let s = c.arc_lengths().to_vec();
        for (si, p) in s.iter().zip(c.points()) {
            let (x, y) = c.interpolate(*si);
            assert_relative_eq!(x, p[0], epsilon = 1e-12);
            assert_relative_eq!(y, p[1], epsilon = 1e-12);
        }
        let (x, y) = interpolate(&c, 0.5 * s[1]);
        assert_relative_eq!(x, 0.5, epsilon = 1e-12);
        assert_relative_eq!(y, 0.5, epsilon = 1e-12);
        // clamped outside the course
        assert_eq!(c.interpolate(-3.0), (0.0, 0.0));
        assert_eq!(c.interpolate(100.0), (1.0, 3.0));
    }

    proptest! {
        #[test]
        fn interpolation_is_affine_within_a_segment(w in 0.0..1.0f64, seg in 0usize..3) {
            let c = SampledCourse::new(vec![[0.0, 0.0], [2.0, 1.0], [3.0, -1.0], [5.0, 0.0]]).unwrap();
            let s = c.arc_lengths();
            let (a, b) = (c.points()[seg], c.points()[seg + 1]);
            let (x, y) = c.interpolate(s[seg] + w * (s[seg + 1] - s[seg]));
            prop_assert!((x - (a[0] + w * (b[0] - a[0]))).abs() < 1e-12);
            prop_assert!((y - (a[1] + w * (b[1] - a[1]))).abs() < 1e-12);
        }

        #[test]
        fn curve_moves_at_unit_speed(phi in -10.0..10.0f64, kappa in -1.0..1.0f64) {
            let d = course_dynamics(&CourseState { x: 0.0, y: 0.0, phi }, kappa);
            prop_assert!((d[0].hypot(d[1]) - 1.0).abs() < 1e-12);
            prop_assert_eq!(d[2], kappa);
        }

        #[test]
        fn course_cost_is_nonnegative(x in -5.0..5.0f64, y in -5.0..5.0f64, k in -1.0..1.0f64, s in 0.0..10.0f64) {
            let c = straight(10.0, 0.5);
            let cost = course_stage_cost(&CourseState { x, y, phi: 0.0 }, k, &c, s, &CourseWeights::default());
            prop_assert!(cost >= 0.0);
        }
    }

    #[test]
    fn dynamics_examples() {
        assert_eq!(course_dynamics(&CourseState::default(), 0.2), [1.0, 0.0, 0.2]);
    }

    #[test]
    fn constant_curvature_closes_a_circle() {
        let k = 0.1;
        let length = TAU / k;
        let states = integrate_course(CourseState::default(), &CurvatureProfile::constant(k), 0.0, length, 0.05).unwrap();
        let end = states.last().unwrap();
        assert!(end.x.hypot(end.y) < 1e-3);
        assert_relative_eq!(end.phi, TAU, epsilon = 1e-9);
    }

    #[test]
    fn zero_curvature_is_a_straight_chord() {
        let s_len = 37.3;
        let states = integrate_course(CourseState::default(), &CurvatureProfile::constant(0.0), 0.0, s_len, 0.5).unwrap();
        let end = states.last().unwrap();
        assert_relative_eq!(end.x, s_len, epsilon = 1e-6 * s_len);
        assert!(end.y.abs() < 1e-12);
    }

    #[test]
    fn stage_cost_examples() {
        let c = straight(10.0, 0.5);
        let w = CourseWeights::default();
        let on = CourseState { x: 3.0, y: 0.0, phi: 0.0 };
        assert_eq!(course_stage_cost(&on, 0.0, &c, 3.0, &w), 0.0);
        let off = CourseState { x: 3.0, y: 0.1, phi: 0.0 };
        assert_relative_eq!(course_stage_cost(&off, 0.0, &c, 3.0, &w), 0.01, epsilon = 1e-15);
        let r_only = CourseWeights { q: [0.0, 0.0], r: 0.5 };
        assert_relative_eq!(course_stage_cost(&off, 0.3, &c, 3.0, &r_only), 0.5 * 0.09, epsilon = 1e-15);
    }

    #[test]
    fn short_window_has_one_interval() {
        let c = Arc::new(straight(20.0, 0.5));
        let p = build_course_problem(c, 3.0, 3.2, CourseWeights::default(), 0.5, 1.0).unwrap();
        assert_eq!(p.grid().count(), 1);
        assert_eq!(p.input_lower(), &[-1.0]);
    }

    #[test]
    fn problem_jacobians_match_finite_differences() {
        let c = Arc::new(circle(13.0, 0.5, 0.5));
        let p = build_course_problem(c, 2.0, 12.0, CourseWeights { q: [1.0, 2.0], r: 0.3 }, 0.5, 1.0).unwrap();
        let x = [10.3, 1.2, 0.7];
        let u = [0.05];
        let s = 7.3;
        let (mut jx, mut ju) = ([0.0; 9], [0.0; 3]);
        p.dynamics_jacobians(s, &x, &u, &mut jx, &mut ju);
        let (mut gx, mut gu) = ([0.0; 3], [0.0; 1]);
        p.stage_cost_gradients(s, &x, &u, &mut gx, &mut gu);
        let eps = 1e-6;
        let f = |x: &[f64], u: &[f64]| {
            let mut d = [0.0; 3];
            p.dynamics(s, x, u, &mut d);
            d
        };
        for j in 0..3 {
            let (mut xp, mut xm) = (x, x);
            xp[j] += eps;
            xm[j] -= eps;
            let (fp, fm) = (f(&xp, &u), f(&xm, &u));
            for i in 0..3 {
                assert_relative_eq!(jx[i * 3 + j], (fp[i] - fm[i]) / (2.0 * eps), epsilon = 1e-8);
            }
            let lfd = (p.stage_cost(s, &xp, &u) - p.stage_cost(s, &xm, &u)) / (2.0 * eps);
            assert_relative_eq!(gx[j], lfd, epsilon = 1e-7);
        }
        let (fp, fm) = (f(&x, &[u[0] + eps]), f(&x, &[u[0] - eps]));
        for i in 0..3 {
            assert_relative_eq!(ju[i], (fp[i] - fm[i]) / (2.0 * eps), epsilon = 1e-8);
        }
        let lfd = (p.stage_cost(s, &x, &[u[0] + eps]) - p.stage_cost(s, &x, &[u[0] - eps])) / (2.0 * eps);
        assert_relative_eq!(gu[0], lfd, epsilon = 1e-8);
    }

    #[test]
    fn straight_course_fits_zero_curvature() {
        let mut mpc = CourseMpc::new(Arc::new(straight(60.0, 0.5)), CourseMpcConfig::default()).unwrap();
        let w = mpc.solve_window(5.0, 30.0).unwrap();
        assert!(w.profile.max_abs() < 1e-3, "{}", w.profile.max_abs());
    }

    #[test]
    fn circle_fit_recovers_radius() {
        let config = CourseMpcConfig {
            solver: SolverConfig { max_iterations: 30, ..SolverConfig::default() },
            ..CourseMpcConfig::default()
        };
        let mut mpc = CourseMpc::new(Arc::new(circle(13.0, 0.5, 1.0)), config).unwrap();
        let w = mpc.solve_window(10.0, 35.0).unwrap();
        let v = w.solution.u_star.values();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean * 13.0 - 1.0).abs() < 0.03, "mean curvature {mean}");
    }

    #[test]
    fn profile_knots_sit_at_midpoints() {
        let grid = Grid::new(4.0, 0.5, 3).unwrap();
        let u = ControlTrajectory::from_values(grid, 1, vec![0.1, 0.2, 0.3]).unwrap();
        let p = profile_from_controls(&u).unwrap();
        assert_eq!(p.knots(), &[4.0, 4.25, 4.75, 5.25, 5.5]);
        assert_eq!(p.values(), &[0.1, 0.1, 0.2, 0.3, 0.3]);
        assert_relative_eq!(p.eval(4.5), 0.15, epsilon = 1e-12);
        assert_eq!(p.eval_with_slope(10.0), (0.3, 0.0));
        assert_relative_eq!(p.eval_with_slope(4.5).1, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn fit_improves_on_raw_curvature() {
        let course = Arc::new(circle(13.0, 0.5, 0.6));
        let raw = fit_errors(&course, &numeric_curvature(&course).unwrap(), 0.5).unwrap();
        let fit = fit_course(Arc::clone(&course), CourseMpcConfig::default(), FitOptions { window: 10.0, passes: 2 }).unwrap();
        assert_eq!(fit.pass_errors.len(), 2);
        assert!(fit.pass_errors[0].rms < raw.rms, "{raw:?} vs {:?}", fit.pass_errors);
        assert!(fit.pass_errors[0].max < raw.max);
        assert!(fit_course(course, CourseMpcConfig::default(), FitOptions { window: 10.0, passes: 0 }).is_err());
    }

    #[test]
    fn course_and_profile_csv_round_trip() {
        let c = circle(13.0, 0.7, 0.2);
        let path = temp_path("course.csv");
        write_course_csv(&path, &c).unwrap();
        let back = read_course_csv(&path).unwrap();
        assert_eq!(back.points(), c.points());

        let p = CurvatureProfile::new(vec![0.0, 0.5, 1.25], vec![0.1, -1.0 / 3.0, 0.0]).unwrap();
        write_profile_csv(&path, &p).unwrap();
        assert_eq!(read_profile_csv(&path).unwrap(), p);
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(read_course_csv(&path).is_err());
        std::fs::remove_file(&path).unwrap();
    }
}
