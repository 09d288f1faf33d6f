//! `plan`: closed-loop runs, curvature fitting, benchmarks and course generation.

// `!(a > b)` comparisons deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use trajplan_core::course::{fit_course, fit_errors, numeric_curvature, read_course_csv, write_course_csv, write_profile_csv, FitOptions};
use trajplan_core::Error;
use trajplan_sim::bench::{benchmark_step_latency, LatencyStats};
use trajplan_sim::config::{build_setup, parse_mode, ParamsFile, ScenarioFile};
use trajplan_sim::courses::{generate_circle, generate_lying_eight, generate_straight, generate_turn};
use trajplan_sim::log::{write_log_file, write_timings};
use trajplan_sim::metrics::evaluate;
use trajplan_sim::sim::{run_closed_loop, SimError, SimRun};
use trajplan_sim::plots;

const EXIT_DIVERGED: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_OTHER: u8 = 1;

#[derive(Parser)]
#[command(name = "plan", version, about = "Coupled course and vehicle MPC trajectory planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-loop simulation; writes log.csv, timing.csv, profile.csv and summary.toml.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// `sequential` or `parallel`; overrides the scenario.
        #[arg(long)]
        mode: Option<String>,
        /// Also write SVG plots into `<out>/plots`.
        #[arg(long)]
        plots: bool,
    },
    /// Fit a curvature profile to a point CSV with the course MPC alone.
    FitCourse {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Fitting window length, m.
        #[arg(long, default_value_t = 25.0)]
        window: f64,
        #[arg(long, default_value_t = 1)]
        passes: usize,
        /// Also write an overlay SVG of samples, raw and fitted curves.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Per-instance solve latency along a scenario.
    Bench {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 50)]
        warmup: usize,
        #[arg(long)]
        mode: Option<String>,
    },
    /// Write an analytic course as a point CSV.
    GenCourse(GenCourse),
}

#[derive(Clone, Copy, ValueEnum)]
enum CourseKind {
    LyingEight,
    Circle,
    Straight,
    Turn,
}

#[derive(Args)]
struct GenCourse {
    kind: CourseKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    spacing: f64,
    #[arg(long, default_value_t = 0.075)]
    kappa_peak: f64,
    #[arg(long, default_value_t = 2.0)]
    laps: f64,
    #[arg(long, default_value_t = 13.0)]
    radius: f64,
    #[arg(long, default_value_t = 500.0)]
    length: f64,
    #[arg(long, default_value_t = 0.0)]
    heading_deg: f64,
    /// Turn angle, positive left.
    #[arg(long, default_value_t = -90.0, allow_hyphen_values = true)]
    angle_deg: f64,
    #[arg(long, default_value_t = 50.0)]
    entry: f64,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Diverged(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_)
            | Error::InvalidGrid(_)
            | Error::DegenerateSpacing { .. }
            | Error::CourseTooShort { .. }
            | Error::UnderSteerViolation { .. } => Failure::Config(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

#[derive(Serialize)]
struct Summary {
    seed: u64,
    mode: String,
    duration_s: f64,
    records: usize,
    max_abs_d_perp_m: f64,
    max_abs_delta_deg: f64,
    worst_speed_margin_mps: f64,
    max_straight_speed_error_mps: f64,
    accel_hits_upper: bool,
    max_input_violation: f64,
    max_prediction_gap: f64,
    extrapolated_evaluations: u64,
    mean_cycle_us: f64,
    diverged: bool,
}

/// Unreadable or malformed configuration files are configuration errors.
fn config_err(e: Error) -> Failure {
    Failure::Config(e.to_string())
}

fn load_params(path: Option<&Path>) -> Result<ParamsFile, Failure> {
    Ok(match path {
        Some(p) => ParamsFile::load(p).map_err(config_err)?,
        None => ParamsFile::default(),
    })
}

fn mode_override(mode: Option<&str>) -> Result<Option<trajplan_core::ExecutionMode>, Failure> {
    Ok(mode.map(parse_mode).transpose()?)
}

fn write_outputs(out: &Path, run: &SimRun, setup: &trajplan_sim::config::Setup, diverged: bool, with_plots: bool) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(Error::from)?;
    write_log_file(out.join("log.csv"), &run.records)?;
    let timing = std::fs::File::create(out.join("timing.csv")).map_err(Error::from)?;
    write_timings(std::io::BufWriter::new(timing), &run.timings)?;
    write_profile_csv(out.join("profile.csv"), &run.final_profile)?;

    let m = evaluate(&run.records, &setup.sim.params);
    let cycles: Vec<f64> = run.timings.iter().map(|t| t.cycle_us).collect();
    let summary = Summary {
        seed: setup.scenario.seed,
        mode: format!("{:?}", setup.sim.coupling.mode).to_lowercase(),
        duration_s: setup.sim.duration,
        records: m.records,
        max_abs_d_perp_m: m.max_abs_d_perp,
        max_abs_delta_deg: m.max_abs_delta.to_degrees(),
        worst_speed_margin_mps: m.worst_speed_margin,
        max_straight_speed_error_mps: m.max_straight_speed_error,
        accel_hits_upper: m.accel_hits_upper,
        max_input_violation: m.max_input_violation,
        max_prediction_gap: run.max_prediction_gap,
        extrapolated_evaluations: run.extrapolated_evaluations,
        mean_cycle_us: LatencyStats::from_samples(&cycles).mean_us,
        diverged,
    };
    let text = toml::to_string(&summary).map_err(|e| Failure::Other(e.to_string()))?;
    std::fs::write(out.join("summary.toml"), &text).map_err(Error::from)?;
    print!("{text}");

    if with_plots && !run.records.is_empty() {
        let dir = out.join("plots");
        plots::emit_state_plots(&run.records, &dir)?;
        plots::emit_birdseye(&setup.sim.course, &run.records, &run.snapshots, &dir.join("birdseye.svg"))?;
        let fit = fit_course(Arc::clone(&setup.sim.course), setup.params.course_config(), FitOptions::default())?;
        plots::emit_fit_overlay(&setup.sim.course, &run.raw_profile, &fit.profile, &dir.join("course_fit.svg"))?;
    }
    Ok(())
}

fn cmd_run(scenario: &Path, params: Option<&Path>, out: &Path, mode: Option<&str>, with_plots: bool) -> Result<(), Failure> {
    let setup = build_setup(ScenarioFile::load(scenario).map_err(config_err)?, load_params(params)?, mode_override(mode)?)?;
    match run_closed_loop(&setup.sim) {
        Ok(run) => write_outputs(out, &run, &setup, false, with_plots),
        Err(SimError::Diverged { t, d_perp, partial }) => {
            write_outputs(out, &partial, &setup, true, with_plots)?;
            Err(Failure::Diverged(format!("lateral offset {d_perp:.3} m at t = {t:.2} s")))
        }
        Err(SimError::Core(e)) => Err(e.into()),
    }
}

fn cmd_fit(input: &Path, out: &Path, params: Option<&Path>, window: f64, passes: usize, plot: Option<&Path>) -> Result<(), Failure> {
    let params = load_params(params)?;
    let course = Arc::new(read_course_csv(input)?);
    let raw = numeric_curvature(&course)?;
    let fit = fit_course(Arc::clone(&course), params.course_config(), FitOptions { window, passes })?;
    write_profile_csv(out, &fit.profile)?;
    let raw_err = fit_errors(&course, &raw, 0.5)?;
    let fit_err = fit.pass_errors.last().copied().unwrap_or(raw_err);
    println!("raw_max_m = {:.6}\nraw_rms_m = {:.6}", raw_err.max, raw_err.rms);
    println!("fit_max_m = {:.6}\nfit_rms_m = {:.6}", fit_err.max, fit_err.rms);
    if let Some(p) = plot {
        plots::emit_fit_overlay(&course, &raw, &fit.profile, p)?;
    }
    Ok(())
}

fn print_stats(name: &str, s: &LatencyStats) {
    println!("{name}_mean_us = {:.2}\n{name}_p99_us = {:.2}\n{name}_max_us = {:.2}", s.mean_us, s.p99_us, s.max_us);
}

fn cmd_bench(scenario: &Path, params: Option<&Path>, samples: usize, warmup: usize, mode: Option<&str>) -> Result<(), Failure> {
    if samples == 0 {
        return Err(Failure::Config("samples must be positive".into()));
    }
    let setup = build_setup(ScenarioFile::load(scenario).map_err(config_err)?, load_params(params)?, mode_override(mode)?)?;
    let report = benchmark_step_latency(&setup.sim, warmup, samples)?;
    println!("samples = {}\nrestarts = {}", report.samples, report.restarts);
    print_stats("course", &report.course);
    print_stats("vehicle", &report.vehicle);
    print_stats("cycle", &report.cycle);
    println!("cycle_rate_hz = {:.1}", report.cycle_rate_hz);
    Ok(())
}

fn cmd_gen(g: &GenCourse) -> Result<(), Failure> {
    let course = match g.kind {
        CourseKind::LyingEight => generate_lying_eight(g.kappa_peak, g.spacing, g.laps)?,
        CourseKind::Circle => generate_circle(g.radius, g.spacing, g.laps)?,
        CourseKind::Straight => generate_straight(g.length, g.heading_deg.to_radians(), g.spacing)?,
        CourseKind::Turn => generate_turn(g.radius, g.angle_deg.to_radians(), g.entry, g.spacing)?,
    };
    if let Some(dir) = g.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
    }
    write_course_csv(&g.out, &course)?;
    println!("points = {}\nlength_m = {:.3}", course.len(), course.length());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run { scenario, params, out, mode, plots } => cmd_run(scenario, params.as_deref(), out, mode.as_deref(), *plots),
        Command::FitCourse { input, out, params, window, passes, plot } => {
            cmd_fit(input, out, params.as_deref(), *window, *passes, plot.as_deref())
        }
        Command::Bench { scenario, params, samples, warmup, mode } => {
            cmd_bench(scenario, params.as_deref(), *samples, *warmup, mode.as_deref())
        }
        Command::GenCourse(g) => cmd_gen(g),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Diverged(msg)) => {
            eprintln!("simulation diverged: {msg}");
            ExitCode::from(EXIT_DIVERGED)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_OTHER)
        }
    }
}
