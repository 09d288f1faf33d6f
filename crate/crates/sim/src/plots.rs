//! Static SVG plots of a closed-loop run and of a curvature fit.

use std::path::{Path, PathBuf};

use plotters::prelude::*;
use trajplan_core::course::{integrate_course_at, CurvatureProfile, SampledCourse};
use trajplan_core::vehicle::{DELTA, D_PERP, PSI, PSI_R, V, X, Y};
use trajplan_core::{Error, Result};

use crate::log::SimLogRecord;
use crate::sim::Snapshot;

const SIZE: (u32, u32) = (900, 540);
const PALETTE: [RGBColor; 5] = [
    RGBColor(31, 119, 180),
    RGBColor(140, 140, 140),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
];

fn draw_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Io(format!("plot: {e}"))
}

struct Series<'a> {
    label: &'a str,
    points: Vec<(f64, f64)>,
    dashed: bool,
}

fn bounds(series: &[Series], equal_aspect: bool) -> ((f64, f64), (f64, f64)) {
    let mut xr = (f64::INFINITY, f64::NEG_INFINITY);
    let mut yr = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            xr = (xr.0.min(x), xr.1.max(x));
            yr = (yr.0.min(y), yr.1.max(y));
        }
    }
    let pad = |r: (f64, f64)| {
        if !r.0.is_finite() {
            return (0.0, 1.0);
        }
        let span = (r.1 - r.0).max(1e-9);
        (r.0 - 0.05 * span, r.1 + 0.05 * span)
    };
    let (mut xr, mut yr) = (pad(xr), pad(yr));
    if equal_aspect {
        // match metres per pixel on both axes
        let ratio = f64::from(SIZE.0) / f64::from(SIZE.1);
        let (w, h) = (xr.1 - xr.0, yr.1 - yr.0);
        if w / h < ratio {
            let extra = (h * ratio - w) / 2.0;
            xr = (xr.0 - extra, xr.1 + extra);
        } else {
            let extra = (w / ratio - h) / 2.0;
            yr = (yr.0 - extra, yr.1 + extra);
        }
    }
    (xr, yr)
}

fn line_chart(path: &Path, title: &str, x_desc: &str, y_desc: &str, series: &[Series], equal_aspect: bool) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let (xr, yr) = bounds(series, equal_aspect);
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(xr.0..xr.1, yr.0..yr.1)
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc(x_desc)
        .y_desc(y_desc)
        .draw()
        .map_err(draw_err)?;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let style = ShapeStyle::from(&color).stroke_width(if s.dashed { 1 } else { 2 });
        if s.dashed {
            chart
                .draw_series(DashedLineSeries::new(s.points.iter().copied(), 6, 4, style))
                .map_err(draw_err)?
                .label(s.label)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        } else {
            chart
                .draw_series(LineSeries::new(s.points.iter().copied(), style))
                .map_err(draw_err)?
                .label(s.label)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)?;
    Ok(())
}

fn trace(records: &[SimLogRecord], f: impl Fn(&SimLogRecord) -> f64) -> Vec<(f64, f64)> {
    records.iter().map(|r| (r.t, f(r))).collect()
}

/// Writes the four time-series panels. Returns the written paths.
pub fn emit_state_plots(records: &[SimLogRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("cannot plot an empty log".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let panels: [(&str, &str, &str, Vec<Series>); 4] = [
        (
            "velocity.svg",
            "Velocity",
            "v [m/s]",
            vec![
                Series { label: "v", points: trace(records, |r| r.state[V]), dashed: false },
                Series { label: "target", points: trace(records, |r| r.v_tar), dashed: true },
                Series { label: "accel input [m/s^2]", points: trace(records, |r| r.control[1]), dashed: false },
            ],
        ),
        (
            "steering.svg",
            "Steer angle and steer rate",
            "[deg], [deg/s]",
            vec![
                Series { label: "steer angle", points: trace(records, |r| r.state[DELTA].to_degrees()), dashed: false },
                Series { label: "steer rate input", points: trace(records, |r| r.control[0].to_degrees()), dashed: true },
            ],
        ),
        (
            "lateral_offset.svg",
            "Lateral offset",
            "d [cm]",
            vec![Series { label: "lateral offset", points: trace(records, |r| r.state[D_PERP] * 100.0), dashed: false }],
        ),
        (
            "orientation.svg",
            "Orientation",
            "[deg]",
            vec![
                Series { label: "vehicle", points: trace(records, |r| r.state[PSI].to_degrees()), dashed: false },
                Series { label: "reference", points: trace(records, |r| r.state[PSI_R].to_degrees()), dashed: true },
            ],
        ),
    ];
    let mut written = Vec::new();
    for (file, title, y_desc, series) in panels {
        let path = out_dir.join(file);
        line_chart(&path, title, "t [s]", y_desc, &series, false)?;
        written.push(path);
    }
    Ok(written)
}

/// Positions reached by integrating `profile` from the course start, one per sample.
pub fn integrated_curve(course: &SampledCourse, profile: &CurvatureProfile) -> Result<Vec<(f64, f64)>> {
    let states = integrate_course_at(course.pose_at(0.0), profile, course.arc_lengths(), 0.5)?;
    Ok(states.iter().map(|s| (s.x, s.y)).collect())
}

/// Sample points against the curves integrated from the raw and fitted curvature.
pub fn emit_fit_overlay(course: &SampledCourse, raw: &CurvatureProfile, fitted: &CurvatureProfile, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let series = [
        Series { label: "samples", points: course.points().iter().map(|p| (p[0], p[1])).collect(), dashed: false },
        Series { label: "raw curvature integrated", points: integrated_curve(course, raw)?, dashed: true },
        Series { label: "fitted curvature integrated", points: integrated_curve(course, fitted)?, dashed: false },
    ];
    line_chart(path, "Course fit", "x [m]", "y [m]", &series, true)
}

/// Course, driven path and predicted paths at the snapshot instants.
pub fn emit_birdseye(course: &SampledCourse, records: &[SimLogRecord], snapshots: &[Snapshot], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut series = vec![
        Series { label: "course", points: course.points().iter().map(|p| (p[0], p[1])).collect(), dashed: true },
        Series { label: "driven", points: records.iter().map(|r| (r.state[X], r.state[Y])).collect(), dashed: false },
    ];
    let labels: Vec<String> = snapshots.iter().map(|s| format!("prediction at {:.1} s", s.t)).collect();
    for (s, label) in snapshots.iter().zip(&labels) {
        series.push(Series { label, points: s.predicted.iter().map(|p| (p[0], p[1])).collect(), dashed: false });
    }
    line_chart(path, "Bird's-eye view", "x [m]", "y [m]", &series, true)
}
