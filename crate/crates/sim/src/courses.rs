//! Analytic reference courses sampled at uniform arc-length spacing.

use std::f64::consts::{PI, TAU};

use trajplan_core::course::SampledCourse;
use trajplan_core::{Error, Result};

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
    }
}

/// Resamples a dense polyline at uniform arc length `spacing`, starting at
/// its first point. Trailing length shorter than one spacing is dropped.
pub fn resample_uniform(dense: &[[f64; 2]], spacing: f64) -> Result<SampledCourse> {
    check_positive("spacing", spacing)?;
    let mut cum = Vec::with_capacity(dense.len());
    cum.push(0.0);
    for w in dense.windows(2) {
        let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        cum.push(cum.last().unwrap() + d);
    }
    let total = *cum.last().unwrap_or(&0.0);
    let count = (total / spacing + 1e-9).floor() as usize;
    let mut points = Vec::with_capacity(count + 1);
    let mut seg = 0;
    for k in 0..=count {
        let s = k as f64 * spacing;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let w = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        let (a, b) = (dense[seg], dense[seg + 1]);
        points.push([a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]);
    }
    SampledCourse::new(points)
}

fn sample_by_arc_length(length: f64, spacing: f64, point: impl Fn(f64) -> [f64; 2]) -> Result<SampledCourse> {
    check_positive("spacing", spacing)?;
    check_positive("course length", length)?;
    let count = (length / spacing + 1e-9).floor() as usize;
    SampledCourse::new((0..=count).map(|k| point(k as f64 * spacing)).collect())
}

/// Counter-clockwise circle starting at the origin with heading zero.
pub fn generate_circle(radius: f64, spacing: f64, laps: f64) -> Result<SampledCourse> {
    check_positive("radius", radius)?;
    check_positive("laps", laps)?;
    sample_by_arc_length(TAU * radius * laps, spacing, |s| {
        let a = s / radius;
        [radius * a.sin(), radius * (1.0 - a.cos())]
    })
}

/// Straight line from the origin; `heading` in radians.
pub fn generate_straight(length: f64, heading: f64, spacing: f64) -> Result<SampledCourse> {
    let (sn, cs) = heading.sin_cos();
    sample_by_arc_length(length, spacing, |s| [s * cs, s * sn])
}

/// Straight entry along +x, a circular arc turning by `angle` radians
/// (positive left, negative right) and a straight exit of the entry length.
pub fn generate_turn(radius: f64, angle: f64, entry_length: f64, spacing: f64) -> Result<SampledCourse> {
    check_positive("radius", radius)?;
    check_positive("entry length", entry_length)?;
    if angle == 0.0 || !angle.is_finite() {
        return Err(Error::InvalidConfig("turn angle must be non-zero".into()));
    }
    let arc = radius * angle.abs();
    let side = angle.signum();
    let arc_end = [
        entry_length + radius * angle.abs().sin(),
        side * radius * (1.0 - angle.cos()),
    ];
    sample_by_arc_length(2.0 * entry_length + arc, spacing, |s| {
        if s <= entry_length {
            [s, 0.0]
        } else if s <= entry_length + arc {
            let a = (s - entry_length) / radius;
            [entry_length + radius * a.sin(), side * radius * (1.0 - a.cos())]
        } else {
            let d = s - entry_length - arc;
            [arc_end[0] + d * angle.cos(), arc_end[1] + d * angle.sin()]
        }
    })
}

/// Curvature of the unit Gerono lemniscate `(sin t, sin t cos t)`.
fn gerono_curvature(t: f64) -> f64 {
    let (dx, dy) = (t.cos(), (2.0 * t).cos());
    let (ddx, ddy) = (-t.sin(), -2.0 * (2.0 * t).sin());
    (dx * ddy - dy * ddx) / (dx * dx + dy * dy).powf(1.5)
}

/// Peak absolute curvature of the unit Gerono lemniscate.
fn gerono_peak_curvature() -> f64 {
    // one half period covers every curvature value by symmetry
    let n = 200_000;
    (0..=n)
        .map(|i| gerono_curvature(PI * i as f64 / n as f64).abs())
        .fold(0.0, f64::max)
}

/// Gerono lemniscate scaled so its peak curvature is `kappa_peak`, starting
/// at the crossing point with heading pi/4 and traversed for `laps` loops.
pub fn generate_lying_eight(kappa_peak: f64, spacing: f64, laps: f64) -> Result<SampledCourse> {
    check_positive("peak curvature", kappa_peak)?;
    check_positive("laps", laps)?;
    check_positive("spacing", spacing)?;
    let a = gerono_peak_curvature() / kappa_peak;
    let t_end = TAU * laps;
    // dense polyline with sub-centimetre chords
    let n = ((t_end * a * 2.0) / 0.005).ceil() as usize;
    let dense: Vec<[f64; 2]> = (0..=n)
        .map(|i| {
            let t = t_end * i as f64 / n as f64;
            [a * t.sin(), a * t.sin() * t.cos()]
        })
        .collect();
    resample_uniform(&dense, spacing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;
    use trajplan_core::course::numeric_curvature;

    #[test]
    fn lying_eight_matches_peak_and_spacing() {
        let c = generate_lying_eight(0.075, 0.5, 1.0).unwrap();
        let k = numeric_curvature(&c).unwrap();
        assert!((k.max_abs() - 0.075).abs() < 0.02 * 0.075, "{}", k.max_abs());
        assert!(c.length() > 150.0);
        let p = c.points();
        for w in p.windows(2) {
            let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            assert!((d - 0.5).abs() < 1e-3, "{d}");
        }
        assert!((c.tangent_angle(0.0) - std::f64::consts::FRAC_PI_4).abs() < 1e-3);
        assert!(p[0][0].abs() < 1e-12 && p[0][1].abs() < 1e-12);
    }

    #[test]
    fn minimum_turn_radius_near_thirteen() {
        let c = generate_lying_eight(0.075, 0.5, 1.0).unwrap();
        let r = 1.0 / numeric_curvature(&c).unwrap().max_abs();
        assert!((r - 13.3).abs() < 0.3, "{r}");
    }

    #[test]
    fn circle_curvature_interior() {
        let c = generate_circle(13.0, 0.5, 1.0).unwrap();
        let k = numeric_curvature(&c).unwrap();
        let vals = k.values();
        for &v in &vals[1..vals.len() - 1] {
            assert!((v - 1.0 / 13.0).abs() < 1e-4, "{v}");
        }
    }

    #[test]
    fn straight_has_zero_curvature() {
        let c = generate_straight(100.0, 0.3, 0.5).unwrap();
        let k = numeric_curvature(&c).unwrap();
        assert!(k.values().iter().all(|v| v.abs() < 1e-9));
        assert!((c.length() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn right_turn_has_negative_curvature() {
        let c = generate_turn(20.0, -FRAC_PI_2, 30.0, 0.5).unwrap();
        let k = numeric_curvature(&c).unwrap();
        let mid = 30.0 + 20.0 * FRAC_PI_2 / 2.0;
        assert!((k.eval(mid) + 0.05).abs() < 1e-3);
        assert!(k.values().iter().all(|&v| v <= 1e-9));
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(generate_circle(-1.0, 0.5, 1.0).is_err());
        assert!(generate_lying_eight(0.0, 0.5, 1.0).is_err());
        assert!(generate_turn(10.0, 0.0, 5.0, 0.5).is_err());
    }
}
