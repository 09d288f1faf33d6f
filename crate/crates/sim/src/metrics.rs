//! Summary statistics of a closed-loop log.

use trajplan_core::vehicle::{VehicleParams, D_PERP, DELTA, V};

use crate::log::SimLogRecord;

/// Curvature magnitude above which the lateral-acceleration speed bound is checked, 1/m.
pub const CURVE_THRESHOLD: f64 = 0.01;
/// Time a straight must have lasted before a record counts as steady, s.
pub const STRAIGHT_SETTLE: f64 = 3.0;
/// Time a straight must continue after a record for it to count as steady, s.
pub const STRAIGHT_LOOKAHEAD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub records: usize,
    pub max_abs_d_perp: f64,
    pub max_abs_delta: f64,
    /// Largest `v - (1.05 sqrt(a_lat_max / |kappa|) + 0.1)` over curve records; negative when satisfied.
    pub worst_speed_margin: f64,
    /// Largest `|v - v_limit|` over steady straight records.
    pub max_straight_speed_error: f64,
    pub straight_records: usize,
    /// Whether the acceleration input sat on its upper bound at least once.
    pub accel_hits_upper: bool,
    /// Largest bound violation of an applied input (zero when feasible).
    pub max_input_violation: f64,
    pub max_abs_lateral_accel: f64,
}

/// Indices of records whose target speed equals the speed limit for
/// `STRAIGHT_SETTLE` seconds before and `STRAIGHT_LOOKAHEAD` seconds after.
pub fn steady_straight_indices(records: &[SimLogRecord], v_limit: f64) -> Vec<usize> {
    let on_straight: Vec<bool> = records.iter().map(|r| r.v_tar >= v_limit - 1e-9).collect();
    let mut out = Vec::new();
    for (k, r) in records.iter().enumerate() {
        let ok = records
            .iter()
            .zip(&on_straight)
            .filter(|(q, _)| q.t >= r.t - STRAIGHT_SETTLE - 1e-9 && q.t <= r.t + STRAIGHT_LOOKAHEAD + 1e-9)
            .all(|(_, &s)| s);
        let covered = r.t + STRAIGHT_LOOKAHEAD <= records.last().map_or(0.0, |l| l.t) + 1e-9;
        if ok && covered {
            out.push(k);
        }
    }
    out
}

pub fn evaluate(records: &[SimLogRecord], params: &VehicleParams) -> RunMetrics {
    let lower = params.input_lower();
    let upper = params.input_upper();
    let mut m = RunMetrics {
        records: records.len(),
        max_abs_d_perp: 0.0,
        max_abs_delta: 0.0,
        worst_speed_margin: f64::NEG_INFINITY,
        max_straight_speed_error: 0.0,
        straight_records: 0,
        accel_hits_upper: false,
        max_input_violation: 0.0,
        max_abs_lateral_accel: 0.0,
    };
    for r in records {
        m.max_abs_d_perp = m.max_abs_d_perp.max(r.state[D_PERP].abs());
        m.max_abs_delta = m.max_abs_delta.max(r.state[DELTA].abs());
        m.max_abs_lateral_accel = m.max_abs_lateral_accel.max(r.a_perp.abs());
        if r.kappa_ref.abs() > CURVE_THRESHOLD {
            let bound = (params.a_lat_max / r.kappa_ref.abs()).sqrt() * 1.05 + 0.1;
            m.worst_speed_margin = m.worst_speed_margin.max(r.state[V] - bound);
        }
        for c in 0..2 {
            let u = r.control[c];
            m.max_input_violation = m.max_input_violation.max(lower[c] - u).max(u - upper[c]);
        }
        if r.control[1] >= upper[1] {
            m.accel_hits_upper = true;
        }
    }
    let straight = steady_straight_indices(records, params.v_limit);
    m.straight_records = straight.len();
    for k in straight {
        m.max_straight_speed_error = m.max_straight_speed_error.max((records[k].state[V] - params.v_limit).abs());
    }
    m
}
