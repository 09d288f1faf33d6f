//! Wall-clock latency of the coupled planners along a scenario.

use std::sync::Arc;

use trajplan_core::concurrent::ConcurrentMpc;
use trajplan_core::vehicle::INPUT_DIM;
use trajplan_core::{Result, VehicleControl};

use crate::sim::{plant_step, SimSetup, DIVERGENCE_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub mean_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self {
                mean_us: f64::NAN,
                p99_us: f64::NAN,
                max_us: f64::NAN,
            };
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let rank = ((0.99 * n as f64).ceil() as usize).clamp(1, n) - 1;
        Self {
            mean_us: sorted.iter().sum::<f64>() / n as f64,
            p99_us: sorted[rank],
            max_us: sorted[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub samples: usize,
    pub course: LatencyStats,
    pub vehicle: LatencyStats,
    pub cycle: LatencyStats,
    /// Cycles per second from the mean cycle time.
    pub cycle_rate_hz: f64,
    /// Times the drive restarted from the initial state (course end or divergence).
    pub restarts: usize,
}

/// Drives the scenario in closed loop and records per-instance solve times
/// for `samples` cycles after `warmup` discarded cycles. The drive restarts
/// from the initial state whenever the course runs out.
pub fn benchmark_step_latency(setup: &SimSetup, warmup: usize, samples: usize) -> Result<BenchReport> {
    let init = || ConcurrentMpc::init(Arc::clone(&setup.course), &setup.x0, Arc::clone(&setup.params), setup.coupling.clone());
    let mut mpc = init()?;
    let mut x = setup.x0;
    let mut course_us = Vec::with_capacity(samples);
    let mut vehicle_us = Vec::with_capacity(samples);
    let mut cycle_us = Vec::with_capacity(samples);
    let mut restarts = 0;
    let horizon_reach = setup.x0.v.abs().max(setup.params.v_limit) * setup.coupling.horizon_time() + setup.coupling.margin;
    let total = setup.course.length();
    for k in 0..warmup + samples {
        let out = mpc.step_cycle(&x)?;
        if k >= warmup {
            course_us.push(out.course_time.as_secs_f64() * 1e6);
            vehicle_us.push(out.vehicle_time.as_secs_f64() * 1e6);
            cycle_us.push(out.cycle_time.as_secs_f64() * 1e6);
        }
        let u = VehicleControl::from_slice(&out.vehicle.u_star.interval(0)[..INPUT_DIM]);
        x = plant_step(&x, &u, &setup.params, &out.profile_used, setup.coupling.dt)?;
        if !x.is_finite() || x.d_perp.abs() > DIVERGENCE_LIMIT || x.s_r + horizon_reach > total {
            mpc = init()?;
            x = setup.x0;
            restarts += 1;
        }
    }
    let cycle = LatencyStats::from_samples(&cycle_us);
    Ok(BenchReport {
        samples,
        course: LatencyStats::from_samples(&course_us),
        vehicle: LatencyStats::from_samples(&vehicle_us),
        cycle_rate_hz: 1e6 / cycle.mean_us,
        cycle,
        restarts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_of_uniform_ramp() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        let st = LatencyStats::from_samples(&s);
        assert_eq!(st.p99_us, 99.0);
        assert_eq!(st.max_us, 100.0);
        assert!((st.mean_us - 50.5).abs() < 1e-12);
    }

    #[test]
    fn single_sample() {
        let st = LatencyStats::from_samples(&[7.0]);
        assert_eq!((st.mean_us, st.p99_us, st.max_us), (7.0, 7.0, 7.0));
    }
}
