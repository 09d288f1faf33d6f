use std::sync::Arc;

use trajplan_core::course::{fit_course, fit_errors, numeric_curvature, CourseMpcConfig, FitOptions};
use trajplan_sim::courses::generate_lying_eight;

#[test]
fn fit_error_drops_then_plateaus_over_sweeps() {
    let course = Arc::new(generate_lying_eight(0.075, 0.5, 2.0).unwrap());
    let raw = fit_errors(&course, &numeric_curvature(&course).unwrap(), 0.5).unwrap();
    let fit = fit_course(Arc::clone(&course), CourseMpcConfig::default(), FitOptions { window: 25.0, passes: 4 }).unwrap();
    let rms: Vec<f64> = fit.pass_errors.iter().map(|e| e.rms).collect();
    assert!(rms[0] < 0.1 * raw.rms, "raw {} vs {rms:?}", raw.rms);
    // once converged, further sweeps move the error by round-off only
    for w in rms.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-4), "{rms:?}");
    }
}
