mod common;

use common::{gradient_violation, random_course_instance, random_vehicle_instance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn vehicle_cost_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..200 {
        let inst = random_vehicle_instance(&mut rng);
        let v = gradient_violation(&inst, 1e-4, 1e-7);
        assert!(v <= 1.0, "instance {k}: violation ratio {v}");
    }
}

#[test]
fn course_cost_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for k in 0..200 {
        let inst = random_course_instance(&mut rng);
        let v = gradient_violation(&inst, 1e-4, 1e-7);
        assert!(v <= 1.0, "instance {k}: violation ratio {v}");
    }
}
