mod common;

use std::time::Instant;

use nalgebra::Vector3;
use omnijump_core::planner::{fixed_vector, solve_closed_form, JerkCostMatrices};
use omnijump_core::{plan_trajectory, BoundaryState, PlannerConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{kkt_spline, max_abs_diff, random_jump};

fn interior_positions(traj: &omnijump_core::PiecewiseQuintic, axis: usize) -> Vec<f64> {
    let knots = traj.knots();
    knots[1..knots.len() - 1].iter().map(|&t| traj.evaluate(t, 0)[axis]).collect()
}

fn durations(traj: &omnijump_core::PiecewiseQuintic) -> Vec<f64> {
    traj.knots().windows(2).map(|w| w[1] - w[0]).collect()
}

#[test]
fn closed_form_matches_dense_kkt_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = PlannerConfig::default();
    let started = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let (start, end) = random_jump(&mut rng);
        let traj = plan_trajectory(&start, &end, &cfg).unwrap();
        let dur = durations(&traj);
        for axis in 0..3 {
            let interior = interior_positions(&traj, axis);
            let s = [start.p[axis], start.v[axis], start.a[axis]];
            let e = [end.p[axis], end.v[axis], end.a[axis]];
            let closed = solve_closed_form(&fixed_vector(s, &interior, e), &dur, 3).unwrap();
            let oracle = kkt_spline(&dur, s, &interior, e);
            worst = worst.max(max_abs_diff(&closed, &oracle));
        }
    }
    assert!(worst < 1e-8, "max coefficient deviation {worst:e}");
    assert!(started.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn rest_to_rest_unit_segment_is_the_textbook_quintic() {
    let c = solve_closed_form(&fixed_vector([0.0; 3], &[], [1.0, 0.0, 0.0]), &[1.0], 3).unwrap();
    let expected = [0.0, 0.0, 0.0, 10.0, -15.0, 6.0];
    assert!(max_abs_diff(&c, &[expected]) < 1e-10);
    assert!(max_abs_diff(&kkt_spline(&[1.0], [0.0; 3], &[], [1.0, 0.0, 0.0]), &[expected]) < 1e-10);
}

#[test]
fn perturbing_free_derivatives_never_lowers_jerk() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = PlannerConfig::default();
    for trial in 0..200 {
        let (start, end) = random_jump(&mut rng);
        let traj = plan_trajectory(&start, &end, &cfg).unwrap();
        let mats = JerkCostMatrices::new(&durations(&traj), 3).unwrap();
        let axis = trial % 3;
        let fixed = fixed_vector(
            [start.p[axis], start.v[axis], start.a[axis]],
            &interior_positions(&traj, axis),
            [end.p[axis], end.v[axis], end.a[axis]],
        );
        let free = mats.solve_free(&fixed);
        let best = mats.cost(&mats.coefficients(&mats.knot_derivatives(&fixed, &free)));
        let scale = 10f64.powf(rng.random_range(-4.0..1.0));
        let delta = free.map(|_| rng.random_range(-1.0..1.0) * scale);
        let perturbed = mats.cost(&mats.coefficients(&mats.knot_derivatives(&fixed, &(&free + delta))));
        assert!(perturbed >= best * (1.0 - 1e-12), "trial {trial}: {perturbed} < {best}");
    }
}

fn boundary() -> impl Strategy<Value = BoundaryState> {
    (
        (-0.15..0.15f64, -0.1..0.1f64, -0.05..0.05f64),
        (-0.3..0.3f64, -0.16..0.16f64, 1.5..3.5f64),
        (-20.0..20.0f64, -20.0..20.0f64, 10.0..40.0f64),
    )
        .prop_map(|(p, v, a)| BoundaryState {
            p: Vector3::new(p.0, p.1, 0.3 + p.2),
            v: Vector3::new(v.0, v.1, v.2),
            a: Vector3::new(a.0, a.1, a.2),
        })
}

proptest! {
    #[test]
    fn plans_are_c2_and_meet_boundaries(end in boundary(), line in any::<bool>()) {
        let mut cfg = PlannerConfig::default();
        if line {
            cfg.vertical_waypoints = omnijump_core::VerticalWaypoints::Line;
        }
        let start = BoundaryState::at_rest(Vector3::new(0.0, 0.0, 0.3));
        let traj = plan_trajectory(&start, &end, &cfg).unwrap();
        let (t0, t1) = (traj.start_time(), traj.end_time());
        for (k, (s, e)) in [(start.p, end.p), (start.v, end.v), (start.a, end.a)].into_iter().enumerate() {
            prop_assert!((traj.evaluate(t0, k) - s).amax() < 1e-9);
            prop_assert!((traj.evaluate(t1, k) - e).amax() < 1e-9);
        }
        for j in 0..traj.segments() - 1 {
            let tau = traj.knots()[j + 1] - traj.knots()[j];
            for k in 0..3 {
                let left = traj.evaluate_segment(j, tau, k);
                let right = traj.evaluate_segment(j + 1, 0.0, k);
                prop_assert!((left - right).amax() < 1e-9, "knot {} order {}: {}", j + 1, k, (left - right).amax());
            }
        }
    }
}
