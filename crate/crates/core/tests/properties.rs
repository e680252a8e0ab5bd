use approx::assert_abs_diff_eq;
use divseek::io::{format_float, read_trajectory_csv, write_trajectory_csv};
use divseek::verify::check_field_limit;
use divseek::{
    averaged_objective, DisturbanceSpec, IntegratorSpec, ObjectiveSpec, QuadratureSpec, SimState,
    Simulator, System,
};
use proptest::prelude::*;

fn params(n: usize, a: f64, k: u32) -> divseek::ControlParams {
    divseek::ControlParams {
        n,
        a,
        b: 1.0,
        h: 1.0,
        omega: 1.0,
        k,
        filter_enabled: true,
    }
}

#[test]
fn field_limit_along_diagonal_segment() {
    let points: Vec<Vec<f64>> = (0..=6).map(|i| vec![0.5 * i as f64; 3]).collect();
    let report = check_field_limit(
        &ObjectiveSpec::named("ringed_gaussian_3d").build().unwrap(),
        1.0,
        1.0,
        &points,
        &[1, 2, 3, 4, 5],
        &QuadratureSpec::default(),
        0.1,
        5e-3,
    )
    .unwrap();
    assert!(report.passed, "{report}");
}

#[test]
fn trajectory_file_round_trip_with_disturbance() {
    let sim = Simulator::new(
        ObjectiveSpec::named("perturbed_decay_2d").build().unwrap(),
        params(2, 0.2, 1),
        DisturbanceSpec::PiecewiseUniform {
            bound: 0.3,
            dwell: 0.5,
            seed: 11,
        },
    )
    .unwrap();
    let traj = sim
        .run(
            System::ClosedLoop,
            &SimState::new(vec![-3.0, 0.0], 0.0, 0.0),
            &IntegratorSpec::until(10.0),
        )
        .unwrap();
    let mut buf = Vec::new();
    write_trajectory_csv(&traj, &mut buf).unwrap();
    let cols = read_trajectory_csv(buf.as_slice()).unwrap();
    assert_eq!(cols.times, traj.times);
    assert_eq!(cols.states, traj.states);
    assert_eq!(cols.filter_states, traj.filter_states);
    assert_eq!(cols.outputs, traj.outputs);
    assert_eq!(cols.transformed, traj.transformed);
}

proptest! {
    #[test]
    fn piecewise_disturbance_respects_bound(
        bound in 0.0..5.0f64,
        dwell in 0.01..10.0f64,
        seed in any::<u64>(),
        t in 0.0..1e4f64,
    ) {
        let d = DisturbanceSpec::PiecewiseUniform { bound, dwell, seed };
        prop_assert!(d.value(t).abs() <= bound);
        prop_assert_eq!(d.value(t), d.value(t));
    }

    #[test]
    fn float_text_is_exact(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        prop_assert_eq!(format_float(v).parse::<f64>().unwrap().to_bits(), bits);
    }

    #[test]
    fn ball_average_of_affine_objective_is_its_center_value(
        x in proptest::collection::vec(-4.0..4.0f64, 3),
        w in proptest::collection::vec(-2.0..2.0f64, 3),
        a in 0.05..2.0f64,
    ) {
        let j = ObjectiveSpec::linear(w.clone()).build().unwrap();
        let quad = QuadratureSpec::with_nodes(16, 8);
        let avg = averaged_objective(&j, &x, a, &quad).unwrap();
        let center: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert_abs_diff_eq!(avg, center, epsilon = 1e-12 * (1.0 + center.abs()));
    }

    #[test]
    fn filter_state_stays_within_output_bound(
        eta0 in -3.0..3.0f64,
        delta in 0.0..0.5f64,
        seed in any::<u64>(),
    ) {
        let sim = Simulator::new(
            ObjectiveSpec::named("perturbed_decay_2d").build().unwrap(),
            params(2, 0.4, 1),
            DisturbanceSpec::PiecewiseUniform { bound: delta, dwell: 1.0, seed },
        )
        .unwrap();
        let traj = sim
            .run(System::Transformed, &SimState::new(vec![1.0, -1.0], eta0, 0.0), &IntegratorSpec::until(5.0))
            .unwrap();
        let m = traj.outputs.iter().map(|y| y.abs()).fold(0.0, f64::max);
        let rho = eta0.abs().max(m + delta);
        prop_assert!(traj.filter_states.iter().all(|e| e.abs() <= rho + 1e-12));
    }
}
