mod common;

use adsse_core::dsse::{
    build_model, power_to_current_pseudo, pseudos_from_network, DsseError, MeasurementModel, ModelSigmas,
    PseudoMeasurement, RowKind, StateVector,
};
use adsse_core::grid::{solve_power_flow, NetworkModel};
use nalgebra::DMatrix;
use num_complex::{Complex, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense_h(m: &MeasurementModel<f64>) -> DMatrix<f64> {
    let h = m.h();
    DMatrix::from_fn(h.rows(), h.cols(), |r, c| h.get(r, c))
}

#[test]
fn factorized_solution_matches_exact_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2016);
    let mut worst = 0f64;
    for _ in 0..200 {
        let m = common::random_model(&mut rng);
        let z = common::random_z(&mut rng, &m);
        let est = m.estimate_z(m.solver(), z.clone()).unwrap();
        let oracle = common::exact_normal_equations(&m, &z);
        let e = common::rel_err(&est.state.to_vec(), &oracle);
        worst = worst.max(e);
        assert!(e < 1e-9, "relative error {e}");
    }
    eprintln!("worst relative deviation from the exact solution: {worst:.2e}");
}

#[test]
fn consistent_measurements_recover_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let m = common::random_model(&mut rng);
        let x: Vec<f64> = (0..m.state_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z = m.h().mul_vec(&x);
        let est = m.estimate_z(m.solver(), z).unwrap();
        let e = common::rel_err(&est.state.to_vec(), &x);
        assert!(e < 1e-10, "relative error {e}");
    }
}

#[test]
fn feeder_power_flow_state_is_recovered() {
    let cfg = common::scenario("reference.scenario.json");
    let net = common::feeder();
    let pf = solve_power_flow(&net, net.loads()).unwrap();
    let pmus = cfg.pmu_nodes();
    let m = build_model(&net, &pmus, &pseudos_from_network(&net, 0.2), ModelSigmas::default()).unwrap();
    let pmu_v: Vec<Complex64> = pmus.iter().map(|n| pf.voltages[net.bus_index(n).unwrap()]).collect();
    // Pseudos linearized at the true voltages give exactly the true injections.
    let est = m.estimate(&pmu_v, &pf.voltages).unwrap();
    let truth = StateVector {
        slack_voltage: Complex64::new(1.0, 0.0),
        branch_currents: pf.branch_currents.clone(),
    };
    assert!(common::rel_err(&est.state.to_vec(), &truth.to_vec()) < 1e-8);
    for (a, b) in est.voltages.iter().zip(&pf.voltages) {
        assert!((a - b).norm() < 1e-8);
    }
}

#[test]
fn residuals_are_orthogonal_and_self_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let m = common::random_model(&mut rng);
        let est = m.estimate_z(m.solver(), common::random_z(&mut rng, &m)).unwrap();
        let (hr, hz) = m.orthogonality(m.solver(), &est);
        assert!(hr < 1e-9 * hz, "{hr:e} vs {hz:e}");
        for (_, i) in m.zero_injection_currents(&est) {
            assert!(i.norm() < 1e-4);
        }
        for (slot, fitted) in m.pmu_fitted(&est).into_iter().enumerate() {
            let traversed = est.voltages[m.pmu_buses()[slot]];
            assert!((fitted - traversed).norm() < 1e-12);
        }
    }
}

#[test]
fn two_bus_rows_by_hand() {
    let file = adsse_core::grid::NetworkFile {
        buses: vec!["s".into(), "l".into()],
        branches: vec![adsse_core::grid::BranchRecord {
            id: "b".into(),
            from: "s".into(),
            to: "l".into(),
            r: 0.01,
            x: 0.03,
        }],
        loads: vec![adsse_core::grid::LoadRecord {
            node: "l".into(),
            p: 0.5,
            q: 0.25,
            breaker: None,
        }],
        generators: vec![],
        slack: "s".into(),
        ..common::random_network(&mut ChaCha8Rng::seed_from_u64(0), 2, false)
    };
    let net: NetworkModel<f64> = file.into_model().unwrap();
    let m = build_model(&net, &["l".to_string()], &pseudos_from_network(&net, 0.2), ModelSigmas::default())
        .unwrap();
    // V_l = V_s − z·i;  i_inj,l = −i.
    #[rustfmt::skip]
    let expected = DMatrix::from_row_slice(4, 4, &[
        1.0, 0.0, -0.01,  0.03,
        0.0, 1.0, -0.03, -0.01,
        0.0, 0.0, -1.0,   0.0,
        0.0, 0.0,  0.0,  -1.0,
    ]);
    assert_eq!(dense_h(&m), expected);
    assert_eq!(m.rows()[0].kind, RowKind::PmuVoltage);
    assert_eq!(m.rows()[2].kind, RowKind::PseudoInjection);
    let sigma_pmu = 1e-3f64;
    let sigma_pseudo = 0.2 * Complex64::new(0.5, 0.25).norm();
    let w = m.weights();
    assert!((w[0] - 1.0 / sigma_pmu.powi(2)).abs() < 1e-6);
    assert!((w[2] * sigma_pseudo.powi(2) - 1.0).abs() < 1e-12);

    // Exactly determined: the estimate reproduces z.
    let est = m
        .estimate(&[Complex64::new(0.98, -0.01)], &[Complex64::new(1.0, 0.0); 2])
        .unwrap();
    assert!(est.residuals.iter().all(|r| r.abs() < 1e-12));
}

#[test]
fn no_pmu_is_unobservable() {
    let net = common::feeder();
    let err = build_model(&net, &[], &pseudos_from_network(&net, 0.2), ModelSigmas::default()).unwrap_err();
    let DsseError::Unobservable { directions } = err else { panic!("{err}") };
    assert!(directions.iter().any(|d| d.starts_with("slack_v")), "{directions:?}");
}

#[test]
fn pseudo_current_matches_rectangular_arithmetic() {
    let s = Complex64::new(0.5, 0.25);
    let v = Complex64::from_polar(0.98, -0.02);
    let p = PseudoMeasurement::new("n", s);
    let (i, sigma) = power_to_current_pseudo(&p, v).unwrap();
    // conj(s / v) = (a − jb)/(c − jd) for s = a + jb, v = c + jd; negated for consumption.
    let (a, b, c, d) = (s.re, s.im, v.re, v.im);
    let den = c * c + d * d;
    let re = -(a * c + b * d) / den;
    let im = -(a * d - b * c) / den;
    assert!((i.re - re).abs() < 1e-15 && (i.im - im).abs() < 1e-15);
    assert!((sigma - 0.2 * s.norm() / 0.98).abs() < 1e-15);
    let zero = PseudoMeasurement::new("n", Complex64::new(0.0, 0.0));
    assert_eq!(power_to_current_pseudo(&zero, v).unwrap().0, Complex64::new(0.0, 0.0));
    assert!(matches!(
        power_to_current_pseudo(&p, Complex64::new(0.3, 0.0)),
        Err(DsseError::DegenerateVoltage { .. })
    ));
}

/// The default zero-injection sigma (weight 1e12) leaves the gain too
/// ill-conditioned for single precision; 1e-3 factors with room to spare.
#[test]
fn f32_estimate_tracks_f64() {
    let net = common::feeder();
    let pf = solve_power_flow(&net, net.loads()).unwrap();
    let pmus = common::scenario("reference.scenario.json").pmu_nodes();
    let net32: NetworkModel<f32> = net.cast();
    let default32 = build_model(&net32, &pmus, &pseudos_from_network(&net32, 0.2), ModelSigmas::default());
    assert!(matches!(default32, Err(DsseError::Unobservable { .. })));

    let s64 = ModelSigmas { zero_injection: 1e-3, ..ModelSigmas::default() };
    let s32 = ModelSigmas { zero_injection: 1e-3f32, ..ModelSigmas::default() };
    let m64 = build_model(&net, &pmus, &pseudos_from_network(&net, 0.2), s64).unwrap();
    let m32 = build_model(&net32, &pmus, &pseudos_from_network(&net32, 0.2), s32).unwrap();
    let pmu_v: Vec<Complex64> = pmus.iter().map(|n| pf.voltages[net.bus_index(n).unwrap()]).collect();
    let e64 = m64.estimate(&pmu_v, &vec![Complex64::new(1.0, 0.0); net.bus_count()]).unwrap();
    let pmu32: Vec<_> = pmu_v.iter().map(|v| Complex::new(v.re as f32, v.im as f32)).collect();
    let e32 = m32.estimate(&pmu32, &vec![Complex::new(1f32, 0.0); net.bus_count()]).unwrap();
    let worst = e64
        .voltages
        .iter()
        .zip(&e32.voltages)
        .map(|(a, b)| (a.norm() - b.norm() as f64).abs())
        .fold(0f64, f64::max);
    eprintln!("f32 vs f64 worst |V| deviation: {worst:.2e}");
    assert!(worst < 1e-4, "{worst}");
}
