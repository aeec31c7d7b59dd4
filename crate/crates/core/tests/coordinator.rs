mod common;

use std::sync::Arc;

use adsse_core::dsse::{
    build_model, pseudos_from_network, Coordinator, CoordinatorOptions, EstimationSnapshot, MeasurementModel,
    ModelSigmas,
};
use adsse_core::grid::solve_power_flow;
use adsse_core::time::FRAME_PERIOD_US;
use adsse_core::vo::{Trigger, VoMeasurement};
use adsse_core::Timestamp;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(nodes: &[&str]) -> Arc<MeasurementModel<f64>> {
    let net = common::feeder();
    let nodes: Vec<String> = nodes.iter().map(|s| s.to_string()).collect();
    Arc::new(build_model(&net, &nodes, &pseudos_from_network(&net, 0.2), ModelSigmas::default()).unwrap())
}

fn t0() -> Timestamp {
    Timestamp::new(1_451_606_400, 0)
}

/// A measurement at frame `k` from `node`, near the power-flow voltage.
fn meas(node: &str, k: i64, v: Complex64) -> VoMeasurement {
    let ts = t0().offset_micros(k * FRAME_PERIOD_US);
    VoMeasurement {
        vo_id: format!("vo{node}"),
        node: node.into(),
        soc: ts.soc,
        frac_us: ts.frac,
        v_re: v.re,
        v_im: v.im,
        freq: 50.0,
        rocof: 0.0,
        rr: 50,
        trigger: Trigger::None,
    }
}

fn true_voltage(node: &str) -> Complex64 {
    let net = common::feeder();
    let pf = solve_power_flow(&net, net.loads()).unwrap();
    pf.voltages[net.bus_index(node).unwrap()]
}

fn run(model: &Arc<MeasurementModel<f64>>, input: &[VoMeasurement]) -> Vec<EstimationSnapshot<f64>> {
    let mut c = Coordinator::new(Arc::clone(model), CoordinatorOptions::default()).unwrap();
    let mut out = Vec::new();
    for m in input {
        out.extend(c.push(m).unwrap());
    }
    out.extend(c.finish().unwrap());
    assert_eq!(c.stats().refactorizations, 0);
    out
}

#[test]
fn synchronized_streams_tick_fresh() {
    let m = model(&["31", "71"]);
    let (v31, v71) = (true_voltage("31"), true_voltage("71"));
    let input: Vec<_> = (0..100).flat_map(|k| [meas("31", k, v31), meas("71", k, v71)]).collect();
    let snaps = run(&m, &input);
    assert_eq!(snaps.len(), 100);
    assert!(snaps.iter().all(|s| s.all_fresh()));
}

#[test]
fn slow_stream_is_held_and_ages() {
    let m = model(&["31", "71"]);
    let (v31, v71) = (true_voltage("31"), true_voltage("71"));
    let mut input = Vec::new();
    for k in 0..150 {
        input.push(meas("31", k, v31));
        if k % 50 == 0 {
            input.push(meas("71", k, v71));
        }
    }
    let snaps = run(&m, &input);
    assert_eq!(snaps.len(), 150);
    let ages: Vec<u32> = snaps.iter().map(|s| s.ages[1]).collect();
    let expected: Vec<u32> = (0..150).map(|k| k % 50).collect();
    assert_eq!(ages, expected);
    assert!(snaps.iter().all(|s| s.ages[0] == 0));
}

#[test]
fn single_stream_sets_the_rate() {
    let m = model(&["31"]);
    let v = true_voltage("31");
    let input: Vec<_> = (0..250).step_by(5).map(|k| meas("31", k, v)).collect();
    let snaps = run(&m, &input);
    assert_eq!(snaps.len(), 50);
    assert!(snaps.windows(2).all(|w| w[1].timestamp.frames_since(w[0].timestamp) == 5));
}

#[test]
fn snapshot_equals_direct_estimate_of_held_values() {
    let m = model(&["31", "71"]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut jitter = |v: Complex64| v + Complex64::new(rng.gen_range(-1e-3..1e-3), rng.gen_range(-1e-3..1e-3));
    let (v31, v71) = (true_voltage("31"), true_voltage("71"));
    let input = vec![
        meas("31", 0, jitter(v31)),
        meas("71", 0, jitter(v71)),
        meas("31", 1, jitter(v31)),
        meas("31", 2, jitter(v31)),
        meas("71", 2, jitter(v71)),
    ];
    let snaps = run(&m, &input);
    assert_eq!(snaps.len(), 3);
    let at1 = [input[2].voltage(), input[1].voltage()];
    let direct = m.estimate_self_refined(m.solver(), &at1).unwrap();
    assert_eq!(snaps[1].estimate, direct);
    assert_eq!(snaps[1].ages, vec![0, 1]);
}

#[test]
fn stale_and_unknown_measurements() {
    let m = model(&["31", "71"]);
    let mut c = Coordinator::new(Arc::clone(&m), CoordinatorOptions::default()).unwrap();
    let v = true_voltage("31");
    c.push(&meas("31", 3, v)).unwrap();
    assert!(c.push(&meas("31", 3, v)).unwrap().is_empty());
    assert!(c.push(&meas("31", 1, v)).unwrap().is_empty());
    assert_eq!(c.stats().stale, 2);
    assert!(c.push(&meas("650", 4, v)).is_err());
    // Ticks before the other PMU ever reported cannot be estimated.
    assert!(c.finish().unwrap().is_empty());
    assert_eq!(c.stats().skipped_ticks, 1);
}

/// Per-VO streams at independent rates, merged in an arbitrary order that
/// keeps each stream's own order.
fn interleavings() -> impl Strategy<Value = (Vec<i64>, Vec<i64>, Vec<bool>)> {
    let frames = |dec: i64| prop::collection::btree_set(0i64..300, 1..60).prop_map(move |s| {
        s.into_iter().map(|k| k - k % dec).collect::<std::collections::BTreeSet<_>>().into_iter().collect::<Vec<_>>()
    });
    (
        prop::sample::select(vec![1i64, 2, 5, 50]).prop_flat_map(frames),
        prop::sample::select(vec![1i64, 2, 5, 50]).prop_flat_map(frames),
    )
        .prop_flat_map(|(a, b)| {
            let n = a.len() + b.len();
            (Just(a), Just(b), prop::collection::vec(any::<bool>(), n))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn result_is_independent_of_interleaving((a, b, picks) in interleavings()) {
        let m = model(&["31", "71"]);
        let (v31, v71) = (true_voltage("31"), true_voltage("71"));
        let sa: Vec<_> = a.iter().map(|&k| meas("31", k, v31 * (1.0 + 1e-4 * k as f64))).collect();
        let sb: Vec<_> = b.iter().map(|&k| meas("71", k, v71 * (1.0 - 1e-4 * k as f64))).collect();
        let mut sorted: Vec<_> = sa.iter().chain(&sb).cloned().collect();
        sorted.sort_by_key(|m| (m.timestamp(), m.node.clone()));
        let (mut i, mut j) = (0, 0);
        let mut shuffled = Vec::new();
        for p in picks {
            if (p && i < sa.len()) || j == sb.len() {
                shuffled.push(sa[i].clone());
                i += 1;
            } else {
                shuffled.push(sb[j].clone());
                j += 1;
            }
        }
        let reference = run(&m, &sorted);
        let mut ticks: Vec<_> = a.iter().chain(&b).copied().filter(|&k| k >= a[0].max(b[0])).collect();
        ticks.sort();
        ticks.dedup();
        prop_assert_eq!(reference.len(), ticks.len());
        prop_assert_eq!(run(&m, &shuffled), reference);
    }
}
