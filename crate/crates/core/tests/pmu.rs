use adsse_core::grid::GroundTruthSeries;
use adsse_core::pmu::{emulate_stream, PmuConfig, PmuError};
use adsse_core::time::FRAME_PERIOD_US;
use adsse_core::Timestamp;
use num_complex::Complex;

fn flat_truth(steps: usize, v: Complex<f64>, freq: f64, rocof: f64) -> GroundTruthSeries<f64> {
    let t0 = Timestamp::new(1_451_606_400, 0);
    GroundTruthSeries {
        buses: vec!["650".into(), "31".into()],
        timestamps: (0..steps).map(|k| t0.offset_micros(k as i64 * FRAME_PERIOD_US)).collect(),
        voltages: vec![vec![Complex::new(1.0, 0.0), v]; steps],
        frequency: vec![freq; steps],
        rocof: vec![rocof; steps],
    }
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn phasor_noise_level_and_bias() {
    let n = 100_000;
    let v = Complex::from_polar(1.0, -0.2);
    let truth = flat_truth(n, v, 50.0, 0.0);
    let samples = emulate_stream(&truth, &PmuConfig::new(31, "31"), 7).unwrap();
    assert_eq!(samples.len(), n);
    // 70 dB on the phasor power, half of it per rectangular component.
    let sigma = 10f64.powf(-70.0 / 20.0) / 2f64.sqrt();
    assert!((sigma - 2.236e-4).abs() < 1e-7);
    for part in [|c: Complex<f64>| c.re, |c: Complex<f64>| c.im] {
        let (mean, std) = mean_std(samples.iter().map(|s| part(s.v - v)));
        assert!((std / sigma - 1.0).abs() < 0.05, "std {std} vs {sigma}");
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt(), "bias {mean}");
    }
}

#[test]
fn frequency_and_rocof_noise() {
    let truth = flat_truth(1250, Complex::new(1.0, 0.0), 50.0, 0.0);
    let samples = emulate_stream(&truth, &PmuConfig::new(31, "31"), 3).unwrap();
    assert!(samples.iter().all(|s| (s.freq - 50.0).abs() < 5.0 * 0.001));
    assert!(samples.iter().all(|s| s.rocof.abs() < 5.0 * 0.01));
}

#[test]
fn noiseless_is_truth_and_timestamps_are_exact() {
    let v = Complex::new(0.97, -0.03);
    let truth = flat_truth(500, v, 49.9, -0.4);
    let samples = emulate_stream(&truth, &PmuConfig::new(31, "31").noiseless(), 1).unwrap();
    for (s, t) in samples.iter().zip(&truth.timestamps) {
        assert_eq!(s.timestamp, *t);
        assert_eq!((s.v, s.freq, s.rocof), (v, 49.9, -0.4));
    }
}

#[test]
fn same_seed_same_stream() {
    let truth = flat_truth(300, Complex::new(1.0, 0.0), 50.0, 0.0);
    let cfg = PmuConfig::new(31, "31");
    let a = emulate_stream(&truth, &cfg, 42).unwrap();
    assert_eq!(a, emulate_stream(&truth, &cfg, 42).unwrap());
    assert_ne!(a, emulate_stream(&truth, &cfg, 43).unwrap());
}

#[test]
fn unknown_node_is_an_error() {
    let truth = flat_truth(10, Complex::new(1.0, 0.0), 50.0, 0.0);
    let err = emulate_stream(&truth, &PmuConfig::new(31, "999"), 0).unwrap_err();
    assert!(matches!(err, PmuError::UnknownNode(n) if n == "999"));
}
