#![allow(dead_code)]

use std::path::PathBuf;

use adsse_core::config::LoadedScenario;
use adsse_core::dsse::{build_model, pseudos_from_network, MeasurementModel, ModelSigmas};
use adsse_core::grid::{BranchRecord, GenRecord, LoadRecord, NetworkFile, NetworkModel, NETWORK_SCHEMA_VERSION};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/ieee13")
}

pub fn scenario(name: &str) -> LoadedScenario {
    LoadedScenario::from_path(scenario_dir().join(name)).unwrap()
}

pub fn feeder() -> NetworkModel<f64> {
    adsse_core::grid::load_network(scenario_dir().join("network.json")).unwrap()
}

/// Random radial feeder: bus k hangs off a random earlier bus.
pub fn random_network(rng: &mut impl Rng, buses: usize, with_gen: bool) -> NetworkFile {
    let names: Vec<String> = (0..buses).map(|i| format!("n{i}")).collect();
    let branches = (1..buses)
        .map(|k| BranchRecord {
            id: format!("b{k}"),
            from: names[rng.gen_range(0..k)].clone(),
            to: names[k].clone(),
            r: rng.gen_range(0.002..0.02),
            x: rng.gen_range(0.002..0.02),
        })
        .collect();
    let mut loads = Vec::new();
    for name in &names[1..] {
        if rng.gen_bool(0.8) {
            loads.push(LoadRecord {
                node: name.clone(),
                p: rng.gen_range(0.0..0.08),
                q: rng.gen_range(-0.01..0.04),
                breaker: None,
            });
        }
    }
    let generators = if with_gen && buses > 1 {
        vec![GenRecord {
            node: names[rng.gen_range(1..buses)].clone(),
            p: rng.gen_range(0.0..0.05),
            q: 0.0,
        }]
    } else {
        Vec::new()
    };
    NetworkFile {
        schema_version: NETWORK_SCHEMA_VERSION,
        name: None,
        base_voltage: 4160.0,
        base_power: 5.0e6,
        slack: names[0].clone(),
        buses: names,
        branches,
        loads,
        generators,
    }
}

/// Newton-Raphson in rectangular coordinates on the bus admittance matrix,
/// slack at 1∠0 and every other bus PQ with the given net consumption.
pub fn newton_raphson(net: &NetworkModel<f64>, demand: &[Complex64]) -> Vec<Complex64> {
    let n = net.bus_count();
    let slack = net.slack_index();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for (bi, b) in net.branches().iter().enumerate() {
        let (f, t) = (net.branch_from(bi), net.branch_to(bi));
        let yb = 1.0 / b.z;
        y[f][f] += yb;
        y[t][t] += yb;
        y[f][t] -= yb;
        y[t][f] -= yb;
    }
    let pq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let m = pq.len();
    let mut v = vec![Complex64::new(1.0, 0.0); n];
    for _ in 0..50 {
        let current: Vec<Complex64> = (0..n).map(|i| (0..n).map(|j| y[i][j] * v[j]).sum()).collect();
        let mut f = DVector::zeros(2 * m);
        for (r, &i) in pq.iter().enumerate() {
            // Injected power plus consumption must vanish.
            let mis = v[i] * current[i].conj() + demand[i];
            f[2 * r] = mis.re;
            f[2 * r + 1] = mis.im;
        }
        if f.amax() < 1e-13 {
            break;
        }
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        let j = Complex64::new(0.0, 1.0);
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pq.iter().enumerate() {
                let mut d_e = v[i] * y[i][k].conj();
                let mut d_f = -j * v[i] * y[i][k].conj();
                if i == k {
                    d_e += current[i].conj();
                    d_f += j * current[i].conj();
                }
                jac[(2 * r, 2 * c)] = d_e.re;
                jac[(2 * r + 1, 2 * c)] = d_e.im;
                jac[(2 * r, 2 * c + 1)] = d_f.re;
                jac[(2 * r + 1, 2 * c + 1)] = d_f.im;
            }
        }
        let dx = jac.lu().solve(&(-f)).expect("nonsingular Jacobian");
        for (c, &k) in pq.iter().enumerate() {
            v[k] += Complex64::new(dx[2 * c], dx[2 * c + 1]);
        }
    }
    v
}

/// x = (HᵀWH)⁻¹ HᵀW z in exact rational arithmetic. Every f64 input is a
/// rational, so the only rounding is the final conversion back.
pub fn exact_normal_equations(m: &MeasurementModel<f64>, z: &[f64]) -> Vec<f64> {
    let q = |v: f64| BigRational::from_float(v).expect("finite");
    let h = m.h();
    let (rows, n) = (h.rows(), h.cols());
    let hq: Vec<Vec<BigRational>> = (0..rows).map(|r| (0..n).map(|c| q(h.get(r, c))).collect()).collect();
    let w: Vec<BigRational> = m.weights().iter().map(|&v| q(v)).collect();
    let zq: Vec<BigRational> = z.iter().map(|&v| q(v)).collect();
    // Augmented [G | HᵀWz].
    let mut a = vec![vec![BigRational::zero(); n + 1]; n];
    for r in 0..rows {
        for i in 0..n {
            if hq[r][i].is_zero() {
                continue;
            }
            let wi = &w[r] * &hq[r][i];
            for j in 0..n {
                if !hq[r][j].is_zero() {
                    a[i][j] += &wi * &hq[r][j];
                }
            }
            a[i][n] += &wi * &zq[r];
        }
    }
    for col in 0..n {
        let p = (col..n).find(|&r| !a[r][col].is_zero()).expect("nonsingular gain");
        a.swap(col, p);
        let pivot = a[col][col].clone();
        for j in col..=n {
            a[col][j] = &a[col][j] / &pivot;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for j in col..=n {
                    let t = &f * &a[col][j];
                    a[r][j] -= t;
                }
            }
        }
    }
    a.iter().map(|row| row[n].to_f64().unwrap()).collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).fold(0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = b.iter().fold(0f64, |m, y| m.max(y.abs()));
    diff / scale
}

pub fn random_model(rng: &mut ChaCha8Rng) -> MeasurementModel<f64> {
    let buses = rng.gen_range(2..=6);
    let with_gen = rng.gen_bool(0.5);
    let net: NetworkModel<f64> = random_network(rng, buses, with_gen).into_model().unwrap();
    let mut nodes: Vec<String> = net.buses().to_vec();
    nodes.shuffle(rng);
    nodes.truncate(rng.gen_range(1..=buses.min(3)));
    let pseudos = pseudos_from_network(&net, rng.gen_range(0.1..0.4));
    build_model(&net, &nodes, &pseudos, ModelSigmas::default()).unwrap()
}

pub fn random_z(rng: &mut ChaCha8Rng, m: &MeasurementModel<f64>) -> Vec<f64> {
    let pmus: Vec<Complex64> = (0..m.pmu_nodes().len())
        .map(|_| Complex64::from_polar(rng.gen_range(0.95..1.02), rng.gen_range(-0.05..0.0)))
        .collect();
    let v_ref: Vec<Complex64> = (0..m.network().bus_count())
        .map(|_| Complex64::from_polar(rng.gen_range(0.95..1.02), rng.gen_range(-0.05..0.0)))
        .collect();
    m.measurement_vector(&pmus, &v_ref).unwrap()
}

/// Bit-at-a-time CRC-CCITT (0x1021, init 0xFFFF, MSB first).
pub fn crc_bitwise(bytes: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &b in bytes {
        for i in (0..8).rev() {
            let bit = (b >> i) & 1;
            let top = (crc >> 15) as u8 & 1;
            crc <<= 1;
            if top ^ bit == 1 {
                crc ^= 0x1021;
            }
        }
    }
    crc
}
