use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex;

use super::{DsseError, PseudoMeasurement};
use crate::grid::{BusId, NetworkModel};
use crate::linalg::{Cholesky, DenseMatrix};
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RowKind {
    PmuVoltage,
    PseudoInjection,
    ZeroInjection,
    SlackReference,
}

impl fmt::Display for RowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowKind::PmuVoltage => "pmu_voltage",
            RowKind::PseudoInjection => "pseudo_injection",
            RowKind::ZeroInjection => "zero_injection",
            RowKind::SlackReference => "slack_reference",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Component {
    Re,
    Im,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowMeta {
    pub kind: RowKind,
    pub bus: usize,
    pub node: BusId,
    pub component: Component,
}

/// Measurement standard deviations, per unit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSigmas<T> {
    /// Per rectangular component of a PMU voltage.
    pub pmu_voltage: T,
    pub zero_injection: T,
    /// Optional soft constraint pinning the slack voltage to 1∠0.
    pub slack_reference: Option<T>,
}

impl<T: Real> Default for ModelSigmas<T> {
    fn default() -> Self {
        Self {
            pmu_voltage: T::lit(1e-3),
            zero_injection: T::lit(1e-6),
            slack_reference: None,
        }
    }
}

/// Aggregated pseudo-measurement rows of one bus.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoNode<T> {
    pub bus: usize,
    pub node: BusId,
    pub s: Complex<T>,
    pub sigma_power: T,
    /// Index of the real-part row; the imaginary part follows.
    pub row: usize,
}

/// Factored normal-equation solver for one weight vector.
#[derive(Clone, Debug, PartialEq)]
pub struct GainSolver<T> {
    pub weights: Vec<T>,
    pub gain: DenseMatrix<T>,
    pub factor: Cholesky<T>,
}

impl<T: Real> GainSolver<T> {
    pub(crate) fn new(h: &DenseMatrix<T>, weights: Vec<T>) -> Result<Self, Vec<usize>> {
        let gain = h.weighted_gram(&weights);
        let factor = Cholesky::factor(&gain).map_err(|d| d.columns)?;
        Ok(Self {
            weights,
            gain,
            factor,
        })
    }
}

/// Constant linear measurement model of the branch-current estimator.
///
/// State layout: `[Vs_re, Vs_im, i0_re, i0_im, i1_re, i1_im, ...]` with
/// branch index order from the network.
#[derive(Clone, Debug)]
pub struct MeasurementModel<T> {
    network: NetworkModel<T>,
    h: DenseMatrix<T>,
    rows: Vec<RowMeta>,
    pmu_nodes: Vec<BusId>,
    pmu_buses: Vec<usize>,
    pseudo_nodes: Vec<PseudoNode<T>>,
    zero_rows: Vec<usize>,
    slack_row: Option<usize>,
    sigmas: ModelSigmas<T>,
    solver: GainSolver<T>,
}

pub fn state_dim(branches: usize) -> usize {
    2 + 2 * branches
}

pub fn i_re_col(branch: usize) -> usize {
    2 + 2 * branch
}

pub fn i_im_col(branch: usize) -> usize {
    3 + 2 * branch
}

/// Human-readable name of a state column.
pub fn state_label<T: Real>(network: &NetworkModel<T>, col: usize) -> String {
    match col {
        0 => "slack_v_re".into(),
        1 => "slack_v_im".into(),
        _ => {
            let b = &network.branches()[(col - 2) / 2];
            let part = if col % 2 == 0 { "re" } else { "im" };
            format!("i_{part}[{} {}->{}]", b.id, b.from, b.to)
        }
    }
}

pub fn build_model<T: Real>(
    network: &NetworkModel<T>,
    pmu_nodes: &[BusId],
    pseudos: &[PseudoMeasurement<T>],
    sigmas: ModelSigmas<T>,
) -> Result<MeasurementModel<T>, DsseError> {
    for s in [Some(sigmas.pmu_voltage), Some(sigmas.zero_injection), sigmas.slack_reference]
        .into_iter()
        .flatten()
    {
        if !(s > T::zero() && s.is_finite()) {
            return Err(DsseError::InvalidSigma(s.to_f64_lossy()));
        }
    }
    let n = state_dim(network.branch_count());
    let bus = |node: &BusId| {
        network
            .bus_index(node)
            .ok_or_else(|| DsseError::UnknownBus(node.clone()))
    };

    let mut pmu_buses = Vec::with_capacity(pmu_nodes.len());
    for node in pmu_nodes {
        let b = bus(node)?;
        if pmu_buses.contains(&b) {
            return Err(DsseError::DuplicatePmu(node.clone()));
        }
        pmu_buses.push(b);
    }

    let mut aggregated: BTreeMap<usize, (Complex<T>, T)> = BTreeMap::new();
    for p in pseudos {
        let b = bus(&p.node)?;
        if b == network.slack_index() {
            return Err(DsseError::PseudoAtSlack(p.node.clone()));
        }
        if !(p.sigma_power >= T::zero()) || !p.s.re.is_finite() || !p.s.im.is_finite() {
            return Err(DsseError::InvalidSigma(p.sigma_power.to_f64_lossy()));
        }
        let e = aggregated
            .entry(b)
            .or_insert((Complex::new(T::zero(), T::zero()), T::zero()));
        e.0 += p.s;
        e.1 += p.sigma_power * p.sigma_power;
    }

    let mut data: Vec<T> = Vec::new();
    let mut rows: Vec<RowMeta> = Vec::new();
    let mut weights: Vec<T> = Vec::new();
    let mut push_row = |coeffs: Vec<(usize, T)>, meta: RowMeta, sigma: T| {
        let mut r = vec![T::zero(); n];
        for (c, v) in coeffs {
            r[c] += v;
        }
        data.extend(r);
        rows.push(meta);
        weights.push(T::one() / (sigma * sigma));
        rows.len() - 1
    };
    let meta = |kind, bus: usize, component| RowMeta {
        kind,
        bus,
        node: network.buses()[bus].clone(),
        component,
    };

    for &k in &pmu_buses {
        let mut re = vec![(0, T::one())];
        let mut im = vec![(1, T::one())];
        for bi in network.path_to_slack(k) {
            let z = network.branches()[bi].z;
            re.push((i_re_col(bi), -z.re));
            re.push((i_im_col(bi), z.im));
            im.push((i_re_col(bi), -z.im));
            im.push((i_im_col(bi), -z.re));
        }
        push_row(re, meta(RowKind::PmuVoltage, k, Component::Re), sigmas.pmu_voltage);
        push_row(im, meta(RowKind::PmuVoltage, k, Component::Im), sigmas.pmu_voltage);
    }

    // Net injected current = sum of child branch currents - parent branch current.
    let injection = |k: usize, part: Component| -> Vec<(usize, T)> {
        let col = |b| match part {
            Component::Re => i_re_col(b),
            Component::Im => i_im_col(b),
        };
        let mut c: Vec<(usize, T)> = network.child_branches(k).iter().map(|&b| (col(b), T::one())).collect();
        if let Some(p) = network.parent_branch(k) {
            c.push((col(p), -T::one()));
        }
        c
    };

    let mut pseudo_nodes = Vec::new();
    for (&k, &(s, var)) in &aggregated {
        let sigma = var.sqrt();
        // A zero-power pseudo carries no spread; treat it as an exact zero injection.
        let sigma_row = if sigma > T::zero() { sigma } else { sigmas.zero_injection };
        let row = push_row(injection(k, Component::Re), meta(RowKind::PseudoInjection, k, Component::Re), sigma_row);
        push_row(injection(k, Component::Im), meta(RowKind::PseudoInjection, k, Component::Im), sigma_row);
        pseudo_nodes.push(PseudoNode {
            bus: k,
            node: network.buses()[k].clone(),
            s,
            sigma_power: sigma,
            row,
        });
    }

    let mut zero_rows = Vec::new();
    for &k in network.bus_order() {
        if network.is_junction(k) && !aggregated.contains_key(&k) {
            zero_rows.push(push_row(
                injection(k, Component::Re),
                meta(RowKind::ZeroInjection, k, Component::Re),
                sigmas.zero_injection,
            ));
            push_row(
                injection(k, Component::Im),
                meta(RowKind::ZeroInjection, k, Component::Im),
                sigmas.zero_injection,
            );
        }
    }

    let slack_row = sigmas.slack_reference.map(|sigma| {
        let k = network.slack_index();
        let r = push_row(vec![(0, T::one())], meta(RowKind::SlackReference, k, Component::Re), sigma);
        push_row(vec![(1, T::one())], meta(RowKind::SlackReference, k, Component::Im), sigma);
        r
    });

    let h = DenseMatrix::from_rows(rows.len(), n, data);
    let solver = GainSolver::new(&h, weights).map_err(|cols| DsseError::Unobservable {
        directions: cols.iter().map(|&c| state_label(network, c)).collect(),
    })?;

    Ok(MeasurementModel {
        network: network.clone(),
        h,
        rows,
        pmu_nodes: pmu_nodes.to_vec(),
        pmu_buses,
        pseudo_nodes,
        zero_rows,
        slack_row,
        sigmas,
        solver,
    })
}

impl<T: Real> MeasurementModel<T> {
    pub fn network(&self) -> &NetworkModel<T> {
        &self.network
    }

    pub fn h(&self) -> &DenseMatrix<T> {
        &self.h
    }

    pub fn weights(&self) -> &[T] {
        &self.solver.weights
    }

    pub fn gain(&self) -> &DenseMatrix<T> {
        &self.solver.gain
    }

    pub fn factor(&self) -> &Cholesky<T> {
        &self.solver.factor
    }

    pub fn solver(&self) -> &GainSolver<T> {
        &self.solver
    }

    pub fn rows(&self) -> &[RowMeta] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn state_dim(&self) -> usize {
        self.h.cols()
    }

    pub fn pmu_nodes(&self) -> &[BusId] {
        &self.pmu_nodes
    }

    pub fn pmu_buses(&self) -> &[usize] {
        &self.pmu_buses
    }

    /// Row of the real part of PMU `slot`; the imaginary part follows.
    pub fn pmu_row(&self, slot: usize) -> usize {
        2 * slot
    }

    pub fn pseudo_nodes(&self) -> &[PseudoNode<T>] {
        &self.pseudo_nodes
    }

    pub fn zero_injection_rows(&self) -> &[usize] {
        &self.zero_rows
    }

    pub fn slack_row(&self) -> Option<usize> {
        self.slack_row
    }

    pub fn sigmas(&self) -> &ModelSigmas<T> {
        &self.sigmas
    }

    pub fn slot_of(&self, node: &str) -> Option<usize> {
        self.pmu_nodes.iter().position(|n| n == node)
    }

    /// Refactors the gain with PMU row variances scaled per slot.
    pub fn solver_with_pmu_scale(&self, variance_scale: &[T]) -> Result<GainSolver<T>, DsseError> {
        assert_eq!(variance_scale.len(), self.pmu_nodes.len());
        let mut w = self.solver.weights.clone();
        for (slot, &f) in variance_scale.iter().enumerate() {
            let r = self.pmu_row(slot);
            w[r] /= f;
            w[r + 1] /= f;
        }
        GainSolver::new(&self.h, w).map_err(|cols| DsseError::Unobservable {
            directions: cols.iter().map(|&c| state_label(&self.network, c)).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::parse_network;

    fn two_bus() -> NetworkModel<f64> {
        parse_network(
            r#"{"schema_version":1,"base_voltage":1000,"base_power":1e6,"slack":"0",
                "buses":["0","1"],"branches":[{"id":"b","from":"0","to":"1","r":0.01,"x":0.02}],
                "loads":[{"node":"1","p":0.5,"q":0.2}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn two_bus_is_four_by_four_full_rank() {
        let net = two_bus();
        let m = build_model(
            &net,
            &["1".into()],
            &[PseudoMeasurement::new("1", Complex::new(0.5, 0.2))],
            ModelSigmas::default(),
        )
        .unwrap();
        assert_eq!((m.h().rows(), m.h().cols()), (4, 4));
        assert_eq!(m.h().row(0), &[1.0, 0.0, -0.01, 0.02]);
        assert_eq!(m.h().row(1), &[0.0, 1.0, -0.02, -0.01]);
        assert_eq!(m.h().row(2), &[0.0, 0.0, -1.0, 0.0]);
    }

    #[test]
    fn no_pmu_no_slack_constraint_is_unobservable() {
        let net = two_bus();
        let err = build_model(
            &net,
            &[],
            &[PseudoMeasurement::new("1", Complex::new(0.5, 0.2))],
            ModelSigmas::default(),
        )
        .unwrap_err();
        let DsseError::Unobservable { directions } = err else {
            panic!("{err:?}")
        };
        assert_eq!(directions, vec!["slack_v_re".to_string(), "slack_v_im".to_string()]);
    }

    #[test]
    fn slack_reference_restores_observability() {
        let net = two_bus();
        let sig = ModelSigmas {
            slack_reference: Some(1e-6),
            ..ModelSigmas::default()
        };
        let m = build_model(&net, &[], &[PseudoMeasurement::new("1", Complex::new(0.5, 0.2))], sig).unwrap();
        assert_eq!(m.slack_row(), Some(2));
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = two_bus();
        let e = build_model(&net, &["9".into()], &[], ModelSigmas::default()).unwrap_err();
        assert!(matches!(e, DsseError::UnknownBus(_)));
        let e = build_model(&net, &["1".into(), "1".into()], &[], ModelSigmas::default()).unwrap_err();
        assert!(matches!(e, DsseError::DuplicatePmu(_)));
        let e = build_model(
            &net,
            &["1".into()],
            &[PseudoMeasurement::new("0", Complex::new(0.5, 0.2))],
            ModelSigmas::default(),
        )
        .unwrap_err();
        assert!(matches!(e, DsseError::PseudoAtSlack(_)));
    }
}
