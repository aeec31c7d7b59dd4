use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_complex::Complex;

use super::estimate::Estimate;
use super::model::{GainSolver, MeasurementModel, RowKind};
use super::DsseError;
use crate::time::Timestamp;
use crate::vo::VoMeasurement;
use crate::Real;

/// Where pseudo-measurement rows get their linearization voltage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PseudoReference {
    /// Flat start then one relinearization pass, per snapshot.
    #[default]
    SelfRefined,
    /// Always 1∠0.
    Flat,
    /// Voltages of the previous snapshot of the same run (flat at start).
    PreviousSnapshot,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoordinatorOptions {
    pub reference: PseudoReference,
    /// Held PMU rows get variance × (1 + (factor − 1)·age_frames). 1 disables.
    pub held_variance_inflation: f64,
}

impl Default for CoordinatorOptions {
    fn default() -> Self {
        Self {
            reference: PseudoReference::SelfRefined,
            held_variance_inflation: 1.0,
        }
    }
}

/// One DSSE execution at a tick timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimationSnapshot<T> {
    pub timestamp: Timestamp,
    pub estimate: Estimate<T>,
    /// Frames each PMU value has been held, per slot.
    pub ages: Vec<u32>,
}

impl<T> EstimationSnapshot<T> {
    pub fn all_fresh(&self) -> bool {
        self.ages.iter().all(|&a| a == 0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CoordinatorStats {
    pub received: u64,
    pub ticks: u64,
    /// Ticks dropped because some PMU had not delivered anything yet.
    pub skipped_ticks: u64,
    /// Measurements not newer than the previous one from the same VO.
    pub stale: u64,
    pub refactorizations: u64,
}

/// Aligns multi-rate VO streams and runs the estimator at every timestamp
/// any VO delivered, holding the last value of slower streams.
///
/// A tick is closed once every VO has delivered a measurement at or after it,
/// so the result does not depend on how the per-VO streams interleave.
pub struct Coordinator<T> {
    model: Arc<MeasurementModel<T>>,
    opts: CoordinatorOptions,
    pending: BTreeMap<Timestamp, Vec<Option<Complex<T>>>>,
    held: Vec<Option<(Timestamp, Complex<T>)>>,
    last_received: Vec<Option<Timestamp>>,
    previous: Option<Vec<Complex<T>>>,
    solvers: HashMap<Vec<u32>, GainSolver<T>>,
    stats: CoordinatorStats,
}

impl<T: Real> Coordinator<T> {
    pub fn new(model: Arc<MeasurementModel<T>>, opts: CoordinatorOptions) -> Result<Self, DsseError> {
        let f = opts.held_variance_inflation;
        if !(f >= 1.0 && f.is_finite()) {
            return Err(DsseError::InvalidSigma(f));
        }
        let slots = model.pmu_nodes().len();
        Ok(Self {
            model,
            opts,
            pending: BTreeMap::new(),
            held: vec![None; slots],
            last_received: vec![None; slots],
            previous: None,
            solvers: HashMap::new(),
            stats: CoordinatorStats::default(),
        })
    }

    pub fn model(&self) -> &MeasurementModel<T> {
        &self.model
    }

    pub fn stats(&self) -> CoordinatorStats {
        self.stats
    }

    /// Latest timestamp every VO has reached.
    pub fn watermark(&self) -> Option<Timestamp> {
        self.last_received.iter().copied().min().flatten()
    }

    /// Accepts one VO measurement; returns the snapshots it closed.
    pub fn push(&mut self, m: &VoMeasurement) -> Result<Vec<EstimationSnapshot<T>>, DsseError> {
        let slot = self
            .model
            .slot_of(&m.node)
            .ok_or_else(|| DsseError::UnknownVo(m.node.clone()))?;
        if !(m.v_re.is_finite() && m.v_im.is_finite()) {
            return Err(DsseError::NonFinite {
                row: self.model.pmu_row(slot),
                kind: RowKind::PmuVoltage,
                node: m.node.clone(),
            });
        }
        let ts = m.timestamp();
        if self.last_received[slot].is_some_and(|prev| ts <= prev) {
            log::warn!("coordinator: stale measurement from {} at {ts}", m.vo_id);
            self.stats.stale += 1;
            return Ok(Vec::new());
        }
        self.stats.received += 1;
        self.last_received[slot] = Some(ts);
        let v = Complex::new(T::lit(m.v_re), T::lit(m.v_im));
        let slots = self.held.len();
        self.pending.entry(ts).or_insert_with(|| vec![None; slots])[slot] = Some(v);
        match self.watermark() {
            Some(w) => self.drain(|t| t <= w),
            None => Ok(Vec::new()),
        }
    }

    /// Closes every remaining tick.
    pub fn finish(&mut self) -> Result<Vec<EstimationSnapshot<T>>, DsseError> {
        self.drain(|_| true)
    }

    fn drain(&mut self, ready: impl Fn(Timestamp) -> bool) -> Result<Vec<EstimationSnapshot<T>>, DsseError> {
        let mut out = Vec::new();
        while let Some(entry) = self.pending.first_entry() {
            if !ready(*entry.key()) {
                break;
            }
            let (ts, fresh) = entry.remove_entry();
            if let Some(s) = self.tick(ts, fresh)? {
                out.push(s);
            }
        }
        Ok(out)
    }

    fn tick(
        &mut self,
        ts: Timestamp,
        fresh: Vec<Option<Complex<T>>>,
    ) -> Result<Option<EstimationSnapshot<T>>, DsseError> {
        for (slot, v) in fresh.into_iter().enumerate() {
            if let Some(v) = v {
                self.held[slot] = Some((ts, v));
            }
        }
        if self.held.iter().any(Option::is_none) {
            self.stats.skipped_ticks += 1;
            return Ok(None);
        }
        let (values, ages): (Vec<Complex<T>>, Vec<u32>) = self
            .held
            .iter()
            .map(|h| {
                let (t0, v) = h.expect("checked above");
                (v, ts.frames_since(t0) as u32)
            })
            .unzip();

        let model = Arc::clone(&self.model);
        self.prepare_solver(&ages)?;
        let solver = self.solver_for(&ages);
        let estimate = match self.opts.reference {
            PseudoReference::SelfRefined => model.estimate_self_refined(solver, &values)?,
            PseudoReference::Flat | PseudoReference::PreviousSnapshot => {
                let flat = vec![Complex::new(T::one(), T::zero()); model.network().bus_count()];
                let v_ref = match (&self.opts.reference, &self.previous) {
                    (PseudoReference::PreviousSnapshot, Some(prev)) => prev.as_slice(),
                    _ => flat.as_slice(),
                };
                let z = model.measurement_vector(&values, v_ref)?;
                model.estimate_z(solver, z)?
            }
        };
        if self.opts.reference == PseudoReference::PreviousSnapshot {
            self.previous = Some(estimate.voltages.clone());
        }
        self.stats.ticks += 1;
        Ok(Some(EstimationSnapshot {
            timestamp: ts,
            estimate,
            ages,
        }))
    }

    fn uses_base_solver(&self, ages: &[u32]) -> bool {
        self.opts.held_variance_inflation == 1.0 || ages.iter().all(|&a| a == 0)
    }

    fn prepare_solver(&mut self, ages: &[u32]) -> Result<(), DsseError> {
        if self.uses_base_solver(ages) || self.solvers.contains_key(ages) {
            return Ok(());
        }
        let f = self.opts.held_variance_inflation;
        let scale: Vec<T> = ages
            .iter()
            .map(|&a| T::lit(1.0 + (f - 1.0) * a as f64))
            .collect();
        let s = self.model.solver_with_pmu_scale(&scale)?;
        self.stats.refactorizations += 1;
        self.solvers.insert(ages.to_vec(), s);
        Ok(())
    }

    fn solver_for(&self, ages: &[u32]) -> &GainSolver<T> {
        if self.uses_base_solver(ages) {
            self.model.solver()
        } else {
            &self.solvers[ages]
        }
    }
}
