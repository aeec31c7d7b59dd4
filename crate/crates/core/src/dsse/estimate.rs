use num_complex::Complex;

use super::model::{i_im_col, i_re_col, GainSolver, MeasurementModel, RowKind};
use super::{power_to_current_pseudo, DsseError, PseudoMeasurement};
use crate::Real;

/// Estimated slack voltage and branch currents, per unit.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T> {
    pub slack_voltage: Complex<T>,
    /// Indexed like the network's branches.
    pub branch_currents: Vec<Complex<T>>,
}

impl<T: Real> StateVector<T> {
    pub fn from_slice(x: &[T]) -> Self {
        assert!(x.len() >= 2 && x.len() % 2 == 0);
        let branches = (x.len() - 2) / 2;
        Self {
            slack_voltage: Complex::new(x[0], x[1]),
            branch_currents: (0..branches)
                .map(|b| Complex::new(x[i_re_col(b)], x[i_im_col(b)]))
                .collect(),
        }
    }

    pub fn to_vec(&self) -> Vec<T> {
        let mut x = vec![self.slack_voltage.re, self.slack_voltage.im];
        for i in &self.branch_currents {
            x.push(i.re);
            x.push(i.im);
        }
        x
    }
}

/// One estimator execution.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate<T> {
    pub z: Vec<T>,
    pub state: StateVector<T>,
    /// Per bus, in network bus order.
    pub voltages: Vec<Complex<T>>,
    /// `z − H·x̂`.
    pub residuals: Vec<T>,
}

/// Solves the weighted normal equations with the stored factor plus one
/// step of iterative refinement against the measurement-space residual.
pub fn solve_normal_equations<T: Real>(
    model: &MeasurementModel<T>,
    solver: &GainSolver<T>,
    z: &[T],
) -> Result<Vec<T>, DsseError> {
    if z.len() != model.row_count() {
        return Err(DsseError::Dimension {
            expected: model.row_count(),
            got: z.len(),
        });
    }
    if let Some(row) = z.iter().position(|v| !v.is_finite()) {
        return Err(DsseError::NonFinite {
            row,
            kind: model.rows()[row].kind,
            node: model.rows()[row].node.clone(),
        });
    }
    let h = model.h();
    let mut x = h.weighted_transpose_mul(&solver.weights, z);
    solver.factor.solve_in_place(&mut x);
    let hx = h.mul_vec(&x);
    let r: Vec<T> = z.iter().zip(&hx).map(|(&a, &b)| a - b).collect();
    let mut dx = h.weighted_transpose_mul(&solver.weights, &r);
    solver.factor.solve_in_place(&mut dx);
    for (xi, d) in x.iter_mut().zip(dx) {
        *xi += d;
    }
    Ok(x)
}

impl<T: Real> MeasurementModel<T> {
    /// Assembles `z` from PMU voltages (one per slot) and per-bus pseudo reference voltages.
    pub fn measurement_vector(
        &self,
        pmu_voltages: &[Complex<T>],
        v_ref: &[Complex<T>],
    ) -> Result<Vec<T>, DsseError> {
        if pmu_voltages.len() != self.pmu_nodes().len() {
            return Err(DsseError::Dimension {
                expected: self.pmu_nodes().len(),
                got: pmu_voltages.len(),
            });
        }
        assert_eq!(v_ref.len(), self.network().bus_count());
        let mut z = vec![T::zero(); self.row_count()];
        for (slot, v) in pmu_voltages.iter().enumerate() {
            let r = self.pmu_row(slot);
            z[r] = v.re;
            z[r + 1] = v.im;
        }
        for p in self.pseudo_nodes() {
            let pm = PseudoMeasurement {
                node: p.node.clone(),
                s: p.s,
                sigma_power: p.sigma_power,
            };
            let (i, _) = power_to_current_pseudo(&pm, v_ref[p.bus])?;
            z[p.row] = i.re;
            z[p.row + 1] = i.im;
        }
        if let Some(r) = self.slack_row() {
            z[r] = T::one();
        }
        Ok(z)
    }

    /// Runs one WLS solve for an assembled measurement vector.
    pub fn estimate_z(&self, solver: &GainSolver<T>, z: Vec<T>) -> Result<Estimate<T>, DsseError> {
        let x = solve_normal_equations(self, solver, &z)?;
        let hx = self.h().mul_vec(&x);
        let residuals = z.iter().zip(&hx).map(|(&a, &b)| a - b).collect();
        let state = StateVector::from_slice(&x);
        let voltages = self
            .network()
            .voltages_from_currents(state.slack_voltage, &state.branch_currents);
        Ok(Estimate {
            z,
            state,
            voltages,
            residuals,
        })
    }

    /// Estimate with the stored gain and pseudo rows linearized at `v_ref`.
    pub fn estimate(
        &self,
        pmu_voltages: &[Complex<T>],
        v_ref: &[Complex<T>],
    ) -> Result<Estimate<T>, DsseError> {
        let z = self.measurement_vector(pmu_voltages, v_ref)?;
        self.estimate_z(self.solver(), z)
    }

    /// Flat-start estimate followed by one relinearization of the pseudo rows
    /// at the first pass's voltages. Depends only on `pmu_voltages`.
    pub fn estimate_self_refined(
        &self,
        solver: &GainSolver<T>,
        pmu_voltages: &[Complex<T>],
    ) -> Result<Estimate<T>, DsseError> {
        let flat = vec![Complex::new(T::one(), T::zero()); self.network().bus_count()];
        let first = self.estimate_z(solver, self.measurement_vector(pmu_voltages, &flat)?)?;
        self.estimate_z(solver, self.measurement_vector(pmu_voltages, &first.voltages)?)
    }

    /// `Hᵀ·W·r` in max norm, relative to `Hᵀ·W·z`.
    pub fn orthogonality(&self, solver: &GainSolver<T>, est: &Estimate<T>) -> (T, T) {
        let hr = self.h().weighted_transpose_mul(&solver.weights, &est.residuals);
        let hz = self.h().weighted_transpose_mul(&solver.weights, &est.z);
        let inf = |v: &[T]| v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        (inf(&hr), inf(&hz))
    }

    /// Estimated injection current at each zero-injection bus.
    pub fn zero_injection_currents(&self, est: &Estimate<T>) -> Vec<(usize, Complex<T>)> {
        self.zero_injection_rows()
            .iter()
            .map(|&r| {
                let hx_re = est.z[r] - est.residuals[r];
                let hx_im = est.z[r + 1] - est.residuals[r + 1];
                (self.rows()[r].bus, Complex::new(hx_re, hx_im))
            })
            .collect()
    }

    /// Estimated voltage at each PMU bus recomputed from the rows, for
    /// cross-checking the traversal.
    pub fn pmu_fitted(&self, est: &Estimate<T>) -> Vec<Complex<T>> {
        (0..self.pmu_nodes().len())
            .map(|slot| {
                let r = self.pmu_row(slot);
                debug_assert_eq!(self.rows()[r].kind, RowKind::PmuVoltage);
                Complex::new(est.z[r] - est.residuals[r], est.z[r + 1] - est.residuals[r + 1])
            })
            .collect()
    }
}
