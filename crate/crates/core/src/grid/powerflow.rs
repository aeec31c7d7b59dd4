//! Backward/forward sweep for radial feeders with constant-power loads.

use num_complex::Complex;
use thiserror::Error;

use super::network::{LoadSpec, NetworkError, NetworkModel};
use crate::Real;

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("sweep did not converge after {iterations} iterations (last voltage change {last_change:e} p.u.)")]
    NonConvergence { iterations: usize, last_change: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct SweepOptions<T> {
    /// Stop once the largest per-bus voltage change falls below this, p.u.
    pub tolerance: T,
    pub max_iterations: usize,
}

impl<T: Real> Default for SweepOptions<T> {
    fn default() -> Self {
        // 1e-9 for f64; the f32 floor is a few ulps of 1 p.u.
        let floor = T::epsilon() * T::lit(64.0);
        Self {
            tolerance: T::lit(1e-9).max(floor),
            max_iterations: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerFlowSolution<T> {
    /// Indexed like `NetworkModel::buses`.
    pub voltages: Vec<Complex<T>>,
    /// Indexed like `NetworkModel::branches`, parent→child.
    pub branch_currents: Vec<Complex<T>>,
    pub iterations: usize,
}

/// Solves the feeder with the given loads connected (generators always on),
/// slack fixed at 1∠0 p.u.
pub fn solve_power_flow<'a, T: Real>(
    network: &NetworkModel<T>,
    active_loads: impl IntoIterator<Item = &'a LoadSpec<T>>,
) -> Result<PowerFlowSolution<T>, PowerFlowError> {
    solve_power_flow_with(network, active_loads, &SweepOptions::default())
}

pub fn solve_power_flow_with<'a, T: Real>(
    network: &NetworkModel<T>,
    active_loads: impl IntoIterator<Item = &'a LoadSpec<T>>,
    options: &SweepOptions<T>,
) -> Result<PowerFlowSolution<T>, PowerFlowError> {
    let demand = network.net_demand(active_loads)?;
    sweep(network, &demand, options)
}

/// Sweep against an explicit per-bus net consumption vector.
pub fn sweep<T: Real>(
    network: &NetworkModel<T>,
    demand: &[Complex<T>],
    options: &SweepOptions<T>,
) -> Result<PowerFlowSolution<T>, PowerFlowError> {
    let n = network.bus_count();
    assert_eq!(demand.len(), n);
    let zero = Complex::new(T::zero(), T::zero());
    let one = Complex::new(T::one(), T::zero());
    let slack = network.slack_index();
    let order = network.bus_order();

    let mut v = vec![one; n];
    let mut currents = vec![zero; network.branch_count()];
    let mut last_change = T::infinity();
    for iteration in 1..=options.max_iterations {
        // Backward: leaf-to-root current accumulation.
        for &bus in order.iter().rev() {
            if bus == slack {
                continue;
            }
            let mut j = if demand[bus] == zero {
                zero
            } else {
                (demand[bus] / v[bus]).conj()
            };
            for &child in network.child_branches(bus) {
                j += currents[child];
            }
            currents[network.parent_branch(bus).expect("non-slack parent")] = j;
        }
        // Forward: root-to-leaf voltage drops.
        let next = network.voltages_from_currents(one, &currents);
        last_change = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).norm())
            .fold(T::zero(), |m, d| if d > m || d.is_nan() { d } else { m });
        v = next;
        if !last_change.is_finite() {
            return Err(PowerFlowError::NonConvergence {
                iterations: iteration,
                last_change: f64::NAN,
            });
        }
        if last_change < options.tolerance {
            return Ok(PowerFlowSolution {
                voltages: v,
                branch_currents: currents,
                iterations: iteration,
            });
        }
    }
    Err(PowerFlowError::NonConvergence {
        iterations: options.max_iterations,
        last_change: last_change.to_f64_lossy(),
    })
}
