use num_complex::Complex;

use super::DsseError;
use crate::grid::{BusId, NetworkModel};
use crate::Real;

/// Default relative uncertainty of scheduled power.
pub const DEFAULT_PSEUDO_FRACTION: f64 = 0.2;

/// Scheduled power at a load or generator node, used as a low-weight prior.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoMeasurement<T> {
    pub node: BusId,
    /// Consumed power, per unit. Generation is negative.
    pub s: Complex<T>,
    pub sigma_power: T,
}

impl<T: Real> PseudoMeasurement<T> {
    pub fn new(node: impl Into<BusId>, s: Complex<T>) -> Self {
        Self::with_fraction(node, s, T::lit(DEFAULT_PSEUDO_FRACTION))
    }

    pub fn with_fraction(node: impl Into<BusId>, s: Complex<T>, fraction: T) -> Self {
        Self {
            node: node.into(),
            s,
            sigma_power: fraction * s.norm(),
        }
    }
}

/// One pseudo per scheduled load (at nominal, breaker state unknown to the
/// estimator) and per generator (as negative consumption).
pub fn pseudos_from_network<T: Real>(
    network: &NetworkModel<T>,
    fraction: T,
) -> Vec<PseudoMeasurement<T>> {
    let loads = network
        .loads()
        .iter()
        .map(|l| PseudoMeasurement::with_fraction(l.node.clone(), l.s_nominal, fraction));
    let gens = network
        .generators()
        .iter()
        .map(|g| PseudoMeasurement::with_fraction(g.node.clone(), -g.s, fraction));
    loads.chain(gens).collect()
}

/// Minimum reference voltage magnitude accepted for linearization.
pub const MIN_REFERENCE_VOLTAGE: f64 = 0.5;

/// Equivalent injected current and its per-component sigma at `v_ref`.
pub fn power_to_current_pseudo<T: Real>(
    p: &PseudoMeasurement<T>,
    v_ref: Complex<T>,
) -> Result<(Complex<T>, T), DsseError> {
    let mag = v_ref.norm();
    if !(mag >= T::lit(MIN_REFERENCE_VOLTAGE)) {
        return Err(DsseError::DegenerateVoltage {
            node: p.node.clone(),
            magnitude: mag.to_f64_lossy(),
        });
    }
    Ok((-(p.s / v_ref).conj(), p.sigma_power / mag))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_voltage_consumption() {
        let p = PseudoMeasurement::new("1", Complex::new(1.0, 0.0));
        let (i, sigma) = power_to_current_pseudo(&p, Complex::new(1.0, 0.0)).unwrap();
        assert_eq!(i, Complex::new(-1.0, 0.0));
        assert_eq!(sigma, p.sigma_power);
    }

    #[test]
    fn zero_power_gives_zero_current() {
        let p = PseudoMeasurement::new("1", Complex::new(0.0, 0.0));
        let (i, _) = power_to_current_pseudo(&p, Complex::from_polar(0.93, 0.4)).unwrap();
        assert_eq!(i.norm(), 0.0);
    }

    #[test]
    fn collapsed_voltage_rejected() {
        let p = PseudoMeasurement::new("1", Complex::new(0.1, 0.0));
        assert!(matches!(
            power_to_current_pseudo(&p, Complex::new(0.3, 0.0)),
            Err(DsseError::DegenerateVoltage { .. })
        ));
    }
}
