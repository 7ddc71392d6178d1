//! Per-unit bases and noise levels.
//!
//! All model arithmetic runs in SI (volts, amperes, ohms, henries); per-unit
//! enters only when converting configured noise variances into SI covariances
//! and when reporting metrics. Bases follow the phase-equivalent convention
//! `I_base = S_base / V_base`, `Z_base = V_base^2 / S_base`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-unit system bases.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Bases<T> {
    /// Voltage base in volts.
    pub v_base: T,
    /// Power base in volt-amperes.
    pub s_base: T,
}

impl<T: Scalar> Bases<T> {
    pub fn new(v_base: T, s_base: T) -> Result<Self> {
        if v_base <= T::zero() || s_base <= T::zero() {
            return Err(Error::Parameter("bases must be positive".into()));
        }
        Ok(Self { v_base, s_base })
    }

    pub fn i_base(&self) -> T {
        self.s_base / self.v_base
    }

    pub fn z_base(&self) -> T {
        self.v_base * self.v_base / self.s_base
    }

    pub fn voltage_to_pu(&self, v: T) -> T {
        v / self.v_base
    }

    pub fn current_to_pu(&self, i: T) -> T {
        i / self.i_base()
    }
}

/// Noise levels in per-unit variance plus the RNG seed for reproducible draws.
///
/// `sigma2_x` applies to branch-current measurements, `sigma2_u` to bus-voltage
/// measurements, `sigma2_q` to the state-transition process noise. Zero values
/// are allowed for noiseless generation; model weight matrices require strictly
/// positive measurement variances.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NoiseSpec<T> {
    pub sigma2_x: T,
    pub sigma2_u: T,
    pub sigma2_q: T,
    pub seed: u64,
}

impl<T: Scalar> NoiseSpec<T> {
    pub fn new(sigma2_x: T, sigma2_u: T, sigma2_q: T, seed: u64) -> Result<Self> {
        if sigma2_x < T::zero() || sigma2_u < T::zero() || sigma2_q < T::zero() {
            return Err(Error::Parameter("noise variances must be nonnegative".into()));
        }
        Ok(Self {
            sigma2_x,
            sigma2_u,
            sigma2_q,
            seed,
        })
    }

    /// Micro-PMU levels: measurement variances 5e-4 pu, process noise 1e-4 pu.
    pub fn pmu_defaults(seed: u64) -> Self {
        Self {
            sigma2_x: crate::scalar::from_f64(5e-4),
            sigma2_u: crate::scalar::from_f64(5e-4),
            sigma2_q: crate::scalar::from_f64(1e-4),
            seed,
        }
    }

    /// Current-measurement variance in SI (A^2).
    pub fn sigma2_x_si(&self, bases: &Bases<T>) -> T {
        let ib = bases.i_base();
        self.sigma2_x * ib * ib
    }

    /// Voltage-measurement variance in SI (V^2).
    pub fn sigma2_u_si(&self, bases: &Bases<T>) -> T {
        self.sigma2_u * bases.v_base * bases.v_base
    }

    /// Process-noise variance in SI (A^2).
    pub fn sigma2_q_si(&self, bases: &Bases<T>) -> T {
        let ib = bases.i_base();
        self.sigma2_q * ib * ib
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_bases() {
        let b = Bases::new(13_200.0_f64, 1.0e7).unwrap();
        approx::assert_relative_eq!(b.i_base(), 1.0e7 / 13_200.0);
        approx::assert_relative_eq!(b.z_base(), 13_200.0 * 13_200.0 / 1.0e7);
    }

    #[test]
    fn negative_variance_rejected() {
        assert!(NoiseSpec::new(-1.0_f64, 0.0, 0.0, 0).is_err());
    }
}
