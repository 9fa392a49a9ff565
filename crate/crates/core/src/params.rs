//! Physical constants of the two-qutrit plus tunable-coupler system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frequencies, anharmonicities and couplings in GHz (the value of ω/2π),
/// all defined in the frame rotating at `omega_r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub omega1: f64,
    pub omega2: f64,
    pub omegac: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alphac: f64,
    pub g1: f64,
    pub g2: f64,
    pub omega_r: f64,
    pub levels: usize,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            omega1: 5.8899,
            omega2: 5.0311,
            omegac: 7.445,
            alpha1: 0.324,
            alpha2: 0.235,
            alphac: 0.230,
            g1: 0.100,
            g2: 0.0714,
            omega_r: 6.0,
            levels: 3,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let values = [
            self.omega1,
            self.omega2,
            self.omegac,
            self.alpha1,
            self.alpha2,
            self.alphac,
            self.g1,
            self.g2,
            self.omega_r,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("system parameters must be finite".into()));
        }
        if !(3..=5).contains(&self.levels) {
            return Err(Error::InvalidArgument(format!(
                "levels must be 3, 4 or 5, got {}",
                self.levels
            )));
        }
        Ok(())
    }

    pub fn with_levels(mut self, levels: usize) -> Self {
        self.levels = levels;
        self
    }

    /// Detunings (Δ₁, Δ₂, Δ_c) from the reference frequency, in GHz.
    pub fn detunings(&self) -> (f64, f64, f64) {
        (
            self.omega1 - self.omega_r,
            self.omega2 - self.omega_r,
            self.omegac - self.omega_r,
        )
    }

    /// |ω₁ − ω₂| in GHz, the frequency at which the coupler must be modulated.
    pub fn qubit_detuning(&self) -> f64 {
        (self.omega1 - self.omega2).abs()
    }

    /// Copy with qubit frequencies offset by the given amounts in MHz.
    pub fn perturbed_mhz(&self, delta_omega1_mhz: f64, delta_omega2_mhz: f64) -> Self {
        Self {
            omega1: self.omega1 + delta_omega1_mhz / 1000.0,
            omega2: self.omega2 + delta_omega2_mhz / 1000.0,
            ..*self
        }
    }
}

/// Amplitude damping on every subsystem at rate 1/T₁.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Relaxation time in µs.
    pub t1_us: f64,
    pub damp_qubit1: bool,
    pub damp_qubit2: bool,
    pub damp_coupler: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            t1_us: 100.0,
            damp_qubit1: true,
            damp_qubit2: true,
            damp_coupler: true,
        }
    }
}

impl NoiseConfig {
    pub fn disabled() -> Self {
        Self {
            damp_qubit1: false,
            damp_qubit2: false,
            damp_coupler: false,
            ..Self::default()
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.t1_us.is_finite() && (self.damp_qubit1 || self.damp_qubit2 || self.damp_coupler)
    }

    /// Decay rate in 1/ns.
    pub fn rate_per_ns(&self) -> f64 {
        1.0 / (self.t1_us * 1000.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t1_us > 0.0) {
            return Err(Error::InvalidArgument(format!("t1 must be positive, got {}", self.t1_us)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_table() {
        let p = SystemParams::default();
        assert_eq!(p.omega1, 5.8899);
        assert_eq!(p.omega2, 5.0311);
        assert_eq!(p.omegac, 7.445);
        assert_eq!(p.alpha1, 0.324);
        assert_eq!(p.alpha2, 0.235);
        assert_eq!(p.alphac, 0.230);
        assert_eq!(p.g1, 0.100);
        assert_eq!(p.g2, 0.0714);
        assert_eq!(p.omega_r, 6.0);
        assert_eq!(p.levels, 3);
        assert!((p.qubit_detuning() - 0.8588).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_levels_and_nan() {
        assert!(SystemParams::default().with_levels(2).validate().is_err());
        assert!(SystemParams::default().with_levels(6).validate().is_err());
        let p = SystemParams { g1: f64::NAN, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn params_parse_from_toml() {
        let p: SystemParams = toml::from_str("omega1 = 5.9\nlevels = 4\n").unwrap();
        assert_eq!(p.omega1, 5.9);
        assert_eq!(p.levels, 4);
        assert_eq!(p.omega2, 5.0311);
        assert!(toml::from_str::<SystemParams>("omega9 = 1.0").is_err());
    }
}
