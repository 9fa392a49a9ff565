use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::params::{NoiseConfig, SystemParams};
use crate::pulse::Pulse;
use crate::qdyn::{ket_label, basis_index, propagate_lindblad, propagate_piecewise, DensityMatrix, Statevector, System};

/// Initial states examined by [`noise_analysis`], as (q₁, q₂, coupler).
pub const NOISE_INITIAL_STATES: [[usize; 3]; 3] = [[0, 1, 0], [1, 0, 0], [1, 1, 0]];

/// 1 − F(t) for one initial state and truncation level.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCurve {
    pub levels: usize,
    pub initial: [usize; 3],
    pub times: Vec<f64>,
    pub infidelity: Vec<f64>,
}

impl NoiseCurve {
    pub fn label(&self) -> String {
        let [a, b, c] = self.initial;
        format!("{}_L{}", ket_label(self.levels, basis_index(self.levels, a, b, c)), self.levels)
    }

    pub fn terminal(&self) -> f64 {
        *self.infidelity.last().expect("curves include t = 0")
    }

    pub fn max(&self) -> f64 {
        self.infidelity.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn curve(params: &SystemParams, pulse: &Pulse, levels: usize, initial: [usize; 3], noise: &NoiseConfig) -> Result<NoiseCurve> {
    let system = System::new(params.with_levels(levels))?;
    let psi0 = Statevector::basis(levels, initial[0], initial[1], initial[2]);
    let ideal = propagate_piecewise(&system, pulse, &psi0)?;
    let noisy = propagate_lindblad(&system, pulse, noise, &DensityMatrix::pure(&psi0))?;
    Ok(NoiseCurve {
        levels,
        initial,
        times: (0..=pulse.len()).map(|k| k as f64 * pulse.dt()).collect(),
        infidelity: ideal.iter().enumerate().map(|(k, psi)| 1.0 - noisy.fidelity(k, psi)).collect(),
    })
}

/// Infidelity between damped and closed evolution of each logical
/// excitation, for every requested truncation level.
pub fn noise_analysis(params: &SystemParams, pulse: &Pulse, levels_list: &[usize], noise: &NoiseConfig) -> Result<Vec<NoiseCurve>> {
    if let Some(l) = levels_list.iter().find(|l| !(3..=5).contains(*l)) {
        return Err(Error::InvalidArgument(format!("noise analysis supports 3 to 5 levels, got {l}")));
    }
    let cases: Vec<(usize, [usize; 3])> =
        levels_list.iter().flat_map(|&l| NOISE_INITIAL_STATES.iter().map(move |&s| (l, s))).collect();
    cases.par_iter().map(|&(l, s)| curve(params, pulse, l, s, noise)).collect()
}

/// Wide CSV: `t_ns` followed by one infidelity column per curve.
pub fn write_noise_csv<W: Write>(curves: &[NoiseCurve], mut w: W) -> Result<()> {
    let Some(first) = curves.first() else {
        return Ok(());
    };
    let labels: Vec<String> = curves.iter().map(NoiseCurve::label).collect();
    writeln!(w, "t_ns,{}", labels.join(","))?;
    for (k, t) in first.times.iter().enumerate() {
        let row: Vec<String> = curves.iter().map(|c| c.infidelity[k].to_string()).collect();
        writeln!(w, "{t},{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulse() -> Pulse {
        Pulse::new(0.05, (0..200).map(|k| 0.8 * (0.05 * k as f64).sin()).collect()).unwrap()
    }

    #[test]
    fn closed_system_has_no_infidelity() {
        let curves = noise_analysis(&SystemParams::default(), &pulse(), &[3, 4], &NoiseConfig::disabled()).unwrap();
        assert_eq!(curves.len(), 6);
        for c in &curves {
            assert!(c.max() <= 1e-8, "{} {}", c.label(), c.max());
        }
    }

    #[test]
    fn damping_matches_excitation_decay() {
        let noise = NoiseConfig::default();
        let curves = noise_analysis(&SystemParams::default(), &pulse(), &[3], &noise).unwrap();
        let t = pulse().duration();
        for c in &curves {
            let n: usize = c.initial.iter().sum();
            let expected = 1.0 - (-(n as f64) * t * noise.rate_per_ns()).exp();
            assert!((c.terminal() - expected).abs() < 1e-9, "{} {} {}", c.label(), c.terminal(), expected);
        }
    }

    #[test]
    fn levels_out_of_range() {
        assert!(noise_analysis(&SystemParams::default(), &pulse(), &[2], &NoiseConfig::default()).is_err());
    }

    #[test]
    fn csv_layout() {
        let curves = noise_analysis(&SystemParams::default(), &pulse(), &[3], &NoiseConfig::disabled()).unwrap();
        let mut buf = Vec::new();
        write_noise_csv(&curves, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_ns,|010⟩_L3,|100⟩_L3,|110⟩_L3\n"));
        assert_eq!(text.lines().count(), 202);
    }
}
