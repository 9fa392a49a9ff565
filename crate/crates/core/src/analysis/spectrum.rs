use std::io::Write;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::pulse::Pulse;

pub const DEFAULT_FILTER_CUTOFF: f64 = 3.0;

/// One-sided magnitude spectrum |X_k|/N at f_k = k/(N·dt), k = 0..=N/2.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub magnitudes: Vec<f64>,
}

impl Spectrum {
    /// Largest bin other than DC.
    pub fn dominant_nonzero(&self) -> Option<(f64, f64)> {
        (1..self.magnitudes.len())
            .max_by(|&a, &b| self.magnitudes[a].total_cmp(&self.magnitudes[b]))
            .map(|k| (self.frequencies[k], self.magnitudes[k]))
    }

    pub fn resolution(&self) -> f64 {
        self.frequencies.get(1).copied().unwrap_or(f64::NAN)
    }

    /// Magnitudes scaled to unit Euclidean norm.
    pub fn normalized(&self) -> Vec<f64> {
        let n = self.magnitudes.iter().map(|m| m * m).sum::<f64>().sqrt();
        if n == 0.0 {
            return self.magnitudes.clone();
        }
        self.magnitudes.iter().map(|m| m / n).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "frequency_ghz,magnitude")?;
        for (f, m) in self.frequencies.iter().zip(&self.magnitudes) {
            writeln!(w, "{f},{m}")?;
        }
        Ok(())
    }
}

fn transform(pulse: &Pulse) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = pulse.amplitudes().iter().map(|&u| Complex64::new(u, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

pub fn fft_spectrum(pulse: &Pulse) -> Result<Spectrum> {
    let n = pulse.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("spectrum needs at least 2 samples, got {n}")));
    }
    let x = transform(pulse);
    let df = 1.0 / (n as f64 * pulse.dt());
    let bins = n / 2 + 1;
    Ok(Spectrum {
        frequencies: (0..bins).map(|k| k as f64 * df).collect(),
        magnitudes: x[..bins].iter().map(|z| z.norm() / n as f64).collect(),
    })
}

/// L2 distance between unit-normalised magnitude spectra of equal length.
pub fn spectral_distance(a: &Spectrum, b: &Spectrum) -> Result<f64> {
    if a.magnitudes.len() != b.magnitudes.len() {
        return Err(Error::InvalidArgument("spectra have different lengths".into()));
    }
    Ok(a.normalized().iter().zip(b.normalized()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

/// Removes every bin above `cutoff` GHz and clips the result to ±cap.
pub fn spectral_filter(pulse: &Pulse, cutoff: f64, cap: f64) -> Result<Pulse> {
    if !(cutoff > 0.0) || !(cap > 0.0) {
        return Err(Error::InvalidArgument(format!("cutoff and cap must be positive, got {cutoff}, {cap}")));
    }
    let n = pulse.len();
    if n == 0 {
        return Ok(pulse.clone());
    }
    let df = 1.0 / (n as f64 * pulse.dt());
    let mut x = transform(pulse);
    for (k, z) in x.iter_mut().enumerate() {
        if k.min(n - k) as f64 * df > cutoff {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut x);
    let amps = x.iter().map(|z| (z.re / n as f64).clamp(-cap, cap)).collect();
    Pulse::new(pulse.dt(), amps)
}
