//! Post-processing of pulses and sweeps: spectra, low-pass filtering,
//! robustness maps, open-system noise studies and heatmap serialisation.

mod heatmap;
mod noise;
mod robustness;
mod spectrum;

pub use heatmap::{HeatmapTable, ValueSemantics};
pub use noise::{noise_analysis, write_noise_csv, NoiseCurve, NOISE_INITIAL_STATES};
pub use robustness::{evaluate_pulse, robustness_sweep, SweepGrid, SweepMode};
pub use spectrum::{fft_spectrum, spectral_distance, spectral_filter, Spectrum, DEFAULT_FILTER_CUTOFF};

use crate::error::{Error, Result};

/// Window length in samples for a window of `window_ns` at spacing `dt`.
pub fn window_samples(window_ns: f64, dt: f64) -> usize {
    (window_ns / dt).round().max(1.0) as usize
}

/// Centred running minimum; near the ends the window is cut at the edge.
/// An even window extends one sample further to the right.
pub fn min_filter(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::InvalidArgument("min-filter window must be at least 1".into()));
    }
    let left = (window - 1) / 2;
    let right = window - 1 - left;
    let n = series.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right).min(n - 1);
            series[lo..=hi].iter().cloned().fold(f64::INFINITY, f64::min)
        })
        .collect())
}
