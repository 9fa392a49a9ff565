//! Heatmaps of how a policy's pulse changes over training.
//!
//! Each checkpoint contributes one row: the FFT magnitude of its
//! deterministic pulse, and per-sample reward, log₁₀(1 − C) and
//! running-minimum 1 − U along the pulse duration.

use std::path::Path;

use rayon::prelude::*;

use crate::policy_sweep::{nominal_factory, LOG_FLOOR};
use qpulse_core::analysis::{fft_spectrum, min_filter, window_samples, HeatmapTable, ValueSemantics};
use qpulse_core::env::reward;
use qpulse_core::oct::ControlProblem;
use qpulse_core::{Error, Pulse, Result, SystemParams};
use qpulse_rl::{evaluate, Checkpoint, EnvFactory};

pub struct Evolution {
    pub spectra: HeatmapTable,
    pub reward: HeatmapTable,
    pub concurrence: HeatmapTable,
    pub unitarity: HeatmapTable,
}

/// All `*.json` checkpoints in a directory, ordered by global step.
pub fn load_checkpoints(dir: &Path) -> Result<Vec<Checkpoint>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let mut ckpts = paths.iter().map(|p| Checkpoint::load(p)).collect::<Result<Vec<_>>>()?;
    ckpts.sort_by_key(|c| c.global_step);
    if ckpts.is_empty() {
        return Err(Error::InvalidArgument(format!("no checkpoints found in {}", dir.display())));
    }
    Ok(ckpts)
}

struct Row {
    spectrum: Vec<f64>,
    reward: Vec<Option<f64>>,
    concurrence: Vec<Option<f64>>,
    unitarity: Vec<Option<f64>>,
}

fn row(ckpt: &Checkpoint, factory: &EnvFactory, window: usize, samples: usize, seed: u64) -> Result<Row> {
    let log = evaluate(&ckpt.policy, factory, 1, true, seed)?.remove(0);
    let k = factory.env.substeps;
    let dt = factory.env.dt;
    let valid = log.steps.iter().filter(|s| !s.truncated).count() * k;
    let amps = &log.amplitudes;

    let mut padded = vec![0.0; samples];
    padded[..amps.len().min(samples)].copy_from_slice(&amps[..amps.len().min(samples)]);
    let spectrum = fft_spectrum(&Pulse::new(dt, padded)?)?.magnitudes;

    let system = SystemParams { omega1: log.omega1, omega2: log.omega2, ..factory.system };
    let metrics = ControlProblem::new(&system, dt)?.metrics_trajectory(&amps[..valid])?;
    let cfg = &factory.env;
    let rewards = (0..valid).map(|i| {
        let start = i - i % k;
        let deltas: Vec<f64> =
            (start..start + k).map(|j| amps[j] - if j == 0 { 0.0 } else { amps[j - 1] }).collect();
        reward(metrics[i].cost, &deltas, cfg.alpha_tv, cfg.tv_absolute)
    });
    let one_minus_u: Vec<f64> = metrics.iter().map(|m| 1.0 - m.unitarity).collect();
    let pad = |v: Vec<f64>| {
        let mut out: Vec<Option<f64>> = v.into_iter().map(Some).collect();
        out.resize(samples, None);
        out
    };
    Ok(Row {
        spectrum,
        reward: pad(rewards.collect()),
        concurrence: pad(metrics.iter().map(|m| (1.0 - m.concurrence).max(LOG_FLOOR).log10()).collect()),
        unitarity: pad(min_filter(&one_minus_u, window)?),
    })
}

/// Rows follow the checkpoints' order; episodes run on `factory` with
/// randomisation disabled. Samples after an amplitude violation are empty cells.
pub fn checkpoint_evolution(checkpoints: &[Checkpoint], factory: &EnvFactory, min_filter_ns: f64, seed: u64) -> Result<Evolution> {
    if checkpoints.is_empty() {
        return Err(Error::InvalidArgument("checkpoint evolution needs at least one checkpoint".into()));
    }
    let factory = nominal_factory(factory);
    factory.env.validate()?;
    let dt = factory.env.dt;
    let samples = factory.env.episode_steps() * factory.env.substeps;
    let window = window_samples(min_filter_ns, dt);
    let rows: Vec<Row> = checkpoints.par_iter().map(|c| row(c, &factory, window, samples, seed)).collect::<Result<_>>()?;

    let steps: Vec<f64> = checkpoints.iter().map(|c| c.global_step as f64).collect();
    let durations: Vec<f64> = (1..=samples).map(|i| i as f64 * dt).collect();
    let freqs = fft_spectrum(&Pulse::zeros(dt, samples)?)?.frequencies;
    let table = |sem, cols: &[f64], axis: &str| -> Result<HeatmapTable> {
        Ok(HeatmapTable::new(sem, "global_step", steps.clone(), axis, cols.to_vec())?.with_metadata("seed", seed))
    };
    let mut spectra = table(ValueSemantics::FftMagnitude, &freqs, "frequency_ghz")?.with_metadata("padding", "zeros_to_full_episode");
    let mut reward = table(ValueSemantics::Reward, &durations, "duration_ns")?;
    let mut concurrence = table(ValueSemantics::Log10OneMinusConcurrence, &durations, "duration_ns")?.with_metadata("log_floor", LOG_FLOOR);
    let mut unitarity = table(ValueSemantics::OneMinusUnitarity, &durations, "duration_ns")?
        .with_metadata("min_filter_ns", min_filter_ns)
        .with_metadata("min_filter_samples", window);
    for (i, r) in rows.iter().enumerate() {
        spectra.set_row(i, &r.spectrum);
        for j in 0..samples {
            reward.set(i, j, r.reward[j]);
            concurrence.set(i, j, r.concurrence[j]);
            unitarity.set(i, j, r.unitarity[j]);
        }
    }
    Ok(Evolution { spectra, reward, concurrence, unitarity })
}
