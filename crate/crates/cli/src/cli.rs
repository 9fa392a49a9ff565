//! Argument parsing and subcommand implementations.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::AppConfig;
use crate::evolution::{checkpoint_evolution, load_checkpoints};
use crate::policy_sweep::{nominal_factory, policy_sweep};
use qpulse_core::analysis::{
    evaluate_pulse, fft_spectrum, noise_analysis, robustness_sweep, spectral_filter, write_noise_csv, HeatmapTable, SweepMode,
};
use qpulse_core::env::reward;
use qpulse_core::metrics::weyl_coordinates;
use qpulse_core::metrics::{closest_unitary, gate_metrics, EffectiveGate};
use qpulse_core::oct::{grape_optimize, make_guess, qsl_sweep, ControlProblem, GuessShape};
use qpulse_core::{Error, Pulse, Result};
use qpulse_rl::checkpoint::Checkpoint;
use qpulse_rl::train::evaluation_seed;
use qpulse_rl::{evaluate, EnvFactory, EvalSummary, TrainOptions, Trainer};

#[derive(Debug, Parser)]
#[command(name = "qpulse", version, about = "Two-qubit gate pulse optimisation, training and analysis")]
pub struct Cli {
    /// TOML file with [system], [env], [train], [oct] and [sweep] tables.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy; writes metrics.csv, checkpoints/ and report.json.
    Train(TrainArgs),
    /// Play episodes with a saved policy.
    Evaluate(EvaluateArgs),
    /// Print gate metrics of a pulse (or of the identity).
    GateInfo(GateInfoArgs),
    /// Gradient-based optimal control.
    #[command(subcommand)]
    Oct(OctCommand),
    /// log10 J_T of a fixed pulse over shifted qubit frequencies.
    SweepRobustness(SweepRobustnessArgs),
    /// Policy-generated pulses over shifted qubit frequencies.
    SweepPolicy(SweepPolicyArgs),
    /// One-sided FFT magnitude spectrum of a pulse.
    Spectra(SpectraArgs),
    /// Low-pass filter a pulse.
    Filter(FilterArgs),
    /// Open-system infidelity along a pulse for 3 to 5 levels.
    Noise(NoiseArgs),
    /// Spectrum, reward, concurrence and unitarity heatmaps across checkpoints.
    EvolveHeatmaps(EvolveArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub max_timesteps: Option<u64>,
    /// Continue from a checkpoint instead of starting fresh.
    #[arg(long, value_name = "FILE")]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Sample actions instead of using the policy mean.
    #[arg(long)]
    pub stochastic: bool,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GateInfoArgs {
    #[arg(long, value_name = "FILE")]
    pub pulse: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GuessKind {
    FlatTop,
    SingleFrequency,
}

#[derive(Debug, Subcommand)]
pub enum OctCommand {
    /// Optimise a pulse from a guess; writes guess.csv, pulse.csv, trace.csv, spectrum.csv.
    Optimize(OptimizeArgs),
    /// Shortest duration reaching the cost threshold for each amplitude cap.
    Qsl(QslArgs),
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long, value_enum)]
    pub guess: Option<GuessKind>,
    /// Start from this pulse instead of an analytic guess.
    #[arg(long, value_name = "FILE")]
    pub pulse: Option<PathBuf>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct QslArgs {
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub caps: Option<Vec<f64>>,
    /// Comma-separated durations in ns
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["tmin", "tmax"])]
    pub durations: Option<Vec<f64>>,
    /// Shortest duration of an evenly spaced grid (ns)
    #[arg(long, requires = "tmax")]
    pub tmin: Option<f64>,
    /// Longest duration of the grid (ns), included
    #[arg(long, requires = "tmin")]
    pub tmax: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    #[arg(long)]
    pub restarts: Option<usize>,
}

fn duration_grid(tmin: f64, tmax: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && tmin > 0.0 && tmax >= tmin && tmax.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad duration grid {tmin}..{tmax} step {step}")));
    }
    let n = ((tmax - tmin) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| tmin + k as f64 * step).collect())
}

#[derive(Debug, Args)]
pub struct SweepRobustnessArgs {
    #[arg(long, value_name = "FILE")]
    pub pulse: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepPolicyArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpectraArgs {
    #[arg(long, value_name = "FILE")]
    pub pulse: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long, value_name = "FILE")]
    pub pulse: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Cutoff in GHz.
    #[arg(long)]
    pub cutoff: Option<f64>,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long, value_name = "FILE")]
    pub pulse: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<usize>>,
    /// Relaxation time in µs.
    #[arg(long)]
    pub t1: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[arg(long, value_name = "DIR")]
    pub checkpoints: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code: 0 success, 2 usage error, 1 failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

struct Context {
    config: AppConfig,
    from_file: bool,
    seed: Option<u64>,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let mut config = match &cli.config {
            Some(path) => AppConfig::load(path)?,
            None => AppConfig::default(),
        };
        if let Some(seed) = cli.seed {
            config.apply_seed(seed);
        }
        Ok(Self { config, from_file: cli.config.is_some(), seed: cli.seed })
    }

    /// The environment of the config file if one was given, else the checkpoint's.
    fn factory_for(&self, ckpt: &Checkpoint) -> EnvFactory {
        if self.from_file {
            self.config.factory()
        } else {
            ckpt.factory()
        }
    }

    fn eval_seed(&self, ckpt: &Checkpoint) -> u64 {
        evaluation_seed(self.seed.unwrap_or(ckpt.train.seed))
    }

    fn save_table(&self, table: &HeatmapTable, dir: &Path, name: &str) -> Result<()> {
        table.save(dir.join(format!("{name}.csv")))?;
        if self.config.sweep.png {
            table.write_png(dir.join(format!("{name}.png")), self.config.sweep.png_scale)?;
        }
        Ok(())
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&ctx, a),
        Command::GateInfo(a) => cmd_gate_info(&ctx, a),
        Command::Oct(OctCommand::Optimize(a)) => cmd_optimize(&ctx, a),
        Command::Oct(OctCommand::Qsl(a)) => cmd_qsl(&ctx, a),
        Command::SweepRobustness(a) => cmd_sweep_robustness(&ctx, a),
        Command::SweepPolicy(a) => cmd_sweep_policy(&ctx, a),
        Command::Spectra(a) => cmd_spectra(a),
        Command::Filter(a) => cmd_filter(&ctx, a),
        Command::Noise(a) => cmd_noise(&ctx, a),
        Command::EvolveHeatmaps(a) => cmd_evolve(&ctx, a),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_train(ctx: &Context, a: &TrainArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    let mut trainer = match &a.resume {
        Some(path) => {
            let mut ckpt = Checkpoint::load(path)?;
            if let Some(n) = a.max_timesteps {
                ckpt.train.max_timesteps = n;
                ckpt.config_hash = qpulse_rl::checkpoint::config_hash(&ckpt.train, &ckpt.env, &ckpt.system);
            }
            Trainer::from_checkpoint(ckpt)?
        }
        None => {
            let mut config = ctx.config.clone();
            if let Some(n) = a.max_timesteps {
                config.train.max_timesteps = n;
            }
            fs::write(a.out.join("config.toml"), config.to_toml())?;
            Trainer::new(config.train.clone(), config.factory())?
        }
    };

    let stop = Arc::new(AtomicBool::new(false));
    let finished = Arc::new(AtomicBool::new(false));
    let stop_file = a.out.join("STOP");
    let watcher = {
        let (stop, finished) = (stop.clone(), finished.clone());
        std::thread::spawn(move || {
            while !finished.load(Ordering::Relaxed) {
                if stop_file.exists() {
                    stop.store(true, Ordering::Relaxed);
                    return;
                }
                std::thread::sleep(Duration::from_millis(200));
            }
        })
    };
    let options = TrainOptions { out_dir: Some(a.out.clone()), stop: Some(stop) };
    let result = trainer.run(&options);
    finished.store(true, Ordering::Relaxed);
    let _ = watcher.join();
    let mut report = result?;
    for c in &mut report.checkpoints {
        if let Some(rel) = c.path.as_ref().and_then(|p| p.strip_prefix(&a.out).ok()) {
            c.path = Some(rel.to_path_buf());
        }
    }
    write_json(&a.out.join("report.json"), &report)?;
    println!(
        "trained to step {} ({:?}); {} evaluations, {} checkpoints",
        report.global_step,
        report.stop_reason,
        report.evaluations.len(),
        report.checkpoints.len()
    );
    if let Some(last) = report.evaluations.last() {
        println!("last evaluation: return {:.4}, J_T {:.4e}", last.summary.mean_reward, last.summary.mean_cost);
    }
    Ok(())
}

fn cmd_evaluate(ctx: &Context, a: &EvaluateArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let factory = ctx.factory_for(&ckpt);
    let episodes = a.episodes.unwrap_or(ckpt.train.eval_episodes);
    let logs = evaluate(&ckpt.policy, &factory, episodes, !a.stochastic, ctx.eval_seed(&ckpt))?;
    let summary = EvalSummary::from_logs(&logs);
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
        for (i, log) in logs.iter().enumerate() {
            log.save(&out.join(format!("episode_{i:03}")))?;
        }
        write_json(&out.join("summary.json"), &summary)?;
    }
    println!(
        "{} episodes: return {:.6}, per-step {:.6}, J_T {:.6e}, C {:.6}, U {:.6}, truncated {}",
        summary.episodes,
        summary.mean_reward,
        summary.mean_step_reward,
        summary.mean_cost,
        summary.mean_concurrence,
        summary.mean_unitarity,
        summary.truncations
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct GateReport {
    duration_ns: f64,
    concurrence: f64,
    unitarity: f64,
    cost: f64,
    reward: f64,
    weyl: Option<[f64; 3]>,
    perfect_entangler: Option<bool>,
    gate_re: Vec<Vec<f64>>,
    gate_im: Vec<Vec<f64>>,
}

fn cmd_gate_info(ctx: &Context, a: &GateInfoArgs) -> Result<()> {
    let (gate, duration) = match &a.pulse {
        Some(path) => {
            let pulse = Pulse::load(path)?;
            (ControlProblem::new(&ctx.config.system, pulse.dt())?.gate(pulse.amplitudes())?, pulse.duration())
        }
        None => (EffectiveGate::identity(), 0.0),
    };
    let m = gate_metrics(&gate);
    let weyl = closest_unitary(&gate).and_then(|u| weyl_coordinates(&u)).ok();
    let g = gate.matrix();
    let report = GateReport {
        duration_ns: duration,
        concurrence: m.concurrence,
        unitarity: m.unitarity,
        cost: m.cost,
        reward: reward(m.cost, &[], 0.0, true),
        weyl: weyl.map(|w| w.as_array()),
        perfect_entangler: weyl.map(|w| w.is_perfect_entangler()),
        gate_re: (0..4).map(|r| (0..4).map(|c| g[(r, c)].re).collect()).collect(),
        gate_im: (0..4).map(|r| (0..4).map(|c| g[(r, c)].im).collect()).collect(),
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Error::Parse(e.to_string()))?);
        return Ok(());
    }
    println!("duration  {} ns", report.duration_ns);
    println!("C         {}", report.concurrence);
    println!("U         {}", report.unitarity);
    println!("J_T       {}", report.cost);
    println!("reward    {}", report.reward);
    match (report.weyl, report.perfect_entangler) {
        (Some(w), Some(pe)) => println!("weyl      ({}, {}, {})  perfect entangler: {pe}", w[0], w[1], w[2]),
        _ => println!("weyl      undefined (gate is rank deficient)"),
    }
    for r in 0..4 {
        let row: Vec<String> = (0..4).map(|c| format!("{:+.6}{:+.6}i", g[(r, c)].re, g[(r, c)].im)).collect();
        println!("  {}", row.join("  "));
    }
    Ok(())
}

fn cmd_optimize(ctx: &Context, a: &OptimizeArgs) -> Result<()> {
    let oct = &ctx.config.oct;
    let guess = match &a.pulse {
        Some(path) => Pulse::load(path)?,
        None => {
            let shape = match a.guess {
                Some(GuessKind::FlatTop) if !matches!(oct.guess, GuessShape::FlatTop { .. }) => GuessShape::flat_top(),
                Some(GuessKind::SingleFrequency) if !matches!(oct.guess, GuessShape::SingleFrequency { .. }) => {
                    GuessShape::single_frequency()
                }
                _ => oct.guess,
            };
            make_guess(shape, a.duration.unwrap_or(oct.duration), oct.dt)?.into_pulse()
        }
    };
    let mut optimizer = oct.optimizer.clone();
    if let Some(n) = a.max_iters {
        optimizer.max_iters = n;
    }
    let problem = ControlProblem::new(&ctx.config.system, guess.dt())?;
    let (pulse, trace) = grape_optimize(&problem, &guess, &optimizer)?;
    fs::create_dir_all(&a.out)?;
    guess.save(a.out.join("guess.csv"))?;
    pulse.save(a.out.join("pulse.csv"))?;
    write_file(&a.out.join("trace.csv"), |w| trace.write_csv(w))?;
    let spectrum = fft_spectrum(&pulse)?;
    write_file(&a.out.join("spectrum.csv"), |w| spectrum.write_csv(w))?;
    let m = problem.metrics(pulse.amplitudes())?;
    println!(
        "{} iterations, converged {}: J_T {:.6e}, C {:.6}, U {:.6}",
        trace.iterations(),
        trace.converged,
        m.cost,
        m.concurrence,
        m.unitarity
    );
    if let Some((f, _)) = spectrum.dominant_nonzero() {
        println!("dominant frequency {f:.4} GHz");
    }
    Ok(())
}

fn cmd_qsl(ctx: &Context, a: &QslArgs) -> Result<()> {
    let mut cfg = ctx.config.oct.qsl.clone();
    if let Some(c) = &a.caps {
        cfg.caps = c.clone();
    }
    if let Some(d) = &a.durations {
        cfg.durations = d.clone();
    }
    if let (Some(lo), Some(hi)) = (a.tmin, a.tmax) {
        cfg.durations = duration_grid(lo, hi, a.step)?;
    }
    if let Some(r) = a.restarts {
        cfg.restarts = r;
    }
    let result = qsl_sweep(&ctx.config.system, &cfg)?;
    write_file(&a.out, |w| result.write_csv(w))?;
    for (j, cap) in result.caps.iter().enumerate() {
        match result.qsl(j) {
            Some(t) => println!("cap {cap:.4} GHz: QSL {t} ns"),
            None => println!("cap {cap:.4} GHz: threshold not reached"),
        }
    }
    Ok(())
}

fn cmd_sweep_robustness(ctx: &Context, a: &SweepRobustnessArgs) -> Result<()> {
    let pulse = Pulse::load(&a.pulse)?;
    let grid = ctx.config.sweep.grid(&ctx.config.system, SweepMode::FixedPulse)?;
    let table = robustness_sweep(&ctx.config.system, &pulse, &grid)?;
    fs::create_dir_all(&a.out)?;
    ctx.save_table(&table, &a.out, "robustness_log10_JT")?;
    let nominal = evaluate_pulse(&ctx.config.system, &pulse)?;
    println!("nominal J_T {:.6e}; grid {}×{}", nominal.cost, grid.delta_omega1_mhz.len(), grid.delta_omega2_mhz.len());
    Ok(())
}

fn cmd_sweep_policy(ctx: &Context, a: &SweepPolicyArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let factory = ctx.factory_for(&ckpt);
    let grid = ctx.config.sweep.grid(&factory.system, SweepMode::Policy)?;
    let seed = ctx.eval_seed(&ckpt);
    let sweep = policy_sweep(&ckpt.policy, &factory, &grid, ctx.config.sweep.terminal_window_ns, seed)?;
    fs::create_dir_all(&a.out)?;
    ctx.save_table(&sweep.reward, &a.out, "policy_reward")?;
    ctx.save_table(&sweep.one_minus_concurrence, &a.out, "policy_log10_1mC")?;
    ctx.save_table(&sweep.one_minus_unitarity, &a.out, "policy_1mU")?;
    write_file(&a.out.join("policy_series.csv"), |w| sweep.write_series_csv(w))?;
    let nominal = EvalSummary::from_logs(&evaluate(&ckpt.policy, &nominal_factory(&factory), 1, true, seed)?);
    println!("nominal deterministic return {:.6}; grid {}×{}", nominal.mean_reward, grid.delta_omega1_mhz.len(), grid.delta_omega2_mhz.len());
    Ok(())
}

fn cmd_spectra(a: &SpectraArgs) -> Result<()> {
    let spectrum = fft_spectrum(&Pulse::load(&a.pulse)?)?;
    write_file(&a.out, |w| spectrum.write_csv(w))?;
    if let Some((f, m)) = spectrum.dominant_nonzero() {
        println!("dominant nonzero frequency {f:.6} GHz (magnitude {m:.6e}); resolution {:.6} GHz", spectrum.resolution());
    }
    Ok(())
}

fn cmd_filter(ctx: &Context, a: &FilterArgs) -> Result<()> {
    let pulse = Pulse::load(&a.pulse)?;
    let cutoff = a.cutoff.unwrap_or(ctx.config.sweep.filter_cutoff);
    let filtered = spectral_filter(&pulse, cutoff, ctx.config.env.amp_cap)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    filtered.save(&a.out)?;
    let before = evaluate_pulse(&ctx.config.system, &pulse)?.cost;
    let after = evaluate_pulse(&ctx.config.system, &filtered)?.cost;
    println!("cutoff {cutoff} GHz: J_T {before:.6e} -> {after:.6e}");
    Ok(())
}

fn cmd_noise(ctx: &Context, a: &NoiseArgs) -> Result<()> {
    let pulse = Pulse::load(&a.pulse)?;
    let levels = a.levels.clone().unwrap_or_else(|| ctx.config.sweep.levels.clone());
    let mut noise = ctx.config.sweep.noise;
    if let Some(t1) = a.t1 {
        noise.t1_us = t1;
    }
    let curves = noise_analysis(&ctx.config.system, &pulse, &levels, &noise)?;
    write_file(&a.out, |w| write_noise_csv(&curves, w))?;
    for c in &curves {
        println!("{}: terminal infidelity {:.6e}", c.label(), c.terminal());
    }
    Ok(())
}

fn cmd_evolve(ctx: &Context, a: &EvolveArgs) -> Result<()> {
    let ckpts = load_checkpoints(&a.checkpoints)?;
    let factory = ctx.factory_for(&ckpts[0]);
    let seed = ctx.eval_seed(&ckpts[0]);
    let evo = checkpoint_evolution(&ckpts, &factory, ctx.config.sweep.min_filter_ns, seed)?;
    fs::create_dir_all(&a.out)?;
    ctx.save_table(&evo.spectra, &a.out, "evolution_fft")?;
    ctx.save_table(&evo.reward, &a.out, "evolution_reward")?;
    ctx.save_table(&evo.concurrence, &a.out, "evolution_log10_1mC")?;
    ctx.save_table(&evo.unitarity, &a.out, "evolution_1mU")?;
    println!("{} checkpoints, {} duration samples", ckpts.len(), evo.reward.shape().1);
    Ok(())
}
