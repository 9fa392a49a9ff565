//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test -p qpulse-cli --test acceptance -- --nocapture` runs everything
//! except the long quantum-speed-limit sweep; set `ACCEPTANCE_LONG=1` to include
//! it. Positional arguments select criteria by number. With
//! `ACCEPTANCE_STRICT=1` the process exits non-zero when any criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::time::Instant;

use nalgebra::Matrix4;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qpulse_core::analysis::{evaluate_pulse, fft_spectrum, noise_analysis, robustness_sweep, HeatmapTable, SweepGrid};
use qpulse_core::env::{reward, TRUNCATION_REWARD};
use qpulse_core::metrics::{gate_concurrence, gate_metrics, gates, EffectiveGate};
use qpulse_core::oct::{grape_optimize, make_guess, qsl_sweep, ControlProblem, GuessShape, OptimizerConfig, QslConfig};
use qpulse_core::pulse::{DEFAULT_AMPLITUDE_CAP, DEFAULT_DT};
use qpulse_core::qdyn::{
    build_control, build_drift, commutator, max_abs, number_operator, propagate_full_space, propagate_piecewise, Statevector,
    System,
};
use qpulse_core::{EnvConfig, NoiseConfig, Pulse, PulseEnv, SystemParams};
use qpulse_rl::gae::{compute_gae, StepEnd};
use qpulse_rl::policy::log_density;
use qpulse_rl::train::evaluation_seed;
use qpulse_rl::trpo::{lr_schedule, policy_update, RolloutBatch};
use qpulse_rl::{evaluate, EnvFactory, EvalSummary, GaussianPolicy, TrainConfig, TrainOptions, Trainer, ValueNet};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let named: [(&str, Matrix4<C64>, Option<f64>); 6] = [
        ("I", gates::identity(), Some(0.0)),
        ("CNOT", gates::cnot(), Some(1.0)),
        ("SWAP", gates::swap(), Some(0.0)),
        ("iSWAP", gates::iswap(), Some(1.0)),
        ("sqrtSWAP", gates::sqrt_swap(), Some(1.0)),
        ("sqrtiSWAP", gates::sqrt_iswap(), None),
    ];
    let mut worst_oracle = 0.0_f64;
    let mut worst_named = 0.0_f64;
    let mut ok = true;
    let mut check = |g: &Matrix4<C64>, expected: Option<f64>, rng: &mut ChaCha8Rng| {
        let Ok(c) = gate_concurrence(g) else {
            return false;
        };
        let oracle = support::brute_force_concurrence(g, 100_000, rng);
        worst_oracle = worst_oracle.max((c - oracle).abs());
        if let Some(e) = expected {
            worst_named = worst_named.max((c - e).abs());
        }
        (c - oracle).abs() <= 1e-3 && expected.is_none_or(|e| (c - e).abs() <= 1e-9)
    };
    for (_, g, e) in &named {
        ok &= check(g, *e, &mut rng);
    }
    for _ in 0..20 {
        let g = support::haar4(&mut rng);
        ok &= check(&g, None, &mut rng);
    }
    verdict(ok, format!("26 gates; max |formula − oracle| = {worst_oracle:.2e} (≤ 1e-3); max named deviation {worst_named:.1e}"))
}

fn criterion_2() -> Verdict {
    let params = SystemParams::default();
    let system = System::new(params).expect("system");
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut worst_amp, mut worst_norm) = (0.0_f64, 0.0_f64);
    for _ in 0..20 {
        let amps: Vec<f64> = (0..1000).map(|_| rng.random_range(-DEFAULT_AMPLITUDE_CAP..DEFAULT_AMPLITUDE_CAP)).collect();
        let pulse = Pulse::new(DEFAULT_DT, amps).expect("pulse");
        for q in [[0, 1, 0], [1, 0, 0], [1, 1, 0]] {
            let psi = Statevector::basis(params.levels, q[0], q[1], q[2]);
            let a = propagate_piecewise(&system, &pulse, &psi).expect("sector propagation");
            let b = propagate_full_space(&system, &pulse, &psi).expect("full propagation");
            for (x, y) in a.iter().zip(&b) {
                worst_amp = worst_amp.max((x.amplitudes() - y.amplitudes()).iter().fold(0.0, |m, z| m.max(z.norm())));
                worst_norm = worst_norm.max((x.norm() - 1.0).abs()).max((y.norm() - 1.0).abs());
            }
        }
    }
    let n = number_operator(params.levels);
    let comm = max_abs(&commutator(&build_drift(&params).unwrap(), &n)).max(max_abs(&commutator(&build_control(&params).unwrap(), &n)));
    verdict(
        worst_amp <= 1e-9 && worst_norm <= 1e-9 && comm <= 1e-12,
        format!("20 pulses × 3 states: max amplitude gap {worst_amp:.1e}, norm drift {worst_norm:.1e}, ‖[H, N]‖ {comm:.1e}"),
    )
}

fn criterion_3() -> Verdict {
    let problem = ControlProblem::new(&SystemParams::default(), DEFAULT_DT).unwrap();
    let gate = problem.gate(&[]).unwrap();
    let m = gate_metrics(&gate);
    let env = PulseEnv::new(SystemParams::default(), EnvConfig::default()).unwrap();
    let r = reward(m.cost, &[0.0; 3], 1e-3, true);
    let ok = gate == EffectiveGate::identity()
        && m.concurrence == 0.0
        && m.unitarity == 1.0
        && m.cost == 0.25
        && r == -(0.25_f64).log10()
        && env.metrics() == m;
    verdict(ok, format!("Ô = I: {}, C = {}, U = {}, J_T = {}, reward = {}", gate == EffectiveGate::identity(), m.concurrence, m.unitarity, m.cost, r))
}

fn env_log_bytes(seed: u64) -> Vec<u8> {
    let cfg = EnvConfig { randomization: 0.001, seed, ..EnvConfig::default() };
    let mut env = PulseEnv::new(SystemParams::default(), cfg).unwrap();
    env.reset(Some(seed)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
    while !env.is_done() {
        let a: Vec<f64> = (0..3).map(|_| rng.random_range(-0.05..0.05)).collect();
        env.step(&a).unwrap();
    }
    let mut bytes = Vec::new();
    env.log().write_csv(&mut bytes).unwrap();
    bytes
}

fn criterion_4() -> Verdict {
    let mut env = PulseEnv::new(SystemParams::default(), EnvConfig::default()).unwrap();
    let obs_len = env.reset(None).unwrap().0.len();
    let mut steps = 0;
    while !env.is_done() {
        env.step(&[0.0; 3]).unwrap();
        steps += 1;
    }
    env.reset(None).unwrap();
    let mut violation = None;
    for _ in 0..20 {
        let r = env.step(&[0.2; 3]).unwrap();
        if r.done() {
            violation = Some((r.truncated, r.terminated, r.reward));
            break;
        }
    }
    let deterministic = env_log_bytes(3) == env_log_bytes(3) && env_log_bytes(3) != env_log_bytes(4);
    let ok = obs_len == 28 && steps == 334 && violation == Some((true, false, TRUNCATION_REWARD)) && deterministic;
    verdict(ok, format!("observation {obs_len}, episode {steps} steps, violation {violation:?}, byte-identical replay {deterministic}"))
}

fn criterion_5() -> Verdict {
    let (a, b) = (reward(1e-4, &[0.0; 3], 1e-3, true), reward(1e-3, &[0.0; 3], 1e-3, true));
    verdict(a == 4.0 && b == 3.0, format!("reward(1e-4, 0) = {a}, reward(1e-3, 0) = {b}"))
}

fn optimize_flat_top() -> (Pulse, Verdict) {
    let problem = ControlProblem::new(&SystemParams::default(), DEFAULT_DT).unwrap();
    let guess = make_guess(GuessShape::flat_top(), 50.0, DEFAULT_DT).unwrap();
    let config = OptimizerConfig { max_iters: 200, ..OptimizerConfig::default() };
    let (pulse, trace) = grape_optimize(&problem, guess.pulse(), &config).unwrap();
    let monotone = trace.records.windows(2).all(|w| w[1].cost <= w[0].cost);
    let final_cost = problem.metrics(pulse.amplitudes()).unwrap().cost;
    let ok = final_cost <= 1e-3 && trace.iterations() <= 200 && monotone;
    let v = verdict(ok, format!("J_T {final_cost:.3e} after {} iterations, monotone {monotone}", trace.iterations()));
    (pulse, v)
}

fn criterion_7(pulse: &Pulse) -> Verdict {
    match fft_spectrum(pulse).ok().and_then(|s| s.dominant_nonzero()) {
        Some((f, _)) => verdict((f - 0.86).abs() <= 0.10, format!("dominant nonzero peak {f:.4} GHz (0.86 ± 0.10)")),
        None => verdict(false, "no spectrum"),
    }
}

fn criterion_8() -> Verdict {
    let config = QslConfig {
        durations: (6..=16).map(f64::from).collect(),
        caps: vec![1.5],
        restarts: 3,
        ..QslConfig::default()
    };
    let result = qsl_sweep(&SystemParams::default(), &config).unwrap();
    let qsl = result.qsl(0);
    let best: Vec<String> = (0..result.durations.len()).map(|i| format!("{:.0}:{:.1e}", result.durations[i], result.cell(i, 0).best())).collect();
    verdict(qsl.is_some_and(|t| (8.0..=12.0).contains(&t)), format!("QSL(1.5 GHz) = {qsl:?} ns; best J_T per T [{}]", best.join(" ")))
}

fn synthetic_batch(policy: &GaussianPolicy, n: usize, rng: &mut ChaCha8Rng) -> RolloutBatch {
    let obs = nalgebra::DMatrix::from_fn(policy.obs_dim(), n, |_, _| rng.random_range(-1.0..1.0));
    let mut actions = nalgebra::DMatrix::zeros(policy.act_dim(), n);
    let mut log_probs = Vec::with_capacity(n);
    for j in 0..n {
        let o: Vec<f64> = obs.column(j).iter().cloned().collect();
        let (a, lp) = policy.act(&o, false, rng);
        actions.set_column(j, &nalgebra::DVector::from_vec(a));
        log_probs.push(lp);
    }
    let mut batch = RolloutBatch {
        observations: obs,
        actions,
        log_probs,
        rewards: vec![0.0; n],
        values: vec![0.0; n],
        advantages: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        returns: vec![0.0; n],
        ends: vec![StepEnd::Terminal; n],
    };
    batch.normalize_advantages();
    batch
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn criterion_9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let config = TrainConfig::default();
    let mut max_kl = 0.0_f64;
    let mut accepted = 0;
    let mut surrogate_ok = true;
    for _ in 0..5 {
        let mut policy = GaussianPolicy::new(28, 3, &[128, 128], 0.0, &mut rng);
        for _ in 0..3 {
            let batch = synthetic_batch(&policy, 512, &mut rng);
            let stats = policy_update(&mut policy, &batch, &config);
            if stats.accepted {
                accepted += 1;
                max_kl = max_kl.max(stats.kl);
                surrogate_ok &= stats.surrogate_after >= stats.surrogate_before;
            }
        }
    }
    let small = TrainConfig { max_timesteps: 4096, n_steps: 256, seed: 9, ..TrainConfig::default() };
    let factory = EnvFactory::new(SystemParams::default(), EnvConfig::default());
    let (_, report) = qpulse_rl::train(factory, small, &TrainOptions::default()).unwrap();
    for it in report.iterations.iter().filter(|i| i.policy.accepted) {
        accepted += 1;
        max_kl = max_kl.max(it.policy.kl);
        surrogate_ok &= it.policy.surrogate_after >= it.policy.surrogate_before;
    }

    let mut worst_grad = 0.0_f64;
    let mut policy = GaussianPolicy::new(6, 3, &[16, 16], 0.0, &mut rng);
    let theta: Vec<f64> = policy.params().iter().map(|p| 15.0 * p + 0.05 * rng.random_range(-1.0..1.0)).collect();
    policy.set_params(&theta);
    let obs = nalgebra::DMatrix::from_fn(6, 8, |_, _| rng.random_range(-1.0..1.0));
    let actions = nalgebra::DMatrix::from_fn(3, 8, |_, _| rng.random_range(-1.0..1.0));
    let weights: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let objective = |p: &GaussianPolicy| -> f64 {
        (0..8)
            .map(|j| {
                let o: Vec<f64> = obs.column(j).iter().cloned().collect();
                let a: Vec<f64> = actions.column(j).iter().cloned().collect();
                weights[j] * log_density(&p.mean(&o), p.log_std(), &a)
            })
            .sum()
    };
    let grad = policy.weighted_log_prob_gradient(&policy.evaluate(&obs), &actions, &weights);
    for _ in 0..10 {
        let i = rng.random_range(0..theta.len());
        let mut probe = policy.clone();
        let mut t = theta.clone();
        t[i] += 1e-6;
        probe.set_params(&t);
        let plus = objective(&probe);
        t[i] -= 2e-6;
        probe.set_params(&t);
        let fd = (plus - objective(&probe)) / 2e-6;
        worst_grad = worst_grad.max(relative_error(grad[i], fd));
    }
    let mut value = ValueNet::new(6, &[16, 16], &mut rng);
    let targets: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
    let (_, vgrad) = value.mse_and_gradient(&obs, &targets);
    let vtheta = value.params();
    for _ in 0..10 {
        let i = rng.random_range(0..vtheta.len());
        let mut t = vtheta.clone();
        t[i] += 1e-6;
        value.set_params(&t);
        let plus = value.mse_and_gradient(&obs, &targets).0;
        t[i] -= 2e-6;
        value.set_params(&t);
        let fd = (plus - value.mse_and_gradient(&obs, &targets).0) / 2e-6;
        worst_grad = worst_grad.max(relative_error(vgrad[i], fd));
    }

    let single = compute_gae(&[1.0], &[0.0], &[StepEnd::Terminal], 0.99, 0.95).unwrap().0 == vec![1.0];
    let mc = compute_gae(&[1.0; 3], &[0.0; 3], &[StepEnd::Continue, StepEnd::Continue, StepEnd::Terminal], 1.0, 1.0).unwrap().0
        == vec![3.0, 2.0, 1.0];
    let (r, v) = ([0.5, -1.0, 2.0], [0.3, 0.1, -0.4]);
    let td = compute_gae(&r, &v, &[StepEnd::Continue, StepEnd::Continue, StepEnd::Cut(0.7)], 0.99, 0.0).unwrap().0
        == vec![r[0] + 0.99 * v[1] - v[0], r[1] + 0.99 * v[2] - v[1], r[2] + 0.99 * 0.7 - v[2]];
    let gae_ok = single && mc && td;
    let lr_ok = lr_schedule(1.0) == 3e-4 && (lr_schedule(0.0) - 3e-4 / (1.0 + 10f64.powf(0.4))).abs() <= 1e-9;

    let ok = accepted > 0 && max_kl <= 0.0101 && surrogate_ok && worst_grad <= 1e-5 && gae_ok && lr_ok;
    verdict(
        ok,
        format!(
            "{accepted} accepted updates, max KL {max_kl:.5}, surrogate monotone {surrogate_ok}; gradient rel. error {worst_grad:.1e}; GAE {gae_ok}; lr(1) = {}, lr(0) = {:.6e}",
            lr_schedule(1.0),
            lr_schedule(0.0)
        ),
    )
}

fn criterion_10() -> Verdict {
    let factory = EnvFactory::new(SystemParams::default(), EnvConfig::default());
    let config = TrainConfig { max_timesteps: 100_000, seed: 0, ..TrainConfig::default() };
    let seed = evaluation_seed(config.seed);
    let mut trainer = Trainer::new(config.clone(), factory.clone()).unwrap();
    let before = EvalSummary::from_logs(&evaluate(trainer.policy(), &factory, 10, true, seed).unwrap());
    trainer.run(&TrainOptions::default()).unwrap();
    let after = EvalSummary::from_logs(&evaluate(trainer.policy(), &factory, 10, true, seed).unwrap());
    let gain = after.mean_reward - before.mean_reward;
    verdict(
        gain >= 0.5 && after.truncations == 0,
        format!(
            "deterministic return {:.4} → {:.4} (gain {gain:+.4}, need ≥ 0.5); truncations in final 10 episodes: {}",
            before.mean_reward, after.mean_reward, after.truncations
        ),
    )
}

fn criterion_11(pulse: &Pulse) -> Verdict {
    let curves = noise_analysis(&SystemParams::default(), pulse, &[3, 4, 5], &NoiseConfig::default()).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for c3 in curves.iter().filter(|c| c.levels == 3) {
        let t = c3.terminal();
        let in_band = (2e-5..=5e-4).contains(&t);
        let spread = curves
            .iter()
            .filter(|c| c.initial == c3.initial && c.levels != 3)
            .map(|c| (c.terminal() - t).abs())
            .fold(0.0, f64::max);
        ok &= in_band && spread < 1e-4;
        parts.push(format!("{} {t:.4e}{} (4/5-level gap {spread:.1e})", c3.label(), if in_band { "" } else { " OUT OF BAND" }));
    }
    verdict(ok, parts.join("; "))
}

fn criterion_12(pulse: &Pulse) -> Verdict {
    let params = SystemParams::default();
    let grid = SweepGrid::fraction_of_nominal(&params, 0.01, 11).unwrap();
    let table = robustness_sweep(&params, pulse, &grid).unwrap();
    let origin = table.get(5, 5);
    let direct = evaluate_pulse(&params, pulse).unwrap().cost.log10();
    let exact = origin.map(f64::to_bits) == Some(direct.to_bits());
    let mut bytes = Vec::new();
    table.write_csv(&mut bytes).unwrap();
    let parsed = HeatmapTable::read_csv(bytes.as_slice()).unwrap();
    let mut again = Vec::new();
    parsed.write_csv(&mut again).unwrap();
    let lossless = parsed == table && again == bytes;
    verdict(exact && lossless, format!("11×11 grid; origin {origin:?} vs direct {direct} (bitwise {exact}); CSV round-trip lossless {lossless}"))
}

const TITLES: [&str; 12] = [
    "gate-metric oracle",
    "conservation / sector equivalence",
    "identity pipeline",
    "environment contract",
    "reward anchors",
    "optimal-control convergence",
    "spectral signature",
    "quantum speed limit (long)",
    "trust-region correctness",
    "learning smoke test (100k steps)",
    "open-system anchor",
    "sweep pipeline consistency",
];

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let selected: Vec<usize> = args.iter().filter_map(|a| a.parse().ok()).filter(|n| (1..=12).contains(n)).collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);
    let long = std::env::var_os("ACCEPTANCE_LONG").is_some();
    let strict = std::env::var_os("ACCEPTANCE_STRICT").is_some();

    let mut optimized: Option<(Pulse, Verdict)> = None;
    let mut failures = 0;
    println!("acceptance criteria");
    for n in 1..=12 {
        if !wanted(n) {
            continue;
        }
        let start = Instant::now();
        let outcome = match n {
            1 => Some(criterion_1()),
            2 => Some(criterion_2()),
            3 => Some(criterion_3()),
            4 => Some(criterion_4()),
            5 => Some(criterion_5()),
            8 if !(long || selected.contains(&8)) => None,
            8 => Some(criterion_8()),
            9 => Some(criterion_9()),
            10 => Some(criterion_10()),
            _ => {
                let (pulse, v6) = optimized.get_or_insert_with(optimize_flat_top);
                Some(match n {
                    6 => verdict(v6.pass, v6.detail.clone()),
                    7 => criterion_7(pulse),
                    11 => criterion_11(pulse),
                    _ => criterion_12(pulse),
                })
            }
        };
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Some(v) => {
                failures += usize::from(!v.pass);
                println!("[{}] {n:>2} {}: {} ({secs:.1} s)", if v.pass { "PASS" } else { "FAIL" }, TITLES[n - 1], v.detail);
            }
            None => println!("[SKIP] {n:>2} {}: set ACCEPTANCE_LONG=1 or pass 8 to run", TITLES[n - 1]),
        }
    }
    println!("{failures} criteria failed");
    if strict && failures > 0 {
        std::process::exit(1);
    }
}
