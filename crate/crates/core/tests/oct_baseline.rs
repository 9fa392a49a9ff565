use qpulse_core::analysis::{fft_spectrum, spectral_distance};
use qpulse_core::metrics::unitarity;
use qpulse_core::oct::{grape_optimize, make_guess, ControlProblem, GuessShape, OptimizerConfig};
use qpulse_core::pulse::{DEFAULT_AMPLITUDE_CAP, DEFAULT_DT};
use qpulse_core::SystemParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem() -> ControlProblem {
    ControlProblem::new(&SystemParams::default(), DEFAULT_DT).unwrap()
}

#[test]
fn finite_difference_unitarity_gradient_matches_adjoint() {
    let p = problem();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let amps: Vec<f64> = (0..200).map(|_| rng.random_range(-2.0..2.0)).collect();
        let fd = p.gradient(&amps, 1e-5, unitarity).unwrap();
        let adj = p.unitarity_gradient_adjoint(&amps).unwrap();
        let num: f64 = fd.iter().zip(&adj).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = adj.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(num / den < 1e-4, "relative error {}", num / den);
    }
}

#[test]
fn flat_top_guess_converges_monotonically() {
    let guess = make_guess(GuessShape::flat_top(), 50.0, DEFAULT_DT).unwrap();
    let (pulse, trace) = grape_optimize(&problem(), guess.pulse(), &OptimizerConfig::default()).unwrap();
    assert!(trace.final_cost() <= 1e-3, "final J_T {}", trace.final_cost());
    assert!(trace.iterations() <= 200);
    assert!(trace.records.windows(2).all(|w| w[1].cost <= w[0].cost));
    assert!(pulse.max_abs() <= DEFAULT_AMPLITUDE_CAP);
}

#[test]
fn guesses_lead_to_different_spectra() {
    let p = problem();
    let cfg = OptimizerConfig::default();
    let a = make_guess(GuessShape::flat_top(), 50.0, DEFAULT_DT).unwrap();
    let b = make_guess(GuessShape::single_frequency(), 50.0, DEFAULT_DT).unwrap();
    let (pa, ta) = grape_optimize(&p, a.pulse(), &cfg).unwrap();
    let (pb, tb) = grape_optimize(&p, b.pulse(), &cfg).unwrap();
    assert!(ta.final_cost() <= 1e-2 && tb.final_cost() <= 1e-2);
    let d = spectral_distance(&fft_spectrum(&pa).unwrap(), &fft_spectrum(&pb).unwrap()).unwrap();
    assert!(d > 0.1, "spectral distance {d}");
}

#[test]
fn optimum_never_worse_than_guess() {
    let p = problem();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let guess = qpulse_core::oct::random_guess(&mut rng, 8.0, DEFAULT_DT, 1.5).unwrap();
        let cfg = OptimizerConfig { max_iters: 10, amp_cap: 1.5, ..OptimizerConfig::default() };
        let (pulse, trace) = grape_optimize(&p, &guess, &cfg).unwrap();
        let before = p.metrics(guess.amplitudes()).unwrap().cost;
        assert!(p.metrics(pulse.amplitudes()).unwrap().cost <= before);
        assert!(trace.final_cost() <= before);
        assert!(pulse.max_abs() <= 1.5);
    }
}
