//! Regenerates `data/reference_pulse.csv`: a 50 ns flat-top optimisation,
//! followed by rounds of 3 GHz low-pass filtering and re-optimisation so the
//! stored optimum carries no content the filter would need to remove.
//!
//! ```text
//! cargo run --release -p qpulse-core --example reference_pulse -- data/reference_pulse.csv
//! ```

use qpulse_core::analysis::{spectral_filter, DEFAULT_FILTER_CUTOFF};
use qpulse_core::oct::{grape_optimize, make_guess, ControlProblem, GuessShape, OptimizerConfig};
use qpulse_core::pulse::{DEFAULT_AMPLITUDE_CAP, DEFAULT_DT};
use qpulse_core::SystemParams;

fn main() -> qpulse_core::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "reference_pulse.csv".into());
    let problem = ControlProblem::new(&SystemParams::default(), DEFAULT_DT)?;
    let config = OptimizerConfig::default();
    let guess = make_guess(GuessShape::flat_top(), 50.0, DEFAULT_DT)?;
    let (mut pulse, trace) = grape_optimize(&problem, guess.pulse(), &config)?;
    println!("initial optimisation: J_T = {:.3e} after {} iterations", trace.final_cost(), trace.iterations());
    for round in 1..=ROUNDS {
        let filtered = spectral_filter(&pulse, DEFAULT_FILTER_CUTOFF, DEFAULT_AMPLITUDE_CAP)?;
        let before = problem.metrics(filtered.amplitudes())?.cost;
        let (next, trace) = grape_optimize(&problem, &filtered, &config)?;
        let after = problem.metrics(spectral_filter(&next, DEFAULT_FILTER_CUTOFF, DEFAULT_AMPLITUDE_CAP)?.amplitudes())?.cost;
        println!("round {round}: filtered J_T = {before:.3e}, re-optimised J_T = {:.3e}, re-filtered J_T = {after:.3e}", trace.final_cost());
        pulse = next;
    }
    pulse.save(&out)?;
    println!("wrote {out}");
    Ok(())
}

const ROUNDS: usize = 4;
