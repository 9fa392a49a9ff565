use qpulse_core::analysis::{
    evaluate_pulse, fft_spectrum, noise_analysis, robustness_sweep, spectral_filter, HeatmapTable, SweepGrid,
};
use qpulse_core::pulse::DEFAULT_AMPLITUDE_CAP;
use qpulse_core::{NoiseConfig, Pulse, SystemParams};

fn reference() -> Pulse {
    Pulse::load(concat!(env!("CARGO_MANIFEST_DIR"), "/data/reference_pulse.csv")).unwrap()
}

#[test]
fn reference_pulse_is_a_perfect_entangler() {
    let m = evaluate_pulse(&SystemParams::default(), &reference()).unwrap();
    assert!(m.cost <= 1e-4, "{}", m.cost);
    assert!(m.concurrence > 0.999);
}

#[test]
fn reference_spectrum_peaks_at_qubit_difference() {
    let (f, _) = fft_spectrum(&reference()).unwrap().dominant_nonzero().unwrap();
    assert!((f - 0.86).abs() <= 0.1, "{f}");
}

#[test]
fn filtering_reference_barely_changes_cost() {
    let p = reference();
    let filtered = spectral_filter(&p, 3.0, DEFAULT_AMPLITUDE_CAP).unwrap();
    let a = evaluate_pulse(&SystemParams::default(), &p).unwrap().cost;
    let b = evaluate_pulse(&SystemParams::default(), &filtered).unwrap().cost;
    assert!((a - b).abs() < 1e-3, "{a} vs {b}");
}

#[test]
fn reference_degrades_at_grid_corners() {
    let params = SystemParams::default();
    let grid = SweepGrid::fraction_of_nominal(&params, 0.01, 3).unwrap();
    let table = robustness_sweep(&params, &reference(), &grid).unwrap();
    let origin = table.get(1, 1).unwrap();
    for (i, j) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
        assert!(table.get(i, j).unwrap() > origin);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("robust.csv");
    table.save(&path).unwrap();
    assert_eq!(HeatmapTable::load(&path).unwrap(), table);
}

#[test]
fn noise_levels_agree() {
    let curves = noise_analysis(&SystemParams::default(), &reference(), &[3, 4, 5], &NoiseConfig::default()).unwrap();
    for c3 in curves.iter().filter(|c| c.levels == 3) {
        assert!(c3.terminal() > 2e-5 && c3.terminal() < 2e-3);
        for c in curves.iter().filter(|c| c.initial == c3.initial && c.levels != 3) {
            assert!((c.terminal() - c3.terminal()).abs() < 1e-4);
        }
    }
}
