//! Shared fixtures for the benchmarks.

use cmix_core::sim::generate_dataset;
use cmix_core::{SimSpec, SurvivalDataset};

/// A default-scenario dataset of the given size, fixed seed.
pub fn simulated(n: usize, d: usize) -> SurvivalDataset {
    let spec = SimSpec { n, d, s: d.min(10), seed: 7, ..SimSpec::default() };
    generate_dataset(&spec).expect("default scenario is feasible").data
}

/// Durations, indicators and a noisy marker correlated with risk.
pub fn scored(n: usize) -> (Vec<f64>, Vec<bool>, Vec<f64>) {
    let data = simulated(n, 5);
    let scores = data.x().rows().into_iter().map(|r| r.sum()).collect();
    (data.y().to_vec(), data.delta().to_vec(), scores)
}
