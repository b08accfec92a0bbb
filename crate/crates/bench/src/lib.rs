//! Shared fixtures for the benchmarks.

use biaslab_core::optimizers::RunConfig;
use biaslab_core::{HingePair, ProductDistribution, SegmentQuadratic};

/// The segment objective at `b = 0.1`, `θ = 1`, unit scale.
pub fn segment() -> SegmentQuadratic {
    SegmentQuadratic::raw(0.1, 1.0).expect("valid segment")
}

/// Paired product distribution for horizon `steps` with `ρ = 1/C`, `C = 3`.
pub fn paired(steps: usize) -> ProductDistribution {
    let c = 1.0 / (8.0 * (steps * steps) as f64);
    ProductDistribution::paired(steps, HingePair::new(c, 1.0 / 3.0).expect("valid hinge")).expect("valid product")
}

pub fn sgd_config(steps: usize, seed: u64) -> RunConfig {
    let eta = 3.0 / (steps as f64).sqrt() * 0.5;
    RunConfig::new(eta, steps, 1.0).expect("valid config").with_seed(seed)
}
