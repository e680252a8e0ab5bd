//! Shared fixtures for the kernel benchmarks.

use divseek::{ObjectiveField, ObjectiveSpec, QuadratureSpec};

/// The three-dimensional ringed Gaussian used by every benchmark.
pub fn ringed_gaussian() -> ObjectiveField {
    ObjectiveSpec::named("ringed_gaussian_3d")
        .build()
        .expect("built-in objective")
}

/// Default tensor rule.
pub fn default_quadrature() -> QuadratureSpec {
    QuadratureSpec::default()
}

/// Off-center probe point.
pub const PROBE: [f64; 3] = [1.0, -0.5, 2.0];
