//! Helpers shared by the integration tests.
#![allow(dead_code, unused_imports)]

use fptx::harness::rng::InstanceRng;
use fptx::PrecisionSpec;

pub use fptx::harness::cases::{block, int_in, LayerCase as Case, LAYER_KINDS as KINDS};

pub const EXACT: PrecisionSpec = PrecisionSpec::NativeDouble;

/// `x ∘ (1 + δ)` with `δᵢ` uniform in `[−eps, eps]`.
pub fn perturb(rng: &mut InstanceRng, x: &[f64], eps: f64) -> Vec<f64> {
    x.iter().map(|&v| v * (1.0 + rng.uniform_in(-eps, eps))).collect()
}
