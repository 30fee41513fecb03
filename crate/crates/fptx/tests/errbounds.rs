//! Rounding-error bounds: frozen coefficients, structural properties and
//! domination of measured errors.

mod common;

use common::{Case, EXACT};
use fptx::errbounds::{bound_block, bound_deep_layers, bound_layer_fresh, bound_layer_perturbed, compare};
use fptx::harness::rng::InstanceRng;
use fptx::jacobians::LayerPoint;
use fptx::net::{self, DeepConfig, NormVariant};
use fptx::tensor::rel_dist_componentwise;
use fptx::{Mat, PrecisionSpec};
use proptest::prelude::*;

const D4: PrecisionSpec = PrecisionSpec::DecimalDigits(4);

#[test]
fn frozen_fresh_coefficients() {
    let u = 5e-4;
    let rms = bound_layer_fresh(&LayerPoint::RmsNorm(&[1.0, -2.0, 3.0, 0.5]), u).unwrap();
    assert!((rms.first_order_bound - 5.0 * u).abs() < 1e-18);
    let sm = bound_layer_fresh(&LayerPoint::Softmax(&[0.5, -1.0, 2.0]), u).unwrap();
    assert!((sm.first_order_bound - 6.0 * u).abs() < 1e-18);
    let perturbed = bound_layer_perturbed(&LayerPoint::Softmax(&[0.5, -1.0, 2.0]), u, 1e-3, 2.0).unwrap();
    assert!((perturbed.first_order_bound - (6.0 * u + 4.0 * 1e-3)).abs() < 1e-15);
}

#[test]
fn compare_by_hand() {
    let hat = Mat::from_cols(&[vec![1.0, 2.2]]).unwrap();
    let exact = Mat::from_cols(&[vec![1.0, 2.0]]).unwrap();
    let m = compare(&hat, &exact).unwrap();
    assert!((m.componentwise - 0.1).abs() < 1e-15);
    assert!(m.normwise > 0.0 && m.normwise < m.componentwise);
}

#[test]
fn invalid_arguments_are_rejected() {
    let pt = LayerPoint::Softmax(&[0.0, 1.0]);
    assert!(bound_layer_fresh(&pt, 0.0).is_err());
    assert!(bound_layer_perturbed(&pt, 1e-4, -1.0, 2.0).is_err());
    assert!(bound_layer_perturbed(&pt, 1e-4, 1e-3, 1.0).is_err());
}

#[test]
fn large_input_perturbation_voids_the_perceptron_bound() {
    let mut rng = InstanceRng::new(5, 0);
    let case = Case::random("tlp", &mut rng).unwrap();
    let b = bound_layer_perturbed(&case.point(), 1e-4, 10.0, 2.0).unwrap();
    assert!(!b.applicable());
    assert!(b.first_order_bound.is_infinite());
}

#[test]
fn empty_stack_has_no_layer_bounds() {
    let x = Mat::from_cols(&[vec![1.0, 2.0]]).unwrap();
    assert!(bound_deep_layers(&DeepConfig { blocks: Vec::new() }, &x, 1e-4).unwrap().is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn zero_perturbation_reduces_to_fresh(
        seed in any::<u64>(),
        kind in prop::sample::select(vec!["centring", "rms", "ln", "affine", "tlp", "scores", "softmax", "attention", "matmul"]),
    ) {
        let mut rng = InstanceRng::new(seed, 0);
        let case = Case::random(kind, &mut rng).unwrap();
        let pt = case.point();
        let fresh = bound_layer_fresh(&pt, 1e-6).unwrap().first_order_bound;
        let zero = bound_layer_perturbed(&pt, 1e-6, 0.0, 2.0).unwrap().first_order_bound;
        if kind == "ln" || kind == "tlp" {
            // The margin hypotheses depend on alpha, the coefficient does not.
            prop_assert!(zero == fresh || zero.is_infinite() || fresh.is_infinite());
        } else {
            prop_assert_eq!(zero, fresh);
        }
    }

    #[test]
    fn bounds_grow_with_input_perturbation(
        seed in any::<u64>(),
        kind in prop::sample::select(vec!["rms", "ln", "affine", "scores", "softmax", "attention", "matmul"]),
    ) {
        let mut rng = InstanceRng::new(seed, 1);
        let case = Case::random(kind, &mut rng).unwrap();
        let pt = case.point();
        let mut last = bound_layer_perturbed(&pt, 1e-6, 0.0, 2.0).unwrap().first_order_bound;
        for rho in [1e-9, 1e-8, 1e-7] {
            let b = bound_layer_perturbed(&pt, 1e-6, rho, 2.0).unwrap().first_order_bound;
            prop_assert!(b >= last);
            last = b;
        }
    }

    #[test]
    fn layer_bounds_dominate_at_four_digits(
        seed in any::<u64>(),
        kind in prop::sample::select(vec!["rms", "ln", "tlp", "scores", "softmax", "attention"]),
    ) {
        let mut rng = InstanceRng::new(seed, 2);
        let case = Case::random(kind, &mut rng).unwrap().rounded(D4);
        let b = bound_layer_fresh(&case.point(), D4.unit_roundoff()).unwrap();
        prop_assume!(b.applicable());
        let measured = rel_dist_componentwise(&case.eval_in(D4).unwrap(), &case.eval_in(EXACT).unwrap());
        prop_assert!(measured <= 1.1 * b.first_order_bound, "{kind}: {measured:e} > {:e}", b.first_order_bound);
    }

    #[test]
    fn block_bound_dominates_at_four_digits(seed in any::<u64>(), ln in any::<bool>()) {
        let mut rng = InstanceRng::new(seed, 3);
        let variant = if ln { NormVariant::LayerNorm } else { NormVariant::RmsNorm };
        let cfg = common::block(&mut rng, 4, 6, variant).rounded(D4);
        let x = rng.normal_mat(4, 3, 0.0, 1.0).rounded(D4);
        let b = bound_block(&cfg, &x, D4.unit_roundoff(), 0.0).unwrap();
        prop_assume!(b.applicable());
        let m = compare(&net::block(&cfg, &x, D4).unwrap(), &net::block(&cfg, &x, EXACT).unwrap()).unwrap();
        prop_assert!(m.componentwise <= 1.1 * b.first_order_bound);
    }
}
