//! Condition numbers: closed forms against the Jacobian-based definitions.

mod common;

use common::{perturb, Case};
use fptx::conditioning::{
    condition_closed_form, condition_generic, xi_simscores, xi_simscores_spectral_bound, CondKind,
};
use fptx::harness::rng::InstanceRng;
use fptx::jacobians::LayerPoint;
use fptx::net::Attention;
use fptx::tensor::rel_dist_componentwise;
use fptx::{Mat, Norm};
use proptest::prelude::*;

#[test]
fn softmax_componentwise_by_hand() {
    // ψ = (1/4, 3/4), J = [[3, −3], [−3, 3]] / 16, so κ = max_i |J_i2| ln 3 / ψ_i = 0.75 ln 3.
    let s = [0.0, 3f64.ln()];
    let k = condition_generic(&LayerPoint::Softmax(&s), CondKind::Componentwise).unwrap().value;
    assert!((k - 0.75 * 3f64.ln()).abs() < 1e-14, "{k}");
    let c = condition_closed_form(&LayerPoint::Softmax(&s), CondKind::Componentwise).unwrap();
    assert!(!c.upper_bound);
    assert!((c.value - k).abs() < 1e-14);
}

#[test]
fn affine_normwise_by_hand() {
    // A = diag(2, 1), b = 0, x = (1, 1): κ₂ = ‖A‖₂‖x‖₂ / ‖Ax‖₂ = 2√2 / √5.
    let a = Mat::diag(&[2.0, 1.0]);
    let pt = LayerPoint::Affine { a: &a, b: &[0.0, 0.0], x: &[1.0, 1.0] };
    let k = condition_generic(&pt, CondKind::Normwise(Norm::Two, Norm::Two)).unwrap().value;
    assert!((k - 2.0 * 2f64.sqrt() / 5f64.sqrt()).abs() < 1e-14, "{k}");
}

#[test]
fn centring_is_ill_conditioned_near_constant_inputs() {
    let near = [1.0, 1.0 + 1e-9, 1.0 - 1e-9];
    let k = condition_generic(&LayerPoint::Centring(&near), CondKind::Componentwise).unwrap().value;
    assert!(k > 1e8);
}

/// `ξ(S)` is not bounded by `σ_max(|W_k|ᵀ|W_q|) / σ_min(W_kᵀW_q)`: with identity
/// weights that ratio is 1, while a column nearly orthogonal to the last one
/// makes its score tiny relative to the absolute-value sum.
#[test]
fn spectral_ratio_does_not_bound_xi_of_scores() {
    let att = Attention { wq: Mat::identity(2), wk: Mat::identity(2), wv: Mat::identity(2) };
    assert!((xi_simscores_spectral_bound(&att).unwrap() - 1.0).abs() < 1e-15);
    let x = Mat::from_cols(&[vec![-1.0, 1.0 + 1e-6], vec![1.0, 1.0]]).unwrap();
    let xi = xi_simscores(&att, &x).unwrap();
    assert!(xi > 1e5, "{xi}");
}

fn equality_kind(kind: &str) -> bool {
    matches!(kind, "centring" | "rms" | "softmax" | "affine")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn closed_forms_match_or_dominate(
        seed in any::<u64>(),
        kind in prop::sample::select(vec!["centring", "rms", "ln", "softmax", "affine", "tlp", "matmul", "scores", "attention"]),
    ) {
        let mut rng = InstanceRng::new(seed, 1);
        let case = Case::random(kind, &mut rng).unwrap();
        let pt = case.point();
        for ck in [CondKind::Normwise(Norm::Two, Norm::Two), CondKind::Mixed, CondKind::Componentwise] {
            let Ok(closed) = condition_closed_form(&pt, ck) else { continue };
            let generic = condition_generic(&pt, ck).unwrap().value;
            if closed.upper_bound {
                prop_assert!(!equality_kind(kind));
                prop_assert!(closed.value >= generic * (1.0 - 1e-12), "{kind} {ck}: {} < {generic}", closed.value);
            } else {
                prop_assert!((closed.value - generic).abs() <= 1e-10 * generic.abs().max(1e-300), "{kind} {ck}");
            }
        }
    }

    #[test]
    fn componentwise_number_bounds_small_perturbations(
        seed in any::<u64>(),
        kind in prop::sample::select(vec!["rms", "ln", "softmax", "scores", "attention"]),
    ) {
        let mut rng = InstanceRng::new(seed, 2);
        let case = Case::random(kind, &mut rng).unwrap();
        let pt = case.point();
        let u = pt.input();
        let uh = perturb(&mut rng, &u, 1e-8);
        let kappa = condition_generic(&pt, CondKind::Componentwise).unwrap().value;
        // Keep second-order terms well below the slack.
        prop_assume!(kappa < 1e4);
        let out = rel_dist_componentwise(&pt.eval(&uh).unwrap(), &pt.eval(&u).unwrap());
        prop_assert!(out <= 1.001 * kappa * rel_dist_componentwise(&uh, &u));
    }

    #[test]
    fn mixed_never_exceeds_componentwise(seed in any::<u64>(), kind in prop::sample::select(vec!["rms", "ln", "softmax", "affine"])) {
        let mut rng = InstanceRng::new(seed, 3);
        let case = Case::random(kind, &mut rng).unwrap();
        let pt = case.point();
        let m = condition_generic(&pt, CondKind::Mixed).unwrap().value;
        let c = condition_generic(&pt, CondKind::Componentwise).unwrap().value;
        prop_assert!(m <= c * (1.0 + 1e-12));
    }
}
