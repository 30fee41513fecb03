//! The `check-jacobians`, `condition` and `bound` subcommands.

use anyhow::{anyhow, bail, Result};
use fptx::conditioning::{condition_closed_form, condition_generic, CondKind};
use fptx::errbounds::{bound_block, bound_deep, bound_layer_fresh, compare, BoundReport};
use fptx::harness::cases::{block, int_in, LayerCase, LAYER_KINDS};
use fptx::harness::rng::InstanceRng;
use fptx::jacobians::{analytic_jacobian, finite_difference_jacobian, relative_frobenius, richardson_gap};
use fptx::net::{self, DeepConfig, NormVariant};
use fptx::tensor::rel_dist_componentwise;
use fptx::{Error, Norm, PrecisionSpec};

use crate::Common;

const EXACT: PrecisionSpec = PrecisionSpec::NativeDouble;

fn random_case(kind: &str, rng: &mut InstanceRng) -> Result<LayerCase> {
    LayerCase::random(kind, rng).ok_or_else(|| anyhow!("unknown layer `{kind}`; expected one of {}", LAYER_KINDS.join(", ")))
}

pub fn check_jacobians(common: &Common, step: f64) -> Result<()> {
    let reps = common.reps.unwrap_or(50);
    let seed = common.seed.unwrap_or(1);
    println!("{:<10} {:>9} {:>7} {:>14} {:>14}", "layer", "instances", "kinks", "max rel err", "max richardson");
    for (k, kind) in LAYER_KINDS.iter().enumerate() {
        let mut rng = InstanceRng::new(seed, k as u64);
        let (mut kinks, mut worst, mut gap) = (0, 0.0f64, 0.0f64);
        for _ in 0..reps {
            let case = random_case(kind, &mut rng)?;
            let pt = case.point();
            match finite_difference_jacobian(&pt, step) {
                Ok(fd) => {
                    worst = worst.max(relative_frobenius(&analytic_jacobian(&pt)?, &fd)?);
                    gap = gap.max(richardson_gap(&pt, step)?);
                }
                Err(Error::NotDifferentiable(_)) => kinks += 1,
                Err(e) => return Err(e.into()),
            }
        }
        println!("{kind:<10} {reps:>9} {kinks:>7} {worst:>14.3e} {gap:>14.3e}");
    }
    Ok(())
}

const COND_KINDS: [CondKind; 5] = [
    CondKind::Normwise(Norm::Two, Norm::Two),
    CondKind::Normwise(Norm::Inf, Norm::Inf),
    CondKind::Normwise(Norm::One, Norm::One),
    CondKind::Mixed,
    CondKind::Componentwise,
];

pub fn condition(layer: &str, common: &Common) -> Result<()> {
    let mut rng = InstanceRng::new(common.seed.unwrap_or(1), 0);
    for i in 0..common.reps.unwrap_or(5) {
        let case = random_case(layer, &mut rng)?;
        let pt = case.point();
        println!("instance {i}: input length {}", pt.input().len());
        for ck in COND_KINDS {
            let generic = condition_generic(&pt, ck)?.value;
            let closed = match condition_closed_form(&pt, ck) {
                Ok(c) => format!("{} {:.6e}", if c.upper_bound { "<=" } else { "==" }, c.value),
                Err(Error::Unsupported(_)) => "(no closed form)".into(),
                Err(e) => return Err(e.into()),
            };
            println!("  {:<16} {generic:.6e}  closed form {closed}", ck.to_string());
        }
    }
    Ok(())
}

fn failed_hypotheses(b: &BoundReport) -> String {
    let failed: Vec<&str> = b.assumptions.iter().filter(|a| !a.holds).map(|a| a.name.as_str()).collect();
    if failed.is_empty() {
        String::new()
    } else {
        format!("  failed: {}", failed.join(", "))
    }
}

/// Measured componentwise error and bound of one random instance at `p`.
fn measure(target: &str, rng: &mut InstanceRng, p: PrecisionSpec, variant: NormVariant, layers: usize) -> Result<(f64, BoundReport)> {
    let u = p.unit_roundoff();
    match target {
        "block" | "deep" => {
            let d = int_in(rng, 2, 6);
            let n = int_in(rng, 1, 6);
            let h = int_in(rng, 1, 8);
            let depth = if target == "block" { 1 } else { layers };
            let deep = DeepConfig { blocks: (0..depth).map(|_| block(rng, d, h, variant)).collect() }.rounded(p);
            let x = rng.normal_mat(d, n, 0.0, 1.0).rounded(p);
            let lo = net::deep_transformer(&deep, &x, p, false)?.output;
            let hi = net::deep_transformer(&deep, &x, EXACT, false)?.output;
            let bound = if target == "block" { bound_block(&deep.blocks[0], &x, u, 0.0)? } else { bound_deep(&deep, &x, u)? };
            Ok((compare(&lo, &hi)?.componentwise, bound))
        }
        kind => {
            let case = random_case(kind, rng)?.rounded(p);
            let measured = rel_dist_componentwise(&case.eval_in(p)?, &case.eval_in(EXACT)?);
            Ok((measured, bound_layer_fresh(&case.point(), u)?))
        }
    }
}

pub fn bound(target: &str, common: &Common, layers: usize) -> Result<()> {
    if !matches!(target, "block" | "deep") && !LAYER_KINDS.contains(&target) {
        bail!("unknown target `{target}`; expected block, deep or one of {}", LAYER_KINDS.join(", "));
    }
    if target == "deep" && layers == 0 {
        bail!("--layers must be positive");
    }
    let precisions =
        if common.precisions.is_empty() { vec![PrecisionSpec::DecimalDigits(6)] } else { common.precisions.clone() };
    let variant = common.variant.unwrap_or(NormVariant::LayerNorm);
    let reps = common.reps.unwrap_or(10);
    for p in precisions {
        if p.is_native() {
            bail!("bounds need a working precision coarser than double");
        }
        let mut rng = InstanceRng::new(common.seed.unwrap_or(1), 0);
        let (mut applicable, mut worst) = (0, 0.0f64);
        println!("{target} at {p} (u = {:.3e})", p.unit_roundoff());
        for i in 0..reps {
            let (measured, b) = match measure(target, &mut rng, p, variant, layers) {
                Ok(v) => v,
                Err(e) => {
                    println!("  {i:>3}: evaluation failed: {e}");
                    continue;
                }
            };
            if b.applicable() {
                applicable += 1;
                worst = worst.max(measured / b.first_order_bound);
            }
            println!(
                "  {i:>3}: measured {measured:.3e}  bound {:.3e}{}",
                b.first_order_bound,
                failed_hypotheses(&b)
            );
        }
        println!("  bound applicable in {applicable} of {reps}; max measured/bound {worst:.3e}");
    }
    Ok(())
}
