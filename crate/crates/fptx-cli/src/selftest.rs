//! A fast end-to-end sanity check: a few hundred random instances through every
//! component, plus a small experiment run with different thread counts.

use anyhow::{bail, Result};
use fptx::conditioning::{condition_closed_form, condition_generic, CondKind};
use fptx::errbounds::bound_layer_fresh;
use fptx::harness::cases::{LayerCase, LAYER_KINDS};
use fptx::harness::rng::InstanceRng;
use fptx::harness::{run_experiment, ExperimentKind, ExperimentSpec};
use fptx::jacobians::{analytic_jacobian, finite_difference_jacobian, relative_frobenius};
use fptx::tensor::rel_dist_componentwise;
use fptx::PrecisionSpec;

type Check = fn() -> Result<String>;

pub fn run() -> Result<()> {
    let checks: [(&str, Check); 5] = [
        ("single precision rounding", single_rounding),
        ("jacobians", jacobians),
        ("condition numbers", conditions),
        ("bounds at d:6", bounds),
        ("thread independence", threads),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(msg) => println!("ok    {name}: {msg}"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name}: {e}");
            }
        }
    }
    if failed > 0 {
        bail!("{failed} self-test check(s) failed");
    }
    Ok(())
}

fn cases(kind: &str, stream: u64, count: usize) -> Vec<LayerCase> {
    let mut rng = InstanceRng::new(7, stream);
    (0..count).filter_map(|_| LayerCase::random(kind, &mut rng)).collect()
}

fn single_rounding() -> Result<String> {
    let mut rng = InstanceRng::new(7, 100);
    for _ in 0..100_000 {
        let x = rng.normal() * 10f64.powf(rng.uniform_in(-30.0, 30.0));
        if PrecisionSpec::SINGLE.round(x) != x as f32 as f64 {
            bail!("b:24 rounding of {x:e} differs from hardware single precision");
        }
    }
    Ok("1e5 values agree with hardware single precision".into())
}

fn jacobians() -> Result<String> {
    let mut worst = 0.0f64;
    for (k, kind) in LAYER_KINDS.iter().enumerate() {
        for case in cases(kind, k as u64, 20) {
            let pt = case.point();
            let Ok(fd) = finite_difference_jacobian(&pt, 1e-5) else { continue };
            worst = worst.max(relative_frobenius(&analytic_jacobian(&pt)?, &fd)?);
        }
    }
    if worst > 1e-5 {
        bail!("analytic and finite-difference Jacobians differ by {worst:e}");
    }
    Ok(format!("max relative difference {worst:.2e}"))
}

fn conditions() -> Result<String> {
    let mut n = 0;
    for (k, kind) in LAYER_KINDS.iter().enumerate() {
        for case in cases(kind, 20 + k as u64, 20) {
            let pt = case.point();
            let Ok(c) = condition_closed_form(&pt, CondKind::Componentwise) else { continue };
            let g = condition_generic(&pt, CondKind::Componentwise)?.value;
            let ok = if c.upper_bound { c.value >= g * (1.0 - 1e-12) } else { (c.value - g).abs() <= 1e-10 * g.abs() };
            if !ok {
                bail!("{kind}: closed form {} against {g}", c.value);
            }
            n += 1;
        }
    }
    Ok(format!("{n} closed forms consistent"))
}

fn bounds() -> Result<String> {
    let p = PrecisionSpec::DecimalDigits(6);
    let mut worst = 0.0f64;
    for (k, kind) in ["rms", "ln", "tlp", "scores", "softmax", "attention"].iter().enumerate() {
        for case in cases(kind, 40 + k as u64, 20) {
            let case = case.rounded(p);
            let b = bound_layer_fresh(&case.point(), p.unit_roundoff())?;
            if !b.applicable() {
                continue;
            }
            let measured = rel_dist_componentwise(&case.eval_in(p)?, &case.eval_in(PrecisionSpec::NativeDouble)?);
            worst = worst.max(measured / b.first_order_bound);
        }
    }
    if worst > 1.1 {
        bail!("a measured error exceeds its bound by a factor {worst:.3}");
    }
    Ok(format!("max measured/bound {worst:.3}"))
}

fn threads() -> Result<String> {
    let mut spec = ExperimentSpec::defaults(ExperimentKind::DepthSweep);
    spec.reps = 6;
    spec.dims.d = 5;
    spec.dims.n = 4;
    spec.dims.hidden = 6;
    spec.dims.layers = 3;
    let one = run_experiment(&spec, Some(1))?.rows();
    let two = run_experiment(&spec, Some(2))?.rows();
    if format!("{one:?}") != format!("{two:?}") {
        bail!("results depend on the number of worker threads");
    }
    Ok(format!("{} identical rows with 1 and 2 workers", one.len()))
}
