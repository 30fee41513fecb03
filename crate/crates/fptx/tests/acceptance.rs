//! Acceptance suite. Runs every acceptance criterion at full scale and prints one
//! `PASS` or `FAIL` line per criterion, followed by the numbers behind it.
//!
//! Criteria listed in [`KNOWN_FAILURES`] are reported as `FAIL` when they fail
//! but do not make the process exit with an error; every other failure does.
//! A single optional argument restricts the run to criteria whose name contains it.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::{perturb, Case, EXACT, KINDS};
use fptx::conditioning::{condition_closed_form, condition_generic, CondKind};
use fptx::errbounds::{bound_block, bound_deep, bound_layer_fresh, compare};
use fptx::fparith::{fl_bin, fl_unary, BinOp, UnaryFn};
use fptx::harness::rng::InstanceRng;
use fptx::harness::stats::{linear_fit, spearman};
use fptx::harness::table::{emit_csv, emit_histograms, hist_path};
use fptx::harness::{run_experiment, ExperimentKind, ExperimentSpec, ResultTable};
use fptx::jacobians::{analytic_jacobian, finite_difference_jacobian, jacobian_kernel_checks, relative_frobenius};
use fptx::net::{self, DeepConfig, NormVariant, Placement};
use fptx::tensor::rel_dist_componentwise;
use fptx::{Error, Norm, PrecisionSpec};

/// Criteria that fail for reasons analysed in the project notes.
const KNOWN_FAILURES: &[&str] = &["input_scaling_slope"];

const D6: PrecisionSpec = PrecisionSpec::DecimalDigits(6);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

type Criterion = fn() -> Verdict;

fn main() {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, Criterion); 10] = [
        ("arithmetic_model", arithmetic_model),
        ("jacobian_validation", jacobian_validation),
        ("kernel_eigen_checks", kernel_eigen_checks),
        ("condition_numbers", condition_numbers),
        ("local_sensitivity", local_sensitivity),
        ("bound_domination", bound_domination),
        ("determinism", determinism),
        ("depth_sweep_growth", depth_sweep_growth),
        ("wkwq_scaling_growth", wkwq_scaling_growth),
        ("input_scaling_slope", input_scaling_slope),
    ];
    let mut unexpected = Vec::new();
    for (name, run) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let secs = start.elapsed().as_secs_f64();
        let known = KNOWN_FAILURES.contains(&name);
        let tag = match (v.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("{tag} {name} [{secs:.1}s]");
        for line in v.detail.lines() {
            println!("    {line}");
        }
        if !v.pass && !known {
            unexpected.push(name);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected acceptance failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}

fn within(start: Instant, limit: Duration) -> (bool, String) {
    let e = start.elapsed();
    (e < limit, format!("runtime {:.1}s (limit {}s)", e.as_secs_f64(), limit.as_secs()))
}

// ---------------------------------------------------------------------------
// Arithmetic model

/// `fl(a op b)` against the exact result, using error-free transformations for
/// the exact value: `a ± b = s + e`, `a·b = p + e`, `a/b = q + r/b`, `√x ≈ q + r/(2q)`.
fn op_error(op: &str, a: f64, b: f64, spec: PrecisionSpec) -> f64 {
    let (fl, hi, lo) = match op {
        "add" | "sub" => {
            let b = if op == "sub" { -b } else { b };
            let s = a + b;
            let bb = s - a;
            let e = (a - (s - bb)) + (b - bb);
            (fl_bin(a, BinOp::Add, b, spec).unwrap(), s, e)
        }
        "mul" => {
            let p = a * b;
            (fl_bin(a, BinOp::Mul, b, spec).unwrap(), p, a.mul_add(b, -p))
        }
        "div" => {
            let q = a / b;
            let r = (-q).mul_add(b, a);
            (fl_bin(a, BinOp::Div, b, spec).unwrap(), q, r / b)
        }
        "sqrt" => {
            let x = a.abs();
            let q = x.sqrt();
            let r = (-q).mul_add(q, x);
            (fl_unary(UnaryFn::Sqrt, x, spec).unwrap(), q, r / (2.0 * q))
        }
        // exp is evaluated in double precision and then rounded; the double
        // result is the reference.
        "exp" => (fl_unary(UnaryFn::Exp, a, spec).unwrap(), a.exp(), 0.0),
        _ => unreachable!(),
    };
    ((fl - hi) - lo).abs() / (hi + lo).abs()
}

fn arithmetic_model() -> Verdict {
    let mut rng = InstanceRng::new(11, 0);
    let mut mismatches = 0;
    for _ in 0..1_000_000 {
        let x = rng.normal() * 10f64.powf(rng.uniform_in(-30.0, 30.0));
        let r = PrecisionSpec::SINGLE.round(x);
        if r.to_bits() != ((x as f32) as f64).to_bits() {
            mismatches += 1;
        }
    }
    let mut detail = format!("binary24 vs hardware single: {mismatches} mismatches in 1e6 values");
    let mut pass = mismatches == 0;
    for spec in [PrecisionSpec::SINGLE, PrecisionSpec::BinarySignificand(11), PrecisionSpec::DecimalDigits(4), D6] {
        let u = spec.unit_roundoff();
        let mut worst: Vec<(&str, f64)> = Vec::new();
        for op in ["add", "sub", "mul", "div", "sqrt", "exp"] {
            let mut w: f64 = 0.0;
            for _ in 0..100_000 {
                let a = spec.round(rng.normal() * 10f64.powf(rng.uniform_in(-5.0, 5.0)));
                let b = spec.round(rng.normal() * 10f64.powf(rng.uniform_in(-5.0, 5.0)));
                let a = if op == "exp" { a.clamp(-700.0, 700.0) } else { a };
                w = w.max(op_error(op, a, b, spec) / u);
            }
            pass &= w <= 1.0;
            worst.push((op, w));
        }
        let list: Vec<String> = worst.iter().map(|(o, w)| format!("{o} {w:.4}")).collect();
        detail.push_str(&format!("\n{spec}: max relative error / u over 1e5 pairs: {}", list.join(", ")));
    }
    verdict(pass, detail)
}

// ---------------------------------------------------------------------------
// Jacobians

fn jacobian_validation() -> Verdict {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for (k, kind) in KINDS.iter().enumerate() {
        let mut rng = InstanceRng::new(21, k as u64);
        let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
        while checked < 200 {
            let case = Case::random(kind, &mut rng).unwrap();
            let pt = case.point();
            let fd = match finite_difference_jacobian(&pt, 1e-5) {
                Ok(j) => j,
                Err(Error::NotDifferentiable(_)) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => panic!("{kind}: {e}"),
            };
            let err = relative_frobenius(&analytic_jacobian(&pt).unwrap(), &fd).unwrap();
            worst = worst.max(err);
            checked += 1;
        }
        pass &= worst <= 1e-5;
        detail.push(format!("{kind}: max relative Frobenius error {worst:.2e} over {checked} instances ({skipped} skipped at kinks)"));
    }
    let (fast, t) = within(start, Duration::from_secs(60));
    detail.push(t);
    verdict(pass && fast, detail.join("\n"))
}

fn kernel_eigen_checks() -> Verdict {
    let mut pass = true;
    let mut detail = Vec::new();
    for (k, kind) in ["rms", "centring", "ln", "softmax"].iter().enumerate() {
        let mut rng = InstanceRng::new(31, k as u64);
        let (mut res, mut spec_gap) = (0.0f64, 0.0f64);
        for _ in 0..200 {
            let case = Case::random(kind, &mut rng).unwrap();
            let diag = jacobian_kernel_checks(&case.point()).unwrap();
            res = res.max(diag.max_residual());
            if let Some(c) = diag.closed_form_spectral {
                spec_gap = spec_gap.max((diag.spectral_norm - c).abs() / c);
            }
        }
        pass &= res <= 1e-12 && spec_gap <= 1e-8;
        detail.push(format!("{kind}: max kernel residual {res:.2e}, max relative gap of the spectral norm {spec_gap:.2e}"));
    }
    verdict(pass, detail.join("\n"))
}

// ---------------------------------------------------------------------------
// Conditioning

const COND_KINDS: [CondKind; 5] = [
    CondKind::Normwise(Norm::Two, Norm::Two),
    CondKind::Normwise(Norm::Inf, Norm::Inf),
    CondKind::Normwise(Norm::One, Norm::One),
    CondKind::Mixed,
    CondKind::Componentwise,
];

fn rel_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn condition_numbers() -> Verdict {
    let mut pass = true;
    let mut detail = Vec::new();
    let layers = ["centring", "rms", "softmax", "affine", "tlp", "matmul", "ln", "scores", "attention"];
    for (k, kind) in layers.iter().enumerate() {
        let mut rng = InstanceRng::new(41, k as u64);
        let (mut eq_gap, mut eq_n, mut dom_n, mut dom_viol, mut tightest) = (0.0f64, 0, 0, 0, f64::INFINITY);
        for _ in 0..200 {
            let case = Case::random(kind, &mut rng).unwrap();
            let pt = case.point();
            for ck in COND_KINDS {
                let closed = match condition_closed_form(&pt, ck) {
                    Ok(c) => c,
                    Err(Error::Unsupported(_)) => continue,
                    Err(e) => panic!("{kind} {ck}: {e}"),
                };
                let generic = condition_generic(&pt, ck).unwrap().value;
                if closed.upper_bound {
                    dom_n += 1;
                    if closed.value < generic * (1.0 - 1e-12) {
                        dom_viol += 1;
                    }
                    tightest = tightest.min(closed.value / generic);
                } else {
                    eq_n += 1;
                    eq_gap = eq_gap.max(rel_gap(closed.value, generic));
                }
            }
        }
        let needs_equality = matches!(*kind, "centring" | "rms" | "softmax" | "affine");
        let needs_bound = matches!(*kind, "ln" | "scores" | "attention");
        pass &= eq_gap <= 1e-10 && dom_viol == 0 && (!needs_equality || eq_n > 0) && (!needs_bound || dom_n > 0);
        let mut line = format!("{kind}: {eq_n} equalities, max relative gap {eq_gap:.2e}");
        if dom_n > 0 {
            line.push_str(&format!("; {dom_n} upper bounds, {dom_viol} violations, min bound/value {tightest:.3}"));
        }
        detail.push(line);
    }
    verdict(pass, detail.join("\n"))
}

fn local_sensitivity() -> Verdict {
    let mut pass = true;
    let mut detail = Vec::new();
    for (k, kind) in KINDS.iter().enumerate() {
        let mut rng = InstanceRng::new(51, k as u64);
        let (mut trials, mut worst, mut skipped) = (0, 0.0f64, 0);
        while trials < 200 {
            let case = Case::random(kind, &mut rng).unwrap();
            let pt = case.point();
            let u = pt.input();
            let uh = perturb(&mut rng, &u, 1e-7);
            if pt.regime(&u).unwrap() != pt.regime(&uh).unwrap() {
                skipped += 1;
                continue;
            }
            let kappa = condition_generic(&pt, CondKind::Componentwise).unwrap().value;
            if !kappa.is_finite() {
                skipped += 1;
                continue;
            }
            let rho_out = rel_dist_componentwise(&pt.eval(&uh).unwrap(), &pt.eval(&u).unwrap());
            let rho_in = rel_dist_componentwise(&uh, &u);
            worst = worst.max(rho_out / (kappa * rho_in));
            trials += 1;
        }
        pass &= worst <= 1.001;
        detail.push(format!("{kind}: max rho_out / (kappa_cc rho_in) = {worst:.5} over {trials} trials ({skipped} redrawn)"));
    }
    verdict(pass, detail.join("\n"))
}

// ---------------------------------------------------------------------------
// Error bounds

struct Tally {
    applicable: usize,
    attempts: usize,
    worst: f64,
}

/// Draws instances until `need` of them satisfy the bound's hypotheses and
/// records the largest ratio of measured error to bound.
fn tally(need: usize, mut draw: impl FnMut(&mut InstanceRng) -> Option<(f64, f64)>, seed: u64) -> Tally {
    let mut rng = InstanceRng::new(61, seed);
    let mut t = Tally { applicable: 0, attempts: 0, worst: 0.0 };
    while t.applicable < need && t.attempts < 50 * need {
        t.attempts += 1;
        if let Some((measured, bound)) = draw(&mut rng) {
            if bound.is_finite() {
                t.applicable += 1;
                t.worst = t.worst.max(measured / bound);
            }
        }
    }
    t
}

fn layer_draw(kind: &'static str) -> impl FnMut(&mut InstanceRng) -> Option<(f64, f64)> {
    move |rng| {
        let case = Case::random(kind, rng).unwrap().rounded(D6);
        let lo = case.eval_in(D6).ok()?;
        let hi = case.eval_in(EXACT).ok()?;
        let b = bound_layer_fresh(&case.point(), D6.unit_roundoff()).ok()?;
        Some((rel_dist_componentwise(&lo, &hi), b.first_order_bound))
    }
}

fn block_draw(variant: NormVariant) -> impl FnMut(&mut InstanceRng) -> Option<(f64, f64)> {
    move |rng| {
        let d = common::int_in(rng, 2, 6);
        let n = common::int_in(rng, 1, 6);
        let h = common::int_in(rng, 1, 8);
        let cfg = common::block(rng, d, h, variant).rounded(D6);
        let x = rng.normal_mat(d, n, 0.0, 1.0).rounded(D6);
        let lo = net::block(&cfg, &x, D6).ok()?;
        let hi = net::block(&cfg, &x, EXACT).ok()?;
        let b = bound_block(&cfg, &x, D6.unit_roundoff(), 0.0).ok()?;
        Some((compare(&lo, &hi).ok()?.componentwise, b.first_order_bound))
    }
}

fn deep_draw(variant: NormVariant) -> impl FnMut(&mut InstanceRng) -> Option<(f64, f64)> {
    move |rng| {
        let d = common::int_in(rng, 2, 4);
        let n = common::int_in(rng, 1, 4);
        let layers = common::int_in(rng, 1, 3);
        let deep = DeepConfig { blocks: (0..layers).map(|_| common::block(rng, d, 4, variant)).collect() }.rounded(D6);
        let x = rng.normal_mat(d, n, 0.0, 1.0).rounded(D6);
        let lo = net::deep_transformer(&deep, &x, D6, false).ok()?.output;
        let hi = net::deep_transformer(&deep, &x, EXACT, false).ok()?.output;
        let b = bound_deep(&deep, &x, D6.unit_roundoff()).ok()?;
        Some((compare(&lo, &hi).ok()?.componentwise, b.first_order_bound))
    }
}

fn bound_domination() -> Verdict {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    let layer_kinds = ["rms", "ln", "tlp", "scores", "softmax", "attention"];
    let mut results: Vec<(String, Tally)> = Vec::new();
    for (k, kind) in layer_kinds.iter().enumerate() {
        results.push((kind.to_string(), tally(100, layer_draw(kind), k as u64)));
    }
    results.push(("block_rms".into(), tally(100, block_draw(NormVariant::RmsNorm), 10)));
    results.push(("block_ln".into(), tally(100, block_draw(NormVariant::LayerNorm), 11)));
    results.push(("deep_rms".into(), tally(100, deep_draw(NormVariant::RmsNorm), 12)));
    results.push(("deep_ln".into(), tally(100, deep_draw(NormVariant::LayerNorm), 13)));
    for (name, t) in &results {
        pass &= t.applicable >= 100 && t.worst <= 1.1;
        detail.push(format!(
            "{name}: max measured/bound {:.3e} over {} applicable instances ({} drawn)",
            t.worst, t.applicable, t.attempts
        ));
    }
    let (fast, line) = within(start, Duration::from_secs(300));
    detail.push(line);
    verdict(pass && fast, detail.join("\n"))
}

// ---------------------------------------------------------------------------
// Experiments

fn scratch_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fptx-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn csv_bytes(table: &ResultTable, dir: &std::path::Path, tag: &str) -> (Vec<u8>, Vec<u8>) {
    let path = dir.join(format!("{tag}.csv"));
    emit_csv(table, &path).unwrap();
    emit_histograms(table, &hist_path(&path)).unwrap();
    (std::fs::read(&path).unwrap(), std::fs::read(hist_path(&path)).unwrap())
}

fn determinism() -> Verdict {
    let dir = scratch_dir();
    let mut pass = true;
    let mut detail = Vec::new();
    for which in ExperimentKind::ALL {
        let mut spec = ExperimentSpec::defaults(which);
        spec.reps = 6;
        match which {
            ExperimentKind::DepthSweep => spec.dims.layers = 4,
            ExperimentKind::WkwqScaling => spec.grids.depths = vec![2, 3],
            ExperimentKind::NormalizationPlacement => spec.dims.layers = 5,
            ExperimentKind::AttentionInputScaling => spec.reps = 30,
        }
        let one = csv_bytes(&run_experiment(&spec, Some(1)).unwrap(), &dir, &format!("{which}-1"));
        let three = csv_bytes(&run_experiment(&spec, Some(3)).unwrap(), &dir, &format!("{which}-3"));
        let again = csv_bytes(&run_experiment(&spec, Some(2)).unwrap(), &dir, &format!("{which}-2"));
        let same = one == three && one == again;
        pass &= same;
        detail.push(format!(
            "{which}: 1, 2 and 3 workers give {} output ({} CSV bytes)",
            if same { "byte-identical" } else { "DIFFERENT" },
            one.0.len()
        ));
    }
    let _ = std::fs::remove_dir_all(&dir);
    verdict(pass, detail.join("\n"))
}

/// `(log10 x, log10 y)` pairs with positive finite `y`.
fn log_points(points: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    points.iter().filter(|(_, y)| y.is_finite() && *y > 0.0).map(|(x, y)| (x.log10(), y.log10())).unzip()
}

fn depth_sweep_growth() -> Verdict {
    let start = Instant::now();
    let spec = ExperimentSpec::defaults(ExperimentKind::DepthSweep);
    let table = run_experiment(&spec, None).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for &p in &spec.precisions {
        let recs: Vec<_> = table.records.iter().filter(|r| r.key.precision == p).collect();
        let layers: Vec<f64> = recs.iter().map(|r| r.key.layer as f64).collect();
        let means: Vec<f64> = recs.iter().map(|r| r.cw.as_ref().map_or(f64::NAN, |s| s.mean).log10()).collect();
        let (slope, _) = linear_fit(&layers, &means);
        let last = recs.last().unwrap();
        let stats = last.cw.as_ref().unwrap();
        let ok = slope > 0.0 && stats.median <= stats.mean;
        pass &= ok;
        let (bound_mean, na) = last.bound.unwrap_or((f64::NAN, 0));
        detail.push(format!(
            "{p}: slope of log10(mean cw error) per layer {slope:.4}; final layer median {:.3e} <= mean {:.3e}; \
             {} non-finite samples; final-layer bound applicable in {} of {} instances (mean {bound_mean:.3e})",
            stats.median,
            stats.mean,
            last.cw_inf,
            spec.reps - na,
            spec.reps
        ));
    }
    let (fast, line) = within(start, Duration::from_secs(600));
    detail.push(line);
    verdict(pass && fast, detail.join("\n"))
}

fn wkwq_scaling_growth() -> Verdict {
    let mut spec = ExperimentSpec::defaults(ExperimentKind::WkwqScaling);
    spec.grids.depths = vec![10, 20];
    let table = run_experiment(&spec, None).unwrap();
    let p = spec.precisions[0];
    let mut detail = vec![format!("lambda grid {:?} at {p}", spec.grids.lambda.iter().map(|l| format!("{l:.3}")).collect::<Vec<_>>())];
    let mut slopes = Vec::new();
    let mut pass = true;
    for &depth in &spec.grids.depths {
        let mut line = format!("L={depth}:");
        for (metric, pick) in [("nw", true), ("cw", false)] {
            let pts: Vec<(f64, f64)> = spec
                .grids
                .lambda
                .iter()
                .map(|&l| {
                    let r = table.get(p, Some(Placement::PreAttention), l, depth).unwrap();
                    let s = if pick { &r.nw } else { &r.cw };
                    (l, s.as_ref().map_or(f64::NAN, |s| s.mean))
                })
                .collect();
            let (x, y) = log_points(&pts);
            let rho = spearman(&x, &y);
            let slope = linear_fit(&x, &y).0;
            line.push_str(&format!(" {metric} spearman {rho:.3} slope {slope:.3};"));
            if pick {
                pass &= x.len() == pts.len() && rho > 0.8;
                slopes.push(slope);
            }
        }
        detail.push(line);
    }
    pass &= slopes[1] >= slopes[0];
    detail.push(format!(
        "criterion evaluated on the normwise mean: slope at L=20 ({:.3}) >= slope at L=10 ({:.3}): {}",
        slopes[1],
        slopes[0],
        slopes[1] >= slopes[0]
    ));
    verdict(pass, detail.join("\n"))
}

fn input_scaling_slope() -> Verdict {
    let start = Instant::now();
    let spec = ExperimentSpec::defaults(ExperimentKind::AttentionInputScaling);
    let table = run_experiment(&spec, None).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for &p in &spec.precisions {
        let pts: Vec<(f64, f64)> = spec
            .grids
            .scale
            .iter()
            .map(|&s| (s, table.get(p, None, s, 1).unwrap().cw.as_ref().map_or(f64::NAN, |st| st.mean)))
            .collect();
        let (x, y) = log_points(&pts);
        let slope = if x.len() == pts.len() { linear_fit(&x, &y).0 } else { f64::NAN };
        pass &= (1.5..=2.5).contains(&slope);
        let means: Vec<String> = pts.iter().map(|(s, m)| format!("{s:.3}:{m:.2e}")).collect();
        detail.push(format!("{p}: fitted log-log slope {slope:.3}; mean cw error by scale {}", means.join(" ")));
    }
    let (fast, line) = within(start, Duration::from_secs(120));
    detail.push(line);
    verdict(pass && fast, detail.join("\n"))
}
