//! Random instances and the four experiments.
//!
//! Each repetition draws one instance from its own random stream, evaluates it
//! at every requested precision and at the reference precision, and returns one
//! sample per output record. Weights and inputs are rounded to the working
//! precision first, so the reference run sees exactly the same data and the
//! measured error is due to the arithmetic alone.

use rayon::prelude::*;

use super::rng::InstanceRng;
use super::spec::{ExperimentKind, ExperimentSpec};
use super::stats::{summarize, ErrorStats};
use crate::errbounds::{bound_deep_layers, compare, MeasuredError};
use crate::error::{Error, Result};
use crate::fparith::PrecisionSpec;
use crate::net::{self, Attention, DeepConfig, Perceptron, Placement, TransformerConfig};
use crate::tensor::Mat;

const REFERENCE: PrecisionSpec = PrecisionSpec::NativeDouble;

/// Weights and input of one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub deep: DeepConfig,
    pub x0: Mat,
}

/// Draws the instance of repetition `rep`. Every block of the stack is the same.
///
/// Draw order: `W_q`, `W_k`, `W_v`, `A₁`, `A₂`, then the diagonal scalings, then `X₀`.
pub fn gen_instance(spec: &ExperimentSpec, rep: usize) -> Result<Instance> {
    spec.validate()?;
    let mut rng = InstanceRng::new(spec.seed, rep as u64);
    let dims = spec.dims;
    let (d, n, h) = (dims.d, dims.n, dims.hidden);
    let (attention, perceptron, x0) = match spec.which {
        ExperimentKind::DepthSweep | ExperimentKind::WkwqScaling => {
            let wq = rng.normal_mat(d, d, 0.0, 1.0);
            let wk = rng.normal_mat(d, d, 0.0, 1.0);
            let wv = rng.normal_mat(d, d, 0.0, 1.0);
            let sd = (d as f64).powf(-0.25);
            let a1 = rng.normal_mat(h, d, 0.0, sd);
            let a2 = rng.normal_mat(d, h, 0.0, sd);
            let d1: Vec<f64> = (0..d).map(|_| rng.uniform_in(0.25, 4.0)).collect();
            let d2: Vec<f64> = (0..d).map(|_| rng.uniform_in(0.25, 4.0)).collect();
            // W_kᵀW_q becomes D₁ W_kᵀW_q D₂.
            let wk = wk.matmul(&Mat::diag(&d1))?;
            let wq = wq.matmul(&Mat::diag(&d2))?;
            let x0 = rng.normal_mat(d, n, 0.0, 1.0);
            (Attention { wq, wk, wv }, Perceptron { a1, b1: vec![0.0; h], a2, b2: vec![0.0; d] }, x0)
        }
        ExperimentKind::AttentionInputScaling => {
            let id = Mat::identity(d);
            let x0 = rng.normal_mat(d, n, 1.0, 0.1);
            let zero = Perceptron { a1: Mat::zeros(h, d), b1: vec![0.0; h], a2: Mat::zeros(d, h), b2: vec![0.0; d] };
            (Attention { wq: id.clone(), wk: id.clone(), wv: id }, zero, x0)
        }
        ExperimentKind::NormalizationPlacement => {
            let sd = 0.1f64.sqrt();
            let wq = rng.normal_mat(d, d, 0.0, sd);
            let wk = rng.normal_mat(d, d, 0.0, sd);
            let wv = rng.normal_mat(d, d, 0.0, sd);
            let a1 = rng.normal_mat(h, d, 0.0, sd);
            let a2 = rng.normal_mat(d, h, 0.0, sd);
            let x0 = rng.normal_mat(d, n, 0.0, 1.0);
            (Attention { wq, wk, wv }, Perceptron { a1, b1: vec![0.0; h], a2, b2: vec![0.0; d] }, x0)
        }
    };
    let block = TransformerConfig {
        attention,
        perceptron,
        variant: spec.variant,
        placement: spec.placements[0],
        softmax: spec.softmax,
    };
    Ok(Instance { deep: DeepConfig::repeated(block, spec.instance_depth()), x0 })
}

/// Identifies one output record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordKey {
    pub precision: PrecisionSpec,
    /// `None` for the attention-only experiment.
    pub placement: Option<Placement>,
    /// `0` when the experiment has no grid.
    pub grid_value: f64,
    pub layer: usize,
}

/// Aggregated samples of one record.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub key: RecordKey,
    /// `None` when every sample was non-finite.
    pub cw: Option<ErrorStats>,
    pub nw: Option<ErrorStats>,
    pub cw_inf: usize,
    pub nw_inf: usize,
    /// Mean of the applicable per-instance bounds and the number of instances
    /// where the bound was not applicable.
    pub bound: Option<(f64, usize)>,
    /// Whether the record is at the last layer of its curve.
    pub is_final: bool,
}

/// Output of an experiment: the spec and one record per key, in CSV order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub spec: ExperimentSpec,
    pub records: Vec<Record>,
}

impl ResultTable {
    pub fn get(&self, precision: PrecisionSpec, placement: Option<Placement>, grid_value: f64, layer: usize) -> Option<&Record> {
        self.records.iter().find(|r| {
            r.key.precision == precision
                && r.key.placement == placement
                && r.key.grid_value == grid_value
                && r.key.layer == layer
        })
    }
}

/// Per-record sample of one repetition.
#[derive(Debug, Clone, Copy)]
struct Sample {
    err: MeasuredError,
    bound: Option<f64>,
}

const FAILED: MeasuredError = MeasuredError { componentwise: f64::INFINITY, normwise: f64::INFINITY };

/// Record keys in CSV order: precision, placement, grid value, layer.
pub fn record_keys(spec: &ExperimentSpec) -> Vec<RecordKey> {
    let mut keys = Vec::new();
    let layers: Vec<usize> = match spec.which {
        ExperimentKind::WkwqScaling => spec.grids.depths.clone(),
        ExperimentKind::AttentionInputScaling => vec![1],
        _ => (1..=spec.dims.layers).collect(),
    };
    let grid: Vec<f64> = match spec.which {
        ExperimentKind::WkwqScaling => spec.grids.lambda.clone(),
        ExperimentKind::AttentionInputScaling => spec.grids.scale.clone(),
        _ => vec![0.0],
    };
    let placements: Vec<Option<Placement>> = match spec.which {
        ExperimentKind::AttentionInputScaling => vec![None],
        ExperimentKind::NormalizationPlacement => spec.placements.iter().copied().map(Some).collect(),
        _ => vec![Some(spec.placements[0])],
    };
    for &precision in &spec.precisions {
        for &placement in &placements {
            for &grid_value in &grid {
                for &layer in &layers {
                    keys.push(RecordKey { precision, placement, grid_value, layer });
                }
            }
        }
    }
    keys
}

/// Errors after each of the first `layers` blocks, evaluated under `low` and
/// under the reference. Entries after a failed evaluation are `∞`.
fn trajectory_errors(deep: &DeepConfig, x: &Mat, low: PrecisionSpec, layers: usize) -> Vec<MeasuredError> {
    let mut out = Vec::with_capacity(layers);
    let (mut lo, mut hi) = (x.clone(), x.clone());
    for b in deep.blocks.iter().take(layers) {
        let next = net::block(b, &lo, low).and_then(|l| Ok((l, net::block(b, &hi, REFERENCE)?)));
        match next {
            Ok((l, h)) => {
                out.push(compare(&l, &h).unwrap_or(FAILED));
                lo = l;
                hi = h;
            }
            Err(_) => break,
        }
    }
    out.resize(layers, FAILED);
    out
}

fn with_wq_scaled(deep: &DeepConfig, lambda: f64) -> DeepConfig {
    let mut out = deep.clone();
    for b in &mut out.blocks {
        b.attention.wq = b.attention.wq.scale(lambda);
    }
    out
}

fn with_placement(deep: &DeepConfig, placement: Placement) -> DeepConfig {
    let mut out = deep.clone();
    for b in &mut out.blocks {
        b.placement = placement;
    }
    out
}

/// Samples of one repetition, aligned with [`record_keys`].
fn run_rep(spec: &ExperimentSpec, rep: usize) -> Result<Vec<Sample>> {
    let inst = gen_instance(spec, rep)?;
    let mut out = Vec::new();
    let no_bound = |err| Sample { err, bound: None };
    match spec.which {
        ExperimentKind::DepthSweep => {
            let layers = spec.dims.layers;
            for &p in &spec.precisions {
                let deep = inst.deep.rounded(p);
                let x = inst.x0.rounded(p);
                let errs = trajectory_errors(&deep, &x, p, layers);
                let bounds: Vec<f64> = if spec.bounds {
                    match bound_deep_layers(&deep, &x, p.unit_roundoff()) {
                        Ok(rs) => rs.iter().map(|r| r.first_order_bound).collect(),
                        Err(_) => vec![f64::INFINITY; layers],
                    }
                } else {
                    Vec::new()
                };
                for (l, err) in errs.into_iter().enumerate() {
                    out.push(Sample { err, bound: bounds.get(l).copied() });
                }
            }
        }
        ExperimentKind::WkwqScaling => {
            let depth = spec.instance_depth();
            for &p in &spec.precisions {
                for &lambda in &spec.grids.lambda {
                    let deep = with_wq_scaled(&inst.deep, lambda).rounded(p);
                    let errs = trajectory_errors(&deep, &inst.x0.rounded(p), p, depth);
                    out.extend(spec.grids.depths.iter().map(|&l| no_bound(errs[l - 1])));
                }
            }
        }
        ExperimentKind::AttentionInputScaling => {
            for &p in &spec.precisions {
                let att = inst.deep.blocks[0].attention.rounded(p);
                for &s in &spec.grids.scale {
                    let x = inst.x0.scale(s).rounded(p);
                    let eval = |ctx| net::self_attention_with(&att, &x, ctx, spec.softmax);
                    let err = match (eval(p), eval(REFERENCE)) {
                        (Ok(lo), Ok(hi)) => compare(&lo, &hi).unwrap_or(FAILED),
                        _ => FAILED,
                    };
                    out.push(no_bound(err));
                }
            }
        }
        ExperimentKind::NormalizationPlacement => {
            for &p in &spec.precisions {
                for &placement in &spec.placements {
                    let deep = with_placement(&inst.deep, placement).rounded(p);
                    let errs = trajectory_errors(&deep, &inst.x0.rounded(p), p, spec.dims.layers);
                    out.extend(errs.into_iter().map(no_bound));
                }
            }
        }
    }
    Ok(out)
}

fn summarize_opt(samples: &[f64]) -> (Option<ErrorStats>, usize) {
    match summarize(samples) {
        Ok(s) => {
            let inf = s.count_inf;
            (Some(s), inf)
        }
        Err(_) => (None, samples.len()),
    }
}

/// Runs any experiment on a pool of `threads` workers (`None`: one per core).
/// The result does not depend on the number of workers.
pub fn run_experiment(spec: &ExperimentSpec, threads: Option<usize>) -> Result<ResultTable> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let per_rep: Vec<Vec<Sample>> =
        pool.install(|| (0..spec.reps).into_par_iter().map(|rep| run_rep(spec, rep)).collect::<Result<_>>())?;
    let keys = record_keys(spec);
    let last_layer = |k: &RecordKey| match spec.which {
        ExperimentKind::DepthSweep | ExperimentKind::NormalizationPlacement => k.layer == spec.dims.layers,
        _ => true,
    };
    let records = keys
        .iter()
        .enumerate()
        .map(|(i, key)| {
            let cw: Vec<f64> = per_rep.iter().map(|s| s[i].err.componentwise).collect();
            let nw: Vec<f64> = per_rep.iter().map(|s| s[i].err.normwise).collect();
            let (cw, cw_inf) = summarize_opt(&cw);
            let (nw, nw_inf) = summarize_opt(&nw);
            let bound = (spec.bounds && spec.which == ExperimentKind::DepthSweep).then(|| {
                let finite: Vec<f64> =
                    per_rep.iter().filter_map(|s| s[i].bound).filter(|b| b.is_finite()).collect();
                let mean = if finite.is_empty() { f64::NAN } else { finite.iter().sum::<f64>() / finite.len() as f64 };
                (mean, per_rep.len() - finite.len())
            });
            Record { key: *key, cw, nw, cw_inf, nw_inf, bound, is_final: last_layer(key) }
        })
        .collect();
    Ok(ResultTable { spec: spec.clone(), records })
}

fn expect_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<()> {
    if spec.which == kind {
        Ok(())
    } else {
        Err(Error::Config(format!("spec is for {}, not {}", spec.which, kind)))
    }
}

/// Per-layer errors of a deep stack of identical blocks.
pub fn run_depth_sweep(spec: &ExperimentSpec) -> Result<ResultTable> {
    expect_kind(spec, ExperimentKind::DepthSweep)?;
    run_experiment(spec, None)
}

/// Final-layer errors over the `λ` and depth grids.
pub fn run_wkwq_scaling(spec: &ExperimentSpec) -> Result<ResultTable> {
    expect_kind(spec, ExperimentKind::WkwqScaling)?;
    run_experiment(spec, None)
}

/// Errors of a single self-attention application over the input scale grid.
pub fn run_attention_input_scaling(spec: &ExperimentSpec) -> Result<ResultTable> {
    expect_kind(spec, ExperimentKind::AttentionInputScaling)?;
    run_experiment(spec, None)
}

/// Per-layer errors for each normalization placement on the same instances.
pub fn run_normalization_placement(spec: &ExperimentSpec) -> Result<ResultTable> {
    expect_kind(spec, ExperimentKind::NormalizationPlacement)?;
    run_experiment(spec, None)
}
