//! Random layer instances and transformer blocks of small size, used by the
//! diagnostics commands and the test suites.

use super::rng::InstanceRng;
use crate::error::Result;
use crate::jacobians::LayerPoint;
use crate::net::{self, Attention, NormVariant, Perceptron, Placement, SoftmaxKind, TransformerConfig};
use crate::{Mat, PrecisionSpec};

/// Uniform integer in `lo..=hi`.
pub fn int_in(rng: &mut InstanceRng, lo: usize, hi: usize) -> usize {
    lo + ((rng.uniform() * (hi - lo + 1) as f64) as usize).min(hi - lo)
}

pub fn normal_vec(rng: &mut InstanceRng, len: usize) -> Vec<f64> {
    rng.normal_vec(len, 0.0, 1.0)
}

pub fn attention(rng: &mut InstanceRng, d: usize) -> Attention {
    let sd = 1.0 / (d as f64).sqrt();
    Attention {
        wq: rng.normal_mat(d, d, 0.0, sd),
        wk: rng.normal_mat(d, d, 0.0, sd),
        wv: rng.normal_mat(d, d, 0.0, 1.0),
    }
}

pub fn perceptron(rng: &mut InstanceRng, d: usize, hidden: usize) -> Perceptron {
    Perceptron {
        a1: rng.normal_mat(hidden, d, 0.0, 1.0),
        b1: normal_vec(rng, hidden),
        a2: rng.normal_mat(d, hidden, 0.0, 1.0),
        b2: normal_vec(rng, d),
    }
}

pub fn block(rng: &mut InstanceRng, d: usize, hidden: usize, variant: NormVariant) -> TransformerConfig {
    TransformerConfig {
        attention: attention(rng, d),
        perceptron: perceptron(rng, d, hidden),
        variant,
        placement: Placement::PreAttention,
        softmax: SoftmaxKind::Unshifted,
    }
}

/// Owned data behind a [`LayerPoint`].
#[derive(Debug, Clone)]
pub enum LayerCase {
    Centring(Vec<f64>),
    RmsNorm(Vec<f64>),
    LayerNorm(Vec<f64>),
    Affine { a: Mat, b: Vec<f64>, x: Vec<f64> },
    Perceptron { p: Perceptron, x: Vec<f64> },
    SimScores { att: Attention, x: Mat },
    Softmax(Vec<f64>),
    Attention { att: Attention, x: Mat },
    MatMul { x: Mat, y: Mat },
}

pub const LAYER_KINDS: [&str; 9] = ["centring", "rms", "ln", "affine", "tlp", "scores", "softmax", "attention", "matmul"];

impl LayerCase {
    /// A random instance of layer `kind` (one of [`LAYER_KINDS`]) with `d, n ≤ 6`
    /// and `D ≤ 8`; `None` for an unknown kind.
    pub fn random(kind: &str, rng: &mut InstanceRng) -> Option<LayerCase> {
        let d = int_in(rng, 2, 6);
        let n = int_in(rng, 1, 6);
        let case = match kind {
            "centring" => LayerCase::Centring(normal_vec(rng, d)),
            "rms" => LayerCase::RmsNorm(normal_vec(rng, d)),
            // In two dimensions layer normalization is locally constant.
            "ln" => LayerCase::LayerNorm(normal_vec(rng, d.max(3))),
            "affine" => {
                let m = int_in(rng, 1, 6);
                LayerCase::Affine { a: rng.normal_mat(m, d, 0.0, 1.0), b: normal_vec(rng, m), x: normal_vec(rng, d) }
            }
            "tlp" => {
                let hidden = int_in(rng, 1, 8);
                LayerCase::Perceptron { p: perceptron(rng, d, hidden), x: normal_vec(rng, d) }
            }
            "scores" => LayerCase::SimScores { att: attention(rng, d), x: rng.normal_mat(d, n, 0.0, 1.0) },
            "softmax" => LayerCase::Softmax(rng.normal_vec(n, 0.0, 2.0)),
            "attention" => LayerCase::Attention { att: attention(rng, d), x: rng.normal_mat(d, n, 0.0, 1.0) },
            "matmul" => {
                let (m, p) = (int_in(rng, 1, 6), int_in(rng, 1, 6));
                LayerCase::MatMul { x: rng.normal_mat(m, d, 0.0, 1.0), y: rng.normal_mat(d, p, 0.0, 1.0) }
            }
            _ => return None,
        };
        Some(case)
    }

    pub fn point(&self) -> LayerPoint<'_> {
        match self {
            LayerCase::Centring(x) => LayerPoint::Centring(x),
            LayerCase::RmsNorm(x) => LayerPoint::RmsNorm(x),
            LayerCase::LayerNorm(x) => LayerPoint::LayerNorm(x),
            LayerCase::Affine { a, b, x } => LayerPoint::Affine { a, b, x },
            LayerCase::Perceptron { p, x } => LayerPoint::Perceptron { p, x },
            LayerCase::SimScores { att, x } => LayerPoint::SimScores { att, x },
            LayerCase::Softmax(s) => LayerPoint::Softmax(s),
            LayerCase::Attention { att, x } => LayerPoint::Attention { att, x },
            LayerCase::MatMul { x, y } => LayerPoint::MatMul { x, y },
        }
    }

    /// The same layer with every weight and input rounded to `p`.
    pub fn rounded(&self, p: PrecisionSpec) -> LayerCase {
        let v = |x: &[f64]| x.iter().map(|&a| p.round(a)).collect::<Vec<f64>>();
        match self {
            LayerCase::Centring(x) => LayerCase::Centring(v(x)),
            LayerCase::RmsNorm(x) => LayerCase::RmsNorm(v(x)),
            LayerCase::LayerNorm(x) => LayerCase::LayerNorm(v(x)),
            LayerCase::Affine { a, b, x } => LayerCase::Affine { a: a.rounded(p), b: v(b), x: v(x) },
            LayerCase::Perceptron { p: q, x } => LayerCase::Perceptron { p: q.rounded(p), x: v(x) },
            LayerCase::SimScores { att, x } => LayerCase::SimScores { att: att.rounded(p), x: x.rounded(p) },
            LayerCase::Softmax(s) => LayerCase::Softmax(v(s)),
            LayerCase::Attention { att, x } => LayerCase::Attention { att: att.rounded(p), x: x.rounded(p) },
            LayerCase::MatMul { x, y } => LayerCase::MatMul { x: x.rounded(p), y: y.rounded(p) },
        }
    }

    /// Evaluates the layer with the production kernels under `ctx`.
    pub fn eval_in(&self, ctx: PrecisionSpec) -> Result<Vec<f64>> {
        match self {
            LayerCase::Centring(x) => net::centring(x, ctx),
            LayerCase::RmsNorm(x) => net::rms_norm(x, ctx),
            LayerCase::LayerNorm(x) => net::layer_norm(x, ctx),
            LayerCase::Affine { a, b, x } => net::affine(a, x, b, ctx),
            LayerCase::Perceptron { p, x } => net::perceptron(p, x, ctx),
            LayerCase::SimScores { att, x } => net::similarity_scores(att, x, ctx),
            LayerCase::Softmax(s) => net::softmax(s, ctx),
            LayerCase::Attention { att, x } => Ok(net::self_attention(att, x, ctx)?.vec_cols()),
            LayerCase::MatMul { x, y } => Ok(matmul_in(x, y, ctx).vec_cols()),
        }
    }
}

/// `XY` with every product and sum rounded to `ctx`, inner products left to right.
pub fn matmul_in(x: &Mat, y: &Mat, ctx: PrecisionSpec) -> Mat {
    Mat::from_fn(x.rows(), y.cols(), |i, j| {
        let col = y.col(j);
        net::inner(x.row(i), &col, ctx)
    })
}
