//! Transformer building blocks evaluated under a simulated precision.
//!
//! Every elementary operation is rounded with the supplied [`PrecisionSpec`];
//! evaluating under [`PrecisionSpec::NativeDouble`] gives the reference result.
//! Inner products and sums are accumulated left to right. Sequences of tokens
//! are stored as the columns of a `d × n` matrix.

use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::fparith::PrecisionSpec;
use crate::tensor::Mat;

/// Scores whose magnitude exceeds this make the unshifted softmax overflow.
pub const SOFTMAX_SCORE_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormVariant {
    #[serde(rename = "ln")]
    LayerNorm,
    #[serde(rename = "rms")]
    RmsNorm,
}

impl NormVariant {
    pub fn name(&self) -> &'static str {
        match self {
            NormVariant::LayerNorm => "ln",
            NormVariant::RmsNorm => "rms",
        }
    }
}

impl std::str::FromStr for NormVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ln" | "layer" | "layernorm" => Ok(NormVariant::LayerNorm),
            "rms" | "rmsnorm" => Ok(NormVariant::RmsNorm),
            _ => Err(Error::Config(format!("unknown normalization variant `{s}`"))),
        }
    }
}

/// Where the normalization sits relative to the attention sub-block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Placement {
    /// `X + A(N*(X))`.
    #[serde(rename = "pre")]
    PreAttention,
    /// `X + N*(A(X))`.
    #[serde(rename = "post")]
    PostAttention,
}

impl Placement {
    pub fn name(&self) -> &'static str {
        match self {
            Placement::PreAttention => "pre",
            Placement::PostAttention => "post",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum SoftmaxKind {
    /// `exp(sᵢ) / Σ exp(sⱼ)`.
    #[default]
    #[serde(rename = "unshifted")]
    Unshifted,
    /// `exp(sᵢ − max s) / Σ exp(sⱼ − max s)`.
    #[serde(rename = "shifted")]
    Shifted,
}

/// Single-head self-attention weights, all `d × d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attention {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
}

/// Two-layer perceptron `A₂ relu(A₁x + b₁) + b₂` with `A₁: D × d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perceptron {
    pub a1: Mat,
    pub b1: Vec<f64>,
    pub a2: Mat,
    pub b2: Vec<f64>,
}

impl Perceptron {
    pub fn hidden(&self) -> usize {
        self.a1.rows()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let hd = self.a1.rows();
        dim_check(self.a1.cols() == d, || format!("A1 must have {d} columns"))?;
        dim_check(self.b1.len() == hd, || format!("b1 must have length {hd}"))?;
        dim_check(self.a2.shape() == (d, hd), || format!("A2 must be {d}x{hd}"))?;
        dim_check(self.b2.len() == d, || format!("b2 must have length {d}"))
    }

    pub fn rounded(&self, spec: PrecisionSpec) -> Perceptron {
        Perceptron {
            a1: self.a1.rounded(spec),
            b1: self.b1.iter().map(|&x| spec.round(x)).collect(),
            a2: self.a2.rounded(spec),
            b2: self.b2.iter().map(|&x| spec.round(x)).collect(),
        }
    }
}

impl Attention {
    pub fn dim(&self) -> usize {
        self.wq.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.wq.rows();
        for (name, w) in [("Wq", &self.wq), ("Wk", &self.wk), ("Wv", &self.wv)] {
            dim_check(w.shape() == (d, d), || format!("{name} must be {d}x{d}, got {:?}", w.shape()))?;
        }
        Ok(())
    }

    pub fn rounded(&self, spec: PrecisionSpec) -> Attention {
        Attention { wq: self.wq.rounded(spec), wk: self.wk.rounded(spec), wv: self.wv.rounded(spec) }
    }
}

/// Parameters of one transformer block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub attention: Attention,
    pub perceptron: Perceptron,
    pub variant: NormVariant,
    pub placement: Placement,
    #[serde(default)]
    pub softmax: SoftmaxKind,
}

impl TransformerConfig {
    pub fn dim(&self) -> usize {
        self.attention.dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.attention.validate()?;
        self.perceptron.validate(self.dim())
    }

    /// The same block with every weight rounded to `spec`.
    pub fn rounded(&self, spec: PrecisionSpec) -> TransformerConfig {
        TransformerConfig {
            attention: self.attention.rounded(spec),
            perceptron: self.perceptron.rounded(spec),
            ..self.clone()
        }
    }
}

/// A stack of transformer blocks applied in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepConfig {
    pub blocks: Vec<TransformerConfig>,
}

impl DeepConfig {
    /// `layers` copies of the same block.
    pub fn repeated(block: TransformerConfig, layers: usize) -> DeepConfig {
        DeepConfig { blocks: vec![block; layers] }
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.blocks.first().map(TransformerConfig::dim);
        for b in &self.blocks {
            b.validate()?;
            dim_check(Some(b.dim()) == d, || "blocks disagree on the model dimension".into())?;
        }
        Ok(())
    }

    pub fn rounded(&self, spec: PrecisionSpec) -> DeepConfig {
        DeepConfig { blocks: self.blocks.iter().map(|b| b.rounded(spec)).collect() }
    }
}

/// Layer-by-layer result of [`deep_transformer`].
#[derive(Debug, Clone)]
pub struct DeepOutput {
    pub output: Mat,
    /// `taps[l]` is the output of block `l + 1`; empty unless taps were requested.
    pub taps: Vec<Mat>,
}

fn nonempty(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        Err(Error::Dimension("empty vector".into()))
    } else {
        Ok(())
    }
}

/// Recursive summation.
pub fn sum(x: &[f64], ctx: PrecisionSpec) -> f64 {
    let mut it = x.iter();
    let mut acc = match it.next() {
        Some(&v) => v,
        None => return 0.0,
    };
    for &v in it {
        acc = ctx.add(acc, v);
    }
    acc
}

/// Inner product with products accumulated left to right.
pub fn inner(a: &[f64], b: &[f64], ctx: PrecisionSpec) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (k, (&x, &y)) in a.iter().zip(b).enumerate() {
        let p = ctx.mul(x, y);
        acc = if k == 0 { p } else { ctx.add(acc, p) };
    }
    acc
}

pub fn matvec(a: &Mat, x: &[f64], ctx: PrecisionSpec) -> Result<Vec<f64>> {
    dim_check(a.cols() == x.len(), || {
        format!("cannot apply {:?} to a vector of length {}", a.shape(), x.len())
    })?;
    Ok((0..a.rows()).map(|i| inner(a.row(i), x, ctx)).collect())
}

/// `fl(Ax + b)`.
pub fn affine(a: &Mat, x: &[f64], b: &[f64], ctx: PrecisionSpec) -> Result<Vec<f64>> {
    dim_check(a.rows() == b.len(), || "bias length must equal the row count".into())?;
    let mut y = matvec(a, x, ctx)?;
    for (yi, &bi) in y.iter_mut().zip(b) {
        *yi = ctx.add(*yi, bi);
    }
    Ok(y)
}

/// Centring `x − (eᵀx/d) e`.
pub fn centring(x: &[f64], ctx: PrecisionSpec) -> Result<Vec<f64>> {
    nonempty(x)?;
    let mean = ctx.div(sum(x, ctx), x.len() as f64);
    Ok(x.iter().map(|&v| ctx.sub(v, mean)).collect())
}

/// Layer normalization `√d c̊x / ‖c̊x‖₂`, computed as `c̊x / √(‖c̊x‖²/d)`.
pub fn layer_norm(x: &[f64], ctx: PrecisionSpec) -> Result<Vec<f64>> {
    let c = centring(x, ctx)?;
    let squares: Vec<f64> = c.iter().map(|&v| ctx.mul(v, v)).collect();
    let var = ctx.div(sum(&squares, ctx), x.len() as f64);
    if var == 0.0 {
        return Err(Error::Degenerate("layer normalization of a constant vector".into()));
    }
    let sd = ctx.sqrt(var);
    Ok(c.iter().map(|&v| ctx.div(v, sd)).collect())
}

/// RMS normalization `√d x / ‖x‖₂`.
pub fn rms_norm(x: &[f64], ctx: PrecisionSpec) -> Result<Vec<f64>> {
    nonempty(x)?;
    let squares: Vec<f64> = x.iter().map(|&v| ctx.mul(v, v)).collect();
    let ss = sum(&squares, ctx);
    if ss == 0.0 {
        return Err(Error::Degenerate("RMS normalization of the zero vector".into()));
    }
    let nrm = ctx.sqrt(ss);
    let sqrt_d = ctx.sqrt(x.len() as f64);
    Ok(x.iter().map(|&v| ctx.div(ctx.mul(sqrt_d, v), nrm)).collect())
}

pub fn normalize(variant: NormVariant, x: &[f64], ctx: PrecisionSpec) -> Result<Vec<f64>> {
    match variant {
        NormVariant::LayerNorm => layer_norm(x, ctx),
        NormVariant::RmsNorm => rms_norm(x, ctx),
    }
}

/// Columnwise normalization `N*(X)`.
pub fn normalize_cols(variant: NormVariant, x: &Mat, ctx: PrecisionSpec) -> Result<Mat> {
    let mut out = Mat::zeros(x.rows(), x.cols());
    for j in 0..x.cols() {
        out.set_col(j, &normalize(variant, &x.col(j), ctx)?);
    }
    Ok(out)
}

/// Two-layer perceptron with ReLU; the ReLU itself is exact.
pub fn perceptron(p: &Perceptron, x: &[f64], ctx: PrecisionSpec) -> Result<Vec<f64>> {
    let mut h = affine(&p.a1, x, &p.b1, ctx)?;
    for v in &mut h {
        *v = v.max(0.0);
    }
    affine(&p.a2, &h, &p.b2, ctx)
}

/// Columnwise perceptron `M*(X)`.
pub fn perceptron_cols(p: &Perceptron, x: &Mat, ctx: PrecisionSpec) -> Result<Mat> {
    let mut out = Mat::zeros(p.a2.rows(), x.cols());
    for j in 0..x.cols() {
        out.set_col(j, &perceptron(p, &x.col(j), ctx)?);
    }
    Ok(out)
}

struct Keys {
    keys: Vec<Vec<f64>>,
    sqrt_d: f64,
}

impl Keys {
    fn new(att: &Attention, x: &Mat, ctx: PrecisionSpec) -> Result<Keys> {
        let keys = (0..x.cols()).map(|i| matvec(&att.wk, &x.col(i), ctx)).collect::<Result<_>>()?;
        Ok(Keys { keys, sqrt_d: ctx.sqrt(att.dim() as f64) })
    }

    /// Scores of token `t` against tokens `0..=t`.
    fn scores(&self, att: &Attention, xt: &[f64], t: usize, ctx: PrecisionSpec) -> Result<Vec<f64>> {
        let q = matvec(&att.wq, xt, ctx)?;
        Ok(self.keys[..=t].iter().map(|k| ctx.div(inner(k, &q, ctx), self.sqrt_d)).collect())
    }
}

/// Similarity scores `(W_k X)ᵀ (W_q x_n) / √d` of the last column of `X` against all columns.
pub fn similarity_scores(att: &Attention, x: &Mat, ctx: PrecisionSpec) -> Result<Vec<f64>> {
    att.validate()?;
    dim_check(x.rows() == att.dim() && x.cols() > 0, || "X must be d x n with n >= 1".into())?;
    let keys = Keys::new(att, x, ctx)?;
    let n = x.cols();
    keys.scores(att, &x.col(n - 1), n - 1, ctx)
}

/// Unshifted softmax.
pub fn softmax(s: &[f64], ctx: PrecisionSpec) -> Result<Vec<f64>> {
    nonempty(s)?;
    if let Some(v) = s.iter().find(|v| !(v.abs() <= SOFTMAX_SCORE_LIMIT)) {
        return Err(Error::Domain(format!("softmax score {v} exceeds the overflow limit")));
    }
    let e: Vec<f64> = s.iter().map(|&v| ctx.exp(v)).collect();
    let total = sum(&e, ctx);
    Ok(e.iter().map(|&v| ctx.div(v, total)).collect())
}

/// Softmax with the maximum score subtracted first.
pub fn softmax_shifted(s: &[f64], ctx: PrecisionSpec) -> Result<Vec<f64>> {
    nonempty(s)?;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite softmax score".into()));
    }
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|&v| ctx.exp(ctx.sub(v, m))).collect();
    let total = sum(&e, ctx);
    Ok(e.iter().map(|&v| ctx.div(v, total)).collect())
}

pub fn softmax_with(kind: SoftmaxKind, s: &[f64], ctx: PrecisionSpec) -> Result<Vec<f64>> {
    match kind {
        SoftmaxKind::Unshifted => softmax(s, ctx),
        SoftmaxKind::Shifted => softmax_shifted(s, ctx),
    }
}

/// Causal self-attention with the unshifted softmax.
pub fn self_attention(att: &Attention, x: &Mat, ctx: PrecisionSpec) -> Result<Mat> {
    self_attention_with(att, x, ctx, SoftmaxKind::Unshifted)
}

/// Causal self-attention: column `t` is `W_v (X_t ψ(S(X_t)))` where `X_t` holds columns `0..=t`.
pub fn self_attention_with(att: &Attention, x: &Mat, ctx: PrecisionSpec, kind: SoftmaxKind) -> Result<Mat> {
    att.validate()?;
    let d = att.dim();
    dim_check(x.rows() == d, || format!("X must have {d} rows, got {}", x.rows()))?;
    let cols = x.columns();
    let keys = Keys::new(att, x, ctx)?;
    let mut out = Mat::zeros(d, x.cols());
    let mut mix = vec![0.0; d];
    for t in 0..x.cols() {
        let s = keys.scores(att, &cols[t], t, ctx)?;
        let psi = softmax_with(kind, &s, ctx)?;
        for (r, m) in mix.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, &w) in psi.iter().enumerate() {
                let p = ctx.mul(cols[i][r], w);
                acc = if i == 0 { p } else { ctx.add(acc, p) };
            }
            *m = acc;
        }
        out.set_col(t, &matvec(&att.wv, &mix, ctx)?);
    }
    Ok(out)
}

fn add_mats(a: &Mat, b: &Mat, ctx: PrecisionSpec) -> Result<Mat> {
    dim_check(a.shape() == b.shape(), || "residual shapes differ".into())?;
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| ctx.add(x, y)).collect();
    Mat::from_vec(a.rows(), a.cols(), data)
}

/// One transformer block.
pub fn block(cfg: &TransformerConfig, x: &Mat, ctx: PrecisionSpec) -> Result<Mat> {
    let att = &cfg.attention;
    let y = match cfg.placement {
        Placement::PreAttention => {
            let nx = normalize_cols(cfg.variant, x, ctx)?;
            add_mats(x, &self_attention_with(att, &nx, ctx, cfg.softmax)?, ctx)?
        }
        Placement::PostAttention => {
            let ax = self_attention_with(att, x, ctx, cfg.softmax)?;
            add_mats(x, &normalize_cols(cfg.variant, &ax, ctx)?, ctx)?
        }
    };
    let ny = normalize_cols(cfg.variant, &y, ctx)?;
    add_mats(&y, &perceptron_cols(&cfg.perceptron, &ny, ctx)?, ctx)
}

/// Applies every block in turn; with `tap` set, records each intermediate output.
pub fn deep_transformer(deep: &DeepConfig, x: &Mat, ctx: PrecisionSpec, tap: bool) -> Result<DeepOutput> {
    let mut cur = x.clone();
    let mut taps = Vec::new();
    for b in &deep.blocks {
        cur = block(b, &cur, ctx)?;
        if tap {
            taps.push(cur.clone());
        }
    }
    Ok(DeepOutput { output: cur, taps })
}
