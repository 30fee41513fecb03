//! Condition numbers of the transformer layers and the amplification factors ξ
//! that enter the rounding-error bounds.
//!
//! Condition numbers are available two ways: [`condition_generic`] builds the
//! Jacobian and applies the definitions, [`condition_closed_form`] evaluates the
//! layer-specific formulas. Some closed forms are equalities, others upper
//! bounds; [`CondReport::upper_bound`] tells which.

use std::fmt;

use crate::error::{Error, Result};
use crate::fparith::PrecisionSpec;
use crate::jacobians::{self, analytic_jacobian, bilinear_form, LayerPoint};
use crate::net::{self, Attention, Perceptron, SoftmaxKind};
use crate::tensor::{abs_vec, dot, induced_norm, min_abs, norm1, norm2, norm_inf, sv_extremes, vec_norm, Mat, Norm};

const EXACT: PrecisionSpec = PrecisionSpec::NativeDouble;

/// Singular values below `SINGULAR_TOL·σ_max` are treated as zero.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Which condition number to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondKind {
    /// `κ_{p,q} = ‖J‖_{p,q} ‖u‖_p / ‖f(u)‖_q`.
    Normwise(Norm, Norm),
    /// `κ_{c,∞} = ‖J diag(u)‖_{∞,∞} / ‖f(u)‖_∞`.
    Mixed,
    /// `κ_{c,c} = ‖diag(f(u))⁻¹ J diag(u)‖_{∞,∞}`.
    Componentwise,
}

impl fmt::Display for CondKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CondKind::Normwise(p, q) => write!(f, "normwise({p},{q})"),
            CondKind::Mixed => write!(f, "mixed"),
            CondKind::Componentwise => write!(f, "componentwise"),
        }
    }
}

/// One condition number of one layer at one point.
#[derive(Debug, Clone)]
pub struct CondReport {
    pub layer: &'static str,
    pub kind: CondKind,
    pub value: f64,
    /// True when `value` is only an upper bound on the condition number.
    pub upper_bound: bool,
    pub notes: Vec<String>,
}

impl CondReport {
    fn exact(pt: &LayerPoint<'_>, kind: CondKind, value: f64) -> Self {
        CondReport { layer: pt.name(), kind, value, upper_bound: false, notes: Vec::new() }
    }

    fn bound(pt: &LayerPoint<'_>, kind: CondKind, value: f64) -> Self {
        CondReport { layer: pt.name(), kind, value, upper_bound: true, notes: Vec::new() }
    }

    fn note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }
}

/// `num / den` with `0/0 = 0` and `a/0 = ∞`.
fn ratio(num: f64, den: f64) -> f64 {
    if den != 0.0 {
        num / den.abs()
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// `maxᵢ numᵢ / |denᵢ|`, or `∞` as soon as some `denᵢ` vanishes.
fn max_ratio_generic(num: &[f64], den: &[f64]) -> f64 {
    if den.iter().any(|&v| v == 0.0) {
        return f64::INFINITY;
    }
    num.iter().zip(den).fold(0.0, |m, (&a, &b)| m.max(a / b.abs()))
}

/// Condition number from the Jacobian.
pub fn condition_generic(pt: &LayerPoint<'_>, kind: CondKind) -> Result<CondReport> {
    let j = analytic_jacobian(pt)?;
    let u = pt.input();
    let f = pt.value()?;
    let report = match kind {
        CondKind::Normwise(p, q) => {
            let value = ratio(induced_norm(&j, p, q)? * vec_norm(&u, p), vec_norm(&f, q));
            CondReport::exact(pt, kind, value)
        }
        CondKind::Mixed | CondKind::Componentwise => {
            let rows: Vec<f64> = (0..j.rows())
                .map(|r| j.row(r).iter().zip(&u).map(|(a, b)| (a * b).abs()).sum())
                .collect();
            if kind == CondKind::Mixed {
                CondReport::exact(pt, kind, ratio(norm_inf(&rows), norm_inf(&f)))
            } else {
                let value = max_ratio_generic(&rows, &f);
                let r = CondReport::exact(pt, kind, value);
                if value.is_infinite() {
                    r.note("output has a zero entry; componentwise condition number is infinite")
                } else {
                    r
                }
            }
        }
    };
    Ok(report)
}

fn unsupported(pt: &LayerPoint<'_>, kind: CondKind) -> Error {
    Error::Unsupported(format!("no closed form for the {kind} condition number of {}", pt.name()))
}

/// Condition number from the layer-specific closed form.
pub fn condition_closed_form(pt: &LayerPoint<'_>, kind: CondKind) -> Result<CondReport> {
    use CondKind::*;
    match *pt {
        LayerPoint::Centring(x) => {
            let d = x.len() as f64;
            let c = net::centring(x, EXACT)?;
            let n1 = norm1(x);
            match kind {
                Normwise(Norm::Two, Norm::Two) => Ok(CondReport::exact(pt, kind, ratio(norm2(x), norm2(&c)))),
                Mixed => Ok(CondReport::exact(
                    pt,
                    kind,
                    ratio(n1 + (d - 2.0) * norm_inf(x), d * norm_inf(&c)),
                )),
                Componentwise => {
                    let num: Vec<f64> = x.iter().map(|v| (n1 + (d - 2.0) * v.abs()) / d).collect();
                    Ok(CondReport::exact(pt, kind, max_ratio_generic(&num, &c)))
                }
                _ => Err(unsupported(pt, kind)),
            }
        }
        LayerPoint::RmsNorm(x) => {
            let n2sq = norm2(x).powi(2);
            if n2sq == 0.0 {
                return Err(Error::Degenerate("RMS normalization at the zero vector".into()));
            }
            match kind {
                Normwise(Norm::Two, Norm::Two) => Ok(CondReport::exact(pt, kind, 1.0)),
                Mixed => {
                    let m = x.iter().fold(0.0, |m: f64, v| m.max(v.abs() * (1.0 - v * v / n2sq)));
                    Ok(CondReport::exact(pt, kind, 2.0 * m / norm_inf(x)))
                }
                Componentwise => {
                    let mn = min_abs(x);
                    let value = if mn == 0.0 { f64::INFINITY } else { 2.0 * (1.0 - mn * mn / n2sq) };
                    Ok(CondReport::exact(pt, kind, value))
                }
                _ => Err(unsupported(pt, kind)),
            }
        }
        LayerPoint::LayerNorm(x) => {
            let d = x.len() as f64;
            let c = net::centring(x, EXACT)?;
            let nc2 = norm2(&c).powi(2);
            if nc2 == 0.0 {
                return Err(Error::Degenerate("layer normalization at a constant vector".into()));
            }
            let n1 = norm1(x);
            let coupling = dot(&abs_vec(&c), &abs_vec(x)) / nc2;
            match kind {
                Normwise(Norm::Two, Norm::Two) => Ok(CondReport::exact(pt, kind, norm2(x) / nc2.sqrt())),
                Mixed => Ok(CondReport::bound(
                    pt,
                    kind,
                    coupling + (n1 + (d - 2.0) * norm_inf(x)) / (d * norm_inf(&c)),
                )),
                Componentwise => {
                    let num: Vec<f64> = x.iter().map(|v| (n1 + (d - 2.0) * v.abs()) / d).collect();
                    let first = coupling + max_ratio_generic(&num, &c);
                    let second = 3.0 * ratio(norm_inf(x), min_abs(&c));
                    let r = CondReport::bound(pt, kind, first.min(second));
                    Ok(if second < first { r.note("max-norm form is tighter") } else { r })
                }
                _ => Err(unsupported(pt, kind)),
            }
        }
        LayerPoint::Affine { a, b, x } => affine_closed_form(pt, kind, a, b, x),
        LayerPoint::Perceptron { p, x } => {
            let (a, b) = jacobians::perceptron_local_affine(p, x)?;
            affine_closed_form(pt, kind, &a, &b, x)
        }
        LayerPoint::Softmax(s) => {
            let psi = net::softmax_shifted(s, EXACT)?;
            let weighted = dot(&psi, &abs_vec(s));
            let rows: Vec<f64> = s
                .iter()
                .zip(&psi)
                .map(|(si, pi)| pi * (si.abs() * (1.0 - 2.0 * pi) + weighted))
                .collect();
            match kind {
                Componentwise => Ok(CondReport::exact(pt, kind, max_ratio_generic(&rows, &psi))),
                Mixed => Ok(CondReport::exact(pt, kind, norm_inf(&rows) / norm_inf(&psi))),
                Normwise(Norm::Inf, Norm::Inf) => {
                    let jn = psi.iter().fold(0.0, |m: f64, p| m.max(2.0 * p * (1.0 - p)));
                    Ok(CondReport::exact(pt, kind, jn * norm_inf(s) / norm_inf(&psi)))
                }
                _ => Err(unsupported(pt, kind)),
            }
        }
        LayerPoint::SimScores { att, x } => {
            let b = bilinear_form(att)?;
            let n = x.cols();
            let xn = x.col(n - 1);
            let bxn_abs = abs_vec(&b.matvec(&xn)?);
            let bt = b.transpose();
            let xn_abs = abs_vec(&xn);
            let rows: Vec<f64> = (0..n)
                .map(|i| {
                    let xi = x.col(i);
                    let xib = abs_vec(&bt.matvec(&xi).expect("shape checked"));
                    dot(&abs_vec(&xi), &bxn_abs) + dot(&xib, &xn_abs)
                })
                .collect();
            let s = pt.value()?;
            match kind {
                Componentwise => Ok(CondReport::bound(pt, kind, max_ratio_generic(&rows, &s))),
                Mixed => Ok(CondReport::bound(pt, kind, ratio(norm_inf(&rows), norm_inf(&s)))),
                _ => Err(unsupported(pt, kind)),
            }
        }
        LayerPoint::Attention { att, x } => {
            let (num, out) = attention_row_bounds(att, x)?;
            match kind {
                Componentwise => Ok(CondReport::bound(pt, kind, max_ratio_generic(&num, &out))),
                Mixed => Ok(CondReport::bound(pt, kind, ratio(norm_inf(&num), norm_inf(&out)))),
                _ => Err(unsupported(pt, kind)),
            }
        }
        LayerPoint::MatMul { x, y } => {
            let num = x.abs().matmul(&y.abs())?.scale(2.0);
            let out = x.matmul(y)?;
            match kind {
                Componentwise => Ok(CondReport::exact(pt, kind, max_ratio_generic(num.as_slice(), out.as_slice()))),
                Mixed => Ok(CondReport::exact(pt, kind, ratio(num.max_abs(), out.max_abs()))),
                _ => Err(unsupported(pt, kind)),
            }
        }
    }
}

fn affine_closed_form(pt: &LayerPoint<'_>, kind: CondKind, a: &Mat, b: &[f64], x: &[f64]) -> Result<CondReport> {
    let y: Vec<f64> = a.matvec(x)?.iter().zip(b).map(|(u, v)| u + v).collect();
    let rows = a.abs().matvec(&abs_vec(x))?;
    let value = match kind {
        CondKind::Normwise(p, q) => ratio(induced_norm(a, p, q)? * vec_norm(x, p), vec_norm(&y, q)),
        CondKind::Mixed => ratio(norm_inf(&rows), norm_inf(&y)),
        CondKind::Componentwise => max_ratio_generic(&rows, &y),
    };
    Ok(CondReport::exact(pt, kind, value))
}

/// Per-entry numerators of the componentwise bound for attention, in
/// column-major order, together with the attention output.
fn attention_row_bounds(att: &Attention, x: &Mat) -> Result<(Vec<f64>, Vec<f64>)> {
    let (d, n) = x.shape();
    let b = bilinear_form(att)?;
    let bt = b.transpose();
    let wv_abs = att.wv.abs();
    let mut num = Vec::with_capacity(d * n);
    let mut out = Vec::with_capacity(d * n);
    for t in 0..n {
        let xt = x.leading_cols(t + 1);
        let psi = softmax_of_scores(att, &xt)?;
        let xtn = x.col(t);
        let bxt_abs = abs_vec(&b.matvec(&xtn)?);
        let xt_abs_n = abs_vec(&xtn);
        let sens = (0..=t).fold(0.0, |m: f64, j| {
            let xj = x.col(j);
            let v = dot(&abs_vec(&xj), &bxt_abs)
                + dot(&abs_vec(&bt.matvec(&xj).expect("shape checked")), &xt_abs_n);
            m.max(v)
        });
        let mixed_abs = xt.abs().matvec(&psi)?;
        let direct = wv_abs.matvec(&mixed_abs)?;
        let wvxt = att.wv.matmul(&xt)?;
        let value = wvxt.matvec(&psi)?;
        let coupled = wvxt.abs().matvec(&psi)?;
        for i in 0..d {
            num.push(direct[i] + 2.0 * coupled[i] * sens);
            out.push(value[i]);
        }
    }
    Ok((num, out))
}

fn softmax_of_scores(att: &Attention, xt: &Mat) -> Result<Vec<f64>> {
    let s = LayerPoint::SimScores { att, x: xt }.value()?;
    net::softmax_shifted(&s, EXACT)
}

/// `ξ(A, X) = max_{i,t} |e_iᵀW_v||X_t|ψ_t / |e_iᵀW_v X_t ψ_t|`.
pub fn xi_attention(att: &Attention, x: &Mat) -> Result<f64> {
    att.validate()?;
    let wv_abs = att.wv.abs();
    let mut num = Vec::new();
    let mut den = Vec::new();
    for t in 0..x.cols() {
        let xt = x.leading_cols(t + 1);
        let psi = softmax_of_scores(att, &xt)?;
        num.extend(wv_abs.matvec(&xt.abs().matvec(&psi)?)?);
        den.extend(att.wv.matvec(&xt.matvec(&psi)?)?);
    }
    Ok(max_ratio_generic(&num, &den))
}

/// `ξ(S, X) = maxᵢ |x_i|ᵀ|W_k|ᵀ|W_q||x_n| / (√d |S(X)_i|)`.
pub fn xi_simscores(att: &Attention, x: &Mat) -> Result<f64> {
    att.validate()?;
    let n = x.cols();
    let m = att.wk.abs().transpose().matmul(&att.wq.abs())?;
    let right = m.matvec(&abs_vec(&x.col(n - 1)))?;
    let sd = (att.dim() as f64).sqrt();
    let num: Vec<f64> = (0..n).map(|i| dot(&abs_vec(&x.col(i)), &right) / sd).collect();
    let s = LayerPoint::SimScores { att, x }.value()?;
    Ok(max_ratio_generic(&num, &s))
}

/// `ξ(M, x) = maxᵢ [|A₂(i,Ω)|(|A₁(Ω,:)||x| + |b₁(Ω)|) + |b₂ᵢ|] / |M(x)ᵢ|` with `Ω = supp⁺(A₁x + b₁)`.
pub fn xi_perceptron(p: &Perceptron, x: &[f64]) -> Result<f64> {
    let pre = net::affine(&p.a1, x, &p.b1, EXACT)?;
    let h = p.a1.abs().matvec(&abs_vec(x))?;
    let hidden: Vec<f64> = (0..pre.len())
        .map(|i| if pre[i] > 0.0 { h[i] + p.b1[i].abs() } else { 0.0 })
        .collect();
    let num: Vec<f64> = p.a2.abs().matvec(&hidden)?.iter().zip(&p.b2).map(|(a, b)| a + b.abs()).collect();
    let out = net::perceptron(p, x, EXACT)?;
    Ok(max_ratio_generic(&num, &out))
}

/// Residual amplification `max (|x| + |g|) / |x + g|` over all entries.
pub fn xi_residual(x: &[f64], branch: &[f64]) -> f64 {
    let num: Vec<f64> = x.iter().zip(branch).map(|(a, b)| a.abs() + b.abs()).collect();
    let den: Vec<f64> = x.iter().zip(branch).map(|(a, b)| a + b).collect();
    max_ratio_generic(&num, &den)
}

/// `σ_max(|W_k|ᵀ|W_q|) / σ_min(W_kᵀW_q)`.
pub fn xi_simscores_spectral_bound(att: &Attention) -> Result<f64> {
    let s = spectral_terms(att)?;
    Ok(s.abs_max / s.min)
}

/// Singular values entering the attention bounds.
#[derive(Debug, Clone, Copy)]
pub struct SpectralTerms {
    /// `σ_max(|W_k|ᵀ|W_q|)`.
    pub abs_max: f64,
    /// `σ_max(W_kᵀW_q)`.
    pub max: f64,
    /// `σ_min(W_kᵀW_q)`.
    pub min: f64,
}

pub fn spectral_terms(att: &Attention) -> Result<SpectralTerms> {
    att.validate()?;
    let prod = att.wk.transpose().matmul(&att.wq)?;
    let (max, min) = sv_extremes(&prod);
    if !(min > SINGULAR_TOL * max) {
        return Err(Error::Singular(format!(
            "W_k^T W_q has sigma_min = {min:e} against sigma_max = {max:e}"
        )));
    }
    let abs_max = sv_extremes(&att.wk.abs().transpose().matmul(&att.wq.abs())?).0;
    Ok(SpectralTerms { abs_max, max, min })
}

/// `ξ(A,X)[1 + 4‖B‖₂ m]` with `m = max_t ‖x_t‖₂²`, or `m = d` when `normalized`
/// states that the columns of `X` come out of a normalization layer.
pub fn attention_cond_bound(att: &Attention, x: &Mat, normalized: bool) -> Result<f64> {
    let xi = xi_attention(att, x)?;
    let bn = sv_extremes(&bilinear_form(att)?).0;
    let m = if normalized {
        att.dim() as f64
    } else {
        (0..x.cols()).map(|t| norm2(&x.col(t)).powi(2)).fold(0.0, f64::max)
    };
    Ok(xi * (1.0 + 4.0 * bn * m))
}

/// Self-attention output in double precision.
pub fn attention_exact(att: &Attention, x: &Mat) -> Result<Mat> {
    net::self_attention_with(att, x, EXACT, SoftmaxKind::Shifted)
}

/// Condition numbers of all three kinds in one go, via the Jacobian.
pub fn condition_all(pt: &LayerPoint<'_>) -> Result<Vec<CondReport>> {
    [CondKind::Normwise(Norm::Two, Norm::Two), CondKind::Mixed, CondKind::Componentwise]
        .into_iter()
        .map(|k| condition_generic(pt, k))
        .collect()
}

pub(crate) fn column_norm_ratio_max(x: &Mat) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for t in 0..x.cols() {
        let col = x.col(t);
        let c = net::centring(&col, EXACT)?;
        worst = worst.max(ratio(norm_inf(&col), min_abs(&c)));
    }
    Ok(worst)
}

pub(crate) fn max_col_norm_sq(x: &Mat) -> f64 {
    (0..x.cols()).map(|t| norm2(&x.col(t)).powi(2)).fold(0.0, f64::max)
}
