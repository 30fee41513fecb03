//! First-order bounds on the componentwise relative forward error of each layer,
//! each sub-block, each transformer block and of deep stacks, and a routine to
//! measure the actual error against a high-precision reference.
//!
//! Bounds are stated to first order in the unit roundoff `u` and in the relative
//! perturbation `ρ` of the input. A bound whose hypotheses fail is reported as
//! `∞` together with the failing hypothesis.

use crate::conditioning::{
    self, column_norm_ratio_max, condition_closed_form, max_col_norm_sq, spectral_terms, xi_attention, xi_perceptron,
    xi_residual, xi_simscores, CondKind, SpectralTerms,
};
use crate::error::{Error, Result};
use crate::fparith::{gamma_u, PrecisionSpec};
use crate::jacobians::LayerPoint;
use crate::net::{self, Attention, DeepConfig, NormVariant, Perceptron, Placement, TransformerConfig};
use crate::tensor::{abs_vec, min_abs, norm1, norm_inf, rel_dist_columnwise_max, rel_dist_componentwise, Mat};

const EXACT: PrecisionSpec = PrecisionSpec::NativeDouble;

/// Default strengthening factor for the perturbed-input hypotheses.
pub const DEFAULT_ALPHA: f64 = 2.0;

/// Fraction of the inverse condition number allowed for the input perturbation
/// where the exact admissible radius is not computable.
pub const RHO_HEADROOM: f64 = 0.5;

/// One checked hypothesis of a bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Assumption {
    pub name: String,
    pub holds: bool,
}

/// A first-order forward error bound and what went into it.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub id: String,
    pub u: f64,
    pub rho_in: f64,
    /// Bound on the componentwise relative error, `∞` when not applicable.
    pub first_order_bound: f64,
    pub ingredients: Vec<(String, f64)>,
    pub assumptions: Vec<Assumption>,
}

impl BoundReport {
    fn new(id: impl Into<String>, u: f64, rho_in: f64) -> Self {
        BoundReport {
            id: id.into(),
            u,
            rho_in,
            first_order_bound: f64::INFINITY,
            ingredients: Vec::new(),
            assumptions: Vec::new(),
        }
    }

    fn ingredient(&mut self, name: &str, value: f64) -> f64 {
        self.ingredients.push((name.to_string(), value));
        value
    }

    fn assume(&mut self, name: &str, holds: bool) {
        self.assumptions.push(Assumption { name: name.to_string(), holds });
    }

    /// Sets the bound, or `∞` when a hypothesis failed.
    fn finish(mut self, value: f64) -> Self {
        self.first_order_bound = if self.assumptions_ok() { value } else { f64::INFINITY };
        self
    }

    pub fn assumptions_ok(&self) -> bool {
        self.assumptions.iter().all(|a| a.holds)
    }

    pub fn applicable(&self) -> bool {
        self.assumptions_ok() && self.first_order_bound.is_finite()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.ingredients.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// Elementary kernels covered by [`bound_summation_matvec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasicKernel {
    /// Recursive sum of `n` terms.
    Sum,
    /// Matrix-vector product with inner dimension `n`.
    MatVec,
    /// `Ax + b` with inner dimension `n`.
    Affine,
}

/// Coefficients `(c_A, c_b)` such that `|fl(op) − op| ≤ c_A |A||x| + c_b |b|`
/// (for sums, `c_A` multiplies `Σ|xᵢ|`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasicBound {
    pub matrix_coeff: f64,
    pub bias_coeff: f64,
}

pub fn bound_summation_matvec(kernel: BasicKernel, n: usize, u: f64) -> Result<BasicBound> {
    Ok(match kernel {
        BasicKernel::Sum => BasicBound { matrix_coeff: gamma_u(n.saturating_sub(1), u)?, bias_coeff: 0.0 },
        BasicKernel::MatVec => BasicBound { matrix_coeff: gamma_u(n, u)?, bias_coeff: 0.0 },
        BasicKernel::Affine => BasicBound { matrix_coeff: u + (1.0 + u) * gamma_u(n, u)?, bias_coeff: u },
    })
}

fn ratio(num: f64, den: f64) -> f64 {
    if den != 0.0 {
        num / den.abs()
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn cc_closed(pt: &LayerPoint<'_>) -> Result<f64> {
    Ok(condition_closed_form(pt, CondKind::Componentwise)?.value)
}

/// Hypothesis that the centred vector stays away from zero: `‖c̊x‖₋∞ > α·2(1+u)γ_d‖x‖∞`.
fn centring_margin(x: &[f64], u: f64, alpha: f64) -> Result<bool> {
    let c = net::centring(x, EXACT)?;
    let g = gamma_u(x.len(), u).unwrap_or(f64::INFINITY);
    Ok(min_abs(&c) > alpha * 2.0 * (1.0 + u) * g * norm_inf(x))
}

/// Hypothesis that no ReLU pre-activation can change sign under rounding.
fn stable_sign(p: &Perceptron, x: &[f64], u: f64, alpha: f64) -> Result<bool> {
    let pre = net::affine(&p.a1, x, &p.b1, EXACT)?;
    let scale = p.a1.abs().matvec(&abs_vec(x))?;
    let g = gamma_u(x.len(), u).unwrap_or(f64::INFINITY);
    let c = alpha * (u + (1.0 + u) * g);
    Ok(pre.iter().zip(&scale).zip(&p.b1).all(|((v, s), b)| v.abs() > c * (s + b.abs())))
}

fn active_count(p: &Perceptron, x: &[f64]) -> Result<usize> {
    Ok(net::affine(&p.a1, x, &p.b1, EXACT)?.iter().filter(|v| **v > 0.0).count())
}

/// Bound for a layer evaluated on an exactly represented input.
pub fn bound_layer_fresh(pt: &LayerPoint<'_>, u: f64) -> Result<BoundReport> {
    bound_layer(pt, u, 0.0, 1.0)
}

/// Bound for a layer whose input carries a componentwise relative perturbation `rho_in`.
pub fn bound_layer_perturbed(pt: &LayerPoint<'_>, u: f64, rho_in: f64, alpha: f64) -> Result<BoundReport> {
    if !(alpha > 1.0) {
        return Err(Error::Precondition(format!("alpha must exceed 1, got {alpha}")));
    }
    bound_layer(pt, u, rho_in, alpha)
}

fn bound_layer(pt: &LayerPoint<'_>, u: f64, rho: f64, alpha: f64) -> Result<BoundReport> {
    if !(u > 0.0 && u < 1.0) || !(rho >= 0.0) {
        return Err(Error::Precondition(format!("need 0 < u < 1 and rho >= 0, got u={u}, rho={rho}")));
    }
    let perturbed = rho > 0.0;
    let mut r = BoundReport::new(pt.name(), u, rho);
    let value = match *pt {
        LayerPoint::RmsNorm(x) => {
            let d = x.len() as f64;
            r.assume("x nonzero", norm_inf(x) > 0.0);
            (d / 2.0 + 3.0) * u + 2.0 * rho
        }
        LayerPoint::Centring(x) => {
            let c = net::centring(x, EXACT)?;
            let ratio1 = r.ingredient("norm1/min_abs_centred", ratio(norm1(x), min_abs(&c)));
            r.assume("centred vector generic", min_abs(&c) > 0.0);
            let kappa = if perturbed { r.ingredient("kappa_cc", cc_closed(pt)?) } else { 0.0 };
            (1.0 + ratio1) * u + kappa * rho
        }
        LayerPoint::LayerNorm(x) => {
            let d = x.len() as f64;
            let c = net::centring(x, EXACT)?;
            let ratio1 = r.ingredient("norm1/min_abs_centred", ratio(norm1(x), min_abs(&c)));
            let ratio_inf = r.ingredient("norminf/min_abs_centred", ratio(norm_inf(x), min_abs(&c)));
            r.assume("centring margin", centring_margin(x, u, alpha)?);
            if perturbed {
                let kc = r.ingredient("kappa_cc_centring", cc_closed(&LayerPoint::Centring(x))?);
                r.assume("rho within centring radius", rho <= (alpha - 1.0) / (1.0 + alpha * kc));
            }
            (d / 2.0 + 5.0 + 2.0 * ratio1) * u + 3.0 * ratio_inf * rho
        }
        LayerPoint::Affine { a, b, x } => {
            let d = x.len() as f64;
            let y: Vec<f64> = a.matvec(x)?.iter().zip(b).map(|(v, w)| v + w).collect();
            let ax = a.abs().matvec(&abs_vec(x))?;
            let num: Vec<f64> = ax.iter().zip(b).map(|(s, w)| (d + 1.0) * s + w.abs()).collect();
            let coeff = r.ingredient("coefficient", max_ratio(&num, &y));
            let kappa = if perturbed { r.ingredient("kappa_cc", cc_closed(pt)?) } else { 0.0 };
            coeff * u + kappa * rho
        }
        LayerPoint::Perceptron { p, x } => {
            let d = x.len() as f64;
            let xi = r.ingredient("xi_tlp", xi_perceptron(p, x)?);
            let omega = r.ingredient("active", active_count(p, x)? as f64);
            r.assume("stable ReLU signs", stable_sign(p, x, u, alpha)?);
            if perturbed {
                let (a, b) = (&p.a1, &p.b1);
                let k1 = cc_closed(&LayerPoint::Affine { a, b, x })?;
                r.assume("rho within sign-stability radius", rho <= (alpha - 1.0) / (1.0 + alpha * k1));
                let k = condition_closed_form(pt, CondKind::Componentwise).map(|c| c.value).unwrap_or(f64::INFINITY);
                r.assume("rho below headroom/kappa", rho <= RHO_HEADROOM / k);
            }
            xi * ((d + omega + 2.0) * u + rho)
        }
        LayerPoint::SimScores { att, x } => {
            let d = att.dim() as f64;
            let xi = r.ingredient("xi_scores", xi_simscores(att, x)?);
            let kappa = if perturbed { r.ingredient("kappa_cc_bound", cc_closed(pt)?) } else { 0.0 };
            xi * (3.0 * d + 1.0) * u + kappa * rho
        }
        LayerPoint::Softmax(s) => {
            let n = s.len() as f64;
            (n + 3.0) * u + 2.0 * norm_inf(s) * rho
        }
        LayerPoint::Attention { att, x } => attention_bound(&mut r, att, x, u, rho)?,
        LayerPoint::MatMul { x, y } => {
            let k = x.cols();
            let num = x.abs().matmul(&y.abs())?;
            let out = x.matmul(y)?;
            let ratio_max = r.ingredient("abs_product_ratio", max_ratio(num.as_slice(), out.as_slice()));
            k as f64 * ratio_max * u + 2.0 * ratio_max * rho
        }
    };
    Ok(r.finish(value))
}

fn max_ratio(num: &[f64], den: &[f64]) -> f64 {
    num.iter().zip(den).fold(0.0, |m, (&a, &b)| m.max(ratio(a, b)))
}

/// Attention bound: the smaller of the score-based and the spectral fresh
/// bounds, plus the spectral perturbation term.
fn attention_bound(r: &mut BoundReport, att: &Attention, x: &Mat, u: f64, rho: f64) -> Result<f64> {
    let (d, n) = x.shape();
    let df = d as f64;
    let xi_a = r.ingredient("xi_attention", xi_attention(att, x)?);
    let mut score_coeff = 0.0f64;
    for t in 0..n {
        let xt = x.leading_cols(t + 1);
        let s = LayerPoint::SimScores { att, x: &xt }.value()?;
        let xs = xi_simscores(att, &xt)?;
        let term = 2.0 * (t + 1) as f64 + df + 3.0 + 2.0 * norm_inf(&s) * xs * (3.0 * df + 1.0);
        score_coeff = score_coeff.max(term);
    }
    r.ingredient("score_coefficient", score_coeff);
    r.assume("d >= 2", d >= 2);
    let spectral = match spectral_terms(att) {
        Ok(SpectralTerms { abs_max, max, min }) => {
            let m = max_col_norm_sq(x);
            let c = 1.0 + 4.0 / df.sqrt() * abs_max * (max / min) * m;
            r.ingredient("spectral_factor", c);
            r.ingredient("spectral_coefficient", xi_a * c * (2.0 * n as f64 + 3.0 * df));
            Some(c)
        }
        Err(Error::Singular(_)) => None,
        Err(e) => return Err(e),
    };
    let fresh_coeff = match spectral {
        Some(c) => score_coeff.min(c * (2.0 * n as f64 + 3.0 * df)),
        None => score_coeff,
    };
    if rho > 0.0 {
        r.assume("W_k^T W_q nonsingular", spectral.is_some());
        let kappa = conditioning::attention_cond_bound(att, x, false)?;
        r.assume("rho below headroom/kappa", rho <= RHO_HEADROOM / kappa);
    }
    Ok(xi_a * (fresh_coeff * u + spectral.unwrap_or(f64::INFINITY) * if rho > 0.0 { rho } else { 0.0 }))
}

/// Residual sub-blocks of a transformer block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubBlock {
    /// `X ↦ X + A(R*(X))`.
    AttentionRms,
    /// `X ↦ X + A(N*(X))`.
    AttentionLn,
    /// `y ↦ y + M(R(y))`, applied columnwise.
    PerceptronRms,
    /// `y ↦ y + M(N(y))`, applied columnwise.
    PerceptronLn,
}

fn variant_of(kind: SubBlock) -> NormVariant {
    match kind {
        SubBlock::AttentionRms | SubBlock::PerceptronRms => NormVariant::RmsNorm,
        SubBlock::AttentionLn | SubBlock::PerceptronLn => NormVariant::LayerNorm,
    }
}

/// `Σ = 1 + 4√d σ_max(|W_k|ᵀ|W_q|) σ_max(W_kᵀW_q)/σ_min(W_kᵀW_q)`.
pub fn spectral_sigma(att: &Attention) -> Result<f64> {
    let s = spectral_terms(att)?;
    Ok(1.0 + 4.0 * (att.dim() as f64).sqrt() * s.abs_max * s.max / s.min)
}

struct AttentionFactors {
    /// `ξ(f,X) ξ(A,N*(X))`.
    chi: f64,
    /// `1 + max_t ‖x_t‖∞/‖c̊x_t‖₋∞` (1 for RMS).
    norm_ratio: f64,
    output: Mat,
}

fn attention_factors(cfg: &TransformerConfig, variant: NormVariant, x: &Mat, u: f64) -> Result<(AttentionFactors, Vec<Assumption>)> {
    let nx = net::normalize_cols(variant, x, EXACT)?;
    let ax = conditioning::attention_exact(&cfg.attention, &nx)?;
    let y = x.add(&ax)?;
    let xi_f = xi_residual(x.as_slice(), ax.as_slice());
    let xi_a = xi_attention(&cfg.attention, &nx)?;
    let mut assumptions = vec![
        Assumption { name: "attention output generic".into(), holds: xi_a.is_finite() },
        Assumption { name: "attention residual generic".into(), holds: xi_f.is_finite() },
    ];
    let norm_ratio = match variant {
        NormVariant::RmsNorm => 1.0,
        NormVariant::LayerNorm => {
            let mut ok = true;
            for t in 0..x.cols() {
                ok &= centring_margin(&x.col(t), u, DEFAULT_ALPHA)?;
            }
            assumptions.push(Assumption { name: "centring margin (attention input)".into(), holds: ok });
            1.0 + column_norm_ratio_max(x)?
        }
    };
    Ok((AttentionFactors { chi: xi_f * xi_a, norm_ratio, output: y }, assumptions))
}

struct PerceptronFactors {
    /// `max_t ξ(f_M,y_t) ξ(M,N(y_t))`.
    chi: f64,
    norm_ratio: f64,
    max_active: usize,
}

fn perceptron_factors(p: &Perceptron, variant: NormVariant, y: &Mat, u: f64) -> Result<(PerceptronFactors, Vec<Assumption>)> {
    let mut chi: f64 = 0.0;
    let mut max_active = 0;
    let mut stable = true;
    for t in 0..y.cols() {
        let yt = y.col(t);
        let ny = net::normalize(variant, &yt, EXACT)?;
        let m = net::perceptron(p, &ny, EXACT)?;
        let xi_f = xi_residual(&yt, &m);
        let xi_m = xi_perceptron(p, &ny)?;
        chi = chi.max(xi_f * xi_m);
        max_active = max_active.max(active_count(p, &ny)?);
        stable &= stable_sign(p, &ny, u, DEFAULT_ALPHA)?;
    }
    let mut assumptions = vec![
        Assumption { name: "stable ReLU signs".into(), holds: stable },
        Assumption { name: "perceptron output and residual generic".into(), holds: chi.is_finite() },
    ];
    let norm_ratio = match variant {
        NormVariant::RmsNorm => 1.0,
        NormVariant::LayerNorm => {
            let mut ok = true;
            for t in 0..y.cols() {
                ok &= centring_margin(&y.col(t), u, DEFAULT_ALPHA)?;
            }
            assumptions.push(Assumption { name: "centring margin (perceptron input)".into(), holds: ok });
            1.0 + column_norm_ratio_max(y)?
        }
    };
    Ok((PerceptronFactors { chi, norm_ratio, max_active }, assumptions))
}

/// Bound for one residual sub-block; the input is a `d × n` matrix for the
/// attention sub-blocks and its columns for the perceptron sub-blocks.
pub fn bound_sub_block(kind: SubBlock, cfg: &TransformerConfig, x: &Mat, u: f64, rho_in: f64) -> Result<BoundReport> {
    cfg.validate()?;
    let variant = variant_of(kind);
    let (d, n) = (x.rows() as f64, x.cols() as f64);
    let name = match kind {
        SubBlock::AttentionRms => "f_A",
        SubBlock::AttentionLn => "g_A",
        SubBlock::PerceptronRms => "f_M",
        SubBlock::PerceptronLn => "g_M",
    };
    let mut r = BoundReport::new(name, u, rho_in);
    let value = match kind {
        SubBlock::AttentionRms | SubBlock::AttentionLn => {
            let sigma = r.ingredient("sigma", spectral_sigma(&cfg.attention)?);
            let (f, assumptions) = attention_factors(cfg, variant, x, u)?;
            r.assumptions.extend(assumptions);
            r.ingredient("chi", f.chi);
            r.ingredient("norm_ratio", f.norm_ratio);
            let (cu, cr) = if kind == SubBlock::AttentionRms { (2.0 * n + 6.0 * d, 3.0) } else { (2.0 * n + 7.0 * d, 4.0) };
            f.chi * sigma * f.norm_ratio * (cu * u + cr * rho_in)
        }
        SubBlock::PerceptronRms | SubBlock::PerceptronLn => {
            let (f, assumptions) = perceptron_factors(&cfg.perceptron, variant, x, u)?;
            r.assumptions.extend(assumptions);
            r.ingredient("chi", f.chi);
            r.ingredient("norm_ratio", f.norm_ratio);
            let omega = f.max_active as f64;
            let (cu, cr) = if kind == SubBlock::PerceptronRms { (5.0 * d + omega, 3.0) } else { (6.0 * d + omega, 4.0) };
            f.chi * f.norm_ratio * (cu * u + cr * rho_in)
        }
    };
    Ok(r.finish(value))
}

/// Per-block amplification `χ Σ` (times the norm ratios for layer normalization)
/// together with the exact block output.
struct BlockFactor {
    factor: f64,
    output: Mat,
    assumptions: Vec<Assumption>,
    ingredients: Vec<(String, f64)>,
}

fn block_factor(cfg: &TransformerConfig, x: &Mat, u: f64) -> Result<BlockFactor> {
    cfg.validate()?;
    if cfg.placement != Placement::PreAttention {
        return Err(Error::Unsupported("error bounds are available for the pre-attention placement only".into()));
    }
    let sigma = spectral_sigma(&cfg.attention)?;
    let (fa, mut assumptions) = attention_factors(cfg, cfg.variant, x, u)?;
    let (fm, am) = perceptron_factors(&cfg.perceptron, cfg.variant, &fa.output, u)?;
    assumptions.extend(am);
    assumptions.push(Assumption { name: "d >= 2".into(), holds: x.rows() >= 2 });
    let factor = fm.chi * fa.chi * sigma * fa.norm_ratio * fm.norm_ratio;
    let ingredients = vec![
        ("sigma".to_string(), sigma),
        ("chi_attention".to_string(), fa.chi),
        ("chi_perceptron".to_string(), fm.chi),
        ("norm_ratio_x".to_string(), fa.norm_ratio),
        ("norm_ratio_y".to_string(), fm.norm_ratio),
    ];
    let output = net::block(cfg, x, EXACT)?;
    Ok(BlockFactor { factor, output, assumptions, ingredients })
}

/// `(c_u, c_ρ)` of the block recursion for a variant.
fn block_constants(variant: NormVariant, d: usize, n: usize, hidden: usize) -> (f64, f64) {
    let (d, n, h) = (d as f64, n as f64, hidden as f64);
    match variant {
        NormVariant::RmsNorm => (6.0 * n + 23.0 * d + h, 9.0),
        NormVariant::LayerNorm => (8.0 * n + 34.0 * d + h, 16.0),
    }
}

/// Bound for one pre-attention transformer block.
pub fn bound_block(cfg: &TransformerConfig, x: &Mat, u: f64, rho_in: f64) -> Result<BoundReport> {
    let bf = block_factor(cfg, x, u)?;
    let (cu, cr) = block_constants(cfg.variant, x.rows(), x.cols(), cfg.perceptron.hidden());
    let mut r = BoundReport::new(format!("block_{}", cfg.variant.name()), u, rho_in);
    r.ingredients = bf.ingredients;
    r.ingredients.push(("block_factor".into(), bf.factor));
    r.assumptions = bf.assumptions;
    Ok(r.finish(bf.factor * (cu * u + cr * rho_in)))
}

/// Bounds after each block of a deep stack: entry `l` bounds the output of block `l + 1`.
pub fn bound_deep_layers(deep: &DeepConfig, x: &Mat, u: f64) -> Result<Vec<BoundReport>> {
    deep.validate()?;
    let mut out = Vec::with_capacity(deep.depth());
    let mut cur = x.clone();
    let mut product = 1.0;
    let mut ok = true;
    let mut failed: Option<String> = None;
    for (l, cfg) in deep.blocks.iter().enumerate() {
        let bf = block_factor(cfg, &cur, u)?;
        if let Some(a) = bf.assumptions.iter().find(|a| !a.holds) {
            ok = false;
            failed.get_or_insert_with(|| format!("layer {}: {}", l + 1, a.name));
        }
        product *= bf.factor;
        let (cu, cr) = block_constants(cfg.variant, x.rows(), x.cols(), deep.blocks.iter().map(|b| b.perceptron.hidden()).max().unwrap_or(0));
        let depth = (l + 1) as i32;
        let geometric = cr.powi(depth) / (cr - 1.0);
        let mut r = BoundReport::new(format!("deep_{}_L{}", cfg.variant.name(), l + 1), u, 0.0);
        r.ingredients.push(("block_factor".into(), bf.factor));
        r.ingredients.push(("factor_product".into(), product));
        r.ingredients.push(("geometric".into(), geometric));
        r.assumptions.push(Assumption { name: failed.clone().unwrap_or_else(|| "all block hypotheses".into()), holds: ok });
        out.push(r.finish(product * geometric * cu * u));
        cur = bf.output;
    }
    Ok(out)
}

/// Bound for the whole stack; zero for an empty stack.
pub fn bound_deep(deep: &DeepConfig, x: &Mat, u: f64) -> Result<BoundReport> {
    let mut layers = bound_deep_layers(deep, x, u)?;
    Ok(layers.pop().unwrap_or_else(|| {
        let mut r = BoundReport::new("deep_L0", u, 0.0);
        r.first_order_bound = 0.0;
        r
    }))
}

/// Measured forward error of a computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredError {
    /// `ρ_c(f̂, f)` over all entries.
    pub componentwise: f64,
    /// `max_t ‖f̂_t − f_t‖₂ / ‖f_t‖₂` over columns.
    pub normwise: f64,
}

/// Runs `f` under `low` and `reference` and compares the results.
pub fn measure_error(
    f: &dyn Fn(PrecisionSpec) -> Result<Mat>,
    low: PrecisionSpec,
    reference: PrecisionSpec,
) -> Result<MeasuredError> {
    if reference.unit_roundoff() > 1e-6 * low.unit_roundoff() {
        return Err(Error::Precondition(format!(
            "reference precision {reference} is not at least six orders finer than {low}"
        )));
    }
    let hat = f(low)?;
    let exact = f(reference)?;
    compare(&hat, &exact)
}

/// Componentwise and columnwise-normwise distance of `hat` from `exact`.
pub fn compare(hat: &Mat, exact: &Mat) -> Result<MeasuredError> {
    Ok(MeasuredError {
        componentwise: rel_dist_componentwise(hat.as_slice(), exact.as_slice()),
        normwise: rel_dist_columnwise_max(hat, exact).unwrap_or(f64::INFINITY),
    })
}
