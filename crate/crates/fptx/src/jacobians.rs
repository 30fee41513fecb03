//! Closed-form Jacobians of the transformer layers and a finite-difference
//! oracle to check them.
//!
//! Matrix arguments and values are vectorized column by column, so the Jacobian
//! of a map `ℝ^{d×n} → ℝ^{d×n}` is a `dn × dn` matrix acting on `vec(X)`.

use crate::error::{Error, Result};
use crate::fparith::PrecisionSpec;
use crate::net::{self, Attention, Perceptron, SoftmaxKind};
use crate::tensor::{self, kron, norm2, norm_inf, Mat, Norm};

const EXACT: PrecisionSpec = PrecisionSpec::NativeDouble;

/// Relative threshold below which a pre-activation counts as sitting on a ReLU kink.
pub const GENERICITY_TOL: f64 = 1e-8;

/// A layer together with the point at which it is linearized.
#[derive(Debug, Clone, Copy)]
pub enum LayerPoint<'a> {
    Centring(&'a [f64]),
    RmsNorm(&'a [f64]),
    LayerNorm(&'a [f64]),
    /// `x ↦ Ax + b`.
    Affine { a: &'a Mat, b: &'a [f64], x: &'a [f64] },
    Perceptron { p: &'a Perceptron, x: &'a [f64] },
    /// Scores of the last column of `x` against all columns.
    SimScores { att: &'a Attention, x: &'a Mat },
    Softmax(&'a [f64]),
    Attention { att: &'a Attention, x: &'a Mat },
    /// `(X, Y) ↦ XY`, with input `[vec X; vec Y]`.
    MatMul { x: &'a Mat, y: &'a Mat },
}

impl<'a> LayerPoint<'a> {
    pub fn name(&self) -> &'static str {
        match self {
            LayerPoint::Centring(_) => "centring",
            LayerPoint::RmsNorm(_) => "rms",
            LayerPoint::LayerNorm(_) => "ln",
            LayerPoint::Affine { .. } => "affine",
            LayerPoint::Perceptron { .. } => "tlp",
            LayerPoint::SimScores { .. } => "scores",
            LayerPoint::Softmax(_) => "softmax",
            LayerPoint::Attention { .. } => "attention",
            LayerPoint::MatMul { .. } => "matmul",
        }
    }

    /// The vectorized argument `u`.
    pub fn input(&self) -> Vec<f64> {
        match *self {
            LayerPoint::Centring(x)
            | LayerPoint::RmsNorm(x)
            | LayerPoint::LayerNorm(x)
            | LayerPoint::Softmax(x)
            | LayerPoint::Affine { x, .. }
            | LayerPoint::Perceptron { x, .. } => x.to_vec(),
            LayerPoint::SimScores { x, .. } | LayerPoint::Attention { x, .. } => x.vec_cols(),
            LayerPoint::MatMul { x, y } => {
                let mut u = x.vec_cols();
                u.extend(y.vec_cols());
                u
            }
        }
    }

    /// Evaluates the map in double precision at the vectorized argument `u`.
    pub fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        match *self {
            LayerPoint::Centring(_) => net::centring(u, EXACT),
            LayerPoint::RmsNorm(_) => net::rms_norm(u, EXACT),
            LayerPoint::LayerNorm(_) => net::layer_norm(u, EXACT),
            LayerPoint::Softmax(_) => net::softmax_shifted(u, EXACT),
            LayerPoint::Affine { a, b, .. } => net::affine(a, u, b, EXACT),
            LayerPoint::Perceptron { p, .. } => net::perceptron(p, u, EXACT),
            LayerPoint::SimScores { att, x } => {
                let xm = Mat::from_vec_cols(x.rows(), x.cols(), u)?;
                let keys = xm.transpose().matmul(&att.wk.transpose())?;
                let q = att.wq.matvec(&xm.col(x.cols() - 1))?;
                let sd = (att.dim() as f64).sqrt();
                Ok(keys.matvec(&q)?.into_iter().map(|v| v / sd).collect())
            }
            LayerPoint::Attention { att, x } => {
                let xm = Mat::from_vec_cols(x.rows(), x.cols(), u)?;
                Ok(net::self_attention_with(att, &xm, EXACT, SoftmaxKind::Shifted)?.vec_cols())
            }
            LayerPoint::MatMul { x, y } => {
                let split = x.rows() * x.cols();
                let xm = Mat::from_vec_cols(x.rows(), x.cols(), &u[..split])?;
                let ym = Mat::from_vec_cols(y.rows(), y.cols(), &u[split..])?;
                Ok(xm.matmul(&ym)?.vec_cols())
            }
        }
    }

    /// `f(u)` at the stored point.
    pub fn value(&self) -> Result<Vec<f64>> {
        self.eval(&self.input())
    }

    /// Sign pattern of the ReLU pre-activations at `u`; empty for smooth maps.
    pub fn regime(&self, u: &[f64]) -> Result<Vec<bool>> {
        match *self {
            LayerPoint::Perceptron { p, .. } => {
                Ok(net::affine(&p.a1, u, &p.b1, EXACT)?.into_iter().map(|v| v > 0.0).collect())
            }
            _ => Ok(Vec::new()),
        }
    }
}

/// `B = W_kᵀ W_q / √d`.
pub fn bilinear_form(att: &Attention) -> Result<Mat> {
    Ok(att.wk.transpose().matmul(&att.wq)?.scale(1.0 / (att.dim() as f64).sqrt()))
}

/// Indices of the strictly positive pre-activations `supp⁺(A₁x + b₁)`, or an
/// error when a pre-activation is within the genericity threshold of zero.
pub fn active_set(p: &Perceptron, x: &[f64]) -> Result<Vec<usize>> {
    let pre = net::affine(&p.a1, x, &p.b1, EXACT)?;
    let scale = p.a1.abs().matvec(&tensor::abs_vec(x))?;
    let mut omega = Vec::new();
    for (i, (&v, &s)) in pre.iter().zip(&scale).enumerate() {
        let sc = s + p.b1[i].abs();
        if v.abs() <= GENERICITY_TOL * sc {
            return Err(Error::NotDifferentiable(format!(
                "pre-activation {i} = {v:e} is on a ReLU kink"
            )));
        }
        if v > 0.0 {
            omega.push(i);
        }
    }
    Ok(omega)
}

/// The effective affine map `x ↦ A x + b` of the perceptron on its current linear piece.
pub fn perceptron_local_affine(p: &Perceptron, x: &[f64]) -> Result<(Mat, Vec<f64>)> {
    let omega = active_set(p, x)?;
    let a2o = p.a2.select_cols(&omega);
    let a = a2o.matmul(&p.a1.select_rows(&omega))?;
    let b1o: Vec<f64> = omega.iter().map(|&i| p.b1[i]).collect();
    let b = a2o.matvec(&b1o)?.iter().zip(&p.b2).map(|(u, v)| u + v).collect();
    Ok((a, b))
}

fn outer_identity_minus(d: usize, scale: f64, vecs: &[(&[f64], f64)]) -> Mat {
    let mut j = Mat::identity(d);
    for &(v, w) in vecs {
        for r in 0..d {
            for c in 0..d {
                j[(r, c)] -= w * v[r] * v[c];
            }
        }
    }
    j.scale(scale)
}

fn rms_jacobian(x: &[f64]) -> Result<Mat> {
    let d = x.len();
    let nx = norm2(x);
    if nx == 0.0 {
        return Err(Error::Degenerate("RMS normalization at the zero vector".into()));
    }
    Ok(outer_identity_minus(d, (d as f64).sqrt() / nx, &[(x, 1.0 / (nx * nx))]))
}

fn centring_jacobian(d: usize) -> Mat {
    let e = vec![1.0; d];
    outer_identity_minus(d, 1.0, &[(&e, 1.0 / d as f64)])
}

fn layer_norm_jacobian(x: &[f64]) -> Result<Mat> {
    let d = x.len();
    let c = net::centring(x, EXACT)?;
    let nc = norm2(&c);
    if nc == 0.0 {
        return Err(Error::Degenerate("layer normalization at a constant vector".into()));
    }
    let e = vec![1.0; d];
    Ok(outer_identity_minus(d, (d as f64).sqrt() / nc, &[(&e, 1.0 / d as f64), (&c, 1.0 / (nc * nc))]))
}

/// `J_ψ = diag ψ − ψψᵀ`.
pub fn softmax_jacobian_at(psi: &[f64]) -> Mat {
    let n = psi.len();
    Mat::from_fn(n, n, |i, j| if i == j { psi[i] } else { 0.0 } - psi[i] * psi[j])
}

/// `J_S = I_n ⊗ x_nᵀBᵀ … ` written row by row: row `i` is `e_iᵀ ⊗ (Bx_n)ᵀ + e_nᵀ ⊗ x_iᵀB`.
fn simscores_jacobian(b: &Mat, x: &Mat) -> Result<Mat> {
    let (d, n) = x.shape();
    let xn = x.col(n - 1);
    let bxn = b.matvec(&xn)?;
    let bt = b.transpose();
    let mut j = Mat::zeros(n, d * n);
    for i in 0..n {
        for k in 0..d {
            j[(i, i * d + k)] += bxn[k];
        }
        let xib = bt.matvec(&x.col(i))?;
        for k in 0..d {
            j[(i, (n - 1) * d + k)] += xib[k];
        }
    }
    Ok(j)
}

fn attention_jacobian(att: &Attention, x: &Mat) -> Result<Mat> {
    att.validate()?;
    let (d, n) = x.shape();
    let b = bilinear_form(att)?;
    let mut j = Mat::zeros(d * n, d * n);
    for t in 0..n {
        let xt = x.leading_cols(t + 1);
        let js = simscores_jacobian(&b, &xt)?;
        let s = LayerPoint::SimScores { att, x: &xt }.value()?;
        let psi = net::softmax_shifted(&s, EXACT)?;
        let jpsi = softmax_jacobian_at(&psi);
        let chain = att.wv.matmul(&xt)?.matmul(&jpsi)?.matmul(&js)?;
        for r in 0..d {
            for c in 0..d * (t + 1) {
                let blk = c / d;
                let direct = psi[blk] * att.wv[(r, c % d)];
                j[(t * d + r, c)] = direct + chain[(r, c)];
            }
        }
    }
    Ok(j)
}

/// The Jacobian of the layer at its stored point.
pub fn analytic_jacobian(pt: &LayerPoint<'_>) -> Result<Mat> {
    match *pt {
        LayerPoint::Centring(x) => Ok(centring_jacobian(x.len())),
        LayerPoint::RmsNorm(x) => rms_jacobian(x),
        LayerPoint::LayerNorm(x) => layer_norm_jacobian(x),
        LayerPoint::Affine { a, .. } => Ok(a.clone()),
        LayerPoint::Perceptron { p, x } => Ok(perceptron_local_affine(p, x)?.0),
        LayerPoint::SimScores { att, x } => simscores_jacobian(&bilinear_form(att)?, x),
        LayerPoint::Softmax(s) => Ok(softmax_jacobian_at(&net::softmax_shifted(s, EXACT)?)),
        LayerPoint::Attention { att, x } => attention_jacobian(att, x),
        LayerPoint::MatMul { x, y } => {
            let left = kron(&y.transpose(), &Mat::identity(x.rows()));
            let right = kron(&Mat::identity(y.cols()), x);
            let rows = left.rows();
            Ok(Mat::from_fn(rows, left.cols() + right.cols(), |r, c| {
                if c < left.cols() {
                    left[(r, c)]
                } else {
                    right[(r, c - left.cols())]
                }
            }))
        }
    }
}

/// Central differences of `f` at `u` with per-coordinate step `h`.
pub fn central_differences(
    f: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    u: &[f64],
    h: f64,
) -> Result<Mat> {
    let m = f(u)?.len();
    let mut j = Mat::zeros(m, u.len());
    let mut w = u.to_vec();
    for c in 0..u.len() {
        w[c] = u[c] + h;
        let fp = f(&w)?;
        w[c] = u[c] - h;
        let fm = f(&w)?;
        w[c] = u[c];
        for r in 0..m {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    Ok(j)
}

fn fd_step(pt: &LayerPoint<'_>, step: f64) -> f64 {
    let s = norm_inf(&pt.input());
    step * if s > 0.0 { s } else { 1.0 }
}

/// Finite-difference Jacobian with step `step·‖u‖∞`. Fails when a probe would
/// cross a ReLU kink.
pub fn finite_difference_jacobian(pt: &LayerPoint<'_>, step: f64) -> Result<Mat> {
    let u = pt.input();
    let h = fd_step(pt, step);
    let base = pt.regime(&u)?;
    if !base.is_empty() {
        let mut w = u.clone();
        for c in 0..u.len() {
            for delta in [h, -h] {
                w[c] = u[c] + delta;
                if pt.regime(&w)? != base {
                    return Err(Error::NotDifferentiable(format!(
                        "finite-difference probe in coordinate {c} crosses a ReLU kink"
                    )));
                }
            }
            w[c] = u[c];
        }
    }
    central_differences(&|v: &[f64]| pt.eval(v), &u, h)
}

/// Relative Frobenius gap between the difference quotients at `step` and `step/2`.
/// A large gap signals cancellation or a nearby non-smooth point.
pub fn richardson_gap(pt: &LayerPoint<'_>, step: f64) -> Result<f64> {
    let j1 = finite_difference_jacobian(pt, step)?;
    let j2 = finite_difference_jacobian(pt, step / 2.0)?;
    let denom = j2.frobenius();
    let gap = j1.sub(&j2)?.frobenius();
    Ok(if denom > 0.0 { gap / denom } else { gap })
}

/// Relative Frobenius distance `‖J₁ − J₂‖_F / ‖J₂‖_F` (absolute when `J₂ = 0`).
pub fn relative_frobenius(j1: &Mat, j2: &Mat) -> Result<f64> {
    let gap = j1.sub(j2)?.frobenius();
    let denom = j2.frobenius();
    Ok(if denom > 0.0 { gap / denom } else { gap })
}

/// Structural checks on a Jacobian.
#[derive(Debug, Clone)]
pub struct KernelDiagnostics {
    /// Named residuals that vanish in exact arithmetic, e.g. `‖J x‖∞`.
    pub residuals: Vec<(&'static str, f64)>,
    pub spectral_norm: f64,
    /// Closed-form value of `‖J‖₂` where one is known.
    pub closed_form_spectral: Option<f64>,
}

impl KernelDiagnostics {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.1))
    }
}

/// Kernel vectors, row sums and spectral norms of the normalization and softmax Jacobians.
pub fn jacobian_kernel_checks(pt: &LayerPoint<'_>) -> Result<KernelDiagnostics> {
    let j = analytic_jacobian(pt)?;
    let spectral_norm = tensor::induced_norm(&j, Norm::Two, Norm::Two)?;
    let apply = |v: &[f64]| -> Result<f64> { Ok(norm_inf(&j.matvec(v)?)) };
    let (residuals, closed) = match *pt {
        LayerPoint::RmsNorm(x) => {
            let scale = (x.len() as f64).sqrt() / norm2(x);
            (vec![("J x", apply(x)? / (scale * norm_inf(x)))], Some(scale))
        }
        LayerPoint::Centring(x) => (vec![("J e", apply(&vec![1.0; x.len()])?)], Some(1.0)),
        LayerPoint::LayerNorm(x) => {
            let c = net::centring(x, EXACT)?;
            let scale = (x.len() as f64).sqrt() / norm2(&c);
            (
                vec![
                    ("J e", apply(&vec![1.0; x.len()])? / scale),
                    ("J c", apply(&c)? / (scale * norm_inf(&c))),
                ],
                Some(scale),
            )
        }
        LayerPoint::Softmax(s) => {
            let asym = j.sub(&j.transpose())?.max_abs();
            (vec![("J e", apply(&vec![1.0; s.len()])?), ("J - Jt", asym)], None)
        }
        _ => (Vec::new(), None),
    };
    Ok(KernelDiagnostics { residuals, spectral_norm, closed_form_spectral: closed })
}
