//! Dense matrices and vectors, vector and induced matrix norms, Kronecker
//! products, extreme singular values and relative distances.
//!
//! Vectors are plain `[f64]` slices. [`Mat`] stores its entries row-major;
//! vectorization ([`Mat::vec_cols`]) stacks columns.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::fparith::PrecisionSpec;

/// Dense row-major matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds from row-major data.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        dim_check(data.len() == rows * cols, || {
            format!("{} entries cannot fill a {rows}x{cols} matrix", data.len())
        })?;
        Ok(Mat { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        dim_check(rows.iter().all(|r| r.len() == n), || "ragged rows".into())?;
        Ok(Mat { rows: m, cols: n, data: rows.concat() })
    }

    pub fn from_cols(cols: &[Vec<f64>]) -> Result<Self> {
        let n = cols.len();
        let m = cols.first().map_or(0, Vec::len);
        dim_check(cols.iter().all(|c| c.len() == m), || "ragged columns".into())?;
        Ok(Mat::from_fn(m, n, |i, j| cols[j][i]))
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn diag(v: &[f64]) -> Self {
        let mut m = Mat::zeros(v.len(), v.len());
        for (i, &x) in v.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    /// Inverse of [`Mat::vec_cols`].
    pub fn from_vec_cols(rows: usize, cols: usize, v: &[f64]) -> Result<Self> {
        dim_check(v.len() == rows * cols, || {
            format!("vector of length {} does not reshape to {rows}x{cols}", v.len())
        })?;
        Ok(Mat::from_fn(rows, cols, |i, j| v[j * rows + i]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[f64]) {
        assert_eq!(v.len(), self.rows);
        for (i, &x) in v.iter().enumerate() {
            self.data[i * self.cols + j] = x;
        }
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|j| self.col(j)).collect()
    }

    /// The first `k` columns.
    pub fn leading_cols(&self, k: usize) -> Mat {
        Mat::from_fn(self.rows, k, |i, j| self[(i, j)])
    }

    pub fn select_rows(&self, idx: &[usize]) -> Mat {
        Mat::from_fn(idx.len(), self.cols, |i, j| self[(idx[i], j)])
    }

    pub fn select_cols(&self, idx: &[usize]) -> Mat {
        Mat::from_fn(self.rows, idx.len(), |i, j| self[(i, idx[j])])
    }

    /// Column-stacking vectorization.
    pub fn vec_cols(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                v.push(self[(i, j)]);
            }
        }
        v
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// Entrywise absolute value `|Y|`.
    pub fn abs(&self) -> Mat {
        self.map(f64::abs)
    }

    pub fn scale(&self, a: f64) -> Mat {
        self.map(|x| a * x)
    }

    /// Rounds every entry to `spec`.
    pub fn rounded(&self, spec: PrecisionSpec) -> Mat {
        self.map(|x| spec.round(x))
    }

    pub fn add(&self, other: &Mat) -> Result<Mat> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &Mat, f: impl Fn(f64, f64) -> f64) -> Result<Mat> {
        dim_check(self.shape() == other.shape(), || {
            format!("{:?} vs {:?}", self.shape(), other.shape())
        })?;
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Exact (double precision) product.
    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        dim_check(self.cols == other.rows, || {
            format!("cannot multiply {:?} by {:?}", self.shape(), other.shape())
        })?;
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let brow = other.row(k);
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        dim_check(self.cols == x.len(), || {
            format!("cannot apply {:?} to a vector of length {}", self.shape(), x.len())
        })?;
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    pub fn frobenius(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        norm_inf(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// The vector norms that induce the supported matrix norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Norm {
    One,
    Two,
    Inf,
}

impl Norm {
    /// Hölder conjugate `p/(p−1)`.
    pub fn dual(self) -> Norm {
        match self {
            Norm::One => Norm::Inf,
            Norm::Two => Norm::Two,
            Norm::Inf => Norm::One,
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::One => "1",
            Norm::Two => "2",
            Norm::Inf => "inf",
        })
    }
}

impl FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Norm::One),
            "2" => Ok(Norm::Two),
            "inf" | "∞" => Ok(Norm::Inf),
            _ => Err(Error::Unsupported(format!("norm `{s}`"))),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    let scale = norm_inf(x);
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * x.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn vec_norm(x: &[f64], p: Norm) -> f64 {
    match p {
        Norm::One => norm1(x),
        Norm::Two => norm2(x),
        Norm::Inf => norm_inf(x),
    }
}

/// `‖x‖₋∞ = minᵢ |xᵢ|`.
pub fn min_abs(x: &[f64]) -> f64 {
    x.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
}

pub fn abs_vec(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.abs()).collect()
}

/// `‖M‖_{p,q} = max ‖Mx‖_q / ‖x‖_p`.
///
/// Supported: any `(1, q)`, any `(p, ∞)` and `(2, 2)`. The remaining pairs are
/// NP-hard to evaluate in general and return [`Error::Unsupported`].
pub fn induced_norm(m: &Mat, p: Norm, q: Norm) -> Result<f64> {
    match (p, q) {
        (Norm::One, q) => Ok((0..m.cols()).map(|j| vec_norm(&m.col(j), q)).fold(0.0, f64::max)),
        (p, Norm::Inf) => {
            let dual = p.dual();
            Ok((0..m.rows()).map(|i| vec_norm(m.row(i), dual)).fold(0.0, f64::max))
        }
        (Norm::Two, Norm::Two) => Ok(sv_extremes(m).0),
        _ => Err(Error::Unsupported(format!("induced norm ({p},{q})"))),
    }
}

/// Kronecker product `Y ⊗ Z`.
pub fn kron(y: &Mat, z: &Mat) -> Mat {
    let (m, n) = y.shape();
    let (k, l) = z.shape();
    Mat::from_fn(m * k, n * l, |r, c| y[(r / k, c / l)] * z[(r % k, c % l)])
}

/// All singular values, descending, by one-sided Jacobi rotations.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    let a = if m.rows() >= m.cols() { m.clone() } else { m.transpose() };
    let n = a.cols();
    let mut cols: Vec<Vec<f64>> = a.columns();
    const TOL: f64 = 1e-12;
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// `(σ_max, σ_min)`.
pub fn sv_extremes(m: &Mat) -> (f64, f64) {
    let sv = singular_values(m);
    (sv[0], *sv.last().unwrap())
}

/// `maxᵢ |x̂ᵢ − xᵢ| / |xᵢ|` with `a/0 = ∞` for `a ≠ 0` and `0/0 = 0`.
pub fn rel_dist_componentwise(xhat: &[f64], x: &[f64]) -> f64 {
    assert_eq!(xhat.len(), x.len(), "rel_dist_componentwise: length mismatch");
    xhat.iter().zip(x).fold(0.0, |m, (&a, &b)| {
        let diff = (a - b).abs();
        let r = if diff == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            diff / b.abs()
        };
        m.max(r)
    })
}

/// `‖x̂ − x‖ / ‖x‖`.
pub fn rel_dist_normwise(xhat: &[f64], x: &[f64], p: Norm) -> Result<f64> {
    dim_check(xhat.len() == x.len(), || "rel_dist_normwise: length mismatch".into())?;
    let nx = vec_norm(x, p);
    if nx == 0.0 {
        return Err(Error::Domain("normwise relative distance to the zero vector".into()));
    }
    let diff: Vec<f64> = xhat.iter().zip(x).map(|(a, b)| a - b).collect();
    Ok(vec_norm(&diff, p) / nx)
}

/// Columnwise normwise error `max_t ‖x̂_t − x_t‖₂ / ‖x_t‖₂`.
pub fn rel_dist_columnwise_max(xhat: &Mat, x: &Mat) -> Result<f64> {
    dim_check(xhat.shape() == x.shape(), || "rel_dist_columnwise_max: shape mismatch".into())?;
    let mut worst: f64 = 0.0;
    for j in 0..x.cols() {
        worst = worst.max(rel_dist_normwise(&xhat.col(j), &x.col(j), Norm::Two)?);
    }
    Ok(worst)
}
