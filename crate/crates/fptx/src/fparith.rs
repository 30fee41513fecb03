//! Simulated floating-point arithmetic.
//!
//! Every operation is evaluated in hardware double precision and the result is
//! rounded to nearest (ties to even) in the simulated format. The exponent range
//! of the simulated format is unbounded; only the significand is limited.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A simulated floating-point system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PrecisionSpec {
    /// Base 2 with a `t`-bit significand (`t = 24` is IEEE single, `t = 53` is double).
    BinarySignificand(u32),
    /// Base 10 with `s` significant digits.
    DecimalDigits(u32),
    /// Hardware double precision; the reference arithmetic.
    NativeDouble,
}

impl PrecisionSpec {
    pub const SINGLE: PrecisionSpec = PrecisionSpec::BinarySignificand(24);

    /// Validated binary format.
    pub fn binary(t: u32) -> Result<Self> {
        let spec = PrecisionSpec::BinarySignificand(t);
        spec.validate()?;
        Ok(spec)
    }

    /// Validated decimal format.
    pub fn decimal(s: u32) -> Result<Self> {
        let spec = PrecisionSpec::DecimalDigits(s);
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PrecisionSpec::BinarySignificand(t) if !(2..=53).contains(&t) => Err(Error::Config(
                format!("binary significand must have 2..=53 bits, got {t}"),
            )),
            PrecisionSpec::DecimalDigits(s) if !(1..=17).contains(&s) => Err(Error::Config(
                format!("decimal precision must have 1..=17 digits, got {s}"),
            )),
            _ => Ok(()),
        }
    }

    /// Unit roundoff `u = ½ β^{1−t}`.
    pub fn unit_roundoff(&self) -> f64 {
        match *self {
            PrecisionSpec::BinarySignificand(t) => 0.5 * 2f64.powi(1 - t as i32),
            PrecisionSpec::DecimalDigits(s) => 0.5 * 10f64.powi(1 - s as i32),
            PrecisionSpec::NativeDouble => f64::EPSILON / 2.0,
        }
    }

    /// Short mode name used in CSV output.
    pub fn mode_name(&self) -> &'static str {
        match self {
            PrecisionSpec::BinarySignificand(_) => "binary",
            PrecisionSpec::DecimalDigits(_) => "decimal",
            PrecisionSpec::NativeDouble => "native",
        }
    }

    /// Bits or digits of the significand.
    pub fn precision_value(&self) -> u32 {
        match *self {
            PrecisionSpec::BinarySignificand(t) => t,
            PrecisionSpec::DecimalDigits(s) => s,
            PrecisionSpec::NativeDouble => 53,
        }
    }

    pub fn is_native(&self) -> bool {
        matches!(self, PrecisionSpec::NativeDouble | PrecisionSpec::BinarySignificand(53))
    }

    /// Round a double to the nearest number of this format.
    #[inline]
    pub fn round(&self, x: f64) -> f64 {
        match *self {
            PrecisionSpec::NativeDouble => x,
            PrecisionSpec::BinarySignificand(t) => round_binary(x, t),
            PrecisionSpec::DecimalDigits(s) => round_decimal(x, s),
        }
    }

    #[inline]
    pub fn add(&self, a: f64, b: f64) -> f64 {
        self.round(a + b)
    }

    #[inline]
    pub fn sub(&self, a: f64, b: f64) -> f64 {
        self.round(a - b)
    }

    #[inline]
    pub fn mul(&self, a: f64, b: f64) -> f64 {
        self.round(a * b)
    }

    /// Rounded quotient; the caller guarantees `b != 0`.
    #[inline]
    pub fn div(&self, a: f64, b: f64) -> f64 {
        self.round(a / b)
    }

    #[inline]
    pub fn exp(&self, x: f64) -> f64 {
        self.round(x.exp())
    }

    /// Rounded square root; the caller guarantees `x >= 0`.
    #[inline]
    pub fn sqrt(&self, x: f64) -> f64 {
        self.round(x.sqrt())
    }
}

impl Default for PrecisionSpec {
    fn default() -> Self {
        PrecisionSpec::NativeDouble
    }
}

impl fmt::Display for PrecisionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrecisionSpec::BinarySignificand(t) => write!(f, "b:{t}"),
            PrecisionSpec::DecimalDigits(s) => write!(f, "d:{s}"),
            PrecisionSpec::NativeDouble => write!(f, "native"),
        }
    }
}

impl FromStr for PrecisionSpec {
    type Err = Error;

    /// Parses `d:<digits>`, `b:<bits>` or `native`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("native") || s.eq_ignore_ascii_case("double") {
            return Ok(PrecisionSpec::NativeDouble);
        }
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("precision `{s}` is not of the form d:<digits> or b:<bits>")))?;
        let value: u32 = value
            .parse()
            .map_err(|_| Error::Config(format!("precision `{s}` has a non-integer value")))?;
        match kind {
            "d" | "decimal" => PrecisionSpec::decimal(value),
            "b" | "binary" => PrecisionSpec::binary(value),
            _ => Err(Error::Config(format!("unknown precision mode `{kind}`"))),
        }
    }
}

impl TryFrom<String> for PrecisionSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PrecisionSpec> for String {
    fn from(p: PrecisionSpec) -> String {
        p.to_string()
    }
}

/// Binary arithmetic operators of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Unary functions of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Exp,
    Sqrt,
}

pub fn unit_roundoff(spec: PrecisionSpec) -> f64 {
    spec.unit_roundoff()
}

pub fn round_to_precision(x: f64, spec: PrecisionSpec) -> f64 {
    spec.round(x)
}

/// `fl(a op b)`.
pub fn fl_bin(a: f64, op: BinOp, b: f64, spec: PrecisionSpec) -> Result<f64> {
    Ok(match op {
        BinOp::Add => spec.add(a, b),
        BinOp::Sub => spec.sub(a, b),
        BinOp::Mul => spec.mul(a, b),
        BinOp::Div => {
            if b == 0.0 {
                return Err(Error::Domain("division by zero".into()));
            }
            spec.div(a, b)
        }
    })
}

/// `fl(f(x))` for `f` in {exp, sqrt}.
pub fn fl_unary(f: UnaryFn, x: f64, spec: PrecisionSpec) -> Result<f64> {
    Ok(match f {
        UnaryFn::Exp => spec.exp(x),
        UnaryFn::Sqrt => {
            if x < 0.0 {
                return Err(Error::Domain(format!("square root of negative number {x}")));
            }
            spec.sqrt(x)
        }
    })
}

/// The constant `γₙ = nu/(1−nu)` for a given unit roundoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaBudget {
    pub n: usize,
    pub u: f64,
    pub value: f64,
}

impl GammaBudget {
    pub fn new(n: usize, u: f64) -> Result<Self> {
        let nu = n as f64 * u;
        if nu >= 1.0 {
            return Err(Error::Precondition(format!("gamma_{n} undefined: n*u = {nu} >= 1")));
        }
        Ok(GammaBudget { n, u, value: nu / (1.0 - nu) })
    }
}

pub fn gamma(n: usize, spec: PrecisionSpec) -> Result<f64> {
    gamma_u(n, spec.unit_roundoff())
}

pub fn gamma_u(n: usize, u: f64) -> Result<f64> {
    GammaBudget::new(n, u).map(|g| g.value)
}

fn round_binary(x: f64, t: u32) -> f64 {
    if t >= 53 || x == 0.0 || !x.is_finite() {
        return x;
    }
    if x.abs() < f64::MIN_POSITIVE {
        // Subnormal doubles carry fewer than 53 bits; rescale into the normal range.
        let up = f64::from_bits((1023 + 600) << 52);
        let down = f64::from_bits((1023 - 600) << 52);
        return round_binary(x * up, t) * down;
    }
    let shift = 53 - t;
    let bits = x.to_bits();
    let mask = (1u64 << shift) - 1;
    let half = 1u64 << (shift - 1);
    let rem = bits & mask;
    let mut out = bits & !mask;
    if rem > half || (rem == half && (out >> shift) & 1 == 1) {
        out += 1u64 << shift;
    }
    f64::from_bits(out)
}

/// Powers of ten that are exact doubles.
const POW10: [f64; 23] = [
    1e0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9, 1e10, 1e11, 1e12, 1e13, 1e14, 1e15, 1e16, 1e17, 1e18, 1e19,
    1e20, 1e21, 1e22,
];

fn round_decimal(x: f64, s: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let a = x.abs();
    let r = if s <= 15 { round_decimal_fast(a, s).unwrap_or_else(|| round_decimal_formatted(a, s)) } else { round_decimal_exact(a, s) };
    r.copysign(x)
}

/// `a·10^p` rounded once, when `10^|p|` is an exact double.
#[inline]
fn scale10(a: f64, p: i32) -> Option<f64> {
    match p {
        0..=22 => Some(a * POW10[p as usize]),
        -22..=-1 => Some(a / POW10[(-p) as usize]),
        _ => None,
    }
}

/// Sign of `a·10^p − (fl + ½)`, where `y = fl(a·10^p)` and `fl = ⌊y⌋`, decided
/// exactly from the error-free residual of the scaling.
fn tie_side(a: f64, p: i32, y: f64, fl: f64) -> f64 {
    let d = (y - fl) - 0.5;
    if p >= 0 {
        // a·10^p = y + e exactly.
        let e = a.mul_add(POW10[p as usize], -y);
        d + e
    } else {
        // a / b = y + r/b exactly, with b > 0.
        let b = POW10[(-p) as usize];
        let r = (-y).mul_add(b, a);
        d.mul_add(b, r)
    }
}

/// Scales `a` so that `s` digits sit left of the decimal point and rounds there.
/// Scaling and unscaling are single correctly rounded operations on exact
/// operands, so the result is the double nearest the rounded decimal. Near a
/// half, the exact side is decided from the scaling residual. Returns `None`
/// when the scale factor is not an exact double.
fn round_decimal_fast(a: f64, s: u32) -> Option<f64> {
    let lo = POW10[s as usize - 1];
    let hi = POW10[s as usize];
    let exp2 = ((a.to_bits() >> 52) & 0x7ff) as i32;
    let e = if exp2 == 0 { a.log10().floor() as i32 } else { ((exp2 - 1023) as f64 * std::f64::consts::LOG10_2).floor() as i32 };
    let mut p = s as i32 - 1 - e;
    let mut y = scale10(a, p)?;
    while y < lo {
        p += 1;
        y = scale10(a, p)?;
    }
    while y >= hi {
        p -= 1;
        y = scale10(a, p)?;
    }
    // 1 <= y < 10^15, so truncation is the floor.
    let fl = y as u64 as f64;
    let frac = y - fl;
    let margin = y * 4.440892098500626e-16; // 2^-51
    let up = if (frac - 0.5).abs() > margin {
        frac > 0.5
    } else {
        let side = tie_side(a, p, y, fl);
        side > 0.0 || (side == 0.0 && fl % 2.0 == 1.0)
    };
    let r = if up { fl + 1.0 } else { fl };
    match p {
        0..=22 => Some(r / POW10[p as usize]),
        _ => Some(r * POW10[(-p) as usize]),
    }
}

/// Rounds through the standard library's exact decimal formatting, which yields
/// the correctly rounded `s`-digit decimal, and its correctly rounded parser.
/// Used where `10^|p|` is not an exact double; there `a·10^p` cannot be an exact
/// half for `s <= 15`, so the tie rule of the formatter never matters.
fn round_decimal_formatted(a: f64, s: u32) -> f64 {
    format!("{:.*e}", s as usize - 1, a).parse().expect("formatted float")
}

fn round_decimal_exact(a: f64, s: u32) -> f64 {
    let bits = a.to_bits();
    let exp_bits = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    let (m, k) = if exp_bits == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp_bits - 1075)
    };
    let ten = BigUint::from(10u32);
    let lo = ten.pow(s - 1);
    let hi = ten.pow(s);
    let ratio = |p: i32| -> (BigUint, BigUint) {
        let mut num = BigUint::from(m);
        let mut den = BigUint::from(1u32);
        if k >= 0 {
            num <<= k as usize;
        } else {
            den <<= (-k) as usize;
        }
        if p >= 0 {
            num *= ten.pow(p as u32);
        } else {
            den *= ten.pow((-p) as u32);
        }
        (num, den)
    };
    let mut p = s as i32 - 1 - a.log10().floor() as i32;
    let (num, den) = loop {
        let (num, den) = ratio(p);
        if num < &lo * &den {
            p += 1;
        } else if num >= &hi * &den {
            p -= 1;
        } else {
            break (num, den);
        }
    };
    let mut q = &num / &den;
    let rem2 = (&num % &den) << 1usize;
    if rem2 > den || (rem2 == den && q.bit(0)) {
        q += 1u32;
    }
    format!("{q}e{}", -p).parse().expect("decimal literal")
}
