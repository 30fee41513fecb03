//! Rounding and the per-operation error model.

use fptx::fparith::{fl_bin, fl_unary, gamma, BinOp, UnaryFn};
use fptx::PrecisionSpec;
use proptest::prelude::*;

/// Decimal rounding through the standard library formatter, which prints the
/// exact binary value correctly rounded with ties to even.
fn decimal_oracle(x: f64, s: u32) -> f64 {
    format!("{:.*e}", (s - 1) as usize, x).parse().unwrap()
}

/// Number of significant bits of a finite nonzero double.
fn significant_bits(x: f64) -> u32 {
    let bits = x.to_bits() & ((1u64 << 52) - 1) | (1u64 << 52);
    53 - bits.trailing_zeros()
}

#[test]
fn frozen_roundings() {
    let d4 = PrecisionSpec::DecimalDigits(4);
    assert_eq!(d4.round(std::f64::consts::PI), 3.142);
    assert_eq!(d4.round(2.0 / 3.0), 0.6667);
    assert_eq!(d4.round(-12345.0), -12340.0);
    assert_eq!(d4.round(12355.0), 12360.0);
    assert_eq!(PrecisionSpec::SINGLE.round(0.1), 0.100000001490116119384765625);
    assert_eq!(PrecisionSpec::BinarySignificand(11).round(0.1), 0.0999755859375);
    assert_eq!(PrecisionSpec::DecimalDigits(1).round(2.5), 2.0);
    assert_eq!(PrecisionSpec::DecimalDigits(1).round(3.5), 4.0);
    assert_eq!(PrecisionSpec::NativeDouble.round(0.1), 0.1);
}

#[test]
fn frozen_unit_roundoffs() {
    assert_eq!(PrecisionSpec::DecimalDigits(4).unit_roundoff(), 5e-4);
    assert_eq!(PrecisionSpec::DecimalDigits(8).unit_roundoff(), 5e-8);
    assert_eq!(PrecisionSpec::SINGLE.unit_roundoff(), 2f64.powi(-24));
    assert_eq!(PrecisionSpec::NativeDouble.unit_roundoff(), 2f64.powi(-53));
    let g = gamma(10, PrecisionSpec::DecimalDigits(4)).unwrap();
    assert!((g - 5e-3 / (1.0 - 5e-3)).abs() < 1e-18);
    assert!(gamma(2000, PrecisionSpec::DecimalDigits(4)).is_err());
}

#[test]
fn decimal_rounding_of_operation_results() {
    let d4 = PrecisionSpec::DecimalDigits(4);
    assert_eq!(fl_bin(1.0, BinOp::Div, 3.0, d4).unwrap(), 0.3333);
    assert_eq!(fl_bin(1.234, BinOp::Add, 5.678e-3, d4).unwrap(), 1.240);
    assert_eq!(fl_bin(1.234, BinOp::Mul, 1.234, d4).unwrap(), 1.523);
    assert_eq!(fl_unary(UnaryFn::Sqrt, 2.0, d4).unwrap(), 1.414);
    assert_eq!(fl_unary(UnaryFn::Exp, 1.0, d4).unwrap(), 2.718);
    assert!(fl_unary(UnaryFn::Sqrt, -1.0, d4).is_err());
    assert!(fl_bin(1.0, BinOp::Div, 0.0, d4).is_err());
}

fn finite() -> impl Strategy<Value = f64> {
    (-1.0f64..1.0, -200i32..200).prop_map(|(m, e)| m * 10f64.powi(e))
}

proptest! {
    #[test]
    fn decimal_matches_formatter(x in finite(), s in 1u32..=16) {
        prop_assert_eq!(PrecisionSpec::DecimalDigits(s).round(x), decimal_oracle(x, s));
    }

    #[test]
    fn binary24_matches_single(x in -1e30f64..1e30) {
        prop_assert_eq!(PrecisionSpec::SINGLE.round(x), x as f32 as f64);
    }

    #[test]
    fn binary_rounding_keeps_t_bits(x in finite(), t in 2u32..=52) {
        prop_assume!(x != 0.0);
        let spec = PrecisionSpec::BinarySignificand(t);
        let r = spec.round(x);
        prop_assert!(significant_bits(r) <= t);
        prop_assert!((r - x).abs() <= spec.unit_roundoff() * x.abs());
    }

    #[test]
    fn rounding_is_idempotent_and_monotone(a in finite(), b in finite(), s in 1u32..=12) {
        let spec = PrecisionSpec::DecimalDigits(s);
        let (ra, rb) = (spec.round(a), spec.round(b));
        prop_assert_eq!(spec.round(ra), ra);
        if a <= b {
            prop_assert!(ra <= rb);
        }
        prop_assert_eq!(spec.round(-a), -ra);
    }

    #[test]
    fn operations_obey_the_standard_model(a in finite(), b in finite(), s in 1u32..=15) {
        let spec = PrecisionSpec::DecimalDigits(s);
        let u = spec.unit_roundoff();
        let (a, b) = (spec.round(a), spec.round(b));
        let p = a * b;
        prop_assume!(p != 0.0 && p.is_normal());
        let exact_lo = a.mul_add(b, -p);
        let fl = fl_bin(a, BinOp::Mul, b, spec).unwrap();
        prop_assert!(((fl - p) - exact_lo).abs() <= u * p.abs() * (1.0 + 1e-15));
        if b != 0.0 {
            let q = a / b;
            prop_assume!(q.is_normal());
            let r = (-q).mul_add(b, a) / b;
            let fl = fl_bin(a, BinOp::Div, b, spec).unwrap();
            prop_assert!(((fl - q) - r).abs() <= u * q.abs() * (1.0 + 1e-15));
        }
    }
}
