//! Rounding-error analysis of transformer forward passes.
//!
//! The crate evaluates transformer layers under simulated low-precision
//! arithmetic ([`fparith`], [`net`]), computes their Jacobians and condition
//! numbers ([`jacobians`], [`conditioning`]), evaluates first-order bounds on the
//! forward error ([`errbounds`]) and runs randomized experiments that compare the
//! bounds with measured errors ([`harness`]).

pub mod conditioning;
pub mod errbounds;
pub mod error;
pub mod fparith;
pub mod harness;
pub mod jacobians;
pub mod net;
pub mod tensor;

pub use error::{Error, Result};
pub use fparith::PrecisionSpec;
pub use tensor::{Mat, Norm};
