//! Scalar abstraction over plain `f64` and tape-recorded dual values.
//!
//! Model math is written once against this trait. Instantiated at `f64` it
//! evaluates values only (used for inference and the finite-difference
//! oracle); instantiated at [`crate::tape::Ad`] the same code records a
//! reverse-mode tape from which analytic gradients are extracted.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Lifts a plain float to a constant (no gradient flows into it).
    fn lift(x: f64) -> Self;

    /// Current numeric value. Used for branching, masking and diagnostics;
    /// branches taken on values are piecewise-constant w.r.t. parameters.
    fn value(self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn tanh(self) -> Self;
    fn sigmoid(self) -> Self;
    fn softplus(self) -> Self;

    fn silu(self) -> Self {
        self * self.sigmoid()
    }

    fn zero() -> Self {
        Self::lift(0.0)
    }

    fn one() -> Self {
        Self::lift(1.0)
    }
}

/// Numerically stable sigmoid on plain floats.
pub fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softplus on plain floats; asymptotically exact for large x.
pub fn softplus_f64(x: f64) -> f64 {
    if x > 30.0 {
        // ln(1 + e^x) = x + ln(1 + e^-x); the correction underflows harmlessly
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Scalar for f64 {
    #[inline]
    fn lift(x: f64) -> Self {
        x
    }

    #[inline]
    fn value(self) -> f64 {
        self
    }

    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }

    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }

    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }

    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }

    #[inline]
    fn sigmoid(self) -> Self {
        sigmoid_f64(self)
    }

    #[inline]
    fn softplus(self) -> Self {
        softplus_f64(self)
    }
}
