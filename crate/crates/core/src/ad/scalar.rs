use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

/// Numeric carrier shared by every model. `f64` is the plain primal run,
/// [`Dual`](super::Dual) carries forward-mode tangents and
/// [`Var`](super::Var) records onto a reverse tape.
///
/// Elementary functions are expressed through [`Scalar::unary`] and
/// [`Scalar::binary`], which receive the primal result and the local
/// partial derivatives, so a new carrier only has to implement those.
pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    /// Number of tangent slots carried by this type.
    const SLOTS: usize;

    fn constant(value: f64) -> Self;

    fn value(&self) -> f64;

    /// Tangent slots (empty when the carrier has no tangent channel).
    fn tangent(&self) -> &[f64];

    /// Builds a value from explicit tangent slots. Carriers without a
    /// tangent channel ignore `tangent`.
    fn from_parts(value: f64, tangent: &[f64]) -> Self;

    /// Applies a function with primal `value` and derivative `deriv`.
    fn unary(self, value: f64, deriv: f64) -> Self;

    /// Applies a two-argument function with primal `value` and partials.
    fn binary(self, other: Self, value: f64, d_self: f64, d_other: f64) -> Self;

    fn zero() -> Self {
        Self::constant(0.0)
    }

    fn one() -> Self {
        Self::constant(1.0)
    }

    /// Primal of `hard`, derivative of `smooth`: h + (h̃ − stop(h̃)).
    fn surrogate(hard: f64, smooth: Self) -> Self {
        smooth.unary(hard, 1.0)
    }

    /// Stop-gradient.
    fn detach(self) -> Self {
        Self::constant(self.value())
    }

    fn exp(self) -> Self {
        let v = self.value().exp();
        self.unary(v, v)
    }

    fn ln(self) -> Self {
        let x = self.value();
        self.unary(x.ln(), 1.0 / x)
    }

    fn ln_1p(self) -> Self {
        let x = self.value();
        self.unary(x.ln_1p(), 1.0 / (1.0 + x))
    }

    fn exp_m1(self) -> Self {
        let x = self.value();
        self.unary(x.exp_m1(), x.exp())
    }

    fn sqrt(self) -> Self {
        let v = self.value().sqrt();
        self.unary(v, 0.5 / v)
    }

    fn powi(self, n: i32) -> Self {
        let x = self.value();
        let d = if n == 0 { 0.0 } else { n as f64 * x.powi(n - 1) };
        self.unary(x.powi(n), d)
    }

    fn powf(self, e: f64) -> Self {
        let x = self.value();
        let d = if e == 0.0 { 0.0 } else { e * x.powf(e - 1.0) };
        self.unary(x.powf(e), d)
    }

    /// `self^e` with both arguments active. A zero base yields zero with
    /// zero partials, the limit for positive exponents.
    fn pow(self, e: Self) -> Self {
        let (b, p) = (self.value(), e.value());
        if b <= 0.0 {
            let v = if p == 0.0 { 1.0 } else { 0.0 };
            return self.binary(e, v, 0.0, 0.0);
        }
        let v = b.powf(p);
        self.binary(e, v, p * b.powf(p - 1.0), v * b.ln())
    }

    fn tanh(self) -> Self {
        let t = self.value().tanh();
        self.unary(t, 1.0 - t * t)
    }

    fn sigmoid(self) -> Self {
        let s = sigmoid(self.value());
        self.unary(s, s * (1.0 - s))
    }

    fn erf(self) -> Self {
        let x = self.value();
        let d = std::f64::consts::FRAC_2_SQRT_PI * (-x * x).exp();
        self.unary(statrs::function::erf::erf(x), d)
    }

    fn abs(self) -> Self {
        let x = self.value();
        if x < 0.0 {
            -self
        } else {
            self
        }
    }

    /// Hard maximum; ties resolve to `self`.
    fn max(self, other: Self) -> Self {
        if self.value() >= other.value() {
            self
        } else {
            other
        }
    }

    /// Hard minimum; ties resolve to `self`.
    fn min(self, other: Self) -> Self {
        if self.value() <= other.value() {
            self
        } else {
            other
        }
    }

    fn checked_div(self, other: Self) -> Result<Self> {
        if other.value() == 0.0 {
            Err(Error::DivisionByZero)
        } else {
            Ok(self / other)
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Scalar for f64 {
    const SLOTS: usize = 0;

    #[inline]
    fn constant(value: f64) -> Self {
        value
    }

    #[inline]
    fn value(&self) -> f64 {
        *self
    }

    fn tangent(&self) -> &[f64] {
        &[]
    }

    fn from_parts(value: f64, _tangent: &[f64]) -> Self {
        value
    }

    #[inline]
    fn unary(self, value: f64, _deriv: f64) -> Self {
        value
    }

    #[inline]
    fn binary(self, _other: Self, value: f64, _d_self: f64, _d_other: f64) -> Self {
        value
    }

    fn exp(self) -> Self {
        f64::exp(self)
    }

    fn ln(self) -> Self {
        f64::ln(self)
    }

    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}
