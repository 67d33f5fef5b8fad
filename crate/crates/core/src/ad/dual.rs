use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use super::Scalar;

/// Forward-mode dual number with `N` dense tangent slots.
#[derive(Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub const fn new(v: f64, d: [f64; N]) -> Self {
        Self { v, d }
    }

    pub const fn constant(v: f64) -> Self {
        Self { v, d: [0.0; N] }
    }

    /// Seeds slot `slot` with a unit tangent.
    pub fn variable(v: f64, slot: usize) -> Self {
        let mut d = [0.0; N];
        d[slot] = 1.0;
        Self { v, d }
    }

    /// Independent variables, one per slot.
    pub fn variables(values: [f64; N]) -> [Self; N] {
        let mut out = [Self::constant(0.0); N];
        for (i, &v) in values.iter().enumerate() {
            out[i] = Self::variable(v, i);
        }
        out
    }

    #[inline]
    fn map(self, v: f64, k: f64) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x *= k;
        }
        Self { v, d }
    }

    #[inline]
    fn zip(self, o: Self, v: f64, ka: f64, kb: f64) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = ka * self.d[i] + kb * o.d[i];
        }
        Self { v, d }
    }
}

impl<const N: usize> Default for Dual<N> {
    fn default() -> Self {
        Self::constant(0.0)
    }
}

impl<const N: usize> fmt::Debug for Dual<N> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {:?}ε", self.v, self.d)
    }
}

impl<const N: usize> From<f64> for Dual<N> {
    fn from(v: f64) -> Self {
        Self::constant(v)
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] += o.d[i];
        }
        Self { v: self.v + o.v, d }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] -= o.d[i];
        }
        Self { v: self.v - o.v, d }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        self.zip(o, self.v * o.v, o.v, self.v)
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.v / o.v;
        self.zip(o, q, 1.0 / o.v, -q / o.v)
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.map(-self.v, -1.0)
    }
}

impl<const N: usize> Add<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, c: f64) -> Self {
        Self { v: self.v + c, d: self.d }
    }
}

impl<const N: usize> Sub<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, c: f64) -> Self {
        Self { v: self.v - c, d: self.d }
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, c: f64) -> Self {
        self.map(self.v * c, c)
    }
}

impl<const N: usize> Div<f64> for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, c: f64) -> Self {
        self.map(self.v / c, 1.0 / c)
    }
}

impl<const N: usize> Add<Dual<N>> for f64 {
    type Output = Dual<N>;
    fn add(self, x: Dual<N>) -> Dual<N> {
        Dual::constant(self) + x
    }
}

impl<const N: usize> Sub<Dual<N>> for f64 {
    type Output = Dual<N>;
    fn sub(self, x: Dual<N>) -> Dual<N> {
        Dual::constant(self) - x
    }
}

impl<const N: usize> Mul<Dual<N>> for f64 {
    type Output = Dual<N>;
    fn mul(self, x: Dual<N>) -> Dual<N> {
        x * self
    }
}

impl<const N: usize> Div<Dual<N>> for f64 {
    type Output = Dual<N>;
    fn div(self, x: Dual<N>) -> Dual<N> {
        Dual::constant(self) / x
    }
}

macro_rules! assign_ops {
    ($($tr:ident $m:ident $op:tt),*) => {$(
        impl<const N: usize> $tr for Dual<N> {
            #[inline]
            fn $m(&mut self, o: Self) {
                *self = *self $op o;
            }
        }
    )*};
}

assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /);

impl<const N: usize> Scalar for Dual<N> {
    const SLOTS: usize = N;

    #[inline]
    fn constant(value: f64) -> Self {
        Dual::constant(value)
    }

    #[inline]
    fn value(&self) -> f64 {
        self.v
    }

    fn tangent(&self) -> &[f64] {
        &self.d
    }

    fn from_parts(value: f64, tangent: &[f64]) -> Self {
        let mut d = [0.0; N];
        d.copy_from_slice(tangent);
        Self { v: value, d }
    }

    #[inline]
    fn unary(self, value: f64, deriv: f64) -> Self {
        self.map(value, deriv)
    }

    #[inline]
    fn binary(self, other: Self, value: f64, d_self: f64, d_other: f64) -> Self {
        self.zip(other, value, d_self, d_other)
    }

    fn surrogate(hard: f64, smooth: Self) -> Self {
        Self { v: hard, d: smooth.d }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn product_rule() {
        let a = Dual::new(2.0, [3.0]);
        let b = Dual::new(5.0, [7.0]);
        let p = a * b;
        assert_eq!(p.v, 10.0);
        assert_eq!(p.d, [2.0 * 7.0 + 3.0 * 5.0]);
    }

    #[test]
    fn exp_and_log_at_known_points() {
        let e = Scalar::exp(Dual::new(0.0, [1.0]));
        assert_eq!((e.v, e.d[0]), (1.0, 1.0));
        let l = Scalar::ln(Dual::new(2.0, [1.0]));
        assert_eq!(l.v, 2f64.ln());
        assert_eq!(l.d[0], 0.5);
    }

    #[test]
    fn checked_div_rejects_zero() {
        let one = Dual::<1>::constant(1.0);
        assert!(one.checked_div(Dual::constant(0.0)).is_err());
        assert!(one.checked_div(Dual::constant(2.0)).is_ok());
    }

    #[test]
    fn min_max_ties_take_first_argument() {
        let a = Dual::new(1.0, [1.0]);
        let b = Dual::new(1.0, [2.0]);
        assert_eq!(Scalar::max(a, b).d, [1.0]);
        assert_eq!(Scalar::min(a, b).d, [1.0]);
        assert_eq!(Scalar::min(b, a).d, [2.0]);
    }

    #[test]
    fn surrogate_keeps_primal_and_smooth_tangent() {
        let x = Dual::<1>::variable(0.3, 0);
        let smooth = Scalar::sigmoid(x);
        let s = Dual::surrogate(1.0, smooth);
        assert_eq!(s.v, 1.0);
        let sg = crate::ad::sigmoid(0.3);
        assert_relative_eq!(s.d[0], sg * (1.0 - sg), epsilon = 1e-15);
    }

    // Symbolic derivative of a polynomial.
    fn poly(c: &[f64], x: f64) -> (f64, f64) {
        let mut v = 0.0;
        let mut d = 0.0;
        for (k, &ck) in c.iter().enumerate() {
            v += ck * x.powi(k as i32);
            if k > 0 {
                d += ck * k as f64 * x.powi(k as i32 - 1);
            }
        }
        (v, d)
    }

    proptest! {
        #[test]
        fn polynomials_match_symbolic(c in prop::collection::vec(-3.0..3.0f64, 1..6), x in -2.0..2.0f64) {
            let xd = Dual::<1>::variable(x, 0);
            let mut acc = Dual::constant(0.0);
            let mut pw = Dual::constant(1.0);
            for &ck in &c {
                acc += pw * ck;
                pw *= xd;
            }
            let (v, d) = poly(&c, x);
            prop_assert!((acc.v - v).abs() <= 1e-10 * (1.0 + v.abs()));
            prop_assert!((acc.d[0] - d).abs() <= 1e-10 * (1.0 + d.abs()));
        }

        #[test]
        fn smooth_programs_match_central_differences(x in 0.2..3.0f64, y in 0.2..3.0f64) {
            fn f<S: Scalar>(x: S, y: S) -> S {
                (x * y).exp().ln_1p() / (x + y).sqrt() + x.pow(y) - y.tanh() * x.ln()
            }
            let [xd, yd] = Dual::variables([x, y]);
            let out = f(xd, yd);
            let h = 1e-6;
            let fx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
            let fy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
            prop_assert!((out.d[0] - fx).abs() <= 1e-5 * fx.abs().max(1e-3));
            prop_assert!((out.d[1] - fy).abs() <= 1e-5 * fy.abs().max(1e-3));
            prop_assert_eq!(out.v, f(x, y));
        }
    }
}
