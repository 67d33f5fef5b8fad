//! Reparameterised Beta draws: `x = F⁻¹(u; α, β)` with the uniform held
//! fixed, so `dx/dα = −(∂F/∂α)/f(x)` and likewise for `β`.

use statrs::function::beta::{beta_reg, ln_beta};

use crate::ad::Scalar;

const U_CLAMP: f64 = 1e-12;

pub fn beta_pdf(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)).exp()
}

pub fn beta_cdf(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta_reg(a, b, x)
    }
}

/// Inverse CDF by safeguarded Newton iteration on the regularised
/// incomplete beta function.
pub fn beta_quantile(a: f64, b: f64, u: f64) -> f64 {
    let u = u.clamp(U_CLAMP, 1.0 - U_CLAMP);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x = a / (a + b);
    for _ in 0..200 {
        let f = beta_cdf(a, b, x) - u;
        if f.abs() < 1e-15 {
            break;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let pdf = beta_pdf(a, b, x);
        let mut next = if pdf > 0.0 { x - f / pdf } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-16 * x.max(1e-300) || hi - lo < 1e-16 {
            x = next;
            break;
        }
        x = next;
    }
    x
}

/// Partial derivatives of the quantile at fixed `u` with respect to the two
/// shape parameters.
pub fn beta_quantile_grad(a: f64, b: f64, x: f64) -> (f64, f64) {
    let pdf = beta_pdf(a, b, x);
    if !(pdf > 0.0) || !pdf.is_finite() {
        return (0.0, 0.0);
    }
    let ha = 1e-6 * a.max(1.0);
    let hb = 1e-6 * b.max(1.0);
    let dfa = (beta_cdf(a + ha, b, x) - beta_cdf(a - ha, b, x)) / (2.0 * ha);
    let dfb = (beta_cdf(a, b + hb, x) - beta_cdf(a, b - hb, x)) / (2.0 * hb);
    (-dfa / pdf, -dfb / pdf)
}

/// Beta draw from the fixed uniform `u`, differentiable in both shapes.
pub fn beta_sample<S: Scalar>(a: S, b: S, u: f64) -> S {
    let (av, bv) = (a.value(), b.value());
    let x = beta_quantile(av, bv, u);
    if S::SLOTS == 0 {
        return S::constant(x);
    }
    let (da, db) = beta_quantile_grad(av, bv, x);
    a.binary(b, x, da, db)
}
