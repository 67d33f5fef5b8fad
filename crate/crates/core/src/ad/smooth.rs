use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{invalid, Error, Result};

/// Smooth stand-in for the Heaviside step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SmootherConfig {
    /// Standard normal CDF of `x / sigma`.
    GaussianCdf { sigma: f64 },
    /// Logistic function `1 / (1 + exp(-k x))`.
    Sigmoid { k: f64 },
    /// Linear ramp from 0 at `-a` to 1 at `b`.
    PiecewiseLinear { a: f64, b: f64 },
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig::GaussianCdf { sigma: 1.0 }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SmootherConfig::GaussianCdf { sigma } => sigma > 0.0,
            SmootherConfig::Sigmoid { k } => k > 0.0,
            SmootherConfig::PiecewiseLinear { a, b } => a >= 0.0 && b >= 0.0 && a + b > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("smoother", format!("non-positive scale in {self:?}")))
        }
    }

    /// Value and derivative at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        match *self {
            SmootherConfig::GaussianCdf { sigma } => {
                let z = x / sigma;
                let v = 0.5 * (1.0 + statrs::function::erf::erf(z * std::f64::consts::FRAC_1_SQRT_2));
                let pdf = (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                (v, pdf)
            }
            SmootherConfig::Sigmoid { k } => {
                let s = super::sigmoid(k * x);
                (s, k * s * (1.0 - s))
            }
            SmootherConfig::PiecewiseLinear { a, b } => {
                if x <= -a {
                    (0.0, 0.0)
                } else if x >= b {
                    (1.0, 0.0)
                } else {
                    ((x + a) / (a + b), 1.0 / (a + b))
                }
            }
        }
    }
}

pub fn smooth_step<S: Scalar>(x: S, cfg: &SmootherConfig) -> S {
    let (v, d) = cfg.eval(x.value());
    x.unary(v, d)
}

/// Softmax of `v / tau`, computed after subtracting the primal maximum.
pub fn tempered_softmax<S: Scalar>(v: &[S], tau: f64) -> Result<Vec<S>> {
    if v.is_empty() {
        return Err(Error::EmptyInput("tempered_softmax"));
    }
    if !(tau > 0.0) {
        return Err(invalid("tau", "temperature must be positive"));
    }
    let m = v.iter().map(|x| x.value()).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<S> = v.iter().map(|&x| ((x - m) / tau).exp()).collect();
    let mut total = e[0];
    for &x in &e[1..] {
        total += x;
    }
    Ok(e.into_iter().map(|x| x / total).collect())
}

/// Weighted combination ⟨π, branches⟩ with constant weights.
pub fn masked_cond<S: Scalar>(pi: &[f64], branches: &[S]) -> Result<S> {
    if pi.len() != branches.len() {
        return Err(Error::DimensionMismatch {
            expected: pi.len(),
            got: branches.len(),
        });
    }
    let mut acc = S::zero();
    for (&w, &b) in pi.iter().zip(branches) {
        acc += b * w;
    }
    Ok(acc)
}

/// Weighted combination where the weights carry tangents too.
pub fn mix<S: Scalar>(weights: &[S], branches: &[S]) -> Result<S> {
    if weights.len() != branches.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: branches.len(),
        });
    }
    let mut acc = S::zero();
    for (&w, &b) in weights.iter().zip(branches) {
        acc += w * b;
    }
    Ok(acc)
}

pub fn surrogate_combine<S: Scalar>(h: S, h_smooth: S) -> S {
    S::surrogate(h.value(), h_smooth)
}

pub fn stop_gradient<S: Scalar>(x: S) -> S {
    x.detach()
}

/// Index of the first maximal primal.
pub fn argmax<S: Scalar>(v: &[S]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if x.value() > v[best].value() {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::Dual;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // Maclaurin series of erf, independent of the library implementation.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            term *= -x * x / n as f64;
            sum += term / (2 * n + 1) as f64;
        }
        sum * std::f64::consts::FRAC_2_SQRT_PI
    }

    #[test]
    fn gaussian_cdf_at_three_sigma() {
        for sigma in [0.5, 1.0, 2.0] {
            let cfg = SmootherConfig::GaussianCdf { sigma };
            let (v, _) = cfg.eval(3.0 * sigma);
            let oracle = 0.5 * (1.0 + erf_series(3.0 / std::f64::consts::SQRT_2));
            assert!((v - 0.99865).abs() < 1e-4);
            assert_relative_eq!(v, oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn sigmoid_center_is_half() {
        for k in [0.1, 1.0, 50.0] {
            assert_eq!(SmootherConfig::Sigmoid { k }.eval(0.0).0, 0.5);
        }
    }

    #[test]
    fn piecewise_boundaries() {
        let cfg = SmootherConfig::PiecewiseLinear { a: 1.5, b: 2.5 };
        assert_eq!(cfg.eval(-1.5).0, 0.0);
        assert_eq!(cfg.eval(2.5).0, 1.0);
        let sym = SmootherConfig::PiecewiseLinear { a: 2.0, b: 2.0 };
        assert_eq!(sym.eval(0.0).0, 0.5);
    }

    #[test]
    fn invalid_scale_rejected() {
        assert!(SmootherConfig::Sigmoid { k: 0.0 }.validate().is_err());
        assert!(SmootherConfig::GaussianCdf { sigma: -1.0 }.validate().is_err());
        assert!(SmootherConfig::default().validate().is_ok());
    }

    #[test]
    fn smoother_tangent_matches_fd() {
        let h = 1e-6;
        for cfg in [
            SmootherConfig::GaussianCdf { sigma: 1.3 },
            SmootherConfig::Sigmoid { k: 2.0 },
            SmootherConfig::PiecewiseLinear { a: 1.0, b: 3.0 },
        ] {
            for x in [-0.7, 0.1, 0.9] {
                let d = smooth_step(Dual::<1>::variable(x, 0), &cfg).d[0];
                let fd = (cfg.eval(x + h).0 - cfg.eval(x - h).0) / (2.0 * h);
                assert_relative_eq!(d, fd, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn softmax_known_values() {
        let v = [1f64.ln(), 2f64.ln(), 3f64.ln()];
        let s = tempered_softmax(&v, 1.0).unwrap();
        for (k, x) in s.iter().enumerate() {
            assert_relative_eq!(*x, (k + 1) as f64 / 6.0, epsilon = 1e-15);
        }
        let u = tempered_softmax(&[2.0; 4], 0.3).unwrap();
        assert!(u.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn softmax_low_temperature_is_one_hot() {
        let v = [0.2, 1.0, 0.4];
        let s = tempered_softmax(&v, 1e-3).unwrap();
        let hard = argmax(&v);
        for (i, x) in s.iter().enumerate() {
            let target = if i == hard { 1.0 } else { 0.0 };
            assert!((x - target).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(tempered_softmax::<f64>(&[], 1.0).is_err());
        assert!(tempered_softmax(&[1.0], 0.0).is_err());
    }

    #[test]
    fn softmax_tangent_matches_fd() {
        let x = Dual::variables([0.3, -0.2, 1.1]);
        let s = tempered_softmax(&x, 0.7).unwrap();
        let h = 1e-6;
        for j in 0..3 {
            let mut xp = [0.3, -0.2, 1.1];
            let mut xm = xp;
            xp[j] += h;
            xm[j] -= h;
            let sp = tempered_softmax(&xp, 0.7).unwrap();
            let sm = tempered_softmax(&xm, 0.7).unwrap();
            for i in 0..3 {
                assert_relative_eq!(s[i].d[j], (sp[i] - sm[i]) / (2.0 * h), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn masked_cond_cases() {
        let b = [Dual::new(1.0, [1.0]), Dual::new(5.0, [-2.0])];
        let e2 = masked_cond(&[0.0, 1.0], &b).unwrap();
        assert_eq!(e2, b[1]);
        let half = masked_cond(&[0.5, 0.5], &b).unwrap();
        assert_eq!(half.v, 3.0);
        assert_eq!(half.d, [-0.5]);
        let p = 0.3;
        let binary = masked_cond(&[1.0 - p, p], &b).unwrap();
        let maskif = b[1] * p + b[0] * (1.0 - p);
        assert_relative_eq!(binary.v, maskif.v, epsilon = 1e-15);
        assert!(masked_cond(&[1.0], &b).is_err());
    }

    #[test]
    fn surrogate_combine_cases() {
        let x = Dual::<1>::variable(0.3, 0);
        let h = Dual::constant(1.0);
        let s = surrogate_combine(h, crate::ad::Scalar::sigmoid(x));
        assert_eq!(s.v, 1.0);
        let sg = crate::ad::sigmoid(0.3);
        assert_relative_eq!(s.d[0], sg * (1.0 - sg), epsilon = 1e-15);
        let same = surrogate_combine(x, x);
        assert_eq!(same, x);
        let stopped = surrogate_combine(x, Dual::constant(0.0));
        assert_eq!(stopped.d, [0.0]);
        assert_eq!(stop_gradient(x).d, [0.0]);
    }

    proptest! {
        #[test]
        fn softmax_on_simplex(v in prop::collection::vec(-50.0..50.0f64, 1..12), tau in 0.01..10.0f64) {
            let s = tempered_softmax(&v, tau).unwrap();
            let total: f64 = s.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(s.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn smoothers_monotone_in_unit_interval(x in -20.0..20.0f64, dx in 0.0..5.0f64) {
            for cfg in [
                SmootherConfig::GaussianCdf { sigma: 1.0 },
                SmootherConfig::Sigmoid { k: 1.5 },
                SmootherConfig::PiecewiseLinear { a: 2.0, b: 1.0 },
            ] {
                let (a, _) = cfg.eval(x);
                let (b, _) = cfg.eval(x + dx);
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert!(b >= a);
            }
        }
    }
}
