//! Independent priors and the bijectors onto their supports.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::ad::Scalar;
use crate::error::{invalid, Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln(1 + e^x)` without overflow.
pub fn softplus<S: Scalar>(x: S) -> S {
    if x.value() > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Smooth strictly monotone map from the real line onto a support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Bijector {
    Identity,
    /// `lo + e^u`
    Exp { lo: f64 },
    /// `lo + (hi - lo) σ(u)`
    Sigmoid { lo: f64, hi: f64 },
}

impl Bijector {
    pub fn forward<S: Scalar>(&self, u: S) -> S {
        match *self {
            Bijector::Identity => u,
            Bijector::Exp { lo } => u.exp() + lo,
            Bijector::Sigmoid { lo, hi } => u.sigmoid() * (hi - lo) + lo,
        }
    }

    /// `ln |dθ/du|` at `u`.
    pub fn log_det<S: Scalar>(&self, u: S) -> S {
        match *self {
            Bijector::Identity => S::zero(),
            Bijector::Exp { .. } => u,
            Bijector::Sigmoid { lo, hi } => -softplus(u) - softplus(-u) + (hi - lo).ln(),
        }
    }

    pub fn inverse(&self, theta: f64) -> Result<f64> {
        let out = match *self {
            Bijector::Identity => theta,
            Bijector::Exp { lo } => {
                if !(theta > lo) {
                    return Err(invalid("theta", format!("{theta} not above {lo}")));
                }
                (theta - lo).ln()
            }
            Bijector::Sigmoid { lo, hi } => {
                if !(theta > lo && theta < hi) {
                    return Err(invalid("theta", format!("{theta} outside ({lo}, {hi})")));
                }
                let p = (theta - lo) / (hi - lo);
                p.ln() - (-p).ln_1p()
            }
        };
        Ok(out)
    }
}

/// Marginal prior of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorDist {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, std: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl PriorDist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PriorDist::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            PriorDist::Normal { mean, std } => mean.is_finite() && std > 0.0,
            PriorDist::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("prior", format!("{self:?}")))
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            PriorDist::Uniform { lo, hi } => (lo, hi),
            PriorDist::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            PriorDist::LogNormal { .. } => (0.0, f64::INFINITY),
        }
    }

    pub fn bijector(&self) -> Bijector {
        match *self {
            PriorDist::Uniform { lo, hi } => Bijector::Sigmoid { lo, hi },
            PriorDist::Normal { .. } => Bijector::Identity,
            PriorDist::LogNormal { .. } => Bijector::Exp { lo: 0.0 },
        }
    }

    /// Log density; callers keep `x` inside the support.
    pub fn log_pdf<S: Scalar>(&self, x: S) -> S {
        match *self {
            PriorDist::Uniform { lo, hi } => x * 0.0 - (hi - lo).ln(),
            PriorDist::Normal { mean, std } => {
                let z = (x - mean) / std;
                z * z * -0.5 - (std.ln() + LN_SQRT_2PI)
            }
            PriorDist::LogNormal { mu, sigma } => {
                let lx = x.ln();
                let z = (lx - mu) / sigma;
                z * z * -0.5 - lx - (sigma.ln() + LN_SQRT_2PI)
            }
        }
    }

    /// Quantile at `u` in (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        let std_normal = || Normal::new(0.0, 1.0).expect("unit normal");
        match *self {
            PriorDist::Uniform { lo, hi } => lo + (hi - lo) * u,
            PriorDist::Normal { mean, std } => mean + std * std_normal().inverse_cdf(u),
            PriorDist::LogNormal { mu, sigma } => (mu + sigma * std_normal().inverse_cdf(u)).exp(),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            PriorDist::Uniform { lo, hi } => 0.5 * (lo + hi),
            PriorDist::Normal { mean, .. } => mean,
            PriorDist::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
        }
    }
}

/// Product prior over named parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub names: Vec<String>,
    pub dists: Vec<PriorDist>,
}

impl Prior {
    pub fn new(names: Vec<String>, dists: Vec<PriorDist>) -> Result<Self> {
        if names.len() != dists.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                got: dists.len(),
            });
        }
        if dists.is_empty() {
            return Err(Error::EmptyInput("prior"));
        }
        for d in &dists {
            d.validate()?;
        }
        Ok(Self { names, dists })
    }

    pub fn dim(&self) -> usize {
        self.dists.len()
    }

    pub fn bijectors(&self) -> Vec<Bijector> {
        self.dists.iter().map(|d| d.bijector()).collect()
    }

    pub fn log_prob<S: Scalar>(&self, theta: &[S]) -> S {
        self.dists
            .iter()
            .zip(theta)
            .fold(S::zero(), |acc, (d, &x)| acc + d.log_pdf(x))
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        self.dists.iter().zip(theta).all(|(d, &x)| {
            let (lo, hi) = d.support();
            x > lo && x < hi
        })
    }

    /// Draw from the prior using one uniform per coordinate.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.dists
            .iter()
            .map(|d| {
                let u = crate::rng::uniform(rng).clamp(1e-12, 1.0 - 1e-12);
                d.quantile(u)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::Dual;

    fn all() -> Vec<Bijector> {
        vec![
            Bijector::Identity,
            Bijector::Exp { lo: 0.0 },
            Bijector::Exp { lo: -2.0 },
            Bijector::Sigmoid { lo: -3.0, hi: -0.5 },
        ]
    }

    #[test]
    fn round_trip() {
        for b in all() {
            for i in -60..=60 {
                let u = i as f64 * 0.25;
                let th = b.forward(u);
                let back = b.inverse(th).unwrap();
                // sigmoid loses resolution in its tails
                let tol = if matches!(b, Bijector::Sigmoid { .. }) && u.abs() > 10.0 { 1e-5 } else { 1e-9 };
                assert!((back - u).abs() <= tol * u.abs().max(1.0), "{b:?} u={u} back={back}");
            }
        }
    }

    #[test]
    fn log_det_matches_derivative() {
        for b in all() {
            for &u in &[-4.0, -0.3, 0.0, 1.7, 6.0] {
                let d = b.forward(Dual::<1>::variable(u, 0));
                let ld = b.log_det(u);
                assert!((d.d[0].ln() - ld).abs() < 1e-10, "{b:?} at {u}");
                assert!(ld.is_finite());
            }
        }
    }

    #[test]
    fn forward_lands_in_support() {
        let d = PriorDist::Uniform { lo: 1.0, hi: 2.0 };
        for &u in &[-30.0, -1.0, 0.0, 1.0, 30.0] {
            let th = d.bijector().forward(u);
            assert!((1.0..=2.0).contains(&th));
        }
        let ln = PriorDist::LogNormal { mu: 0.0, sigma: 1.0 };
        assert!(ln.bijector().forward(-50.0) > 0.0);
    }

    #[test]
    fn log_pdfs_normalised() {
        let dists = [
            PriorDist::Uniform { lo: -1.0, hi: 3.0 },
            PriorDist::Normal { mean: 1.0, std: 0.5 },
            PriorDist::LogNormal { mu: 0.2, sigma: 0.4 },
        ];
        for d in dists {
            let (lo, hi) = d.support();
            let (a, b) = (lo.max(-10.0) + 1e-9, hi.min(20.0) - 1e-9);
            let n = 200_000;
            let h = (b - a) / n as f64;
            let s: f64 = (0..n).map(|i| d.log_pdf(a + (i as f64 + 0.5) * h).exp() * h).sum();
            assert!((s - 1.0).abs() < 1e-4, "{d:?}: {s}");
        }
    }

    #[test]
    fn quantile_inside_support_and_mean() {
        let d = PriorDist::LogNormal { mu: 0.0, sigma: 0.5 };
        assert!(d.quantile(1e-9) > 0.0);
        assert!((PriorDist::Normal { mean: 2.0, std: 1.0 }.quantile(0.5) - 2.0).abs() < 1e-9);
        assert_eq!(PriorDist::Uniform { lo: 0.0, hi: 4.0 }.mean(), 2.0);
    }

    #[test]
    fn prior_shape_checks() {
        assert!(Prior::new(vec!["a".into()], vec![]).is_err());
        assert!(Prior::new(vec!["a".into()], vec![PriorDist::Uniform { lo: 1.0, hi: 0.0 }]).is_err());
        let p = Prior::new(
            vec!["a".into(), "b".into()],
            vec![PriorDist::Uniform { lo: 0.0, hi: 2.0 }, PriorDist::Normal { mean: 0.0, std: 1.0 }],
        )
        .unwrap();
        assert!(p.contains(&[1.0, -5.0]));
        assert!(!p.contains(&[2.5, 0.0]));
        let lp = p.log_prob(&[1.0, 0.0]);
        assert!((lp - (-(2.0f64).ln() - LN_SQRT_2PI)).abs() < 1e-12);
    }
}
