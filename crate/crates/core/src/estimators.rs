//! Gradient estimators for discrete draws and the Bernoulli random walk
//! used to compare them.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ad::{argmax, tempered_softmax, Dual, Scalar};
use crate::error::{invalid, Error, Result};
use crate::rng::{purpose, seed_split, stream_id, uniform};
use crate::spa::{bernoulli_jump, Reservoir};
use crate::stats::MeanSe;

const U_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
#[derive(Default)]
pub enum EstimatorKind {
    #[default]
    StraightThrough,
    GumbelSoftmax { tau: f64 },
    SpaPruned { samples: usize },
    SpaSmoothed,
}


impl EstimatorKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EstimatorKind::GumbelSoftmax { tau } if !(tau > 0.0) => {
                Err(invalid("tau", "temperature must be positive"))
            }
            EstimatorKind::SpaPruned { samples: 0 } => {
                Err(invalid("samples", "need at least one pruned sample"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_pruned(&self) -> bool {
        matches!(self, EstimatorKind::SpaPruned { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::StraightThrough => "st",
            EstimatorKind::GumbelSoftmax { .. } => "gs",
            EstimatorKind::SpaPruned { .. } => "spa-pruned",
            EstimatorKind::SpaSmoothed => "spa-smoothed",
        }
    }
}

#[inline]
fn clamp_u(u: f64) -> f64 {
    u.clamp(U_CLAMP, 1.0 - U_CLAMP)
}

/// Straight-through Bernoulli: the sample with the tangent of `p`.
#[inline]
pub fn st_from_uniform<S: Scalar>(p: S, u: f64) -> S {
    let x = if u < p.value() { 1.0 } else { 0.0 };
    S::surrogate(x, p)
}

pub fn st_bernoulli<S: Scalar, R: Rng + ?Sized>(p: S, rng: &mut R) -> S {
    st_from_uniform(p, uniform(rng))
}

/// Straight-through Gumbel-softmax for a Bernoulli treated as a
/// two-category draw. The logistic noise `ln((1−u)/u)` is the difference of
/// the two Gumbel variables, so the hard sample is exactly `u < p`.
#[inline]
pub fn gs_from_uniform<S: Scalar>(p: S, tau: f64, u: f64) -> S {
    let pv = p.value();
    let x = if u < pv { 1.0 } else { 0.0 };
    if S::SLOTS == 0 {
        return S::constant(x);
    }
    let pc = pv.clamp(U_CLAMP, 1.0 - U_CLAMP);
    let uc = clamp_u(u);
    let z = ((pc / (1.0 - pc)).ln() + ((1.0 - uc) / uc).ln()) / tau;
    let s = crate::ad::sigmoid(z);
    // d sigmoid(z)/dp, with d logit(p)/dp = 1/(p(1−p)).
    let dz = s * (1.0 - s) / (tau * pc * (1.0 - pc));
    S::surrogate(x, p.unary(pv, dz))
}

pub fn gs_bernoulli<S: Scalar, R: Rng + ?Sized>(p: S, tau: f64, rng: &mut R) -> S {
    gs_from_uniform(p, tau, uniform(rng))
}

/// Smoothed stochastic-triple Bernoulli for a right perturbation: per slot,
/// `p'/(1−p)` on a 0 that could flip up, `p'/p` on a 1 that could flip down.
#[inline]
pub fn spa_smoothed_from_uniform<S: Scalar>(p: S, u: f64) -> S {
    let pv = p.value();
    let x = u < pv;
    let xv = if x { 1.0 } else { 0.0 };
    if S::SLOTS == 0 {
        return S::constant(xv);
    }
    let mut t = [0.0; 16];
    let slots = p.tangent();
    for (k, &dp) in slots.iter().enumerate() {
        t[k] = match bernoulli_jump(pv, dp, x) {
            Some(w) => w * if x { -1.0 } else { 1.0 },
            None => 0.0,
        };
    }
    S::from_parts(xv, &t[..slots.len()])
}

/// Bernoulli draw routed through `est`. Pruned SPA returns the bare sample;
/// its jumps are tracked by the caller through [`bernoulli_jump`].
#[inline]
pub fn bernoulli<S: Scalar>(p: S, u: f64, est: &EstimatorKind) -> S {
    match *est {
        EstimatorKind::StraightThrough => st_from_uniform(p, u),
        EstimatorKind::GumbelSoftmax { tau } => gs_from_uniform(p, tau, u),
        EstimatorKind::SpaSmoothed => spa_smoothed_from_uniform(p, u),
        EstimatorKind::SpaPruned { .. } => S::constant(if u < p.value() { 1.0 } else { 0.0 }),
    }
}

/// Straight-through categorical draw by inverse CDF of `pi` (normalised
/// internally): the one-hot sample carrying the tangents of the normalised
/// probabilities.
pub fn st_categorical<S: Scalar>(pi: &[S], u: f64) -> Result<(usize, Vec<S>)> {
    if pi.is_empty() {
        return Err(Error::EmptyInput("st_categorical"));
    }
    let mut total = S::zero();
    for &p in pi {
        if !(p.value() >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "pi".into(),
                reason: "negative probability".into(),
            });
        }
        total += p;
    }
    if !(total.value() > 0.0) {
        return Err(Error::DegenerateDistribution(total.value()));
    }
    let target = u * total.value();
    let mut acc = 0.0;
    let mut k = pi.len() - 1;
    for (i, p) in pi.iter().enumerate() {
        acc += p.value();
        if target < acc {
            k = i;
            break;
        }
    }
    let out = pi
        .iter()
        .enumerate()
        .map(|(i, &p)| S::surrogate(if i == k { 1.0 } else { 0.0 }, p / total))
        .collect();
    Ok((k, out))
}

/// Straight-through Gumbel-softmax over a categorical `pi`. The primal is
/// the Gumbel-max one-hot; tangents come from `softmax((ln π + G)/τ)`.
pub fn gs_categorical<S: Scalar, R: Rng + ?Sized>(pi: &[S], tau: f64, rng: &mut R) -> Result<Vec<S>> {
    if pi.is_empty() {
        return Err(Error::EmptyInput("gs_categorical"));
    }
    let perturbed: Vec<S> = pi
        .iter()
        .map(|&p| {
            let g = -(-clamp_u(uniform(rng)).ln()).ln();
            if p.value() <= 0.0 {
                S::constant(f64::NEG_INFINITY)
            } else {
                p.ln() + g
            }
        })
        .collect();
    let k = argmax(&perturbed);
    let soft = tempered_softmax(&perturbed, tau)?;
    Ok(soft
        .into_iter()
        .enumerate()
        .map(|(i, s)| S::surrogate(if i == k { 1.0 } else { 0.0 }, s))
        .collect())
}

/// Per-step mean and standard error of dE[X_t]/dp for the walk
/// `X_t = X_{t−1} + 2 Bern(p) − 1`, `X_0 = 0`. Index `t` runs over `0..=T`.
#[derive(Debug, Clone)]
pub struct WalkGradient {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

/// One replicate of the random walk with a unit tangent on `p`.
pub fn random_walk_replicate(p: f64, steps: usize, est: &EstimatorKind, seed: u64, replicate: u64) -> Vec<f64> {
    let mut rng = seed_split(seed, stream_id(replicate, purpose::SIMULATION));
    let pd = Dual::<1>::variable(p, 0);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(0.0);
    match *est {
        EstimatorKind::SpaPruned { samples } => {
            let mut prune_rng = seed_split(seed, stream_id(replicate, purpose::PRUNING));
            let mut res: Vec<Reservoir<f64>> = (0..samples).map(|_| Reservoir::new()).collect();
            let mut x = 0.0;
            for _ in 0..steps {
                let u = uniform(&mut rng);
                let b = u < p;
                let step = |b: bool| if b { 1.0 } else { -1.0 };
                for r in res.iter_mut() {
                    if let Some(alt) = r.chosen_mut() {
                        *alt += step(b);
                    }
                }
                let next = x + step(b);
                if let Some(w) = bernoulli_jump(p, 1.0, b) {
                    for r in res.iter_mut() {
                        r.offer(w, x + step(!b), &mut prune_rng);
                    }
                }
                x = next;
                let est: f64 = res
                    .iter()
                    .map(|r| r.chosen().map_or(0.0, |alt| r.total() * (alt - x)))
                    .sum::<f64>()
                    / samples as f64;
                out.push(est);
            }
        }
        _ => {
            let mut x = Dual::<1>::constant(0.0);
            for _ in 0..steps {
                let b = bernoulli(pd, uniform(&mut rng), est);
                x = x + b * 2.0 - 1.0;
                out.push(x.d[0]);
            }
        }
    }
    out
}

pub fn random_walk_gradient(
    p: f64,
    steps: usize,
    est: &EstimatorKind,
    replicates: usize,
    seed: u64,
) -> Result<WalkGradient> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DegenerateDistribution(p));
    }
    if steps == 0 || replicates == 0 {
        return Err(invalid("steps", "need at least one step and one replicate"));
    }
    est.validate()?;
    let runs: Vec<Vec<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| random_walk_replicate(p, steps, est, seed, r))
        .collect();
    let mut mean = Vec::with_capacity(steps + 1);
    let mut se = Vec::with_capacity(steps + 1);
    for t in 0..=steps {
        let m = MeanSe::from_iter(runs.iter().map(|r| r[t]));
        mean.push(m.mean);
        se.push(m.se);
    }
    Ok(WalkGradient { mean, se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seed_split;
    use approx::assert_relative_eq;

    #[test]
    fn st_categorical_inverse_cdf_and_tangent() {
        let pi = [Dual::<2>::variable(0.2, 0), Dual::variable(0.6, 1)];
        let (k, x) = st_categorical(&pi, 0.1).unwrap();
        assert_eq!(k, 0);
        assert_eq!((x[0].v, x[1].v), (1.0, 0.0));
        let (k, _) = st_categorical(&pi, 0.3).unwrap();
        assert_eq!(k, 1);
        // d(p0/(p0+p1))/dp0 = p1/(p0+p1)^2
        assert_relative_eq!(x[0].d[0], 0.6 / 0.64, epsilon = 1e-12);
        assert_relative_eq!(x[0].d[0] + x[1].d[0], 0.0, epsilon = 1e-12);
        assert!(st_categorical::<f64>(&[], 0.5).is_err());
        assert!(st_categorical(&[0.0, 0.0], 0.5).is_err());
    }

    #[test]
    fn st_tangent_is_dp() {
        let p = Dual::new(1.0, [0.25, -1.0]);
        let mut rng = seed_split(0, 0);
        for _ in 0..10 {
            let x = st_bernoulli(p, &mut rng);
            assert_eq!(x.v, 1.0);
            assert_eq!(x.d, [0.25, -1.0]);
        }
    }

    #[test]
    fn st_mean_matches_p() {
        let mut rng = seed_split(1, 0);
        let n = 100_000;
        let m: f64 = (0..n).map(|_| st_bernoulli(0.3, &mut rng)).sum::<f64>() / n as f64;
        let sd = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((m - 0.3).abs() < 3.0 * sd);
    }

    #[test]
    fn st_linear_downstream_exact() {
        let p = Dual::<1>::variable(0.3, 0);
        let mut rng = seed_split(2, 0);
        for _ in 0..100 {
            let y = st_bernoulli(p, &mut rng) * 2.0 - 1.0;
            assert_eq!(y.d[0], 2.0);
        }
    }

    #[test]
    fn gs_categorical_single_category() {
        let mut rng = seed_split(3, 0);
        let out = gs_categorical(&[Dual::<1>::variable(1.0, 0)], 0.5, &mut rng).unwrap();
        assert_eq!(out[0].v, 1.0);
        assert_eq!(out[0].d, [0.0]);
        assert!(gs_categorical::<f64, _>(&[], 0.5, &mut rng).is_err());
    }

    #[test]
    fn gs_categorical_frequencies_chi_square() {
        let pi = [0.2, 0.3, 0.5];
        let n = 100_000;
        let mut counts = [0usize; 3];
        let mut rng = seed_split(4, 0);
        for _ in 0..n {
            let s = gs_categorical(&pi, 0.5, &mut rng).unwrap();
            counts[s.iter().position(|&x| x == 1.0).unwrap()] += 1;
        }
        let chi2: f64 = pi
            .iter()
            .zip(counts)
            .map(|(&p, c)| {
                let e = p * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        // 0.99 quantile of chi-square with two degrees of freedom.
        assert!(chi2 < 9.2103, "chi2 = {chi2}");
    }

    #[test]
    fn gs_categorical_never_picks_zero_mass() {
        let mut rng = seed_split(5, 0);
        let pi = [Dual::<1>::new(0.0, [1.0]), Dual::new(1.0, [-1.0])];
        for _ in 0..1000 {
            let s = gs_categorical(&pi, 0.3, &mut rng).unwrap();
            assert_eq!(s[1].v, 1.0);
            assert!(s.iter().all(|x| x.d[0].is_finite()));
        }
    }

    #[test]
    fn binary_gs_matches_two_category_tangent() {
        // Differentiating sigmoid((logit p + L)/τ) by finite differences.
        let (p, tau, u) = (0.37, 0.4, 0.61);
        let g = gs_from_uniform(Dual::<1>::variable(p, 0), tau, u);
        let f = |p: f64| {
            let l = ((1.0 - u) / u).ln();
            crate::ad::sigmoid(((p / (1.0 - p)).ln() + l) / tau)
        };
        let h = 1e-6;
        assert_relative_eq!(g.d[0], (f(p + h) - f(p - h)) / (2.0 * h), max_relative = 1e-6);
        assert_eq!(g.v, 0.0);
    }

    #[test]
    fn estimators_share_primal_samples() {
        let p = Dual::<2>::new(0.42, [0.3, -0.2]);
        let mut rng = seed_split(6, 0);
        for _ in 0..1000 {
            let u = uniform(&mut rng);
            let hard = if u < 0.42 { 1.0 } else { 0.0 };
            for est in [
                EstimatorKind::StraightThrough,
                EstimatorKind::GumbelSoftmax { tau: 0.1 },
                EstimatorKind::SpaPruned { samples: 1 },
                EstimatorKind::SpaSmoothed,
            ] {
                assert_eq!(bernoulli(p, u, &est).v, hard);
            }
        }
    }

    #[test]
    fn smoothed_tangent_is_unbiased() {
        let p = Dual::<2>::new(0.3, [1.0, -0.5]);
        let n = 200_000;
        let mut rng = seed_split(7, 0);
        let mut acc = [0.0; 2];
        for _ in 0..n {
            let x = spa_smoothed_from_uniform(p, uniform(&mut rng));
            acc[0] += x.d[0];
            acc[1] += x.d[1];
        }
        assert!((acc[0] / n as f64 - 1.0).abs() < 0.01);
        assert!((acc[1] / n as f64 + 0.5).abs() < 0.01);
    }

    #[test]
    fn walk_st_is_exact() {
        let g = random_walk_gradient(0.4, 50, &EstimatorKind::StraightThrough, 20, 1).unwrap();
        for t in 0..=50 {
            assert_eq!(g.mean[t], 2.0 * t as f64);
            assert_eq!(g.se[t], 0.0);
        }
    }

    #[test]
    fn walk_pruned_unbiased() {
        let g = random_walk_gradient(0.4, 50, &EstimatorKind::SpaPruned { samples: 1 }, 10_000, 2).unwrap();
        assert_eq!(g.mean[0], 0.0);
        for t in 1..=50 {
            let target = 2.0 * t as f64;
            assert!((g.mean[t] - target).abs() < 3.0 * g.se[t] + 1e-9, "t={t}: {} vs {target}", g.mean[t]);
        }
    }

    #[test]
    fn walk_gs_temperature_tradeoff() {
        let mut bias = Vec::new();
        let mut var = Vec::new();
        for tau in [0.1, 0.5, 1.0] {
            let g = random_walk_gradient(0.4, 50, &EstimatorKind::GumbelSoftmax { tau }, 4000, 3).unwrap();
            bias.push((g.mean[50] - 100.0).abs());
            var.push(g.se[50]);
        }
        assert!(bias[0] < bias[1] && bias[1] < bias[2], "{bias:?}");
        assert!(var[0] > var[1] && var[1] > var[2], "{var:?}");
    }

    #[test]
    fn walk_rejects_degenerate_p() {
        assert!(random_walk_gradient(0.0, 5, &EstimatorKind::StraightThrough, 1, 0).is_err());
    }
}
