//! Squared maximum mean discrepancy with an RBF kernel.

use crate::ad::Scalar;
use crate::error::{Error, Result};
use crate::stats::median;

fn sq_dist<S: Scalar>(x: &[S], y: &[f64]) -> S {
    x.iter()
        .zip(y)
        .fold(S::zero(), |acc, (&a, &b)| {
            let d = a - b;
            acc + d * d
        })
}

fn sq_dist_ss<S: Scalar>(x: &[S], y: &[S]) -> S {
    x.iter().zip(y).fold(S::zero(), |acc, (&a, &b)| {
        let d = a - b;
        acc + d * d
    })
}

fn check_dims<A, B>(sim: &[Vec<A>], obs: &[Vec<B>]) -> Result<usize> {
    if sim.is_empty() {
        return Err(Error::EmptyInput("mmd (simulated set)"));
    }
    if obs.is_empty() {
        return Err(Error::EmptyInput("mmd (observed set)"));
    }
    let d = obs[0].len();
    for v in obs.iter().map(|v| v.len()).chain(sim.iter().map(|v| v.len())) {
        if v != d {
            return Err(Error::DimensionMismatch { expected: d, got: v });
        }
    }
    Ok(d)
}

/// Median pairwise Euclidean distance within `obs`, or 1 when every
/// vector coincides.
pub fn median_heuristic(obs: &[Vec<f64>]) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::EmptyInput("median heuristic"));
    }
    let mut d = Vec::with_capacity(obs.len() * (obs.len().saturating_sub(1)) / 2);
    for i in 0..obs.len() {
        for j in (i + 1)..obs.len() {
            d.push(sq_dist(&obs[i], &obs[j]).sqrt());
        }
    }
    match median(&d) {
        Some(m) if m > 0.0 => Ok(m),
        _ => Ok(1.0),
    }
}

/// Mean kernel value over all pairs of `obs`; constant across calls with
/// the same observed set.
pub fn self_term(obs: &[Vec<f64>], bandwidth: f64) -> f64 {
    let g = -0.5 / (bandwidth * bandwidth);
    let mut s = 0.0;
    for x in obs {
        for y in obs {
            s += (g * sq_dist(x, y)).exp();
        }
    }
    s / (obs.len() * obs.len()) as f64
}

/// Biased (V-statistic) squared MMD between `sim` and `obs` with kernel
/// `exp(-|x - y|² / 2h²)`.
pub fn mmd2<S: Scalar>(sim: &[Vec<S>], obs: &[Vec<f64>], bandwidth: f64) -> Result<S> {
    check_dims(sim, obs)?;
    mmd2_with(sim, obs, bandwidth, self_term(obs, bandwidth))
}

/// As [`mmd2`] with the observed self term supplied.
pub fn mmd2_with<S: Scalar>(
    sim: &[Vec<S>],
    obs: &[Vec<f64>],
    bandwidth: f64,
    obs_term: f64,
) -> Result<S> {
    check_dims(sim, obs)?;
    if !(bandwidth > 0.0) {
        return Err(crate::error::invalid("bandwidth", "must be positive"));
    }
    let g = -0.5 / (bandwidth * bandwidth);
    let n = sim.len();
    let mut kxx = S::zero();
    for i in 0..n {
        // diagonal terms are exactly one
        kxx += S::one();
        for j in (i + 1)..n {
            kxx += (sq_dist_ss(&sim[i], &sim[j]) * g).exp() * 2.0;
        }
    }
    let mut kxy = S::zero();
    for x in sim {
        for y in obs {
            kxy += (sq_dist(x, y) * g).exp();
        }
    }
    Ok(kxx / (n * n) as f64 + obs_term - kxy * (2.0 / (n * obs.len()) as f64))
}
