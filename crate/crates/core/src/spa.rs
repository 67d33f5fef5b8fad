//! Stochastic triples: the derivative carrier of smoothed perturbation
//! analysis for Bernoulli draws.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::uniform;

/// Sign of the infinitesimal nudge applied to the parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    #[default]
    Right,
    Left,
}

/// `(δ, w, Y, tag)`: infinitesimal part, jump weight, alternative value
/// and the index of the draw that produced the jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticTriple {
    pub delta: f64,
    pub weight: f64,
    pub alternative: f64,
    pub tag: u64,
}

impl StochasticTriple {
    pub const fn zero() -> Self {
        Self {
            delta: 0.0,
            weight: 0.0,
            alternative: 0.0,
            tag: 0,
        }
    }

    /// Derivative estimate at realised value `x` for a right perturbation.
    pub fn derivative(&self, x: f64) -> f64 {
        smooth_triple(self, x)
    }
}

/// Samples `Bern(p)` from `u` and returns the unit-tangent triple.
pub fn bernoulli_triple(p: f64, u: f64, side: Side, tag: u64) -> Result<(f64, StochasticTriple)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DegenerateDistribution(p));
    }
    let x = if u < p { 1.0 } else { 0.0 };
    let (weight, alternative) = match side {
        Side::Right => (if x == 0.0 { 1.0 / (1.0 - p) } else { 0.0 }, 1.0),
        Side::Left => (if x == 1.0 { 1.0 / p } else { 0.0 }, 0.0),
    };
    Ok((
        x,
        StochasticTriple {
            delta: 0.0,
            weight,
            alternative,
            tag,
        },
    ))
}

/// Derivative contribution of a triple, `δ + w(Y − x)` for a right
/// perturbation or `δ − w(Y − x)` for a left one.
pub fn side_derivative(t: &StochasticTriple, x: f64, side: Side) -> f64 {
    match side {
        Side::Right => t.delta + t.weight * (t.alternative - x),
        Side::Left => t.delta - t.weight * (t.alternative - x),
    }
}

/// Chains an inner triple for `a = f(p)` through an outer node `g` with
/// local derivative `dg` and its own jump `outer`. Returns the candidates
/// with positive weight, or the single deterministic triple when neither
/// node can jump.
pub fn compose(
    inner: &StochasticTriple,
    a: f64,
    g: impl Fn(f64) -> f64,
    dg: f64,
    outer: &StochasticTriple,
) -> Vec<StochasticTriple> {
    let delta = inner.delta * dg;
    let outer_jump = StochasticTriple {
        delta: delta + inner.weight * (g(inner.alternative) - g(a)),
        weight: outer.weight,
        alternative: outer.alternative,
        tag: outer.tag,
    };
    let inner_jump = StochasticTriple {
        delta,
        weight: inner.weight,
        alternative: g(inner.alternative),
        tag: inner.tag,
    };
    let out: Vec<_> = [outer_jump, inner_jump]
        .into_iter()
        .filter(|c| c.weight > 0.0)
        .collect();
    if out.is_empty() {
        vec![StochasticTriple {
            delta,
            weight: 0.0,
            alternative: g(a),
            tag: outer.tag,
        }]
    } else {
        out
    }
}

/// Keeps candidate `i` with probability `w_i / W` and rescales its weight
/// to `W`.
pub fn prune<R: Rng + ?Sized>(candidates: &[StochasticTriple], rng: &mut R) -> Result<StochasticTriple> {
    if let Some(c) = candidates.iter().find(|c| c.weight < 0.0) {
        return Err(Error::NegativeWeight(c.weight));
    }
    let total: f64 = candidates.iter().map(|c| c.weight).sum();
    if total == 0.0 {
        let delta = candidates.first().map_or(0.0, |c| c.delta);
        return Ok(StochasticTriple {
            delta,
            ..StochasticTriple::zero()
        });
    }
    let mut target = uniform(rng) * total;
    let mut pick = candidates.len() - 1;
    for (i, c) in candidates.iter().enumerate() {
        if target < c.weight {
            pick = i;
            break;
        }
        target -= c.weight;
    }
    Ok(StochasticTriple {
        weight: total,
        ..candidates[pick]
    })
}

/// Replaces the jump by its conditional mean: `δ + w(Y − x)`.
pub fn smooth_triple(t: &StochasticTriple, x: f64) -> f64 {
    t.delta + t.weight * (t.alternative - x)
}

/// Weight of the flip of a Bernoulli draw with probability `p` and tangent
/// `dp` under a right perturbation, if the realised value `x` can flip.
/// The flipped value is `!x`; its derivative contribution is
/// `w · (Φ(!x) − Φ(x))`.
#[inline]
pub fn bernoulli_jump(p: f64, dp: f64, x: bool) -> Option<f64> {
    if dp > 0.0 && !x {
        Some(dp / (1.0 - p))
    } else if dp < 0.0 && x {
        Some(-dp / p)
    } else {
        None
    }
}

/// Streaming weighted reservoir of size one: equivalent to [`prune`] over
/// every item offered so far.
#[derive(Debug, Clone)]
pub struct Reservoir<T> {
    total: f64,
    chosen: Option<T>,
}

impl<T> Default for Reservoir<T> {
    fn default() -> Self {
        Self {
            total: 0.0,
            chosen: None,
        }
    }
}

impl<T> Reservoir<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Offers an item; returns true when it replaced the current choice.
    pub fn offer<R: Rng + ?Sized>(&mut self, weight: f64, item: T, rng: &mut R) -> bool {
        if weight <= 0.0 {
            return false;
        }
        self.total += weight;
        if uniform(rng) * self.total < weight {
            self.chosen = Some(item);
            true
        } else {
            false
        }
    }

    /// Like [`Reservoir::offer`] but builds the item only when it is kept.
    pub fn offer_with<R: Rng + ?Sized>(&mut self, weight: f64, rng: &mut R, make: impl FnOnce() -> T) -> bool {
        if weight <= 0.0 {
            return false;
        }
        self.total += weight;
        if uniform(rng) * self.total < weight {
            self.chosen = Some(make());
            true
        } else {
            false
        }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn chosen(&self) -> Option<&T> {
        self.chosen.as_ref()
    }

    pub fn chosen_mut(&mut self) -> Option<&mut T> {
        self.chosen.as_mut()
    }
}

/// Three dependent Bernoulli nodes used to check pruning against exact
/// enumeration: `X₁ ~ Bern(p)`, `X₂ ~ Bern((p + X₁)/2)`,
/// `X₃ ~ Bern(0.2 + 0.6 p X₂)`, output `X₁ + 2X₂ + 3X₃ + X₁X₃`.
pub mod three_node {
    use super::{bernoulli_jump, Reservoir};
    use crate::ad::Scalar;
    use rand::Rng;

    pub fn output(x: [bool; 3]) -> f64 {
        let f = |b: bool| if b { 1.0 } else { 0.0 };
        f(x[0]) + 2.0 * f(x[1]) + 3.0 * f(x[2]) + f(x[0]) * f(x[2])
    }

    /// Success probability of node `k` given the earlier outcomes, and its
    /// derivative in `p`.
    pub fn prob(k: usize, p: f64, x: [bool; 3]) -> (f64, f64) {
        match k {
            0 => (p, 1.0),
            1 => ((p + if x[0] { 1.0 } else { 0.0 }) / 2.0, 0.5),
            _ => {
                let x2 = if x[1] { 1.0 } else { 0.0 };
                (0.2 + 0.6 * p * x2, 0.6 * x2)
            }
        }
    }

    /// Runs nodes `from..3` with shared uniforms `u`, keeping earlier ones.
    pub fn run_from(p: f64, u: [f64; 3], mut x: [bool; 3], from: usize) -> [bool; 3] {
        for k in from..3 {
            x[k] = u[k] < prob(k, p, x).0;
        }
        x
    }

    /// `E[output]` by summing over all eight outcomes.
    pub fn expectation<S: Scalar>(p: S) -> S {
        let mut total = S::zero();
        for bits in 0..8u32 {
            let x = [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0];
            let x1 = if x[0] { 1.0 } else { 0.0 };
            let x2 = if x[1] { 1.0 } else { 0.0 };
            let q = [p, (p + x1) * 0.5, p * (0.6 * x2) + 0.2];
            let mut w = S::one();
            for k in 0..3 {
                w *= if x[k] { q[k] } else { S::one() - q[k] };
            }
            total += w * output(x);
        }
        total
    }

    /// Single-sample pruned derivative: each possible flip is offered to a
    /// one-slot reservoir with its jump weight; the kept alternative path
    /// is rerun from the flipped node with the same uniforms.
    pub fn pruned_derivative<R: Rng + ?Sized>(p: f64, u: [f64; 3], rng: &mut R) -> f64 {
        let x = run_from(p, u, [false; 3], 0);
        let y = output(x);
        let mut res: Reservoir<[bool; 3]> = Reservoir::new();
        for k in 0..3 {
            let (q, dq) = prob(k, p, x);
            if let Some(w) = bernoulli_jump(q, dq, x[k]) {
                res.offer_with(w, rng, || {
                    let mut alt = x;
                    alt[k] = !x[k];
                    run_from(p, u, alt, k + 1)
                });
            }
        }
        res.chosen().map_or(0.0, |alt| res.total() * (output(*alt) - y))
    }
}
