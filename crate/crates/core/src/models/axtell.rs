//! Axtell's model of firms with a softmax surrogate for firm choice.
//!
//! Firms live in a fixed pool of `n` slots, one per agent, whose production
//! coefficients are drawn once. An agent founding a new firm takes its own
//! slot if empty, otherwise the lowest empty slot. Membership is hard on the
//! primal; firm sizes and efforts carry the soft choice in their tangents.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::beta::beta_sample;
use super::{check_len, Model};
use crate::ad::{argmax, tempered_softmax, Scalar};
use crate::error::{invalid, Result};
use crate::estimators::EstimatorKind;
use crate::rng::{purpose, seed_split, stream_id, uniform};
use crate::trajectory::Trajectory;

pub const PARAM_NAMES: [&str; 8] = [
    "theta_alpha",
    "theta_beta",
    "e_alpha",
    "e_beta",
    "a_alpha",
    "a_beta",
    "b_alpha",
    "b_beta",
];

pub const OUTPUT_NAMES: [&str; 3] = ["mean_effort", "mean_firm_size", "mean_firm_output"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmofParams {
    pub theta_alpha: f64,
    pub theta_beta: f64,
    pub e_alpha: f64,
    pub e_beta: f64,
    pub a_alpha: f64,
    pub a_beta: f64,
    pub b_alpha: f64,
    pub b_beta: f64,
}

impl Default for AmofParams {
    fn default() -> Self {
        Self {
            theta_alpha: 1.0,
            theta_beta: 3.0,
            e_alpha: 2.0,
            e_beta: 1.0,
            a_alpha: 2.0,
            a_beta: 5.0,
            b_alpha: 5.0,
            b_beta: 2.0,
        }
    }
}

impl AmofParams {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.theta_alpha,
            self.theta_beta,
            self.e_alpha,
            self.e_beta,
            self.a_alpha,
            self.a_beta,
            self.b_alpha,
            self.b_beta,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        check_len(v, 8)?;
        let p = Self {
            theta_alpha: v[0],
            theta_beta: v[1],
            e_alpha: v[2],
            e_beta: v[3],
            a_alpha: v[4],
            a_beta: v[5],
            b_alpha: v[6],
            b_beta: v[7],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in PARAM_NAMES.iter().zip(self.to_vec()) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(*name, "Beta shape must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmofConfig {
    pub n: usize,
    pub steps: usize,
    /// Softmax temperature of the firm-choice surrogate.
    pub tau: f64,
    pub graph_seed: u64,
}

impl Default for AmofConfig {
    fn default() -> Self {
        Self {
            n: 200,
            steps: 30,
            tau: 1.0,
            graph_seed: 0,
        }
    }
}

/// `O(E) = aE + bE²`.
pub fn production<S: Scalar>(e_total: S, a: S, b: S) -> S {
    a * e_total + b * e_total * e_total
}

/// Cobb-Douglas utility `(O(e + E₋ᵢ)/n)^θ (1−e)^{1−θ}`.
pub fn utility<S: Scalar>(e: S, theta: S, e_minus: S, a: S, b: S, n: S) -> S {
    let share = production(e + e_minus, a, b) / n;
    share.pow(theta) * (S::one() - e).pow(S::one() - theta)
}

/// Effort maximising [`utility`]. The first-order condition
/// `θ(a+2bE)(1−e) = (1−θ)(aE+bE²)` is the quadratic `Ae² + Be + C = 0`; its
/// roots in `[0, 1]` compete with both boundaries on utility. Firm size only
/// scales the output share, so it does not enter.
pub fn optimal_effort<S: Scalar>(theta: S, e_minus: S, a: S, b: S) -> S {
    let one = S::one();
    let qa = -(b * (one + theta));
    let qb = b * theta * 2.0 - a - b * e_minus * 2.0;
    let qc = theta * (a + b * e_minus * 2.0) - (one - theta) * (a * e_minus + b * e_minus * e_minus);

    let mut cands: Vec<S> = vec![S::zero(), one];
    let (av, bv, cv) = (qa.value(), qb.value(), qc.value());
    if av.abs() > 1e-14 {
        let disc = bv * bv - 4.0 * av * cv;
        if disc >= 0.0 {
            let sq = (qb * qb - qa * qc * 4.0).sqrt();
            let sgn = if bv >= 0.0 { 1.0 } else { -1.0 };
            let q = -(qb + sq * sgn) * 0.5;
            if q.value() != 0.0 {
                cands.push(q / qa);
                cands.push(qc / q);
            }
        }
    } else if bv != 0.0 {
        cands.push(-(qc / qb));
    }

    let n = one;
    let mut best = cands[0];
    let mut best_u = f64::NEG_INFINITY;
    for &e in &cands {
        let ev = e.value();
        if !(0.0..=1.0).contains(&ev) {
            continue;
        }
        let u = utility(e, theta, e_minus, a, b, n).value();
        if u > best_u {
            best_u = u;
            best = e;
        }
    }
    best
}

/// Primal choice by argmax of `U★` (ties to the first candidate) and softmax
/// weights for the tangent channel.
pub fn select_firm<S: Scalar>(u_star: &[S], tau: f64) -> Result<(usize, Vec<S>)> {
    let w = tempered_softmax(u_star, tau)?;
    Ok((argmax(u_star), w))
}

struct World<S> {
    theta: Vec<S>,
    effort: Vec<S>,
    firm: Vec<usize>,
    a: Vec<S>,
    b: Vec<S>,
    size: Vec<S>,
    total: Vec<S>,
    members: Vec<usize>,
    empty: BTreeSet<usize>,
}

struct Candidate<S> {
    slot: usize,
    e_minus: S,
    n: S,
}

impl<S: Scalar> World<S> {
    fn candidates(&self, i: usize, friends: &[u32]) -> Vec<Candidate<S>> {
        let cur = self.firm[i];
        let mut out = vec![Candidate {
            slot: cur,
            e_minus: self.total[cur] - self.effort[i],
            n: self.size[cur],
        }];
        for &j in friends {
            let f = self.firm[j as usize];
            if out.iter().any(|c| c.slot == f) {
                continue;
            }
            out.push(Candidate {
                slot: f,
                e_minus: self.total[f],
                n: self.size[f] + S::one(),
            });
        }
        if self.members[cur] > 1 {
            let slot = if self.empty.contains(&i) { i } else { *self.empty.iter().next().expect("an empty slot exists") };
            out.push(Candidate {
                slot,
                e_minus: self.total[slot],
                n: self.size[slot] + S::one(),
            });
        }
        out
    }

    /// Moves agent `i` to the chosen slot. Sizes of every candidate gain the
    /// soft weight; the effort is the hard optimum with the weighted-average
    /// tangent.
    fn apply_choice(&mut self, i: usize, cands: &[Candidate<S>], efforts: &[S], chosen: usize, w: &[S]) {
        let cur = self.firm[i];
        let dest = cands[chosen].slot;
        self.size[cur] -= S::one();
        self.total[cur] -= self.effort[i];
        self.members[cur] -= 1;
        let mut soft = S::zero();
        for (k, &e) in efforts.iter().enumerate() {
            soft += w[k] * e;
        }
        let e_new = S::surrogate(efforts[chosen].value(), soft);
        for (k, c) in cands.iter().enumerate() {
            self.size[c.slot] += S::surrogate(if k == chosen { 1.0 } else { 0.0 }, w[k]);
        }
        // Firm effort follows hard membership: soft effort contributions feed
        // back through later choices and blow up the tangents.
        self.effort[i] = e_new;
        self.total[dest] += e_new;
        self.members[dest] += 1;
        self.firm[i] = dest;
        if self.members[cur] == 0 {
            self.empty.insert(cur);
        }
        self.empty.remove(&dest);
    }

    fn summary(&self) -> [S; 3] {
        let n = self.effort.len() as f64;
        let mut eff = S::zero();
        for &e in &self.effort {
            eff += e;
        }
        let mut size = S::zero();
        let mut out = S::zero();
        let mut firms = 0usize;
        for f in 0..self.size.len() {
            if self.members[f] > 0 {
                firms += 1;
                size += self.size[f];
                out += production(self.total[f], self.a[f], self.b[f]);
            }
        }
        let k = firms.max(1) as f64;
        [eff / n, size / k, out / k]
    }
}

/// Friendship lists: every agent picks 1–4 distinct others uniformly.
pub fn friendship_network<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Vec<u32>> {
    let others = |i: usize| (0..n as u32).filter(move |&j| j as usize != i);
    (0..n)
        .map(|i| {
            let k = rng.random_range(1..=4usize).min(n.saturating_sub(1));
            let pool: Vec<u32> = others(i).collect();
            pool.choose_multiple(rng, k).copied().collect()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct AmofModel {
    pub config: AmofConfig,
    pub params: AmofParams,
    pub friends: Vec<Vec<u32>>,
}

impl AmofModel {
    pub fn new(config: AmofConfig, params: AmofParams) -> Result<Self> {
        params.validate()?;
        if config.n == 0 || config.steps == 0 {
            return Err(invalid("amof", "need at least one agent and one step"));
        }
        if !(config.tau > 0.0) {
            return Err(invalid("tau", "temperature must be positive"));
        }
        let mut rng = seed_split(config.graph_seed, stream_id(0, purpose::GRAPH));
        let friends = friendship_network(config.n, &mut rng);
        Ok(Self { config, params, friends })
    }

    pub fn run<S: Scalar>(&self, theta: &[S], seed: u64, replicate: u64) -> Result<Trajectory<S>> {
        check_len(theta, 8)?;
        for (i, t) in theta.iter().enumerate() {
            if !(t.value() > 0.0) {
                return Err(invalid(PARAM_NAMES[i], "Beta shape must be positive"));
            }
        }
        let n = self.config.n;
        let mut rng = seed_split(seed, stream_id(replicate, purpose::SIMULATION));
        let mut draw = |sa: S, sb: S| -> Vec<S> { (0..n).map(|_| beta_sample(sa, sb, uniform(&mut rng))).collect() };
        let prefs = draw(theta[0], theta[1]);
        let effort = draw(theta[2], theta[3]);
        let a = draw(theta[4], theta[5]);
        let b = draw(theta[6], theta[7]);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);

        let mut w = World {
            theta: prefs,
            total: effort.clone(),
            effort,
            firm: (0..n).collect(),
            a,
            b,
            size: vec![S::one(); n],
            members: vec![1; n],
            empty: BTreeSet::new(),
        };

        let mut traj = Trajectory::new(&OUTPUT_NAMES);
        for _ in 0..self.config.steps {
            for &i in &order {
                let cands = w.candidates(i, &self.friends[i]);
                let mut efforts = Vec::with_capacity(cands.len());
                let mut u_star = Vec::with_capacity(cands.len());
                for c in &cands {
                    let (a, b) = (w.a[c.slot], w.b[c.slot]);
                    let e = optimal_effort(w.theta[i], c.e_minus, a, b);
                    u_star.push(utility(e, w.theta[i], c.e_minus, a, b, c.n));
                    efforts.push(e);
                }
                let (chosen, weights) = select_firm(&u_star, self.config.tau)?;
                w.apply_choice(i, &cands, &efforts, chosen, &weights);
            }
            traj.rows.push(w.summary().to_vec());
        }
        Ok(traj)
    }
}

impl Model for AmofModel {
    fn name(&self) -> &'static str {
        "axtell"
    }

    fn param_names(&self) -> Vec<String> {
        PARAM_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn output_names(&self) -> Vec<&'static str> {
        OUTPUT_NAMES.to_vec()
    }

    fn theta(&self) -> Vec<f64> {
        self.params.to_vec()
    }

    fn fd_epsilon(&self, _i: usize) -> f64 {
        1e-2
    }

    fn support(&self, _i: usize) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    /// Firm choice always uses the softmax surrogate; the estimator argument
    /// is accepted for interface uniformity.
    fn simulate<S: Scalar>(&self, theta: &[S], _est: &EstimatorKind, seed: u64, replicate: u64) -> Result<Trajectory<S>> {
        self.run(theta, seed, replicate)
    }
}
