//! Network SIR epidemic with quarantine and social-distancing windows.
//!
//! State indicators are carried as scalars so every discrete update is a
//! masking product (`new_inf = S ⊙ X`, `new_rec = I ⊙ R`). Each step draws
//! compliance, infection and recovery uniforms for every agent, so all
//! estimators and all coupled alternative paths consume the same stream.

use std::f64::consts::LN_10;

use serde::{Deserialize, Serialize};

use super::graph::{ContactGraph, GraphKind};
use super::{check_len, Model};
use crate::ad::{smooth_step, Scalar, SmootherConfig};
use crate::error::{invalid, Result};
use crate::estimators::{bernoulli, EstimatorKind};
use crate::rng::{purpose, seed_split, stream_id, uniform, SimRng};
use crate::spa::{bernoulli_jump, Reservoir};
use crate::trajectory::Trajectory;

pub const PARAM_NAMES: [&str; 9] = [
    "log10_i0",
    "log10_beta",
    "log10_gamma",
    "q_start",
    "q_end",
    "p_q",
    "d_start",
    "d_end",
    "alpha_d",
];

pub const OUTPUT_NAMES: [&str; 2] = ["infections", "recoveries"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SirParams {
    pub log10_i0: f64,
    pub log10_beta: f64,
    pub log10_gamma: f64,
    pub q_start: f64,
    pub q_end: f64,
    pub p_q: f64,
    pub d_start: f64,
    pub d_end: f64,
    pub alpha_d: f64,
}

impl Default for SirParams {
    fn default() -> Self {
        Self {
            log10_i0: 0.01f64.log10(),
            log10_beta: 0.4f64.log10(),
            log10_gamma: 0.05f64.log10(),
            q_start: 20.0,
            q_end: 35.0,
            p_q: 0.7,
            d_start: 10.0,
            d_end: 45.0,
            alpha_d: 0.3,
        }
    }
}

impl SirParams {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.log10_i0,
            self.log10_beta,
            self.log10_gamma,
            self.q_start,
            self.q_end,
            self.p_q,
            self.d_start,
            self.d_end,
            self.alpha_d,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        check_len(v, 9)?;
        let p = Self {
            log10_i0: v[0],
            log10_beta: v[1],
            log10_gamma: v[2],
            q_start: v[3],
            q_end: v[4],
            p_q: v[5],
            d_start: v[6],
            d_end: v[7],
            alpha_d: v[8],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.log10_i0 < 0.0) {
            return Err(invalid("log10_i0", "initial infected fraction must lie in (0, 1)"));
        }
        if self.q_start > self.q_end || self.d_start > self.d_end {
            return Err(invalid("policy window", "start after end"));
        }
        if !(0.0..=1.0).contains(&self.p_q) {
            return Err(invalid("p_q", "compliance probability outside [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.alpha_d) {
            return Err(invalid("alpha_d", "distancing factor outside [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SirConfig {
    pub n: usize,
    /// Number of trajectory rows; row 0 holds the initial infections.
    pub steps: usize,
    pub dt: f64,
    pub policies: bool,
    pub graph: GraphKind,
    pub graph_seed: u64,
    pub smoother: SmootherConfig,
}

impl Default for SirConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            steps: 60,
            dt: 1.0,
            policies: true,
            graph: GraphKind::Complete,
            graph_seed: 0,
            smoother: SmootherConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SirModel {
    pub config: SirConfig,
    pub params: SirParams,
    pub graph: ContactGraph,
}

impl SirModel {
    /// Builds the contact graph from `config.graph_seed`.
    pub fn new(config: SirConfig, params: SirParams) -> Result<Self> {
        let mut rng = seed_split(config.graph_seed, stream_id(0, purpose::GRAPH));
        let graph = ContactGraph::build(config.graph, config.n, &mut rng)?;
        Self::with_graph(config, params, graph)
    }

    pub fn with_graph(config: SirConfig, params: SirParams, graph: ContactGraph) -> Result<Self> {
        params.validate()?;
        config.smoother.validate()?;
        if config.n == 0 || config.steps == 0 {
            return Err(invalid("sir", "need at least one agent and one step"));
        }
        if !(config.dt > 0.0) {
            return Err(invalid("dt", "time step must be positive"));
        }
        if graph.len() != config.n {
            return Err(invalid("graph", "graph size differs from agent count"));
        }
        Ok(Self { config, params, graph })
    }

    pub fn run<S: Scalar>(&self, theta: &[S], est: &EstimatorKind, seed: u64, replicate: u64) -> Result<Trajectory<S>> {
        check_len(theta, 9)?;
        est.validate()?;
        Ok(simulate(theta, &self.graph, &self.config, est, seed, replicate))
    }
}

impl Model for SirModel {
    fn name(&self) -> &'static str {
        "sir"
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

    fn fd_epsilon(&self, i: usize) -> f64 {
        match i {
            0..=2 => 1e-2,
            3 | 4 | 6 | 7 => 0.5,
            _ => 1e-2,
        }
    }

    fn support(&self, i: usize) -> (f64, f64) {
        match i {
            0 => (f64::NEG_INFINITY, 0.0),
            1 | 2 => (f64::NEG_INFINITY, f64::INFINITY),
            5 => (0.0, 1.0),
            8 => (0.0, 1.0),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn simulate<S: Scalar>(&self, theta: &[S], est: &EstimatorKind, seed: u64, replicate: u64) -> Result<Trajectory<S>> {
        self.run(theta, est, seed, replicate)
    }
}

/// Policy gate: primal `1[start ≤ t ≤ end]`, tangent of `ψ(t−start)·ψ(end−t)`.
pub fn gate<S: Scalar>(t: f64, start: S, end: S, smoother: &SmootherConfig) -> S {
    let hard = if start.value() <= t && t <= end.value() { 1.0 } else { 0.0 };
    let tc = S::constant(t);
    let smooth = smooth_step(tc - start, smoother) * smooth_step(end - tc, smoother);
    S::surrogate(hard, smooth)
}

/// Infection probability `1 − exp(−λΔt)` from a force of infection.
#[inline]
fn hazard_prob<S: Scalar>(rate: S, dt: f64) -> S {
    -((rate * -dt).exp_m1())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Initial,
    Compliance,
    Infection,
    Recovery,
}

/// Agent indicators of one path plus the draws of the current step.
#[derive(Clone)]
struct Path<S> {
    sus: Vec<S>,
    inf: Vec<S>,
    quar: Vec<S>,
    x: Vec<S>,
    r: Vec<S>,
    prob: Vec<S>,
    not_quar: Vec<S>,
    active: Vec<S>,
}

impl<S: Scalar> Path<S> {
    fn new(n: usize) -> Self {
        let z = vec![S::zero(); n];
        Self {
            sus: z.clone(),
            inf: z.clone(),
            quar: z.clone(),
            x: z.clone(),
            r: z.clone(),
            prob: z.clone(),
            not_quar: z.clone(),
            active: z,
        }
    }

    fn seed(&mut self, i0: S, u: &[f64], est: &EstimatorKind) {
        for i in 0..u.len() {
            let x = bernoulli(i0, u[i], est);
            self.inf[i] = x;
            self.sus[i] = S::one() - x;
        }
    }

    fn compliance(&mut self, pc: S, u: &[f64], est: &EstimatorKind) {
        for i in 0..u.len() {
            self.quar[i] = self.inf[i] * bernoulli(pc, u[i], est);
        }
    }

    fn infection(&mut self, beta: S, graph: &ContactGraph, dt: f64, u: &[f64], est: &EstimatorKind) {
        let n = u.len();
        // Quarantine only ever applies to infected agents (Q ≤ I), so the
        // non-quarantining infected indicator is the linear mask I − Q.
        for i in 0..n {
            self.not_quar[i] = S::one() - self.quar[i];
            self.active[i] = self.inf[i] - self.quar[i];
        }
        let mut rate_at = |i: usize, num: S, den: S| {
            self.prob[i] = if den.value() > 0.0 {
                hazard_prob(beta * (num / den), dt)
            } else {
                S::zero()
            };
        };
        match graph {
            ContactGraph::Complete { .. } => {
                let mut ta = S::zero();
                let mut tn = S::zero();
                for i in 0..n {
                    ta += self.active[i];
                    tn += self.not_quar[i];
                }
                for i in 0..n {
                    rate_at(i, ta - self.active[i], tn - self.not_quar[i]);
                }
            }
            ContactGraph::Adjacency(adj) => {
                for (i, nb) in adj.iter().enumerate() {
                    let mut num = S::zero();
                    let mut den = S::zero();
                    for &j in nb {
                        num += self.active[j as usize];
                        den += self.not_quar[j as usize];
                    }
                    rate_at(i, num, den);
                }
            }
        }
        for i in 0..n {
            self.x[i] = bernoulli(self.prob[i], u[i], est);
        }
    }

    fn recovery(&mut self, q: S, u: &[f64], est: &EstimatorKind) {
        for i in 0..u.len() {
            self.r[i] = bernoulli(q, u[i], est);
        }
    }

    fn apply(&mut self) -> [S; 2] {
        let mut ni = S::zero();
        let mut nr = S::zero();
        for i in 0..self.sus.len() {
            let a = self.sus[i] * self.x[i];
            let b = self.inf[i] * self.r[i];
            self.sus[i] -= a;
            self.inf[i] += a - b;
            ni += a;
            nr += b;
        }
        [ni, nr]
    }

    fn infected_total(&self) -> S {
        let mut t = S::zero();
        for &x in &self.inf {
            t += x;
        }
        t
    }
}

impl Path<f64> {
    fn flip(&mut self, phase: Phase, j: usize) {
        match phase {
            Phase::Initial => {
                self.inf[j] = 1.0 - self.inf[j];
                self.sus[j] = 1.0 - self.sus[j];
            }
            Phase::Compliance => self.quar[j] = 1.0 - self.quar[j],
            Phase::Infection => self.x[j] = 1.0 - self.x[j],
            Phase::Recovery => self.r[j] = 1.0 - self.r[j],
        }
    }
}

/// Pruned stochastic-triple bookkeeping: one weighted reservoir of
/// alternative paths per (inner sample, tangent slot). Alternative paths
/// share every uniform with the primal and differ by one flipped draw.
struct Pruner {
    hard: Path<f64>,
    slots: usize,
    samples: usize,
    res: Vec<Reservoir<Path<f64>>>,
    rng: SimRng,
}

impl Pruner {
    fn for_each_path(&mut self, mut f: impl FnMut(&mut Path<f64>)) {
        f(&mut self.hard);
        for r in self.res.iter_mut() {
            if let Some(p) = r.chosen_mut() {
                f(p);
            }
        }
    }

    fn offer<S: Scalar>(&mut self, phase: Phase, j: usize, p: S, x: bool) {
        let Pruner {
            hard,
            slots,
            samples,
            res,
            rng,
        } = self;
        for (k, &dp) in p.tangent().iter().enumerate() {
            if let Some(w) = bernoulli_jump(p.value(), dp, x) {
                for s in 0..*samples {
                    res[s * *slots + k].offer_with(w, rng, || {
                        let mut alt = hard.clone();
                        alt.flip(phase, j);
                        alt
                    });
                }
            }
        }
    }

    /// Per-slot estimate `mean_s W (Φ_alt − Φ)` given each path's outputs.
    fn estimate(&self, phi: &[f64; 2], alt_phi: &[Option<[f64; 2]>]) -> Vec<[f64; 2]> {
        let mut out = vec![[0.0; 2]; self.slots];
        for s in 0..self.samples {
            for k in 0..self.slots {
                let idx = s * self.slots + k;
                if let Some(a) = alt_phi[idx] {
                    let w = self.res[idx].total();
                    for c in 0..2 {
                        out[k][c] += w * (a[c] - phi[c]) / self.samples as f64;
                    }
                }
            }
        }
        out
    }
}

fn with_estimate<S: Scalar>(row: [S; 2], k_slots: usize, est: &[[f64; 2]]) -> Vec<S> {
    (0..2)
        .map(|c| {
            let mut t = row[c].tangent().to_vec();
            for k in 0..k_slots {
                t[k] += est[k][c];
            }
            S::from_parts(row[c].value(), &t)
        })
        .collect()
}

fn fill(u: &mut [f64], rng: &mut SimRng) {
    for x in u.iter_mut() {
        *x = uniform(rng);
    }
}

fn simulate<S: Scalar>(
    theta: &[S],
    graph: &ContactGraph,
    cfg: &SirConfig,
    est: &EstimatorKind,
    seed: u64,
    replicate: u64,
) -> Trajectory<S> {
    let n = cfg.n;
    let dt = cfg.dt;
    let hard_est = EstimatorKind::StraightThrough;
    let mut rng = seed_split(seed, stream_id(replicate, purpose::SIMULATION));

    let i0 = (theta[0] * LN_10).exp();
    let beta = (theta[1] * LN_10).exp();
    let gamma = (theta[2] * LN_10).exp();
    let (q_start, q_end, p_q) = (theta[3], theta[4], theta[5]);
    let (d_start, d_end, alpha_d) = (theta[6], theta[7], theta[8]);
    let q_rec = hazard_prob(gamma, dt);

    let mut traj = Trajectory::new(&OUTPUT_NAMES);
    let mut u = vec![0.0; n];
    fill(&mut u, &mut rng);
    let mut path = Path::<S>::new(n);
    path.seed(i0, &u, est);

    let mut pruner = match *est {
        EstimatorKind::SpaPruned { samples } if S::SLOTS > 0 => {
            let mut hard = Path::<f64>::new(n);
            hard.seed(i0.value(), &u, &hard_est);
            let slots = S::SLOTS;
            Some(Pruner {
                hard,
                slots,
                samples,
                res: (0..samples * slots).map(|_| Reservoir::new()).collect(),
                rng: seed_split(seed, stream_id(replicate, purpose::PRUNING)),
            })
        }
        _ => None,
    };

    let row0 = [path.infected_total(), S::zero()];
    match pruner.as_mut() {
        Some(pr) => {
            for j in 0..n {
                pr.offer(Phase::Initial, j, i0, pr.hard.inf[j] == 1.0);
            }
            let phi = [pr.hard.infected_total(), 0.0];
            let alt: Vec<_> = pr
                .res
                .iter()
                .map(|r| r.chosen().map(|p| [p.infected_total(), 0.0]))
                .collect();
            let e = pr.estimate(&phi, &alt);
            traj.rows.push(with_estimate(row0, pr.slots, &e));
        }
        None => traj.rows.push(row0.to_vec()),
    }

    let mut uq = vec![0.0; n];
    let mut ui = vec![0.0; n];
    let mut ur = vec![0.0; n];
    for step in 0..cfg.steps.saturating_sub(1) {
        let t = step as f64;
        fill(&mut uq, &mut rng);
        fill(&mut ui, &mut rng);
        fill(&mut ur, &mut rng);

        let (pc, beta_eff) = if cfg.policies {
            let gq = gate(t, q_start, q_end, &cfg.smoother);
            let gd = gate(t, d_start, d_end, &cfg.smoother);
            (p_q * gq, beta * (S::one() - (S::one() - alpha_d) * gd))
        } else {
            (S::zero(), beta)
        };

        if cfg.policies {
            path.compliance(pc, &uq, est);
        }
        if let Some(pr) = pruner.as_mut() {
            if cfg.policies {
                let pcv = pc.value();
                pr.for_each_path(|p| p.compliance(pcv, &uq, &hard_est));
                for j in 0..n {
                    if pr.hard.inf[j] == 1.0 {
                        pr.offer(Phase::Compliance, j, pc, pr.hard.quar[j] == 1.0);
                    }
                }
            }
        }

        path.infection(beta_eff, graph, dt, &ui, est);
        if let Some(pr) = pruner.as_mut() {
            let bv = beta_eff.value();
            pr.for_each_path(|p| p.infection(bv, graph, dt, &ui, &hard_est));
            for j in 0..n {
                if pr.hard.sus[j] == 1.0 {
                    pr.offer(Phase::Infection, j, path.prob[j], pr.hard.x[j] == 1.0);
                }
            }
        }

        path.recovery(q_rec, &ur, est);
        if let Some(pr) = pruner.as_mut() {
            let qv = q_rec.value();
            pr.for_each_path(|p| p.recovery(qv, &ur, &hard_est));
            for j in 0..n {
                if pr.hard.inf[j] == 1.0 {
                    pr.offer(Phase::Recovery, j, q_rec, pr.hard.r[j] == 1.0);
                }
            }
        }

        let row = path.apply();
        match pruner.as_mut() {
            Some(pr) => {
                let h = pr.hard.apply();
                debug_assert_eq!(h[0], row[0].value());
                let alt: Vec<_> = pr
                    .res
                    .iter_mut()
                    .map(|r| r.chosen_mut().map(|p| p.apply()))
                    .collect();
                let e = pr.estimate(&h, &alt);
                traj.rows.push(with_estimate(row, pr.slots, &e));
            }
            None => traj.rows.push(row.to_vec()),
        }
    }
    traj
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OdeScheme {
    /// Per-step hazards `1 − exp(−rate Δt)`, matching the agent-level draws.
    #[default]
    ExponentialEuler,
    /// Forward Euler on `dS/dt = −βSI/N`, `dR/dt = γI`.
    Euler,
}

#[derive(Debug, Clone)]
pub struct OdeSolution<S> {
    /// Daily infections and recoveries, in the same row layout as the
    /// agent-based trajectory.
    pub trajectory: Trajectory<S>,
    /// Set when a compartment went negative.
    pub unstable: bool,
}

/// Mean-field reference for the complete graph without policies.
pub fn sir_ode_reference<S: Scalar>(
    log10_i0: S,
    log10_beta: S,
    log10_gamma: S,
    n: f64,
    steps: usize,
    dt: f64,
    scheme: OdeScheme,
) -> OdeSolution<S> {
    let i0 = (log10_i0 * LN_10).exp();
    let beta = (log10_beta * LN_10).exp();
    let gamma = (log10_gamma * LN_10).exp();
    let mut i = i0 * n;
    let mut s = S::constant(n) - i;
    let mut r = S::zero();
    let mut traj = Trajectory::new(&OUTPUT_NAMES);
    traj.rows.push(vec![i, S::zero()]);
    let mut unstable = false;
    for _ in 1..steps {
        let (new_i, new_r) = match scheme {
            OdeScheme::ExponentialEuler => (
                s * hazard_prob(beta * i / n, dt),
                i * hazard_prob(gamma, dt),
            ),
            OdeScheme::Euler => (beta * s * i / n * dt, gamma * i * dt),
        };
        s -= new_i;
        i += new_i - new_r;
        r += new_r;
        if s.value() < 0.0 || i.value() < 0.0 || r.value() < 0.0 {
            unstable = true;
        }
        traj.rows.push(vec![new_i, new_r]);
    }
    OdeSolution { trajectory: traj, unstable }
}
