//! Generalised variational inference over simulator parameters.
//!
//! The variational density and its parameters live on a reverse tape,
//! while the simulator gradient `η = ∇_θ ℓ` comes from forward-mode
//! duals. The pathwise estimator joins the two through the scalar
//! `⟨g(φ, z), η⟩ + log q_φ(g(φ, z)) − log p(g(φ, z))`, whose tape
//! gradient is `J_g^T η + ∇_φ log(q_φ / p)`.

pub mod flow;
pub mod mmd;
pub mod optim;
pub mod prior;
pub mod train;

use rayon::prelude::*;

use crate::ad::{Dual, Scalar, Tape};
use crate::error::{invalid, Error, Result};
use crate::estimators::EstimatorKind;
use crate::gradcheck::MAX_PARAMS;
use crate::models::Model;
use crate::trajectory::Trajectory;

pub use flow::{Family, Posterior};
pub use optim::{AdamW, AdamWConfig};
pub use prior::{Bijector, Prior, PriorDist};
pub use train::{train, train_with, GradientKind, HistoryRow, TrainConfig, TrainResult};

type Grad = Dual<MAX_PARAMS>;

/// Loss `ℓ(θ, y)`, reproducible from `(seed, draw)`.
pub trait Loss: Sync {
    fn dim(&self) -> usize;

    fn eval<S: Scalar>(&self, theta: &[S], seed: u64, draw: u64) -> Result<S>;
}

/// Per-column standardisation of summary vectors, fitted on observed data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyInput("standardizer"))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, &v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                std[j] += (r[j] - mean[j]).powi(2) / n;
            }
        }
        let std = std
            .into_iter()
            .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply<S: Scalar>(&self, row: &[S]) -> Vec<S> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }
}

/// One vector per time step: the outputs followed by the time index
/// scaled to [0, 1].
pub fn raw_summaries<S: Scalar>(traj: &Trajectory<S>) -> Vec<Vec<S>> {
    let span = (traj.len().max(2) - 1) as f64;
    traj.rows
        .iter()
        .enumerate()
        .map(|(t, r)| {
            let mut v = r.clone();
            v.push(S::constant(t as f64 / span));
            v
        })
        .collect()
}

/// Weighted squared MMD between simulated and observed summary sets.
pub struct SimulatorLoss<'a, M: Model> {
    pub model: &'a M,
    /// Full parameter vector; entries listed in `free` are overwritten.
    pub base: Vec<f64>,
    pub free: Vec<usize>,
    pub estimator: EstimatorKind,
    pub mmd_samples: usize,
    pub weight: f64,
    pub scaler: Standardizer,
    pub observed: Vec<Vec<f64>>,
    pub bandwidth: f64,
    obs_term: f64,
}

impl<'a, M: Model> SimulatorLoss<'a, M> {
    pub fn new(
        model: &'a M,
        free: Vec<usize>,
        observed: &[Trajectory<f64>],
        estimator: EstimatorKind,
        mmd_samples: usize,
        weight: f64,
    ) -> Result<Self> {
        let base = model.theta();
        if free.is_empty() {
            return Err(Error::EmptyInput("free parameters"));
        }
        if free.len() > MAX_PARAMS {
            return Err(invalid("free", format!("at most {MAX_PARAMS} parameters")));
        }
        if let Some(&i) = free.iter().find(|&&i| i >= base.len()) {
            return Err(invalid("free", format!("index {i} out of range")));
        }
        if mmd_samples == 0 {
            return Err(invalid("mmd_samples", "need at least one simulation"));
        }
        if !(weight > 0.0) {
            return Err(invalid("loss_weight", "must be positive"));
        }
        estimator.validate()?;
        let raw: Vec<Vec<f64>> = observed.iter().flat_map(raw_summaries).collect();
        let scaler = Standardizer::fit(&raw)?;
        let obs: Vec<Vec<f64>> = raw.iter().map(|r| scaler.apply(r)).collect();
        let bandwidth = mmd::median_heuristic(&obs)?;
        let obs_term = mmd::self_term(&obs, bandwidth);
        Ok(Self {
            model,
            base,
            free,
            estimator,
            mmd_samples,
            weight,
            scaler,
            observed: obs,
            bandwidth,
            obs_term,
        })
    }

    fn full_theta<S: Scalar>(&self, theta: &[S]) -> Vec<S> {
        let mut full: Vec<S> = self.base.iter().map(|&v| S::constant(v)).collect();
        for (&i, &v) in self.free.iter().zip(theta) {
            full[i] = v;
        }
        full
    }

    pub fn summaries<S: Scalar>(&self, traj: &Trajectory<S>) -> Vec<Vec<S>> {
        raw_summaries(traj).iter().map(|r| self.scaler.apply(r)).collect()
    }

    /// Unweighted squared MMD of given trajectories against the data.
    pub fn discrepancy(&self, trajs: &[Trajectory<f64>]) -> Result<f64> {
        let sim: Vec<Vec<f64>> = trajs.iter().flat_map(|t| self.summaries(t)).collect();
        mmd::mmd2_with(&sim, &self.observed, self.bandwidth, self.obs_term)
    }

    pub fn simulate(&self, theta: &[f64], seed: u64, replicate: u64) -> Result<Trajectory<f64>> {
        self.model
            .simulate(&self.full_theta(theta), &self.estimator, seed, replicate)
    }
}

impl<M: Model> Loss for SimulatorLoss<'_, M> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn eval<S: Scalar>(&self, theta: &[S], seed: u64, draw: u64) -> Result<S> {
        crate::models::check_len(theta, self.free.len())?;
        let full = self.full_theta(theta);
        let mut sim = Vec::new();
        for r in 0..self.mmd_samples as u64 {
            let traj = self
                .model
                .simulate(&full, &self.estimator, seed, draw * self.mmd_samples as u64 + r)?;
            sim.extend(self.summaries(&traj));
        }
        Ok(mmd::mmd2_with(&sim, &self.observed, self.bandwidth, self.obs_term)? * self.weight)
    }
}

/// Monte Carlo gradient of the variational objective.
#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate {
    /// Batch mean of `ℓ + log q − log p`.
    pub objective: f64,
    /// Quantity whose gradient is `grad`: the objective itself for the
    /// pathwise estimator, the sample variance of the weights for VarGrad.
    pub surrogate: f64,
    pub grad: Vec<f64>,
}

fn check_dims<L: Loss>(post: &Posterior, prior: &Prior, loss: &L) -> Result<()> {
    for got in [prior.dim(), loss.dim()] {
        if got != post.dim {
            return Err(Error::DimensionMismatch {
                expected: post.dim,
                got,
            });
        }
    }
    if post.dim > MAX_PARAMS {
        return Err(invalid("posterior", format!("at most {MAX_PARAMS} parameters")));
    }
    Ok(())
}

fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn tape_grad<'t>(tape: &'t Tape, phi: &[f64], f: impl FnOnce(&[crate::ad::Var<'t>]) -> Result<crate::ad::Var<'t>>) -> Result<(f64, Vec<f64>)> {
    let vars: Vec<_> = phi.iter().map(|&v| tape.var(v)).collect();
    let out = f(&vars)?;
    let adj = tape.gradient(out);
    let g = vars
        .iter()
        .map(|v| v.index().map(|i| adj[i]).unwrap_or(0.0))
        .collect();
    Ok((out.value(), g))
}

/// Pathwise estimate of `∇_φ E_q[ℓ + log q − log p]` with base draws `zs`;
/// sample `b` simulates with `(seed, draw0 + b)`.
pub fn pathwise_grad<L: Loss>(
    post: &Posterior,
    phi: &[f64],
    prior: &Prior,
    loss: &L,
    zs: &[Vec<f64>],
    seed: u64,
    draw0: u64,
) -> Result<GradEstimate> {
    check_dims(post, prior, loss)?;
    if zs.is_empty() {
        return Err(Error::EmptyInput("pathwise batch"));
    }
    let per: Vec<(f64, Vec<f64>)> = zs
        .par_iter()
        .enumerate()
        .map(|(b, z)| {
            let (theta, _) = post.sample_and_log_q(phi, z)?;
            let th: Vec<Grad> = theta.iter().enumerate().map(|(i, &v)| Grad::variable(v, i)).collect();
            let l = loss.eval(&th, seed, draw0 + b as u64)?;
            let eta = l.d;
            let tape = Tape::new();
            let (value, g) = tape_grad(&tape, phi, |vars| {
                let (th, lq) = post.sample_and_log_q(vars, z)?;
                let mut s = lq - prior.log_prob(&th);
                for (i, &t) in th.iter().enumerate() {
                    s += t * eta[i];
                }
                // the inner product only carries η; its primal is dropped
                let ip: f64 = th.iter().enumerate().map(|(i, t)| t.value() * eta[i]).sum();
                Ok(s + (l.v - ip))
            })?;
            finite(value, "pathwise objective")?;
            Ok((value, g))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let objective = per.iter().map(|p| p.0).sum::<f64>() / n;
    let mut grad = vec![0.0; phi.len()];
    for (_, g) in &per {
        for (a, &v) in grad.iter_mut().zip(g) {
            *a += v / n;
        }
    }
    Ok(GradEstimate {
        objective,
        surrogate: objective,
        grad,
    })
}

/// VarGrad: gradient of the sample variance of
/// `w_b = ℓ(θ_b) + log q_φ(θ_b) − log p(θ_b)` with the draws detached.
pub fn vargrad<L: Loss>(
    post: &Posterior,
    phi: &[f64],
    prior: &Prior,
    loss: &L,
    zs: &[Vec<f64>],
    seed: u64,
    draw0: u64,
) -> Result<GradEstimate> {
    check_dims(post, prior, loss)?;
    if zs.len() < 2 {
        return Err(invalid("batch", "VarGrad needs at least two samples"));
    }
    let per: Vec<(f64, Vec<f64>)> = zs
        .par_iter()
        .enumerate()
        .map(|(b, z)| {
            let (theta, _) = post.sample_and_log_q(phi, z)?;
            let l: f64 = loss.eval(&theta, seed, draw0 + b as u64)?;
            let lp = prior.log_prob(&theta);
            let tape = Tape::new();
            let (lq, g) = tape_grad(&tape, phi, |vars| post.log_q(vars, &theta))?;
            Ok((finite(l + lq - lp, "VarGrad weight")?, g))
        })
        .collect::<Result<_>>()?;
    Ok(vargrad_combine(&per, phi.len()))
}

fn vargrad_combine(per: &[(f64, Vec<f64>)], n_params: usize) -> GradEstimate {
    let b = per.len() as f64;
    let mean = per.iter().map(|p| p.0).sum::<f64>() / b;
    let var = per.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / (b - 1.0);
    let mut grad = vec![0.0; n_params];
    for (w, g) in per {
        let c = 2.0 * (w - mean) / (b - 1.0);
        for (a, &v) in grad.iter_mut().zip(g) {
            *a += c * v;
        }
    }
    GradEstimate {
        objective: mean,
        surrogate: var,
        grad,
    }
}

/// Batch mean of `ℓ + log q − log p` without gradients.
pub fn gvi_objective<L: Loss>(
    post: &Posterior,
    phi: &[f64],
    prior: &Prior,
    loss: &L,
    zs: &[Vec<f64>],
    seed: u64,
    draw0: u64,
) -> Result<f64> {
    check_dims(post, prior, loss)?;
    if zs.is_empty() {
        return Err(Error::EmptyInput("objective batch"));
    }
    let vals: Vec<f64> = zs
        .par_iter()
        .enumerate()
        .map(|(b, z)| {
            let (theta, lq) = post.sample_and_log_q(phi, z)?;
            let l: f64 = loss.eval(&theta, seed, draw0 + b as u64)?;
            finite(l + lq - prior.log_prob(&theta), "objective")
        })
        .collect::<Result<_>>()?;
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}
