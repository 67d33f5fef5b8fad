//! Finite-difference oracle and AD-vs-FD comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ad::{Dual, Scalar};
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::models::Model;
use crate::stats::{median, MeanSe};

/// Tangent carrier wide enough for every model's full parameter vector.
pub const MAX_PARAMS: usize = 9;
pub type Grad = Dual<MAX_PARAMS>;

/// Seed offset separating the finite-difference replicates from the AD
/// replicates.
const FD_SEED_SALT: u64 = 0x5eed_f00d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FdConfig {
    /// Step per parameter; `None` entries fall back to the model default.
    pub epsilon: Vec<Option<f64>>,
    pub n_fd: usize,
    pub common_random: bool,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            epsilon: Vec::new(),
            n_fd: 200,
            common_random: true,
        }
    }
}

impl FdConfig {
    pub fn step<M: Model>(&self, model: &M, i: usize) -> f64 {
        self.epsilon
            .get(i)
            .copied()
            .flatten()
            .unwrap_or_else(|| model.fd_epsilon(i))
    }
}

/// One (parameter, time step) entry of an AD-vs-FD comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradRow {
    pub param: String,
    pub t: usize,
    pub ad_mean: f64,
    pub ad_se: f64,
    pub fd_mean: f64,
    pub fd_se: f64,
    pub rel_err: f64,
    pub noise_floor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradReport {
    pub model: String,
    pub output: String,
    pub epsilon: Vec<(String, f64)>,
    pub rows: Vec<GradRow>,
}

/// Aggregates over the non-noise-floor steps of one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSummary {
    pub steps: usize,
    pub median_rel_err: f64,
    pub median_abs_err: f64,
    pub sign_agreement: f64,
    pub median_ratio: f64,
    pub within_factor_two: f64,
    /// Mean |AD| over mean |FD|, the step-averaged magnitude ratio.
    pub mean_abs_ratio: f64,
}

impl GradReport {
    pub fn summary(&self, param: &str) -> Option<ParamSummary> {
        let rows: Vec<&GradRow> = self
            .rows
            .iter()
            .filter(|r| r.param == param && !r.noise_floor)
            .collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let rel: Vec<f64> = rows.iter().map(|r| r.rel_err).collect();
        let abs: Vec<f64> = rows.iter().map(|r| (r.ad_mean - r.fd_mean).abs()).collect();
        let ratio: Vec<f64> = rows.iter().map(|r| r.ad_mean.abs() / r.fd_mean.abs()).collect();
        let sign = rows
            .iter()
            .filter(|r| r.ad_mean.signum() == r.fd_mean.signum())
            .count() as f64;
        let within = ratio.iter().filter(|&&q| (0.5..=2.0).contains(&q)).count() as f64;
        let ad_abs: f64 = rows.iter().map(|r| r.ad_mean.abs()).sum();
        let fd_abs: f64 = rows.iter().map(|r| r.fd_mean.abs()).sum();
        Some(ParamSummary {
            steps: rows.len(),
            median_rel_err: median(&rel).unwrap_or(f64::NAN),
            median_abs_err: median(&abs).unwrap_or(f64::NAN),
            sign_agreement: sign / n,
            median_ratio: median(&ratio).unwrap_or(f64::NAN),
            within_factor_two: within / n,
            mean_abs_ratio: ad_abs / fd_abs,
        })
    }

    /// Median absolute AD-FD error over every step of `param`, including
    /// noise-floor steps.
    pub fn median_abs_err_all(&self, param: &str) -> Option<f64> {
        let abs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.param == param)
            .map(|r| (r.ad_mean - r.fd_mean).abs())
            .collect();
        median(&abs)
    }
}

fn check_support<M: Model>(model: &M, theta: &[f64], i: usize, eps: f64) -> Result<()> {
    let (lo, hi) = model.support(i);
    let name = model.param_names()[i].to_string();
    if theta[i] - eps < lo || theta[i] + eps > hi || !(eps > 0.0) {
        return Err(Error::SupportViolation {
            name,
            value: theta[i],
            step: eps,
        });
    }
    Ok(())
}

/// Central-difference estimate `(Φ(θ+εeᵢ) − Φ(θ−εeᵢ)) / 2ε` of output column
/// `column`, averaged over `n_fd` replicate pairs.
#[allow(clippy::too_many_arguments)]
pub fn central_diff<M: Model>(
    model: &M,
    theta: &[f64],
    i: usize,
    eps: f64,
    n_fd: usize,
    common_random: bool,
    column: usize,
    seed: u64,
) -> Result<Vec<MeanSe>> {
    check_support(model, theta, i, eps)?;
    let est = EstimatorKind::StraightThrough;
    let mut plus = theta.to_vec();
    let mut minus = theta.to_vec();
    plus[i] += eps;
    minus[i] -= eps;
    let diffs: Vec<Vec<f64>> = (0..n_fd as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let rm = if common_random { r } else { r + n_fd as u64 };
            let a = model.simulate(&plus, &est, seed, r)?;
            let b = model.simulate(&minus, &est, seed, rm)?;
            Ok(a.rows
                .iter()
                .zip(&b.rows)
                .map(|(x, y)| (x[column] - y[column]) / (2.0 * eps))
                .collect())
        })
        .collect::<Result<_>>()?;
    let steps = diffs.first().map_or(0, |d| d.len());
    Ok((0..steps)
        .map(|t| MeanSe::from_iter(diffs.iter().map(|d| d[t])))
        .collect())
}

/// Forward-mode gradients of output `column` for the parameters in
/// `params`, one entry per parameter and step.
pub fn ad_gradients<M: Model>(
    model: &M,
    theta: &[f64],
    params: &[usize],
    est: &EstimatorKind,
    replicates: usize,
    column: usize,
    seed: u64,
) -> Result<Vec<Vec<MeanSe>>> {
    if theta.len() > MAX_PARAMS {
        return Err(Error::DimensionMismatch {
            expected: MAX_PARAMS,
            got: theta.len(),
        });
    }
    let th: Vec<Grad> = theta
        .iter()
        .enumerate()
        .map(|(i, &v)| if params.contains(&i) { Grad::variable(v, i) } else { Grad::constant(v) })
        .collect();
    let runs: Vec<Vec<Grad>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| model.simulate(&th, est, seed, r).map(|tr| tr.column(column)))
        .collect::<Result<_>>()?;
    let steps = runs.first().map_or(0, |r| r.len());
    Ok(params
        .iter()
        .map(|&i| {
            (0..steps)
                .map(|t| MeanSe::from_iter(runs.iter().map(|r| r[t].d[i])))
                .collect()
        })
        .collect())
}

/// Finite-difference baseline of one parameter.
#[derive(Debug, Clone)]
pub struct FdReference {
    pub param: usize,
    pub epsilon: f64,
    pub steps: Vec<MeanSe>,
}

/// Central differences for every parameter in `params`, reusable across
/// estimators compared on the same seeds.
pub fn fd_reference<M: Model>(
    model: &M,
    theta: &[f64],
    params: &[usize],
    fd: &FdConfig,
    column: usize,
    seed: u64,
) -> Result<Vec<FdReference>> {
    params
        .iter()
        .map(|&i| {
            let eps = fd.step(model, i);
            let steps = central_diff(model, theta, i, eps, fd.n_fd, fd.common_random, column, seed ^ FD_SEED_SALT)?;
            Ok(FdReference {
                param: i,
                epsilon: eps,
                steps,
            })
        })
        .collect()
}

/// AD-vs-FD report for the parameters in `params`. Steps where
/// `|fd_mean| ≤ 3 fd_se` are flagged as noise floor.
#[allow(clippy::too_many_arguments)]
pub fn compare<M: Model>(
    model: &M,
    theta: &[f64],
    params: &[usize],
    est: &EstimatorKind,
    fd: &FdConfig,
    replicates: usize,
    column: usize,
    seed: u64,
) -> Result<GradReport> {
    let reference = fd_reference(model, theta, params, fd, column, seed)?;
    compare_against(model, theta, est, &reference, replicates, column, seed)
}

/// As [`compare`] with a precomputed finite-difference baseline.
pub fn compare_against<M: Model>(
    model: &M,
    theta: &[f64],
    est: &EstimatorKind,
    reference: &[FdReference],
    replicates: usize,
    column: usize,
    seed: u64,
) -> Result<GradReport> {
    let names = model.param_names();
    let params: Vec<usize> = reference.iter().map(|r| r.param).collect();
    let ad = ad_gradients(model, theta, &params, est, replicates, column, seed)?;
    let mut rows = Vec::new();
    let mut epsilon = Vec::new();
    for (k, r) in reference.iter().enumerate() {
        let name = &names[r.param];
        epsilon.push((name.clone(), r.epsilon));
        for (t, (a, f)) in ad[k].iter().zip(&r.steps).enumerate() {
            rows.push(GradRow {
                param: name.clone(),
                t,
                ad_mean: a.mean,
                ad_se: a.se,
                fd_mean: f.mean,
                fd_se: f.se,
                rel_err: (a.mean - f.mean).abs() / f.mean.abs(),
                noise_floor: f.mean.abs() <= 3.0 * f.se,
            });
        }
    }
    Ok(GradReport {
        model: model.name().to_string(),
        output: model.output_names()[column].to_string(),
        epsilon,
        rows,
    })
}

/// Full parameter-by-time Jacobian of every output from forward passes
/// only: `[output][param][t]`.
pub fn sensitivity<M: Model>(
    model: &M,
    theta: &[f64],
    est: &EstimatorKind,
    replicates: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<MeanSe>>>> {
    let params: Vec<usize> = (0..theta.len()).collect();
    let th: Vec<Grad> = theta.iter().enumerate().map(|(i, &v)| Grad::variable(v, i)).collect();
    let runs: Vec<_> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| model.simulate(&th, est, seed, r))
        .collect::<Result<Vec<_>>>()?;
    let width = model.output_names().len();
    let steps = runs.first().map_or(0, |r| r.len());
    Ok((0..width)
        .map(|c| {
            params
                .iter()
                .map(|&i| {
                    (0..steps)
                        .map(|t| MeanSe::from_iter(runs.iter().map(|r| r.rows[t][c].tangent()[i])))
                        .collect()
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Trajectory;
    use approx::assert_relative_eq;

    /// Deterministic smooth toy: Φ_t = θ₀ t + θ₁² + sin(θ₀ θ₁ t / 10).
    struct Toy {
        affine: bool,
    }

    impl Model for Toy {
        fn name(&self) -> &'static str {
            "toy"
        }
        fn param_names(&self) -> Vec<String> {
            vec!["a".into(), "b".into()]
        }
        fn output_names(&self) -> Vec<&'static str> {
            vec!["y"]
        }
        fn theta(&self) -> Vec<f64> {
            vec![1.0, 0.5]
        }
        fn fd_epsilon(&self, _i: usize) -> f64 {
            1e-3
        }
        fn support(&self, _i: usize) -> (f64, f64) {
            (-10.0, 10.0)
        }
        fn simulate<S: Scalar>(&self, th: &[S], _e: &EstimatorKind, _s: u64, _r: u64) -> Result<Trajectory<S>> {
            let mut tr = Trajectory::new(&["y"]);
            for t in 0..5 {
                let tt = t as f64;
                let y = if self.affine {
                    th[0] * 3.0
                } else {
                    let z = th[0] * th[1] * (tt / 10.0);
                    th[0] * tt + th[1] * th[1] + z.unary(z.value().sin(), z.value().cos())
                };
                tr.rows.push(vec![y]);
            }
            Ok(tr)
        }
    }

    #[test]
    fn affine_model_exact() {
        let m = Toy { affine: true };
        for eps in [1e-3, 0.1, 2.0] {
            let d = central_diff(&m, &[1.0, 0.5], 0, eps, 3, true, 0, 1).unwrap();
            for x in d {
                assert_relative_eq!(x.mean, 3.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn quadratic_central_difference() {
        let m = Toy { affine: false };
        let d = central_diff(&m, &[1.0, 1.0], 1, 1e-3, 1, true, 0, 1).unwrap();
        // Row 0: Φ = b², derivative 2.
        assert!((d[0].mean - 2.0).abs() < 1e-6);
    }

    #[test]
    fn compare_smooth_toy() {
        let m = Toy { affine: false };
        let fd = FdConfig {
            epsilon: vec![Some(1e-4), Some(1e-4)],
            n_fd: 2,
            common_random: true,
        };
        let rep = compare(&m, &[1.0, 0.5], &[0, 1], &EstimatorKind::StraightThrough, &fd, 2, 0, 3).unwrap();
        assert_eq!(rep.rows.len(), 2 * 5);
        for r in &rep.rows {
            if r.fd_mean.abs() > 1e-9 {
                assert!(r.rel_err < 1e-5, "{r:?}");
            }
        }
    }

    #[test]
    fn support_violation_reported() {
        let m = Toy { affine: true };
        assert!(matches!(
            central_diff(&m, &[9.99, 0.5], 0, 0.1, 1, true, 0, 0),
            Err(Error::SupportViolation { .. })
        ));
    }

    #[test]
    fn constant_model_has_zero_sensitivity() {
        let m = Toy { affine: true };
        let s = sensitivity(&m, &[1.0, 0.5], &EstimatorKind::StraightThrough, 2, 0).unwrap();
        assert!(s[0][1].iter().all(|x| x.mean == 0.0));
        assert!(s[0][0].iter().all(|x| x.mean == 3.0));
    }
}
