//! Command execution. Building the model and resolving names happens up
//! front so that every configuration problem surfaces before any work.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use diffabm::calibration::{train_with, Posterior, Prior, SimulatorLoss};
use diffabm::gradcheck::{compare_against, fd_reference, sensitivity, GradReport, MAX_PARAMS};
use diffabm::models::axtell::AmofModel;
use diffabm::models::sir::SirModel;
use diffabm::models::sugarscape::SugarModel;
use diffabm::rng::{purpose, seed_split, stream_id};
use diffabm::{EstimatorKind, Model, Trajectory};

use crate::config::{Command, ConfigError, ExperimentConfig, ModelName, Observed};
use crate::output::{num, run_id, Output};

enum AnyModel {
    Sir(SirModel),
    Axtell(AmofModel),
    Sugarscape(SugarModel),
}

macro_rules! with_model {
    ($m:expr, $v:ident => $body:expr) => {
        match $m {
            AnyModel::Sir($v) => $body,
            AnyModel::Axtell($v) => $body,
            AnyModel::Sugarscape($v) => $body,
        }
    };
}

fn config_err(section: &str) -> impl Fn(diffabm::Error) -> ConfigError + '_ {
    move |e| ConfigError(format!("{section}: {e}"))
}

fn build(cfg: &ExperimentConfig) -> Result<AnyModel, ConfigError> {
    Ok(match cfg.model {
        ModelName::Sir => AnyModel::Sir(SirModel::new(cfg.sir.config, cfg.sir.params).map_err(config_err("sir"))?),
        ModelName::Axtell => {
            AnyModel::Axtell(AmofModel::new(cfg.axtell.config, cfg.axtell.params).map_err(config_err("axtell"))?)
        }
        ModelName::Sugarscape => AnyModel::Sugarscape(
            SugarModel::new(cfg.sugarscape.config.clone(), cfg.sugarscape.params.clone())
                .map_err(config_err("sugarscape"))?,
        ),
    })
}

fn structural_seed(cfg: &ExperimentConfig) -> Value {
    match cfg.model {
        ModelName::Sir => json!({ "graph_seed": cfg.sir.config.graph_seed }),
        ModelName::Axtell => json!({ "graph_seed": cfg.axtell.config.graph_seed }),
        ModelName::Sugarscape => json!({ "landscape_seed": cfg.sugarscape.config.landscape_seed }),
    }
}

fn param_index<M: Model>(m: &M, name: &str, key: &str) -> Result<usize, ConfigError> {
    let names = m.param_names();
    names.iter().position(|n| n == name).ok_or_else(|| {
        ConfigError(format!("{key}: unknown parameter `{name}` (expected one of {})", names.join(", ")))
    })
}

fn gradcheck_targets<M: Model>(m: &M, cfg: &ExperimentConfig) -> Result<(Vec<usize>, usize), ConfigError> {
    let n = m.param_names().len();
    if n > MAX_PARAMS {
        return Err(ConfigError(format!(
            "{}: {n} parameters exceed the forward-mode width of {MAX_PARAMS}",
            m.name()
        )));
    }
    let params = if cfg.gradcheck.params.is_empty() {
        (0..n).collect()
    } else {
        cfg.gradcheck
            .params
            .iter()
            .map(|p| param_index(m, p, "gradcheck.params"))
            .collect::<Result<_, _>>()?
    };
    let outputs = m.output_names();
    let column = match &cfg.gradcheck.output {
        None => 0,
        Some(o) => outputs.iter().position(|n| n == o).ok_or_else(|| {
            ConfigError(format!("gradcheck.output: unknown output `{o}` (expected one of {})", outputs.join(", ")))
        })?,
    };
    if cfg.fd.epsilon.len() > n {
        return Err(ConfigError(format!("fd.epsilon: {} entries for {n} parameters", cfg.fd.epsilon.len())));
    }
    let theta = m.theta();
    for &i in &params {
        let eps = cfg.fd.step(m, i);
        let (lo, hi) = m.support(i);
        if eps.is_nan() || eps <= 0.0 || theta[i] - eps < lo || theta[i] + eps > hi {
            return Err(ConfigError(format!(
                "fd.epsilon: step {eps} for {} = {} leaves its support [{lo}, {hi}]",
                m.param_names()[i],
                theta[i]
            )));
        }
    }
    Ok((params, column))
}

/// Runs the experiment and returns the manifest path.
pub fn run(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<std::path::PathBuf> {
    cfg.validate()?;
    let model = build(cfg)?;
    let mut resolved = serde_json::to_value(cfg)?;
    if let Some(obj) = resolved.as_object_mut() {
        for other in ["sir", "axtell", "sugarscape"] {
            if json!(other) != json!(cfg.model) {
                obj.remove(other);
            }
        }
    }
    // The id covers everything that affects results, not where they land.
    let mut keyed = resolved.clone();
    keyed.as_object_mut().map(|o| o.remove("output_dir"));
    let id = run_id(&keyed);
    let mut manifest = json!({
        "tool": "diffabm",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.command.name(),
        "model": cfg.model,
        "master_seed": cfg.master_seed,
        "structural_seeds": structural_seed(cfg),
        "config": resolved,
    });
    if let Some(t) = threads {
        // Results do not depend on it; recorded for timing comparisons only.
        manifest["threads"] = json!(t);
    }
    let details = with_model!(&model, m => dispatch(m, cfg, &id))?;
    manifest["details"] = details.1;
    details.0.finish(manifest)
}

fn dispatch<M: Model>(m: &M, cfg: &ExperimentConfig, id: &str) -> Result<(Output, Value)> {
    // Validate command-specific names before creating any files.
    let targets = match cfg.command {
        Command::Gradcheck | Command::BenchmarkEstimators => Some(gradcheck_targets(m, cfg)?),
        Command::Sensitivity if m.param_names().len() > MAX_PARAMS => {
            return Err(ConfigError(format!("{}: too many parameters for one forward pass", m.name())).into())
        }
        _ => None,
    };
    let calib = match cfg.command {
        Command::Calibrate => Some(calibration_inputs(m, cfg)?),
        _ => None,
    };
    let mut out = Output::create(&cfg.output_dir, id.to_string())?;
    let details = match cfg.command {
        Command::Simulate => simulate(m, cfg, &mut out)?,
        Command::Gradcheck => {
            let (params, column) = targets.unwrap();
            gradcheck(m, cfg, &params, column, &mut out)?
        }
        Command::BenchmarkEstimators => {
            let (params, column) = targets.unwrap();
            benchmark(m, cfg, &params, column, &mut out)?
        }
        Command::Sensitivity => sensitivity_table(m, cfg, &mut out)?,
        Command::Calibrate => calibrate(m, cfg, calib.unwrap(), &mut out)?,
    };
    Ok((out, details))
}

fn simulate<M: Model>(m: &M, cfg: &ExperimentConfig, out: &mut Output) -> Result<Value> {
    let trajs: Vec<Trajectory<f64>> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| m.simulate(&m.theta(), &cfg.estimator, cfg.master_seed, r))
        .collect::<diffabm::Result<_>>()?;
    let outputs = m.output_names();
    let mut header = vec!["replicate", "t"];
    header.extend(outputs.iter().copied());
    let rows = trajs.iter().enumerate().flat_map(|(r, tr)| {
        tr.rows.iter().enumerate().map(move |(t, row)| {
            let mut v = vec![r.to_string(), t.to_string()];
            v.extend(row.iter().map(|&x| num(x)));
            v
        })
    });
    out.csv("trajectories.csv", &header, rows)?;
    Ok(json!({ "steps": trajs.first().map_or(0, |t| t.len()), "theta": param_map(m, &m.theta()) }))
}

fn param_map<M: Model>(m: &M, theta: &[f64]) -> BTreeMap<String, f64> {
    m.param_names().into_iter().zip(theta.iter().copied()).collect()
}

const GRAD_HEADER: [&str; 9] = ["model", "param", "t", "ad_mean", "ad_se", "fd_mean", "fd_se", "rel_err", "noise_floor_flag"];

fn grad_rows(report: &GradReport) -> impl Iterator<Item = Vec<String>> + '_ {
    report.rows.iter().map(move |r| {
        vec![
            report.model.clone(),
            r.param.clone(),
            r.t.to_string(),
            num(r.ad_mean),
            num(r.ad_se),
            num(r.fd_mean),
            num(r.fd_se),
            num(r.rel_err),
            (r.noise_floor as u8).to_string(),
        ]
    })
}

fn summary_rows(report: &GradReport, params: &[String]) -> Vec<Vec<String>> {
    params
        .iter()
        .map(|p| match report.summary(p) {
            Some(s) => vec![
                p.clone(),
                s.steps.to_string(),
                num(s.median_rel_err),
                num(s.median_abs_err),
                num(report.median_abs_err_all(p).unwrap_or(f64::NAN)),
                num(s.sign_agreement),
                num(s.within_factor_two),
                num(s.mean_abs_ratio),
            ],
            None => {
                let mut v = vec![p.clone(), "0".into(), "NaN".into(), "NaN".into()];
                v.push(num(report.median_abs_err_all(p).unwrap_or(f64::NAN)));
                v.extend(std::iter::repeat_n("NaN".to_string(), 3));
                v
            }
        })
        .collect()
}

const SUMMARY_HEADER: [&str; 8] = [
    "param",
    "steps",
    "median_rel_err",
    "median_abs_err",
    "median_abs_err_all",
    "sign_agreement",
    "within_factor_two",
    "mean_abs_ratio",
];

fn gradcheck<M: Model>(m: &M, cfg: &ExperimentConfig, params: &[usize], column: usize, out: &mut Output) -> Result<Value> {
    let theta = m.theta();
    let reference = fd_reference(m, &theta, params, &cfg.fd, column, cfg.master_seed)?;
    let report = compare_against(m, &theta, &cfg.estimator, &reference, cfg.replicates, column, cfg.master_seed)?;
    let names: Vec<String> = params.iter().map(|&i| m.param_names()[i].clone()).collect();
    out.csv("gradcheck.csv", &GRAD_HEADER, grad_rows(&report))?;
    out.csv("gradcheck_summary.csv", &SUMMARY_HEADER, summary_rows(&report, &names))?;
    Ok(json!({
        "output": report.output,
        "estimator": cfg.estimator,
        "fd_epsilon": report.epsilon.iter().cloned().collect::<BTreeMap<_, _>>(),
    }))
}

fn benchmark<M: Model>(m: &M, cfg: &ExperimentConfig, params: &[usize], column: usize, out: &mut Output) -> Result<Value> {
    let theta = m.theta();
    let reference = fd_reference(m, &theta, params, &cfg.fd, column, cfg.master_seed)?;
    let names: Vec<String> = params.iter().map(|&i| m.param_names()[i].clone()).collect();
    let mut detail = Vec::new();
    let mut summary = Vec::new();
    let mut epsilon = BTreeMap::new();
    for est in &cfg.benchmark.estimators {
        let t0 = Instant::now();
        let report = compare_against(m, &theta, est, &reference, cfg.replicates, column, cfg.master_seed)?;
        eprintln!("{}: {:.1} s", est.name(), t0.elapsed().as_secs_f64());
        epsilon.extend(report.epsilon.iter().cloned());
        detail.extend(grad_rows(&report).map(|mut r| {
            r.insert(0, est.name().to_string());
            r
        }));
        summary.extend(summary_rows(&report, &names).into_iter().map(|mut r| {
            r.insert(0, est.name().to_string());
            r
        }));
    }
    let mut header = vec!["estimator"];
    header.extend(GRAD_HEADER);
    out.csv("benchmark.csv", &header, detail)?;
    let mut header = vec!["estimator"];
    header.extend(SUMMARY_HEADER);
    out.csv("benchmark_summary.csv", &header, summary)?;
    Ok(json!({
        "output": m.output_names()[column],
        "estimators": cfg.benchmark.estimators,
        "fd_epsilon": epsilon,
    }))
}

fn sensitivity_table<M: Model>(m: &M, cfg: &ExperimentConfig, out: &mut Output) -> Result<Value> {
    let jac = sensitivity(m, &m.theta(), &cfg.estimator, cfg.replicates, cfg.master_seed)?;
    let outputs = m.output_names();
    let params = m.param_names();
    let mut rows = Vec::new();
    for (c, per_param) in jac.iter().enumerate() {
        for (i, steps) in per_param.iter().enumerate() {
            for (t, s) in steps.iter().enumerate() {
                rows.push(vec![outputs[c].to_string(), params[i].clone(), t.to_string(), num(s.mean), num(s.se)]);
            }
        }
    }
    out.csv("sensitivity.csv", &["output", "param", "t", "mean", "se"], rows)?;
    Ok(json!({ "estimator": cfg.estimator, "theta": param_map(m, &m.theta()) }))
}

struct CalibrationInputs {
    free: Vec<usize>,
    prior: Prior,
    post: Posterior,
    init: Option<Vec<f64>>,
    observed: Vec<Trajectory<f64>>,
}

fn calibration_inputs<M: Model>(m: &M, cfg: &ExperimentConfig) -> Result<CalibrationInputs> {
    let c = &cfg.calibrate;
    let free: Vec<usize> = c
        .free
        .iter()
        .map(|p| param_index(m, p, "calibrate.free"))
        .collect::<Result<_, _>>()?;
    let prior = Prior::new(c.free.clone(), c.priors.clone()).map_err(config_err("calibrate.priors"))?;
    let post = Posterior::new(c.family, prior.bijectors()).map_err(config_err("calibrate.family"))?;
    let init = match &c.init_checkpoint {
        None => None,
        Some(path) => {
            let f = std::fs::File::open(path)
                .map_err(|e| ConfigError(format!("calibrate.init_checkpoint: {}: {e}", path.display())))?;
            let (saved, phi) =
                Posterior::load(BufReader::new(f)).map_err(config_err("calibrate.init_checkpoint"))?;
            if saved != post {
                return Err(ConfigError(
                    "calibrate.init_checkpoint: family or priors differ from the configured posterior".into(),
                )
                .into());
            }
            Some(phi)
        }
    };
    let observed = match &c.observed {
        Observed::Synthetic { seed, count } => (0..*count as u64)
            .map(|r| m.simulate(&m.theta(), &EstimatorKind::StraightThrough, *seed, r))
            .collect::<diffabm::Result<_>>()?,
        Observed::Csv { path } => read_observed(path, &m.output_names())?,
    };
    Ok(CalibrationInputs {
        free,
        prior,
        post,
        init,
        observed,
    })
}

/// Reads trajectories from CSV. Comment lines start with `#`.
fn read_observed(path: &Path, outputs: &[&str]) -> Result<Vec<Trajectory<f64>>, ConfigError> {
    let err = |m: String| ConfigError(format!("calibrate.observed: {}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    let cols: Vec<usize> = outputs
        .iter()
        .map(|o| headers.iter().position(|h| h == *o).ok_or_else(|| err(format!("missing column `{o}`"))))
        .collect::<Result<_, _>>()?;
    let rep_col = headers.iter().position(|h| h == "replicate");
    let mut trajs: BTreeMap<String, Trajectory<f64>> = BTreeMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let key = rep_col.map_or(String::new(), |c| rec[c].to_string());
        let row = cols
            .iter()
            .map(|&c| rec[c].trim().parse::<f64>().map_err(|e| err(format!("record {}: {e}", k + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        trajs.entry(key).or_insert_with(|| Trajectory::new(outputs)).rows.push(row);
    }
    if trajs.is_empty() {
        return Err(err("no data rows".into()));
    }
    Ok(trajs.into_values().collect())
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn calibrate<M: Model>(m: &M, cfg: &ExperimentConfig, inputs: CalibrationInputs, out: &mut Output) -> Result<Value> {
    let c = &cfg.calibrate;
    let mut tc = c.train;
    tc.seed = cfg.master_seed;
    let loss = SimulatorLoss::new(m, inputs.free.clone(), &inputs.observed, cfg.estimator, tc.mmd_samples, tc.loss_weight)?;
    let t0 = Instant::now();
    let every = (tc.epochs / 20).max(1);
    let fit = train_with(&tc, &inputs.post, &inputs.prior, &loss, inputs.init, |row| {
        if row.epoch % every == 0 || row.epoch + 1 == tc.epochs {
            eprintln!(
                "epoch {:>5}  train {:>12.5}  val {:>12.5}  ({:.1} s)",
                row.epoch,
                row.train_loss,
                row.val_loss,
                t0.elapsed().as_secs_f64()
            );
        }
    })
    .context("training diverged")?;

    out.csv(
        "loss_history.csv",
        &["epoch", "train_loss", "val_loss"],
        fit.history
            .iter()
            .map(|r| vec![r.epoch.to_string(), num(r.train_loss), num(r.val_loss)]),
    )?;

    let mut rng = seed_split(cfg.master_seed, stream_id(1, purpose::INIT));
    let draws = inputs.post.sample(&fit.phi, &mut rng, c.posterior_samples)?;
    let mut header = vec!["sample"];
    header.extend(c.free.iter().map(String::as_str));
    out.csv(
        "posterior_samples.csv",
        &header,
        draws.iter().enumerate().map(|(k, d)| {
            let mut v = vec![k.to_string()];
            v.extend(d.iter().map(|&x| num(x)));
            v
        }),
    )?;

    let truth = m.theta();
    let summary: Vec<Vec<String>> = c
        .free
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            col.sort_by(f64::total_cmp);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (col.len() as f64 - 1.0).max(1.0)).sqrt();
            vec![
                name.clone(),
                num(mean),
                num(sd),
                num(quantile(&col, 0.05)),
                num(quantile(&col, 0.5)),
                num(quantile(&col, 0.95)),
                num(truth[inputs.free[j]]),
            ]
        })
        .collect();
    out.csv(
        "posterior_summary.csv",
        &["param", "mean", "sd", "q05", "q50", "q95", "configured"],
        summary,
    )?;
    out.text("checkpoint.txt", |w| Ok(inputs.post.save(&fit.phi, w)?))?;

    Ok(json!({
        "train_seed": tc.seed,
        "best_epoch": fit.best_epoch,
        "observed_trajectories": inputs.observed.len(),
        "bandwidth": loss.bandwidth,
        "flow_parameters": inputs.post.n_params(),
    }))
}
