use rand::Rng;
use serde::{Deserialize, Serialize};

use super::optim::{clip_unit_norm, AdamW, AdamWConfig};
use super::{gvi_objective, pathwise_grad, vargrad, Loss, Posterior, Prior};
use crate::error::{invalid, Error, Result};
use crate::rng::{purpose, seed_split, stream_id};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientKind {
    #[default]
    Pathwise,
    Vargrad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch: usize,
    pub epochs: usize,
    /// Simulations per loss evaluation.
    pub mmd_samples: usize,
    /// Multiplier on the discrepancy relative to the prior term.
    pub loss_weight: f64,
    pub optimizer: AdamWConfig,
    pub norm_clip: bool,
    pub gradient: GradientKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: 5,
            epochs: 500,
            mmd_samples: 2,
            loss_weight: 1.0,
            optimizer: AdamWConfig::default(),
            norm_clip: true,
            gradient: GradientKind::Pathwise,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(invalid("batch", "need at least one sample per step"));
        }
        if self.gradient == GradientKind::Vargrad && self.batch < 2 {
            return Err(invalid("batch", "VarGrad needs at least two samples"));
        }
        if self.mmd_samples == 0 {
            return Err(invalid("mmd_samples", "need at least one simulation"));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(invalid("lr", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    /// Parameters with the lowest validation loss seen.
    pub phi: Vec<f64>,
    pub last_phi: Vec<f64>,
    pub history: Vec<HistoryRow>,
    pub best_epoch: Option<usize>,
}

pub fn train<L: Loss>(
    config: &TrainConfig,
    post: &Posterior,
    prior: &Prior,
    loss: &L,
    init: Option<Vec<f64>>,
) -> Result<TrainResult> {
    train_with(config, post, prior, loss, init, |_| {})
}

/// As [`train`], reporting each epoch to `on_epoch`.
pub fn train_with<L: Loss>(
    config: &TrainConfig,
    post: &Posterior,
    prior: &Prior,
    loss: &L,
    init: Option<Vec<f64>>,
    mut on_epoch: impl FnMut(&HistoryRow),
) -> Result<TrainResult> {
    config.validate()?;
    let mut phi = match init {
        Some(p) => p,
        None => post.init(&mut seed_split(config.seed, stream_id(0, purpose::INIT))),
    };
    if phi.len() != post.n_params() {
        return Err(Error::DimensionMismatch {
            expected: post.n_params(),
            got: phi.len(),
        });
    }
    let train_seed: u64 = seed_split(config.seed, stream_id(0, purpose::SIMULATION)).random();
    let val_seed: u64 = seed_split(config.seed, stream_id(1, purpose::SIMULATION)).random();
    let b = config.batch;
    let mut opt = AdamW::new(config.optimizer, phi.len());
    let mut best = phi.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = None;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = seed_split(config.seed, stream_id(epoch as u64, purpose::FLOW));
        let zs: Vec<Vec<f64>> = (0..b).map(|_| post.base_draw(&mut rng)).collect();
        let draw0 = (epoch * b) as u64;
        let est = match config.gradient {
            GradientKind::Pathwise => pathwise_grad(post, &phi, prior, loss, &zs, train_seed, draw0),
            GradientKind::Vargrad => vargrad(post, &phi, prior, loss, &zs, train_seed, draw0),
        }
        .map_err(|e| match e {
            Error::NonFinite(what) => Error::NonFinite(format!("{what} at epoch {epoch}")),
            other => other,
        })?;
        let mut g = est.grad;
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("gradient at epoch {epoch}")));
        }
        if config.norm_clip {
            clip_unit_norm(&mut g);
        }
        opt.step(&mut phi, &g);

        let mut vrng = seed_split(config.seed, stream_id(epoch as u64, purpose::VALIDATION));
        let vz: Vec<Vec<f64>> = (0..b).map(|_| post.base_draw(&mut vrng)).collect();
        let val = gvi_objective(post, &phi, prior, loss, &vz, val_seed, draw0)?;
        if val < best_val {
            best_val = val;
            best.clone_from(&phi);
            best_epoch = Some(epoch);
        }
        let row = HistoryRow {
            epoch,
            train_loss: est.objective,
            val_loss: val,
        };
        on_epoch(&row);
        history.push(row);
    }
    Ok(TrainResult {
        phi: best,
        last_phi: phi,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::Scalar;
    use crate::calibration::{Bijector, Family, PriorDist};

    struct Quadratic {
        y: f64,
        s: f64,
    }

    impl Loss for Quadratic {
        fn dim(&self) -> usize {
            1
        }
        fn eval<S: Scalar>(&self, theta: &[S], _: u64, _: u64) -> Result<S> {
            let d = theta[0] - self.y;
            Ok(d * d / (2.0 * self.s * self.s))
        }
    }

    fn setup() -> (Posterior, Prior, Quadratic) {
        let post = Posterior::new(Family::DiagonalGaussian, vec![Bijector::Identity]).unwrap();
        let prior = Prior::new(vec!["x".into()], vec![PriorDist::Normal { mean: 0.0, std: 1.0 }]).unwrap();
        (post, prior, Quadratic { y: 2.0, s: 0.5 })
    }

    #[test]
    fn zero_epochs_returns_init() {
        let (post, prior, loss) = setup();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let r = train(&cfg, &post, &prior, &loss, None).unwrap();
        assert!(r.history.is_empty());
        assert_eq!(r.phi, post.init(&mut seed_split(0, stream_id(0, purpose::INIT))));
        assert_eq!(r.best_epoch, None);
    }

    #[test]
    fn both_estimators_reach_the_conjugate_posterior() {
        // posterior N(1.6, 0.2)
        let (post, prior, loss) = setup();
        for (gradient, batch) in [(GradientKind::Pathwise, 5), (GradientKind::Vargrad, 16)] {
            let cfg = TrainConfig {
                epochs: 1500,
                batch,
                gradient,
                optimizer: AdamWConfig {
                    lr: 0.01,
                    ..Default::default()
                },
                ..Default::default()
            };
            let r = train(&cfg, &post, &prior, &loss, None).unwrap();
            assert_eq!(r.history.len(), 1500);
            let (mu, sigma) = (r.last_phi[0], r.last_phi[1].exp());
            assert!((mu - 1.6).abs() < 0.1, "{gradient:?}: mu {mu}");
            assert!((sigma - 0.2f64.sqrt()).abs() < 0.1, "{gradient:?}: sigma {sigma}");
        }
    }

    #[test]
    fn config_checks() {
        let (post, prior, loss) = setup();
        let bad = TrainConfig {
            batch: 1,
            gradient: GradientKind::Vargrad,
            ..Default::default()
        };
        assert!(train(&bad, &post, &prior, &loss, None).is_err());
        let wrong = train(&TrainConfig::default(), &post, &prior, &loss, Some(vec![0.0]));
        assert!(matches!(wrong, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn non_finite_loss_aborts() {
        struct Nan;
        impl Loss for Nan {
            fn dim(&self) -> usize {
                1
            }
            fn eval<S: Scalar>(&self, theta: &[S], _: u64, _: u64) -> Result<S> {
                Ok(theta[0] * f64::NAN)
            }
        }
        let (post, prior, _) = setup();
        let err = train(&TrainConfig::default(), &post, &prior, &Nan, None).unwrap_err();
        assert!(matches!(err, Error::NonFinite(ref m) if m.contains("epoch 0")), "{err}");
    }
}
