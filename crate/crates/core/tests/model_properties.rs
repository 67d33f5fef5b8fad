//! Statistical properties of the reference models that need many replicates.

use diffabm::gradcheck::{central_diff, sensitivity};
use diffabm::models::axtell::{AmofConfig, AmofModel, AmofParams};
use diffabm::models::sir::{SirConfig, SirModel, SirParams};
use diffabm::models::sugarscape::{SugarConfig, SugarModel, SugarParams};
use diffabm::{EstimatorKind, Model};

#[test]
fn effort_preference_gradients_decay() {
    let m = AmofModel::new(AmofConfig::default(), AmofParams::default()).unwrap();
    let jac = sensitivity(&m, &m.theta(), &EstimatorKind::StraightThrough, 200, 11).unwrap();
    let names = m.param_names();
    let output = m.output_names().iter().position(|n| *n == "mean_firm_output").unwrap();
    for p in ["e_alpha", "e_beta"] {
        let i = names.iter().position(|n| n == p).unwrap();
        let g: Vec<f64> = jac[output][i].iter().map(|s| s.mean.abs()).collect();
        let peak = g.iter().cloned().fold(0.0, f64::max);
        let last = *g.last().unwrap();
        assert!(peak > 0.0, "{p}: gradient identically zero");
        assert!(last < 0.1 * peak, "{p}: |grad(T)| = {last} vs max {peak}");
    }
}

/// Mean over steps of SE / |mean|, a scale-free noise level.
fn relative_noise(steps: &[diffabm::stats::MeanSe]) -> f64 {
    let se: f64 = steps.iter().map(|s| s.se).sum();
    let mag: f64 = steps.iter().map(|s| s.mean.abs()).sum();
    se / mag
}

#[test]
fn vision_gradient_variance_grows_and_dominates_on_survival() {
    let m = SugarModel::new(
        SugarConfig {
            visions: vec![1, 3],
            ..SugarConfig::default()
        },
        SugarParams::default(),
    )
    .unwrap();
    let jac = sensitivity(&m, &m.theta(), &EstimatorKind::StraightThrough, 200, 5).unwrap();
    for per_output in &jac {
        for p in &per_output[4..] {
            let (early, late) = (p[5].se, p[p.len() - 1].se);
            assert!(late > 10.0 * early, "vision SE {early} at t=5 vs {late} at T");
        }
    }
    let alive = m.output_names().iter().position(|n| *n == "fraction_alive").unwrap();
    let noise: Vec<f64> = jac[alive].iter().map(|p| relative_noise(p)).collect();
    let shapes = noise[..4].iter().cloned().fold(0.0, f64::max);
    let visions = noise[4..].iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(visions > shapes, "relative noise: shapes ≤ {shapes:.3}, visions ≥ {visions:.3}");
}

#[test]
fn common_random_numbers_reduce_fd_variance() {
    let m = SirModel::new(
        SirConfig {
            n: 1000,
            steps: 40,
            ..SirConfig::default()
        },
        SirParams::default(),
    )
    .unwrap();
    let th = m.theta();
    let eps = m.fd_epsilon(1);
    let se = |crn: bool| -> f64 {
        central_diff(&m, &th, 1, eps, 200, crn, 0, 7)
            .unwrap()
            .iter()
            .map(|s| s.se)
            .sum()
    };
    let (paired, independent) = (se(true), se(false));
    assert!(paired < independent, "CRN {paired} vs independent {independent}");
}
