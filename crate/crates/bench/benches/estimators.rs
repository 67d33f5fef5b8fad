use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use diffabm::ad::Tape;
use diffabm::calibration::mmd::{median_heuristic, mmd2};
use diffabm::calibration::{Bijector, Family, Posterior};
use diffabm::estimators::random_walk_gradient;
use diffabm::gradcheck::Grad;
use diffabm::models::axtell::{AmofConfig, AmofModel, AmofParams};
use diffabm::models::graph::GraphKind;
use diffabm::models::sir::{SirConfig, SirModel, SirParams};
use diffabm::models::sugarscape::{SugarConfig, SugarModel, SugarParams};
use diffabm::rng::seed_split;
use diffabm::{EstimatorKind, Model};

const ESTIMATORS: [EstimatorKind; 4] = [
    EstimatorKind::StraightThrough,
    EstimatorKind::GumbelSoftmax { tau: 0.1 },
    EstimatorKind::SpaSmoothed,
    EstimatorKind::SpaPruned { samples: 10 },
];

fn dual_theta(theta: &[f64]) -> Vec<Grad> {
    theta.iter().enumerate().map(|(i, &v)| Grad::variable(v, i)).collect()
}

fn random_walk(c: &mut Criterion) {
    let mut g = c.benchmark_group("random_walk_t50_x100");
    for est in ESTIMATORS {
        g.bench_function(est.name(), |b| {
            b.iter(|| random_walk_gradient(0.5, 50, black_box(&est), 100, 1).unwrap())
        });
    }
    g.finish();
}

fn sir(c: &mut Criterion) {
    let m = SirModel::new(
        SirConfig {
            n: 1000,
            steps: 40,
            graph: GraphKind::ErdosRenyi { p_edge: 0.01 },
            graph_seed: 1,
            ..SirConfig::default()
        },
        SirParams::default(),
    )
    .unwrap();
    let th = m.theta();
    let thd = dual_theta(&th);
    let mut g = c.benchmark_group("sir_n1000_t40");
    g.sample_size(20);
    g.bench_function("primal", |b| {
        b.iter(|| m.simulate(black_box(&th), &EstimatorKind::StraightThrough, 1, 0).unwrap())
    });
    for est in ESTIMATORS {
        g.bench_with_input(BenchmarkId::new("dual9", est.name()), &est, |b, est| {
            b.iter(|| m.simulate(black_box(&thd), est, 1, 0).unwrap())
        });
    }
    g.finish();
}

fn other_models(c: &mut Criterion) {
    let amof = AmofModel::new(AmofConfig::default(), AmofParams::default()).unwrap();
    let sugar = SugarModel::new(
        SugarConfig {
            visions: vec![1, 3],
            ..SugarConfig::default()
        },
        SugarParams::default(),
    )
    .unwrap();
    let mut g = c.benchmark_group("models");
    g.sample_size(20);
    let (ta, tad) = (amof.theta(), dual_theta(&amof.theta()));
    g.bench_function("axtell_primal", |b| {
        b.iter(|| amof.simulate(black_box(&ta), &EstimatorKind::StraightThrough, 1, 0).unwrap())
    });
    g.bench_function("axtell_dual9", |b| {
        b.iter(|| amof.simulate(black_box(&tad), &EstimatorKind::StraightThrough, 1, 0).unwrap())
    });
    let (ts, tsd) = (sugar.theta(), dual_theta(&sugar.theta()));
    g.bench_function("sugarscape_primal", |b| {
        b.iter(|| sugar.simulate(black_box(&ts), &EstimatorKind::StraightThrough, 1, 0).unwrap())
    });
    g.bench_function("sugarscape_dual9", |b| {
        b.iter(|| sugar.simulate(black_box(&tsd), &EstimatorKind::StraightThrough, 1, 0).unwrap())
    });
    g.finish();
}

fn flow(c: &mut Criterion) {
    let post = Posterior::new(Family::default(), vec![Bijector::Sigmoid { lo: -3.0, hi: -0.3 }; 3]).unwrap();
    let mut rng = seed_split(4, 0);
    let phi = post.random_phi(&mut rng, 0.3);
    let z = post.base_draw(&mut rng);
    let theta = post.sample_and_log_q::<f64>(&phi, &z).unwrap().0;
    let mut g = c.benchmark_group("flow_default_d3");
    g.bench_function("sample_log_q", |b| b.iter(|| post.sample_and_log_q::<f64>(black_box(&phi), &z).unwrap()));
    g.bench_function("sample_log_q_tape_gradient", |b| {
        b.iter(|| {
            let tape = Tape::new();
            let vars: Vec<_> = phi.iter().map(|&v| tape.var(v)).collect();
            let (_, lq) = post.sample_and_log_q(&vars, &z).unwrap();
            tape.gradient(lq)
        })
    });
    g.bench_function("log_q_inverse", |b| b.iter(|| post.log_q::<f64>(black_box(&phi), &theta).unwrap()));
    g.finish();
}

fn mmd(c: &mut Criterion) {
    let pts = |n: usize, shift: f64| -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![(i as f64 * 0.37).sin() + shift, i as f64 / n as f64]).collect()
    };
    let obs = pts(30, 0.0);
    let sim = pts(60, 0.2);
    let h = median_heuristic(&obs).unwrap();
    c.bench_function("mmd2_60x30", |b| b.iter(|| mmd2(black_box(&sim), &obs, h).unwrap()));
}

criterion_group!(benches, random_walk, sir, other_models, flow, mmd);
criterion_main!(benches);
