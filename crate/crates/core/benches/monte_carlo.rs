use cbrisk::estimators::{cb_risk, Variant};
use cbrisk::harness::scenario::build_scenario;
use cbrisk::harness::ExperimentConfig;
use cbrisk::model::make_coupled_draws;
use cbrisk::par::{map_range, map_range_seq};
use cbrisk::{Predictor, RngSeed};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

const REPS: usize = 64;

fn cb_replicates(c: &mut Criterion) {
    let cfg = ExperimentConfig { n: 50, p: 100, s: 5, snr: 0.4, ..ExperimentConfig::default() };
    let truth = build_scenario(&cfg, RngSeed::new(1)).unwrap();
    let model = truth.model().unwrap();
    let ctx = truth.context().unwrap();
    let g: Predictor = "lasso:0.31".parse().unwrap();
    let root = RngSeed::new(2);

    let one = |i: usize| {
        let y = model.sample_data(root.path(&[i as u64, 0]));
        let draws = make_coupled_draws(&y, model.sigma2(), 0.5, 10, root.path(&[i as u64, 1])).unwrap();
        cb_risk(&draws, &g, Some(&ctx), model.sigma2(), Variant::CbDefault).unwrap().value
    };

    let mut group = c.benchmark_group("cb_lasso_64_reps");
    group.sample_size(20);
    group.bench_function("sequential", |b| b.iter(|| black_box(map_range_seq(REPS, one))));
    group.bench_function("parallel", |b| b.iter(|| black_box(map_range(REPS, one))));
    group.finish();
}

criterion_group!(benches, cb_replicates);
criterion_main!(benches);
