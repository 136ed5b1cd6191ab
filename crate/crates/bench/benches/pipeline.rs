use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cotrade::clustering::spectral_clustering;
use cotrade::cooccurrence::build_daily_matrix;
use cotrade::covariance::{cluster_block_estimate, realized_covariance};
use cotrade::network_regression::qap_test;
use cotrade::portfolio::mean_variance_weights;
use cotrade::synth::{gen_day_tapes, gen_factor_returns, SynthConfig};
use cotrade::{DirectionFilter, Measure};

const ALL: (DirectionFilter, DirectionFilter) = (DirectionFilter::All, DirectionFilter::All);

fn cooccurrence(c: &mut Criterion) {
    let config = SynthConfig::default();
    let tapes = gen_day_tapes(&config, 0).unwrap();
    let mut group = c.benchmark_group("daily_matrix");
    group.sample_size(10);
    for measure in [Measure::Count, Measure::Volume] {
        group.bench_function(BenchmarkId::from_parameter(format!("{measure:?}")), |b| {
            b.iter(|| build_daily_matrix(black_box(&tapes), config.delta_ns, ALL, measure).unwrap())
        });
    }
    group.finish();
}

fn clustering(c: &mut Criterion) {
    let config = SynthConfig::default();
    let tapes = gen_day_tapes(&config, 0).unwrap();
    let m = build_daily_matrix(&tapes, config.delta_ns, ALL, Measure::Count).unwrap();
    c.bench_function("spectral_clustering/50x5", |b| {
        b.iter(|| spectral_clustering(black_box(&m.values), config.n_clusters, 7).unwrap())
    });
}

fn covariance(c: &mut Criterion) {
    let mut group = c.benchmark_group("covariance");
    for n in [50, 120] {
        let config = SynthConfig {
            n_symbols: n,
            n_clusters: 5,
            days: 1,
            ..SynthConfig::default()
        };
        let world = gen_factor_returns(&config).unwrap();
        let realized = realized_covariance(&world.panels[0]).unwrap();
        group.bench_with_input(BenchmarkId::new("realized", n), &world.panels[0], |b, panel| {
            b.iter(|| realized_covariance(black_box(panel)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("cluster_block", n), &realized.matrix, |b, sigma| {
            b.iter(|| cluster_block_estimate(black_box(sigma), config.n_factors, &world.planted).unwrap())
        });
        let estimate = cluster_block_estimate(&realized.matrix, config.n_factors, &world.planted).unwrap();
        for l in [3.0, f64::INFINITY] {
            group.bench_with_input(
                BenchmarkId::new(format!("gmv_l{l}"), n),
                &estimate.matrix,
                |b, sigma| b.iter(|| mean_variance_weights(black_box(sigma), l).unwrap()),
            );
        }
    }
    group.finish();
}

fn regression(c: &mut Criterion) {
    let config = SynthConfig::default();
    let tapes = gen_day_tapes(&config, 0).unwrap();
    let x = build_daily_matrix(&tapes, config.delta_ns, ALL, Measure::Count)
        .unwrap()
        .values;
    let world = gen_factor_returns(&SynthConfig { days: 1, ..config }).unwrap();
    let y = realized_covariance(&world.panels[0]).unwrap().matrix;
    let mut group = c.benchmark_group("qap");
    group.sample_size(10);
    group.bench_function("50x50/500", |b| b.iter(|| qap_test(black_box(&y), &x, 500, 1).unwrap()));
    group.finish();
}

criterion_group!(benches, cooccurrence, clustering, covariance, regression);
criterion_main!(benches);
