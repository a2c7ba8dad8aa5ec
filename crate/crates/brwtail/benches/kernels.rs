//! Monte Carlo kernel benchmarks: sequential chunk loop vs rayon pools.
//!
//! Every estimator produces bit-identical output for all worker settings,
//! so these runs measure scheduling overhead and speedup only. Build with
//! `--no-default-features` to measure the pure sequential fallback build.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use brwtail::brw::{sample_max_ensemble, BrwConfig};
use brwtail::laws::{solve_and_tilt, validate_offspring, StepLaw, TiltedStepLaw};
use brwtail::walk::{ladder_stats, sample_global_min, SimParams};
use brwtail::Workers;

fn ref_tilted() -> TiltedStepLaw {
    let step = StepLaw::from_atoms(&[(-1.0, 0.5), (1.0, 0.5)]).unwrap();
    solve_and_tilt(&step, 0.8).unwrap()
}

fn ref_config() -> BrwConfig {
    let offspring = validate_offspring(&[0.6, 0.0, 0.4]).unwrap();
    let step = StepLaw::from_atoms(&[(-1.0, 0.5), (1.0, 0.5)]).unwrap();
    BrwConfig::new(offspring, step)
}

fn worker_modes() -> Vec<(&'static str, Workers)> {
    vec![
        ("seq", Workers::Sequential),
        ("pool1", Workers::Fixed(1)),
        ("pool2", Workers::Fixed(2)),
        ("auto", Workers::Auto),
    ]
}

fn bench_ladder(c: &mut Criterion) {
    let tilted = ref_tilted();
    let params = SimParams::default();
    let mut group = c.benchmark_group("ladder_stats_50k");
    for (name, workers) in worker_modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &workers, |b, &w| {
            b.iter(|| ladder_stats(&tilted, &[1.0], 50_000, 7, w, &params).unwrap())
        });
    }
    group.finish();
}

fn bench_global_min(c: &mut Criterion) {
    let tilted = ref_tilted();
    let params = SimParams::default();
    let mut group = c.benchmark_group("global_min_20k");
    for (name, workers) in worker_modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &workers, |b, &w| {
            b.iter(|| sample_global_min(&tilted, 20_000, 7, w, &params).unwrap())
        });
    }
    group.finish();
}

fn bench_tree_ensemble(c: &mut Criterion) {
    let config = ref_config();
    let mut group = c.benchmark_group("brw_maxima_50k");
    for (name, workers) in worker_modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &workers, |b, &w| {
            b.iter(|| sample_max_ensemble(&config, 50_000, 7, w, false).unwrap())
        });
    }
    group.finish();
}

criterion_group!(kernels, bench_ladder, bench_global_min, bench_tree_ensemble);
criterion_main!(kernels);
