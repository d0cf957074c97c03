//! Parallel versus sequential fan-out on the embarrassingly parallel
//! workloads: replicate batches, multi-chain sampling and the threshold
//! candidate scan. Single fits are sequential by construction, so the
//! speedup lives entirely in these outer loops.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use repa_core::exec::{map_indexed, ExecMode};
use repa_core::extremes::{min_distance_threshold_with, sample_power_law};
use repa_core::mcmc::{derive_seeds, gibbs_run, PriorConfig, RunOptions};
use repa_core::params::{GlobalParams, MixtureParams};
use repa_core::simulate::{default_seed, generate};
use repa_core::variational::{vem_run, VemInitKind, VemOptions};

fn dense_log(n: usize, seed: u64) -> repa_core::graph::EventLog {
    let theta = GlobalParams::new(0.15, 0.8, 1.0, 1.0).unwrap();
    let mix =
        MixtureParams::new(vec![0.8, 0.2], vec![vec![0.5, 0.9], vec![0.05, 0.2]]).unwrap();
    generate(&theta, &mix, &default_seed(), None, n, seed).unwrap().0
}

fn bench_replicate_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("replicate_batch_simulate_vem");
    group.sample_size(10);
    let theta = GlobalParams::new(0.15, 0.8, 1.0, 1.0).unwrap();
    let mix =
        MixtureParams::new(vec![0.8, 0.2], vec![vec![0.5, 0.9], vec![0.05, 0.2]]).unwrap();
    for mode in [ExecMode::Sequential, ExecMode::Parallel] {
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{mode:?}")),
            &mode,
            |b, &mode| {
                b.iter(|| {
                    let fits = map_indexed(8, mode, |i| {
                        let (log, _) =
                            generate(&theta, &mix, &default_seed(), None, 3_000, i as u64)
                                .unwrap();
                        let opts = VemOptions {
                            init: VemInitKind::Random,
                            ..VemOptions::default()
                        };
                        vem_run(&log, 2, &opts, i as u64).unwrap().elbo
                    });
                    black_box(fits)
                })
            },
        );
    }
    group.finish();
}

fn bench_multi_chain(c: &mut Criterion) {
    let mut group = c.benchmark_group("four_gibbs_chains");
    group.sample_size(10);
    let log = dense_log(3_000, 7);
    for mode in [ExecMode::Sequential, ExecMode::Parallel] {
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{mode:?}")),
            &mode,
            |b, &mode| {
                b.iter(|| {
                    let seeds = derive_seeds(11, 4);
                    let chains = map_indexed(seeds.len(), mode, |i| {
                        gibbs_run(
                            &log,
                            2,
                            PriorConfig::default(),
                            RunOptions::new(300).burn(150).store_labels(false),
                            seeds[i],
                        )
                        .unwrap()
                        .post_burn()
                        .len()
                    });
                    black_box(chains)
                })
            },
        );
    }
    group.finish();
}

fn bench_threshold_scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("threshold_candidate_scan");
    group.sample_size(10);
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let draws = sample_power_law(20, 2.2, 200_000, &mut rng);
    for mode in [ExecMode::Sequential, ExecMode::Parallel] {
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{mode:?}")),
            &mode,
            |b, &mode| b.iter(|| black_box(min_distance_threshold_with(&draws, mode).unwrap())),
        );
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_replicate_batch,
    bench_multi_chain,
    bench_threshold_scan
);
criterion_main!(benches);
