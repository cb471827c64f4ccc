use asrdec_bench::{fixture, lg_graph, word_model, word_pairs};
use asrdec_core::*;
use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use std::hint::black_box;

fn ctc_search(c: &mut Criterion) {
    let fx = fixture();
    let mut group = c.benchmark_group("ctc_prefix_beam_search");
    for beam in [4, 8, 16] {
        let cfg = FusionConfig {
            beam,
            lm_weight: 0.75,
            ..FusionConfig::default()
        };
        group.bench_with_input(BenchmarkId::new("fused", beam), &cfg, |b, cfg| {
            b.iter(|| {
                for post in &fx.posteriors[..10] {
                    black_box(ctc_prefix_beam_search(post, Some(&fx.unit_lm), cfg, 0).unwrap());
                }
            })
        });
    }
    let cfg = FusionConfig {
        beam: 8,
        lm_weight: 0.0,
        ..FusionConfig::default()
    };
    group.bench_function("no_lm/8", |b| {
        b.iter(|| {
            for post in &fx.posteriors[..10] {
                black_box(ctc_prefix_beam_search(post, None, &cfg, 0).unwrap());
            }
        })
    });
    group.finish();
}

fn losses(c: &mut Criterion) {
    let fx = fixture();
    c.bench_function("ctc_loss/10_utterances", |b| {
        b.iter(|| {
            for (post, target) in fx.posteriors.iter().zip(&fx.targets).take(10) {
                black_box(ctc_loss(post, target, 0).unwrap());
            }
        })
    });
}

fn kn_training(c: &mut Criterion) {
    let fx = fixture();
    let mut group = c.benchmark_group("kn_training");
    group.sample_size(20);
    for order in [2, 3, 5] {
        group.bench_with_input(BenchmarkId::from_parameter(order), &order, |b, &order| {
            b.iter(|| black_box(word_model(&fx.sentences, order)))
        });
    }
    group.finish();
}

fn graphs(c: &mut Criterion) {
    let fx = fixture();
    let mut group = c.benchmark_group("wfst");
    group.sample_size(20);
    group.bench_function("build_lg", |b| b.iter(|| black_box(lg_graph(&fx.inventory, &fx.word_lm))));
    let cfg = FusionConfig {
        beam: 8,
        lm_weight: 0.5,
        ..FusionConfig::default()
    };
    group.bench_function("tlg_decode/10_utterances", |b| {
        b.iter(|| {
            for post in &fx.posteriors[..10] {
                black_box(tlg_decode(post, &fx.lg, 0, &cfg).unwrap());
            }
        })
    });
    group.finish();
}

fn scoring(c: &mut Criterion) {
    let mut group = c.benchmark_group("edit_distance");
    for len in [10, 50, 200] {
        group.bench_with_input(BenchmarkId::from_parameter(len), &len, |b, &len| {
            b.iter_batched(
                || word_pairs(20, len, 11),
                |pairs| {
                    for (r, h) in &pairs {
                        black_box(edit_distance(r, h));
                    }
                },
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, ctc_search, losses, kn_training, graphs, scoring);
criterion_main!(benches);
