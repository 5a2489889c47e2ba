use std::sync::Arc;

use carto_core::corpus::{build_doc_term_graph, BigramConfig, Corpus, IngestConfig};
use carto_core::synth::{planted_corpus, PlantedConfig};
use carto_core::{fit, BipartiteGraph, FitConfig, NestedState, Target};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn planted_graph() -> BipartiteGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (docs, _) = planted_corpus(&PlantedConfig::default(), &mut rng);
    let cfg = IngestConfig {
        bigrams: BigramConfig {
            enabled: false,
            ..Default::default()
        },
        ..Default::default()
    };
    let corpus = Corpus::ingest(&docs, &cfg, "raw").unwrap();
    build_doc_term_graph(&corpus).unwrap()
}

fn bench_delta(c: &mut Criterion) {
    let g = Arc::new(planted_graph());
    let out = fit(g.clone(), &FitConfig::default(), 1).unwrap();
    let state = NestedState::new(g.clone(), &out.state.partition());
    let n = g.num_nodes();
    c.bench_function("delta_dl fresh, every node", |b| {
        b.iter(|| (0..n).filter_map(|v| state.delta_dl(v, Target::Fresh).ok()).sum::<f64>())
    });
}

fn bench_fit(c: &mut Criterion) {
    let g = Arc::new(planted_graph());
    let cfg = FitConfig {
        seeds: 1,
        ..Default::default()
    };
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    group.bench_function("planted corpus, one chain", |b| b.iter(|| fit(g.clone(), &cfg, 1).unwrap().state.sigma()));
    group.finish();
}

criterion_group!(benches, bench_delta, bench_fit);
criterion_main!(benches);
