use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use idnc_bench::{frame_config, mid_frame_state};
use idnc_core::graph::{IdncGraph, Layer};
use idnc_core::selection::{
    completion_weights, exact_max_weight_clique, select_transmission, weighted_vertex_search,
    SecondaryWeighting, SelectionParams, WeightRefresh,
};
use idnc_core::sim::{run_frame, PolicyKind};

fn graph_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_graph");
    for (m, n) in [(20, 15), (60, 30), (100, 30)] {
        let (state, _) = mid_frame_state(m, n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{m}x{n}")), &state, |b, s| {
            b.iter(|| IdncGraph::build_unhidden(black_box(s.sfm())))
        });
    }
    group.finish();
}

fn search(c: &mut Criterion) {
    let mut group = c.benchmark_group("wvs");
    for (m, n) in [(20, 15), (60, 30)] {
        let (state, channels) = mid_frame_state(m, n, 2);
        let graph = IdncGraph::build_unhidden(state.sfm());
        let weights = completion_weights(&graph, &channels, 3.0, SecondaryWeighting::Psi);
        let eligible = graph.active_in(Layer::Primary);
        group.bench_function(format!("iterative/{m}x{n}"), |b| {
            b.iter(|| weighted_vertex_search(&graph, &weights, &eligible, WeightRefresh::Iterative))
        });
        group.bench_function(format!("select/{m}x{n}"), |b| {
            b.iter(|| {
                let mut g = graph.clone();
                select_transmission(&mut g, &state, &channels, &SelectionParams::default()).unwrap()
            })
        });
    }
    let (state, channels) = mid_frame_state(6, 6, 3);
    let graph = IdncGraph::build_unhidden(state.sfm());
    let weights = completion_weights(&graph, &channels, 3.0, SecondaryWeighting::Psi);
    let eligible = graph.active_in(Layer::Primary);
    group.bench_function("exact/6x6", |b| {
        b.iter(|| exact_max_weight_clique(&graph, &weights, &eligible).unwrap())
    });
    group.finish();
}

fn frames(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_frame");
    group.sample_size(20);
    for policy in [PolicyKind::Pf, PolicyKind::Ml, PolicyKind::WvsDd] {
        let config = frame_config(20, 15, policy, 4);
        group.bench_function(format!("{policy}/20x15"), |b| {
            b.iter(|| run_frame(black_box(&config), 9).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, graph_build, search, frames);
criterion_main!(benches);
