// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

use std::fmt::Write;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ltm::exec::Exec;
use ltm::model::{build_causal_graph, expand_macros, parse_model, ModelIR};
use ltm::scores::compute_link_scores;
use ltm::sim::CompiledModel;
use ltm::{analyze, AnalysisOptions};

/// A ring of `n` stocks, each fed by its predecessor and crowded by itself,
/// with a smoothed copy of every stock.
fn ring(n: usize) -> ModelIR {
    let mut s = String::from("sim start=0 stop=100 dt=0.125\nconst k = 0.2\nconst tau = 8\n");
    for i in 0..n {
        let prev = (i + n - 1) % n;
        let _ = writeln!(s, "flow in{i} = k * S{prev} / (1 + S{i} / 500)");
        let _ = writeln!(s, "flow out{i} = S{i} / tau");
        let _ = writeln!(s, "aux seen{i} = SMOOTH1(S{i}, tau)");
        let _ = writeln!(s, "stock S{i} = {} [+in{i}, -out{i}]", 50 + 10 * i);
    }
    parse_model(&s).unwrap()
}

fn bench(c: &mut Criterion) {
    let mut links = c.benchmark_group("link_scores");
    for n in [16, 64] {
        let ir = ring(n);
        let em = expand_macros(&ir).unwrap();
        let g = build_causal_graph(&em).unwrap();
        let lg = g.loop_graph();
        let m = CompiledModel::new(&em).unwrap();
        let tr = m.simulate(&em.sim).unwrap();
        for exec in [Exec::Sequential, Exec::Parallel] {
            links.bench_with_input(BenchmarkId::new(format!("{exec:?}"), n), &exec, |b, &exec| {
                b.iter(|| black_box(compute_link_scores(&m, &g, &lg, &tr, exec)))
            });
        }
    }
    links.finish();

    let mut full = c.benchmark_group("analyze");
    full.sample_size(20);
    let ir = ring(64);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let opts = AnalysisOptions {
            exec,
            ..AnalysisOptions::default()
        };
        full.bench_function(format!("{exec:?}/64"), |b| b.iter(|| black_box(analyze(&ir, &opts).unwrap())));
    }
    full.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
