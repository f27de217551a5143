// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use ltm::bundle::Bundle;
use ltm::model::{parse_model, ModelIR};
use ltm::{analyze, Analysis, AnalysisOptions};

pub const FIXTURES: &[&str] = &[
    "births",
    "population",
    "carrying_capacity",
    "delay3_step",
    "workforce",
    "dominant_loop",
    "weak_coupling",
];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.sdm"))
}

pub fn source(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap()
}

pub fn model(name: &str, overrides: &[(&str, f64)]) -> ModelIR {
    let mut ir = parse_model(&source(name)).unwrap();
    for (k, v) in overrides {
        ir.set_constant(k, *v).unwrap();
    }
    ir
}

pub fn run(name: &str, overrides: &[(&str, f64)]) -> Analysis {
    analyze(&model(name, overrides), &AnalysisOptions::default()).unwrap()
}

pub fn run_src(src: &str) -> Analysis {
    analyze(&parse_model(src).unwrap(), &AnalysisOptions::default()).unwrap()
}

pub fn bundle(name: &str, overrides: &[(&str, f64)]) -> Bundle {
    let a = run(name, overrides);
    let applied: BTreeMap<String, f64> = overrides.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    Bundle::from_analysis(&a, &source(name), &applied, false)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Every elementary cycle, found by trying each ordering of each node
/// subset, rotated to start at its smallest node.
pub fn brute_force_cycles(adj: &[Vec<usize>]) -> std::collections::BTreeSet<Vec<usize>> {
    fn permute(rest: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
        if k == rest.len() {
            f(rest);
            return;
        }
        for i in k..rest.len() {
            rest.swap(k, i);
            permute(rest, k + 1, f);
            rest.swap(k, i);
        }
    }
    let n = adj.len();
    let has = |a: usize, b: usize| adj[a].contains(&b);
    let mut out = std::collections::BTreeSet::new();
    for mask in 1u32..(1 << n) {
        let nodes: Vec<usize> = (0..n).filter(|&v| mask & (1 << v) != 0).collect();
        let first = nodes[0];
        let mut rest = nodes[1..].to_vec();
        permute(&mut rest, 0, &mut |order| {
            let mut cycle = vec![first];
            cycle.extend_from_slice(order);
            let closes = (0..cycle.len()).all(|i| has(cycle[i], cycle[(i + 1) % cycle.len()]));
            if closes {
                out.insert(cycle);
            }
        });
    }
    out
}

/// Successor lists of a seeded random digraph on 1..=8 nodes.
pub fn random_digraph(rng: &mut impl rand::Rng) -> Vec<Vec<usize>> {
    let n = rng.gen_range(1..=8);
    let p: f64 = rng.gen_range(0.1..0.6);
    (0..n)
        .map(|a| (0..n).filter(|&b| (a != b || rng.gen_bool(0.1)) && rng.gen_bool(p)).collect())
        .collect()
}

/// Parameters for [`random_model`].
#[derive(Clone, Debug)]
pub struct ModelSpec {
    /// Per stock: initial value, inflow coefficient, source stock for the
    /// inflow, outflow time constant.
    pub stocks: Vec<(f64, f64, usize, f64)>,
    /// Optional saturating coupling `a * S_i * S_j / (1000 + S_i * S_j)`
    /// added to stock 0's inflow.
    pub coupling: Option<(usize, usize, f64)>,
    /// Constant drain from the last stock, which is then `nonneg`.
    pub drain: Option<f64>,
    pub dt: f64,
}

pub fn model_spec() -> impl proptest::strategy::Strategy<Value = ModelSpec> {
    use proptest::prelude::*;
    let stock = (1.0f64..100.0, 0.0f64..0.5, 0usize..4, 1.0f64..20.0);
    (
        prop::collection::vec(stock, 1..=4),
        prop::option::of((0usize..4, 0usize..4, 0.01f64..1.0)),
        prop::option::of(1.0f64..30.0),
        prop::sample::select(vec![0.25, 0.5, 1.0]),
    )
        .prop_map(|(stocks, coupling, drain, dt)| {
            let n = stocks.len();
            ModelSpec {
                stocks: stocks.into_iter().map(|(i, c, j, tau)| (i, c, j % n, tau)).collect(),
                coupling: coupling.map(|(i, j, a)| (i % n, j % n, a)),
                drain,
                dt,
            }
        })
}

/// `.sdm` text for a spec: a ring of first-order stocks whose inflows
/// draw on other stocks.
pub fn random_model(spec: &ModelSpec) -> String {
    use std::fmt::Write;
    let mut s = format!("sim start=0 stop=10 dt={}\n", spec.dt);
    let n = spec.stocks.len();
    if let Some((i, j, a)) = spec.coupling {
        let _ = writeln!(s, "const a = {a}");
        let _ = writeln!(s, "aux coupling = a * S{i} * S{j} / (1000 + S{i} * S{j})");
    }
    if let Some(d) = spec.drain {
        let _ = writeln!(s, "const drain_rate = {d}");
        let _ = writeln!(s, "flow drain = drain_rate");
    }
    for (k, (init, c, from, tau)) in spec.stocks.iter().enumerate() {
        let _ = writeln!(s, "const c{k} = {c}");
        let _ = writeln!(s, "const tau{k} = {tau}");
        let extra = if k == 0 && spec.coupling.is_some() { " + coupling" } else { "" };
        let _ = writeln!(s, "flow in{k} = c{k} * S{from}{extra}");
        let _ = writeln!(s, "flow out{k} = S{k} / tau{k}");
        let last = k == n - 1 && spec.drain.is_some();
        let flows = if last { format!("+in{k}, -out{k}, -drain") } else { format!("+in{k}, -out{k}") };
        let _ = writeln!(s, "stock S{k} = {init} [{flows}]{}", if last { " nonneg" } else { "" });
    }
    s
}
