// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

mod common;

use common::*;
use ltm::loops::{Polarity, Provenance};
use ltm::model::{parse_model, EdgeKind, VarKind};
use ltm::{analyze, AnalysisOptions};

#[test]
fn births_only_has_one_reinforcing_loop() {
    let a = run("births", &[]);
    assert_eq!(a.loops.loops.len(), 1);
    let r1 = a.loops.by_label("R1").unwrap();
    assert_eq!(r1.members, ["Population", "births"]);
    for t in 1..r1.relative.len() {
        assert_eq!(r1.relative[t], 100.0);
    }
    assert!(a.graph.has_edge("Population", "births", EdgeKind::Equation));
    assert!(a.graph.has_edge("births", "Population", EdgeKind::FlowToStock));
}

#[test]
fn births_and_deaths_split_two_to_one() {
    let a = run("population", &[]);
    let r = a.loops.by_label("R1").unwrap();
    let b = a.loops.by_label("B1").unwrap();
    assert_eq!(a.loops.partitions.len(), 1);
    let mut members = a.loops.partitions[0].members.clone();
    members.sort();
    assert_eq!(members, ["Population", "births", "deaths"]);
    for t in 1..r.score.len() {
        // births->Population = 0.1P/0.05P, deaths->Population = -0.05P/0.05P.
        assert!(close(r.score[t], 2.0, 1e-12));
        assert!(close(b.score[t], -1.0, 1e-12));
        assert!(close(r.relative[t], 200.0 / 3.0, 1e-9));
        assert!(close(b.relative[t], -100.0 / 3.0, 1e-9));
    }
}

#[test]
fn equilibrium_reports_no_loops() {
    let a = run("population", &[("average_lifetime", 10.0)]);
    assert!(a.loops.no_loops());
    assert!(a.scores.pair_scores.iter().flatten().all(|&s| s == 0.0));
    assert!(a.loops.loops.iter().all(|l| l.polarity == Polarity::U && !l.active));
    let p = a.trace.series("Population").unwrap();
    assert!(p.iter().all(|&v| v == 100.0));
}

#[test]
fn carrying_capacity_shifts_dominance() {
    let a = run("carrying_capacity", &[]);
    assert_eq!(a.loops.loops.len(), 3);
    let n = a.trace.steps();
    let r1 = a.loops.by_label("R1").unwrap();
    let b1 = a.loops.by_label("B1").unwrap();
    let b2 = a.loops.by_label("B2").unwrap();
    assert_eq!(r1.members, ["Population", "births"]);
    assert_eq!(b1.members, ["Population", "crowding", "effective_lifetime", "deaths"]);
    assert_eq!(b2.members, ["Population", "deaths"]);
    assert!(close(r1.relative[n], 50.0, 1.0));
    assert!(close(b1.relative[n] + b2.relative[n], -50.0, 1.0));
    assert!(b1.relative[1].abs() < 1.0);
    assert!(b1.relative[n].abs() > b2.relative[n].abs());
}

#[test]
fn strongest_path_discovers_all_carrying_capacity_loops() {
    let ir = model("carrying_capacity", &[]);
    let full = analyze(&ir, &AnalysisOptions::default()).unwrap();
    let capped = analyze(
        &ir,
        &AnalysisOptions {
            loop_cap: 1,
            ..AnalysisOptions::default()
        },
    )
    .unwrap();
    assert!(capped.loops.partitions[0].discovered);
    assert!(capped.loops.loops.iter().all(|l| l.provenance == Provenance::StrongestPath));
    let members = |a: &ltm::Analysis| a.loops.loops.iter().map(|l| l.members.clone()).collect::<Vec<_>>();
    assert_eq!(members(&capped), members(&full));
}

#[test]
fn delay3_without_feedback_has_zero_composite() {
    let a = run("delay3_step", &[]);
    assert_eq!(a.expanded.variables.len(), a.ir().variables.len() + 7);
    let input = a.composites.iter().find(|c| c.argument == "input").unwrap();
    assert_eq!(input.pathways.len(), 1);
    assert!(input.score.iter().all(|&s| s == 0.0));
    assert!(a.loops.loops.is_empty());
    // The output does move; only the composite link is zero.
    let out = a.trace.series("shipments").unwrap();
    assert!(out.last().unwrap() - out[0] > 4.0);
}

#[test]
fn delay3_tau_composite_is_the_largest_pathway() {
    let src = "sim start=0 stop=30 dt=0.25
flow ramp = 0.5 - STEP(0.7, 10)
stock delay_time = 3 [+ramp]
flow orders = 10 - STEP(9.5, 6)
aux shipments = DELAY3(orders, delay_time)
";
    let a = run_src(src);
    let tau = a.composites.iter().find(|c| c.argument == "tau").unwrap();
    assert_eq!(tau.pathways.len(), 3);
    let mut switched = std::collections::BTreeSet::new();
    for t in 0..tau.score.len() {
        let mut best = 0.0f64;
        for pw in &tau.pathways {
            let mut prod = 1.0;
            for w in pw.windows(2) {
                prod *= a.pair_score(&w[0], &w[1]).unwrap()[t];
            }
            if prod.abs() > best.abs() {
                best = prod;
            }
        }
        assert_eq!(tau.score[t], best, "step {t}");
        if best != 0.0 {
            switched.insert(tau.chosen[t]);
        }
    }
    assert_eq!(switched.len(), 3, "argmax should visit every pathway");
}

#[test]
fn workforce_source_shape() {
    let ir = model("workforce", &[]);
    assert_eq!(ir.variables.len(), 11);
    let stocks: Vec<_> = ir.variables.iter().filter(|v| v.kind.is_stock_like()).collect();
    assert_eq!(stocks.len(), 2);
    assert_eq!(ir.get("Apprentices").unwrap().kind, VarKind::Conveyor);
    assert!(ir.get("Workers").unwrap().stock.as_ref().unwrap().nonneg);
    let a = run("workforce", &[]);
    assert!(a.graph.has_edge("Workers", "leaving", EdgeKind::StockConstraint));
}

fn active_loops(a: &ltm::Analysis) -> Vec<(Polarity, Vec<String>)> {
    a.loops.loops.iter().filter(|l| l.active).map(|l| (l.polarity, l.members.clone())).collect()
}

#[test]
fn workforce_case_one_has_two_balancing_loops() {
    let a = run("workforce", &[]);
    let active = active_loops(&a);
    assert_eq!(active.len(), 2);
    assert!(active.iter().all(|(p, _)| *p == Polarity::B));
    assert!(a.trace.binding("Workers").unwrap().iter().all(|b| !b));
    assert!(a.pair_score("Workers", "leaving").unwrap().iter().all(|&s| s == 0.0));
    let drain = a.pair_score("Apprentices", "finishing_training").unwrap();
    assert!(drain.iter().any(|&s| s != 0.0));
}

#[test]
fn workforce_case_two_exposes_constraint_loops() {
    let a = run("workforce", &[("time_to_adjust", 2.0)]);
    let binding = a.trace.binding("Workers").unwrap();
    assert!(binding.iter().zip(&a.trace.time).any(|(&b, &t)| b && t > 5.0));
    let active = active_loops(&a);
    assert_eq!(active.len(), 4);
    let has = |p: Polarity, m: &[&str]| active.iter().any(|(q, ms)| *q == p && ms.iter().map(String::as_str).eq(m.iter().copied()));
    assert!(has(Polarity::B, &["Workers", "leaving"]));
    assert!(has(Polarity::R, &["Apprentices", "finishing_training", "Workers", "leaving", "hiring"]));
    assert!(has(Polarity::B, &["Apprentices", "finishing_training"]));
    assert!(has(Polarity::B, &["Apprentices", "finishing_training", "Workers", "adjustment", "hiring"]));
    let c = a.pair_score("Workers", "leaving").unwrap();
    for (t, &s) in c.iter().enumerate() {
        if !binding[t] {
            assert_eq!(s, 0.0, "constraint scored while slack at step {t}");
        }
    }
    assert!(c.iter().any(|&s| s != 0.0));
    let workers = a.trace.series("Workers").unwrap();
    assert!(workers.iter().all(|&w| w >= 0.0));
}

#[test]
fn conveyor_scores_like_its_surrogate() {
    // Transit time varies, so both the conveyor and transit links move.
    let src = "sim start=0 stop=12 dt=0.5
flow inflow = 10 + STEP(5, 2)
aux transit = 3 + STEP(1, 6)
conveyor C = 20 [+inflow, -outflow] transit=transit
";
    let a = run_src(src);
    let c = a.trace.series("C").unwrap();
    let tau = a.trace.series("transit").unwrap();
    let got = a.pair_score("C", "outflow").unwrap();
    let got_tau = a.pair_score("transit", "outflow").unwrap();
    for t in 1..c.len() {
        let dz = c[t] / tau[t] - c[t - 1] / tau[t - 1];
        let base = c[t - 1] / tau[t - 1];
        let expect = |dx: f64, dxz: f64| {
            if dz == 0.0 || dx == 0.0 || dxz == 0.0 {
                0.0
            } else {
                (dxz / dz).abs() * (dxz / dx).signum()
            }
        };
        assert!(close(got[t], expect(c[t] - c[t - 1], c[t] / tau[t - 1] - base), 1e-12), "step {t}");
        assert!(close(got_tau[t], expect(tau[t] - tau[t - 1], c[t - 1] / tau[t] - base), 1e-12), "step {t}");
    }
    assert!(got.iter().any(|&s| s != 0.0));
    assert!(got_tau.iter().any(|&s| s != 0.0));
}

#[test]
fn conveyor_matches_first_order_relation_on_equal_content() {
    // S shadows C exactly (dyadic values keep the arithmetic exact), and
    // `first_order` is the explicit relation S / transit.
    let a = run_src(
        "sim start=0 stop=12 dt=0.5
flow inflow = 10 + STEP(5, 2)
aux transit = 3 + STEP(1, 6)
conveyor C = 30 [+inflow, -outflow] transit=transit
flow shadow_in = inflow
flow shadow_out = outflow
stock S = 30 [+shadow_in, -shadow_out]
aux first_order = S / transit
",
    );
    assert_eq!(a.trace.series("C").unwrap(), a.trace.series("S").unwrap());
    assert_eq!(a.pair_score("C", "outflow").unwrap(), a.pair_score("S", "first_order").unwrap());
    assert_eq!(a.pair_score("transit", "outflow").unwrap(), a.pair_score("transit", "first_order").unwrap());
    assert!(a.pair_score("C", "outflow").unwrap().iter().any(|&s| s != 0.0));
}

#[test]
fn declared_weak_loop_is_reported_after_fallback() {
    // Partition 0: two strong self-coupled stocks and the weak loop that
    // crosses between them. Partition 1: one loop.
    let src = "sim start=0 stop=10 dt=0.5
flow fa = 0.2 * A + 0.001 * B
flow fb = 0.2 * B + 0.001 * A
stock A = 10 [+fa]
stock B = 20 [+fb]
flow g = 0.1 * C
stock C = 5 [+g]
loopscore weak_loop = A -> fb -> B -> fa
";
    let ir = parse_model(src).unwrap();
    let a = analyze(
        &ir,
        &AnalysisOptions {
            loop_cap: 1,
            ..AnalysisOptions::default()
        },
    )
    .unwrap();
    assert_eq!(a.loops.partitions.len(), 2);
    let weak = a.loops.loops.iter().find(|l| l.members == ["A", "fb", "B", "fa"]).unwrap();
    assert_eq!(weak.provenance, Provenance::UserDeclared);
    assert_eq!(weak.declared_name.as_deref(), Some("weak_loop"));
    assert!(weak.mean_abs_relative > 0.0 && weak.mean_abs_relative < 1.0);
    let undeclared = analyze(
        &parse_model(&src.replace("loopscore weak_loop = A -> fb -> B -> fa\n", "")).unwrap(),
        &AnalysisOptions {
            loop_cap: 1,
            ..AnalysisOptions::default()
        },
    )
    .unwrap();
    assert_eq!(undeclared.loops.loops.len(), 3);
    assert!(undeclared.loops.loops.iter().all(|l| l.members.len() == 2));
}

#[test]
fn declared_non_cycle_is_rejected() {
    let src = "flow births = 0.1 * Population
stock Population = 100 [+births]
const k = 1
aux y = k * Population
loopscore bad = Population -> y
";
    let err = analyze(&parse_model(src).unwrap(), &AnalysisOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn pathscore_is_the_edge_product() {
    let src = "sim start=0 stop=5 dt=1
const birth_rate = 0.1
const average_lifetime = 20
flow births = birth_rate * Population
flow deaths = Population / average_lifetime
stock Population = 100 [+births, -deaths]
pathscore one = deaths -> Population
pathscore two = deaths -> Population -> births
";
    let a = run_src(src);
    let one = &a.paths[0].score;
    let two = &a.paths[1].score;
    assert_eq!(one.as_slice(), a.edge_score("deaths", "Population").unwrap());
    // deaths -> Population is -1 and Population -> births is +1.
    assert!(two[1..].iter().all(|&s| close(s, -1.0, 1e-12)));
}

#[test]
fn pathscore_through_a_macro_uses_the_composite() {
    let src = "sim start=0 stop=20 dt=0.5
const tau = 4
flow inflow = 0.1 * S
aux smoothed = SMOOTH1(S, tau)
flow outflow = 0.05 * smoothed
stock S = 100 [+inflow, -outflow]
pathscore through = S -> smoothed -> outflow
";
    let a = run_src(src);
    let comp = a.composites.iter().find(|c| c.argument == "input").unwrap();
    let direct = a.edge_score("S", "smoothed").unwrap();
    assert_eq!(comp.score.as_slice(), direct);
    let path = &a.paths[0].score;
    let out = a.edge_score("smoothed", "outflow").unwrap();
    for t in 0..path.len() {
        assert_eq!(path[t], direct[t] * out[t]);
    }
    assert!(path.iter().any(|&s| s != 0.0));
}
