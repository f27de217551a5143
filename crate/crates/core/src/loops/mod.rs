// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Feedback loops over the reporting graph: cycle partitions, loop and
//! relative loop scores, and polarity labels.

pub mod johnson;
pub mod strongest;

use std::collections::BTreeMap;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::exec::Exec;
use crate::model::graph::LoopGraph;
use crate::model::DeclaredPath;
use crate::scores::{confidence, product_series, LinkScores};
pub use johnson::{elementary_circuits, TooManyLoops};

/// Polarity confidence above which a mixed loop or link counts as
/// predominantly one polarity.
pub const CONFIDENCE_CUTOFF: f64 = 0.99;

pub const DEFAULT_LOOP_CAP: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub id: usize,
    pub members: Vec<String>,
    /// True when enumeration hit the cap and loops were discovered instead.
    pub discovered: bool,
    /// Steps where at least one loop of the partition has a nonzero score.
    pub active: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    R,
    B,
    Ru,
    Bu,
    U,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::R => "R",
            Polarity::B => "B",
            Polarity::Ru => "Ru",
            Polarity::Bu => "Bu",
            Polarity::U => "U",
        }
    }

    pub fn is_reinforcing(self) -> bool {
        matches!(self, Polarity::R | Polarity::Ru)
    }

    pub fn is_balancing(self) -> bool {
        matches!(self, Polarity::B | Polarity::Bu)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Enumerated,
    StrongestPath,
    UserDeclared,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopRecord {
    pub id: String,
    pub label: String,
    pub polarity: Polarity,
    /// Cycle rotated so its lexicographically smallest variable comes first.
    pub members: Vec<String>,
    pub partition: usize,
    pub score: Vec<f64>,
    /// Percent, signed.
    pub relative: Vec<f64>,
    pub mean_abs_relative: f64,
    pub confidence: f64,
    pub active: bool,
    pub provenance: Provenance,
    pub declared_name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopAnalysis {
    pub partitions: Vec<Partition>,
    pub loops: Vec<LoopRecord>,
}

impl LoopAnalysis {
    /// True when no loop has a nonzero score at any step.
    pub fn no_loops(&self) -> bool {
        self.loops.iter().all(|l| !l.active)
    }

    pub fn by_label(&self, label: &str) -> Option<&LoopRecord> {
        self.loops.iter().find(|l| l.label == label)
    }
}

/// Strongly connected components that contain at least one cycle, in order
/// of their first member. Members are node indices in ascending order.
pub fn find_partitions(lg: &LoopGraph) -> Vec<Vec<usize>> {
    let mut g = DiGraph::<(), ()>::with_capacity(lg.len(), lg.edges.len());
    let nodes: Vec<_> = (0..lg.len()).map(|_| g.add_node(())).collect();
    for e in &lg.edges {
        g.add_edge(nodes[e.from], nodes[e.to], ());
    }
    let mut parts: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut c: Vec<usize> = c.into_iter().map(|ix| ix.index()).collect();
            c.sort_unstable();
            c
        })
        .filter(|c| c.len() > 1 || lg.edge(c[0], c[0]).is_some())
        .collect();
    parts.sort();
    parts
}

fn canonical(cycle: &[usize], names: &[String]) -> Vec<usize> {
    let k = (0..cycle.len()).min_by(|&a, &b| names[cycle[a]].cmp(&names[cycle[b]])).unwrap_or(0);
    let mut c = cycle.to_vec();
    c.rotate_left(k);
    c
}

/// Polarity and confidence of a loop score series.
pub fn classify(score: &[f64]) -> (Polarity, f64, bool) {
    let r: f64 = score.iter().filter(|&&s| s > 0.0).sum();
    let b: f64 = score.iter().filter(|&&s| s < 0.0).sum();
    let conf = confidence(r, b);
    let p = match (r > 0.0, b < 0.0) {
        (false, false) => return (Polarity::U, 0.0, false),
        (true, false) => Polarity::R,
        (false, true) => Polarity::B,
        (true, true) if conf > CONFIDENCE_CUTOFF => {
            if r > b.abs() {
                Polarity::Ru
            } else {
                Polarity::Bu
            }
        }
        _ => Polarity::U,
    };
    (p, conf, true)
}

#[derive(Clone, Copy, Debug)]
pub struct LoopOptions {
    pub cap: usize,
    pub exec: Exec,
}

impl Default for LoopOptions {
    fn default() -> Self {
        LoopOptions {
            cap: DEFAULT_LOOP_CAP,
            exec: Exec::default(),
        }
    }
}

pub fn analyze_loops(
    lg: &LoopGraph,
    scores: &LinkScores,
    declared: &[DeclaredPath],
    opts: LoopOptions,
) -> Result<LoopAnalysis, AnalysisError> {
    let len = scores.pair_scores.first().map_or(1, Vec::len);
    let parts = find_partitions(lg);
    let mut part_of = vec![None; lg.len()];
    for (p, members) in parts.iter().enumerate() {
        for &m in members {
            part_of[m] = Some(p);
        }
    }

    // cycle -> (partition, provenance, declared name)
    let mut cycles: BTreeMap<Vec<usize>, (usize, Provenance, Option<String>)> = BTreeMap::new();
    let mut discovered = vec![false; parts.len()];
    let edge_pairs: Vec<(usize, usize)> = lg.edges.iter().map(|e| (e.from, e.to)).collect();
    let edge_scores: Vec<Vec<f64>> = scores.edges.iter().map(|e| e.score.clone()).collect();
    let found: Vec<(Vec<Vec<usize>>, bool)> = opts.exec.map(parts.len(), |p| {
        let members = &parts[p];
        let local: BTreeMap<usize, usize> = members.iter().enumerate().map(|(i, &m)| (m, i)).collect();
        let adj: Vec<Vec<usize>> = members
            .iter()
            .map(|&m| {
                let mut succ: Vec<usize> = lg
                    .edges
                    .iter()
                    .filter(|e| e.from == m)
                    .filter_map(|e| local.get(&e.to).copied())
                    .collect();
                succ.sort_unstable();
                succ
            })
            .collect();
        match elementary_circuits(&adj, opts.cap) {
            Ok(cs) => (cs.into_iter().map(|c| c.into_iter().map(|i| members[i]).collect()).collect(), false),
            Err(TooManyLoops { .. }) => (
                strongest::strongest_loops(&edge_pairs, &edge_scores, members, &lg.names, 1..len)
                    .into_iter()
                    .collect(),
                true,
            ),
        }
    });
    for (p, (cs, fell_back)) in found.into_iter().enumerate() {
        discovered[p] = fell_back;
        let prov = if fell_back {
            Provenance::StrongestPath
        } else {
            Provenance::Enumerated
        };
        for c in cs {
            cycles.insert(canonical(&c, &lg.names), (p, prov, None));
        }
    }
    for d in declared {
        let nodes = d
            .vars
            .iter()
            .map(|v| lg.node(v).ok_or_else(|| AnalysisError::UnknownVariable(v.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let closed = (0..nodes.len()).all(|i| lg.edge(nodes[i], nodes[(i + 1) % nodes.len()]).is_some());
        let distinct = {
            let mut s = nodes.clone();
            s.sort_unstable();
            s.dedup();
            s.len() == nodes.len()
        };
        if !closed || !distinct {
            return Err(AnalysisError::NotACycle(d.vars.clone()));
        }
        let p = part_of[nodes[0]].expect("a cycle lies in a partition");
        cycles.insert(canonical(&nodes, &lg.names), (p, Provenance::UserDeclared, Some(d.name.clone())));
    }

    let entries: Vec<_> = cycles.into_iter().collect();
    let loop_scores: Vec<Vec<f64>> = opts.exec.map(entries.len(), |i| {
        let c = &entries[i].0;
        let edges = (0..c.len()).map(|k| lg.edge(c[k], c[(k + 1) % c.len()]).expect("cycle edges exist"));
        product_series(edges.map(|e| scores.edges[e].score.as_slice()), len)
    });

    let mut active = vec![vec![false; len]; parts.len()];
    let mut totals = vec![vec![0.0; len]; parts.len()];
    for (i, (_, (p, _, _))) in entries.iter().enumerate() {
        for t in 0..len {
            totals[*p][t] += loop_scores[i][t].abs();
        }
    }
    for p in 0..parts.len() {
        for t in 0..len {
            active[p][t] = totals[p][t] > 0.0;
        }
    }

    let mut loops: Vec<LoopRecord> = entries
        .iter()
        .zip(loop_scores)
        .enumerate()
        .map(|(i, ((cycle, (p, prov, name)), score))| {
            let relative: Vec<f64> = (0..len)
                .map(|t| {
                    if active[*p][t] {
                        100.0 * score[t] / totals[*p][t]
                    } else {
                        0.0
                    }
                })
                .collect();
            let n_active = active[*p].iter().filter(|&&a| a).count();
            let mean_abs_relative = if n_active == 0 {
                0.0
            } else {
                relative.iter().map(|r| r.abs()).sum::<f64>() / n_active as f64
            };
            let (polarity, confidence, is_active) = classify(&score);
            LoopRecord {
                id: format!("L{}", i + 1),
                label: String::new(),
                polarity,
                members: cycle.iter().map(|&n| lg.names[n].clone()).collect(),
                partition: *p,
                score,
                relative,
                mean_abs_relative,
                confidence,
                active: is_active,
                provenance: *prov,
                declared_name: name.clone(),
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..loops.len()).collect();
    order.sort_by(|&a, &b| {
        loops[b]
            .mean_abs_relative
            .total_cmp(&loops[a].mean_abs_relative)
            .then_with(|| loops[a].members.cmp(&loops[b].members))
    });
    let mut counters: BTreeMap<Polarity, usize> = BTreeMap::new();
    for i in order {
        let k = counters.entry(loops[i].polarity).or_insert(0);
        *k += 1;
        loops[i].label = format!("{}{}", loops[i].polarity.as_str(), k);
    }

    Ok(LoopAnalysis {
        partitions: parts
            .iter()
            .enumerate()
            .map(|(p, members)| Partition {
                id: p,
                members: members.iter().map(|&m| lg.names[m].clone()).collect(),
                discovered: discovered[p],
                active: active[p].clone(),
            })
            .collect(),
        loops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        assert_eq!(classify(&[0.0, 1.0, 2.0]).0, Polarity::R);
        assert_eq!(classify(&[0.0, -1.0]).0, Polarity::B);
        assert_eq!(classify(&[100.0, 0.0]).0, Polarity::R);
        assert_eq!(classify(&[995.0, -5.0]).0, Polarity::U);
        assert_eq!(classify(&[996.0, -4.0]).0, Polarity::Ru);
        assert_eq!(classify(&[-996.0, 4.0]).0, Polarity::Bu);
        assert_eq!(classify(&[0.0, 0.0]), (Polarity::U, 0.0, false));
    }

    #[test]
    fn canonical_rotation_uses_names() {
        let names: Vec<String> = ["b", "a", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(canonical(&[0, 2, 1], &names), [1, 0, 2]);
    }
}
