// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Simplified causal loop diagrams.
//!
//! Variables are retained by two rules: a link rule, keeping variables
//! whose inbound relative link score swings widely over the run, and a
//! loop rule, keeping the stocks of loops that carry much of the behavior.
//! Every full loop is then collapsed onto the retained variables; loops
//! that collapse onto the same cycle merge, and their relative scores add.
//!
//! Everything here reads a [`Bundle`], so no re-simulation is needed.

pub mod dot;

use std::collections::{BTreeMap, BTreeSet};

use petgraph::graph::UnGraph;
use serde::{Deserialize, Serialize};

use crate::bundle::Bundle;
use crate::loops::{classify, Polarity, CONFIDENCE_CUTOFF};
use crate::scores::confidence;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplificationParams {
    /// Percent. Above 100 the link rule keeps nothing.
    pub link_threshold: f64,
    /// Percent.
    pub loop_threshold: f64,
    pub keep_flows: bool,
}

impl Default for SimplificationParams {
    fn default() -> Self {
        SimplificationParams {
            link_threshold: 0.0,
            loop_threshold: 0.0,
            keep_flows: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkPolarity {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
    #[serde(rename = "mixed")]
    Mixed,
}

impl LinkPolarity {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkPolarity::Positive => "+",
            LinkPolarity::Negative => "-",
            LinkPolarity::Mixed => "mixed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedLink {
    pub source: String,
    pub target: String,
    /// Full pathways this link stands for, source first.
    pub pathways: Vec<Vec<String>>,
    /// Index into `pathways` with the largest mean |path score|.
    pub representative: usize,
    pub mean_abs_score: f64,
    pub polarity: LinkPolarity,
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedLoop {
    pub id: String,
    pub label: String,
    pub polarity: Polarity,
    pub members: Vec<String>,
    pub partition: usize,
    /// Sum of the contributors' relative loop scores, percent, per step.
    pub composite: Vec<f64>,
    /// Mean |composite| over the partition's active steps.
    pub mean_abs_composite: f64,
    pub contributors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedCld {
    pub params: SimplificationParams,
    pub retained: Vec<String>,
    pub links: Vec<SimplifiedLink>,
    pub loops: Vec<SimplifiedLoop>,
    /// Full loops that collapse to fewer than two variables.
    pub dropped_loops: Vec<String>,
    pub explained_behavior_pct: f64,
}

impl SimplifiedCld {
    /// Weakly connected components over retained variables and links.
    pub fn components(&self) -> usize {
        let index: BTreeMap<&str, usize> = self.retained.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut g = UnGraph::<(), ()>::with_capacity(self.retained.len(), self.links.len());
        for _ in &self.retained {
            g.add_node(());
        }
        for l in &self.links {
            g.add_edge((index[l.source.as_str()] as u32).into(), (index[l.target.as_str()] as u32).into(), ());
        }
        petgraph::algo::connected_components(&g)
    }
}

/// Variables that belong to some cycle partition.
pub fn partition_variables(b: &Bundle) -> BTreeSet<String> {
    b.partitions.iter().flat_map(|p| p.members.iter().cloned()).collect()
}

/// Range, in percent, of |relative score| over the steps where the target
/// has any nonzero inbound score. Zero when it never does.
fn relative_range(b: &Bundle, edge: usize) -> f64 {
    let e = &b.edges[edge];
    let inbound: Vec<&[f64]> = b.edges.iter().filter(|o| o.target == e.target).map(|o| o.score.as_slice()).collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for t in 1..b.time.len() {
        if inbound.iter().any(|s| s[t] != 0.0) {
            let r = 100.0 * e.relative[t].abs();
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

pub fn select_variables(b: &Bundle, p: &SimplificationParams) -> BTreeSet<String> {
    let scope = partition_variables(b);
    let mut keep = BTreeSet::new();
    if p.link_threshold <= 100.0 {
        for (i, e) in b.edges.iter().enumerate() {
            if scope.contains(&e.target) && relative_range(b, i) >= p.link_threshold {
                keep.insert(e.target.clone());
            }
        }
    }
    for l in &b.loops {
        if l.mean_abs_relative >= p.loop_threshold {
            for m in &l.members {
                if b.variable(m).is_some_and(|v| v.kind.is_stock_like()) {
                    keep.insert(m.clone());
                }
            }
        }
    }
    if p.keep_flows {
        let stocks: Vec<String> = keep.iter().cloned().collect();
        for s in stocks {
            if let Some(v) = b.variable(&s) {
                keep.extend(v.inflows.iter().chain(&v.outflows).cloned());
            }
        }
    }
    keep.retain(|v| scope.contains(v));
    keep
}

fn rotate_to_smallest(c: &[String]) -> Vec<String> {
    let k = (0..c.len()).min_by(|&a, &b| c[a].cmp(&c[b])).unwrap_or(0);
    let mut c = c.to_vec();
    c.rotate_left(k);
    c
}

/// Per-step product of edge scores along `path`.
fn path_series(b: &Bundle, path: &[String]) -> Vec<f64> {
    let mut out = vec![1.0; b.time.len()];
    for w in path.windows(2) {
        let e = b.edge(&w[0], &w[1]).expect("loop segments follow bundle edges");
        for (o, s) in out.iter_mut().zip(&e.score) {
            *o *= s;
        }
    }
    out
}

fn time_mean_abs(s: &[f64]) -> f64 {
    if s.len() < 2 {
        return 0.0;
    }
    s[1..].iter().map(|v| v.abs()).sum::<f64>() / (s.len() - 1) as f64
}

pub fn build_simplified_cld(b: &Bundle, params: SimplificationParams, retained: &BTreeSet<String>) -> SimplifiedCld {
    let len = b.time.len();
    let mut groups: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
    let mut segments: BTreeMap<(String, String), BTreeSet<Vec<String>>> = BTreeMap::new();
    let mut dropped = Vec::new();
    for (li, l) in b.loops.iter().enumerate() {
        let kept: Vec<usize> = (0..l.members.len()).filter(|&i| retained.contains(&l.members[i])).collect();
        if kept.len() < 2 {
            dropped.push(l.id.clone());
            continue;
        }
        let n = l.members.len();
        for (k, &i) in kept.iter().enumerate() {
            let j = kept[(k + 1) % kept.len()];
            let steps = (j + n - i) % n;
            let seg: Vec<String> = (0..=steps).map(|d| l.members[(i + d) % n].clone()).collect();
            segments
                .entry((l.members[i].clone(), l.members[j].clone()))
                .or_default()
                .insert(seg);
        }
        let collapsed: Vec<String> = kept.iter().map(|&i| l.members[i].clone()).collect();
        groups.entry(rotate_to_smallest(&collapsed)).or_default().push(li);
    }

    let links: Vec<SimplifiedLink> = segments
        .into_iter()
        .map(|((source, target), segs)| {
            let pathways: Vec<Vec<String>> = segs.into_iter().collect();
            let series: Vec<Vec<f64>> = pathways.iter().map(|p| path_series(b, p)).collect();
            let means: Vec<f64> = series.iter().map(|s| time_mean_abs(s)).collect();
            let mut representative = 0;
            for (k, m) in means.iter().enumerate() {
                if *m > means[representative] {
                    representative = k;
                }
            }
            let (mut r, mut neg) = (0.0, 0.0);
            for t in 1..len {
                let hi = series.iter().map(|s| s[t]).fold(0.0f64, f64::max);
                let lo = series.iter().map(|s| s[t]).fold(0.0f64, f64::min);
                r += hi;
                neg += lo;
            }
            let conf = confidence(r, neg);
            let polarity = if conf <= CONFIDENCE_CUTOFF {
                LinkPolarity::Mixed
            } else if r > neg.abs() {
                LinkPolarity::Positive
            } else {
                LinkPolarity::Negative
            };
            SimplifiedLink {
                source,
                target,
                mean_abs_score: means[representative],
                pathways,
                representative,
                polarity,
                confidence: conf,
            }
        })
        .collect();

    let mut loops: Vec<SimplifiedLoop> = groups
        .into_iter()
        .enumerate()
        .map(|(k, (members, contrib))| {
            let partition = b.loops[contrib[0]].partition;
            let active = &b.partitions[partition].active;
            let mut composite = vec![0.0; len];
            for &li in &contrib {
                for (c, r) in composite.iter_mut().zip(&b.loops[li].relative) {
                    *c += r;
                }
            }
            let n_active = active.iter().filter(|&&a| a).count();
            let mean_abs_composite = if n_active == 0 {
                0.0
            } else {
                composite.iter().zip(active).filter(|(_, &a)| a).map(|(c, _)| c.abs()).sum::<f64>() / n_active as f64
            };
            SimplifiedLoop {
                id: format!("S{}", k + 1),
                label: String::new(),
                polarity: classify(&composite).0,
                members,
                partition,
                composite,
                mean_abs_composite,
                contributors: contrib.iter().map(|&li| b.loops[li].id.clone()).collect(),
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..loops.len()).collect();
    order.sort_by(|&x, &y| {
        loops[y]
            .mean_abs_composite
            .total_cmp(&loops[x].mean_abs_composite)
            .then_with(|| loops[x].members.cmp(&loops[y].members))
    });
    let mut counters: BTreeMap<Polarity, usize> = BTreeMap::new();
    for i in order {
        let k = counters.entry(loops[i].polarity).or_insert(0);
        *k += 1;
        loops[i].label = format!("{}{}", loops[i].polarity.as_str(), k);
    }

    let active_partitions = b.partitions.iter().filter(|p| p.active.iter().any(|&a| a)).count();
    let explained_behavior_pct = if active_partitions == 0 {
        0.0
    } else {
        loops.iter().map(|l| l.mean_abs_composite).sum::<f64>() / active_partitions as f64
    };

    SimplifiedCld {
        params,
        retained: retained.iter().cloned().collect(),
        links,
        loops,
        dropped_loops: dropped,
        explained_behavior_pct,
    }
}

/// Selection and collapse in one call.
pub fn simplify(b: &Bundle, params: SimplificationParams) -> SimplifiedCld {
    let retained = select_variables(b, &params);
    build_simplified_cld(b, params, &retained)
}

/// Text table with one row per simplified loop, strongest first.
pub fn summary_table(cld: &SimplifiedCld) -> String {
    let mut rows: Vec<&SimplifiedLoop> = cld.loops.iter().collect();
    rows.sort_by(|a, b| b.mean_abs_composite.total_cmp(&a.mean_abs_composite).then_with(|| a.label.cmp(&b.label)));
    let mut out = format!("{:<6} {:>14} {:>22}  {}\n", "Loop", "Total Contrib.", "Total Loops Aggregated", "Links Included");
    for l in rows {
        let mut chain = l.members.clone();
        chain.push(l.members[0].clone());
        out.push_str(&format!(
            "{:<6} {:>13.2}% {:>22}  {}\n",
            l.label,
            l.mean_abs_composite,
            l.contributors.len(),
            chain.join(" -> ")
        ));
    }
    out.push_str(&format!("Explained behavior: {:.2}%\n", cld.explained_behavior_pct));
    out
}
