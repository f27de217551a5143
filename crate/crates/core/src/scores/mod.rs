// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Link, path and composite scores.
//!
//! Raw scores are computed for every pair of the expanded causal graph.
//! Reporting edges then take, at each step, the pathway whose product of
//! pair scores has the largest magnitude; relative link scores normalize
//! those over the reporting edges arriving at each variable.

pub mod link;

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;
use crate::exec::Exec;
use crate::model::graph::{CausalGraph, LoopGraph};
use crate::model::{DeclaredPath, MacroSource};
use crate::model::expand::MacroInstance;
use crate::sim::{CompiledModel, RunTrace};
pub use link::{flow_to_stock_score, link_score};

/// Polarity confidence from the reinforcing total `r` (≥ 0) and the
/// balancing total `b` (≤ 0). Zero when both are zero.
pub fn confidence(r: f64, b: f64) -> f64 {
    let denom = r + b.abs();
    if denom == 0.0 {
        0.0
    } else {
        (r - b.abs()).abs() / denom
    }
}

/// Product of the given score series, step by step.
pub fn product_series<'a>(series: impl IntoIterator<Item = &'a [f64]>, len: usize) -> Vec<f64> {
    let mut out = vec![1.0; len];
    for s in series {
        for (o, v) in out.iter_mut().zip(s) {
            *o *= v;
        }
    }
    out
}

/// Score series for one reporting edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeScores {
    pub score: Vec<f64>,
    /// In [-1, 1]; magnitudes into one variable sum to 1 on steps where any is nonzero.
    pub relative: Vec<f64>,
    /// Index into the edge's pathways chosen at each step.
    pub chosen: Vec<usize>,
    pub invalid_steps: Vec<usize>,
}

/// Max-magnitude pathway choice for one macro argument.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeRecord {
    pub macro_id: String,
    pub argument: String,
    pub pathways: Vec<Vec<String>>,
    pub chosen: Vec<usize>,
    pub score: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathScore {
    pub name: String,
    pub vars: Vec<String>,
    pub score: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LinkScores {
    /// Per expanded pair, per step. Step 0 is always 0.
    pub pair_scores: Vec<Vec<f64>>,
    pub pair_invalid: Vec<Vec<usize>>,
    /// Per reporting edge.
    pub edges: Vec<EdgeScores>,
}

/// Pathway scores and the per-step max-|·| choice among them.
pub fn choose_pathways(pathway_scores: &[Vec<f64>], len: usize) -> (Vec<f64>, Vec<usize>) {
    let mut score = vec![0.0; len];
    let mut chosen = vec![0; len];
    for t in 0..len {
        let mut best = 0.0f64;
        for (k, p) in pathway_scores.iter().enumerate() {
            if p[t].abs() > best.abs() {
                best = p[t];
                chosen[t] = k;
            }
        }
        score[t] = best;
    }
    (score, chosen)
}

pub fn compute_link_scores(
    m: &CompiledModel,
    g: &CausalGraph,
    lg: &LoopGraph,
    tr: &RunTrace,
    exec: Exec,
) -> LinkScores {
    let len = tr.steps() + 1;
    let raw: Vec<(Vec<f64>, Vec<usize>)> = exec.map(g.pairs.len(), |p| {
        let pair = &g.pairs[p];
        let mut s = vec![0.0; len];
        let mut bad = Vec::new();
        for (t, slot) in s.iter_mut().enumerate().skip(1) {
            match link::pair_score_at(m, tr, pair, t) {
                Some(v) => *slot = v,
                None => bad.push(t),
            }
        }
        (s, bad)
    });
    let (pair_scores, pair_invalid): (Vec<_>, Vec<_>) = raw.into_iter().unzip();

    let mut edges: Vec<EdgeScores> = exec.map(lg.edges.len(), |e| {
        let edge = &lg.edges[e];
        let pathway_scores: Vec<Vec<f64>> = edge
            .pathways
            .iter()
            .map(|pw| product_series(pw.iter().map(|&p| pair_scores[p].as_slice()), len))
            .collect();
        let (score, chosen) = choose_pathways(&pathway_scores, len);
        let mut invalid: Vec<usize> = edge
            .pathways
            .iter()
            .flatten()
            .flat_map(|&p| pair_invalid[p].iter().copied())
            .collect();
        invalid.sort_unstable();
        invalid.dedup();
        EdgeScores {
            score,
            relative: Vec::new(),
            chosen,
            invalid_steps: invalid,
        }
    });

    let mut incoming = vec![Vec::new(); lg.len()];
    for (i, e) in lg.edges.iter().enumerate() {
        incoming[e.to].push(i);
    }
    let mut relative = vec![vec![0.0; len]; lg.edges.len()];
    for inc in &incoming {
        #[allow(clippy::needless_range_loop)]
        for t in 0..len {
            let total: f64 = inc.iter().map(|&i| edges[i].score[t].abs()).sum();
            if total > 0.0 {
                for &i in inc {
                    relative[i][t] = edges[i].score[t] / total;
                }
            }
        }
    }
    for (e, r) in edges.iter_mut().zip(relative) {
        e.relative = r;
    }
    LinkScores {
        pair_scores,
        pair_invalid,
        edges,
    }
}

/// Chosen pathway per step for each macro argument that has pathways.
/// Each pathway ends at the macro's host variable.
pub fn composite_records(g: &CausalGraph, macros: &[MacroInstance], scores: &LinkScores) -> Vec<CompositeRecord> {
    let len = scores.pair_scores.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    for m in macros {
        for arg in &m.arguments {
            if matches!(arg.source, MacroSource::Literal(_)) || arg.pathways.is_empty() {
                continue;
            }
            // Pathways run on to the variable the modeler wrote, so the
            // composite matches the reporting edge into it.
            let pathways: Vec<Vec<String>> = arg
                .pathways
                .iter()
                .map(|p| {
                    let mut p = p.clone();
                    if m.host != m.output {
                        p.push(m.host.clone());
                    }
                    p
                })
                .collect();
            let pathway_scores: Vec<Vec<f64>> = pathways
                .iter()
                .map(|names| {
                    let pairs = names
                        .windows(2)
                        .map(|w| g.pair_by_name(&w[0], &w[1]).expect("macro pathways follow graph pairs"));
                    product_series(pairs.map(|p| scores.pair_scores[p].as_slice()), len)
                })
                .collect();
            let (score, chosen) = choose_pathways(&pathway_scores, len);
            out.push(CompositeRecord {
                macro_id: m.id.clone(),
                argument: arg.role.clone(),
                pathways,
                chosen,
                score,
            });
        }
    }
    out
}

/// Scores of declared paths over reporting edges.
pub fn path_scores(lg: &LoopGraph, scores: &LinkScores, paths: &[DeclaredPath]) -> Result<Vec<PathScore>, AnalysisError> {
    let len = scores.pair_scores.first().map_or(0, Vec::len);
    paths
        .iter()
        .map(|d| {
            let nodes = d
                .vars
                .iter()
                .map(|v| lg.node(v).ok_or_else(|| AnalysisError::UnknownVariable(v.clone())))
                .collect::<Result<Vec<_>, _>>()?;
            let edges = nodes
                .windows(2)
                .map(|w| lg.edge(w[0], w[1]).ok_or_else(|| AnalysisError::NotAPath(d.vars.clone())))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(PathScore {
                name: d.name.clone(),
                vars: d.vars.clone(),
                score: product_series(edges.iter().map(|&e| scores.edges[e].score.as_slice()), len),
            })
        })
        .collect()
}
