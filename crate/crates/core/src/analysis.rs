// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! The full pipeline: expand, simulate, score, find loops.

use crate::error::Result;
use crate::exec::Exec;
use crate::loops::{analyze_loops, LoopAnalysis, LoopOptions, DEFAULT_LOOP_CAP};
use crate::model::graph::{CausalGraph, LoopGraph};
use crate::model::{build_causal_graph, expand_macros, DeclaredPath, ExpandedModel, ModelIR};
use crate::scores::{composite_records, compute_link_scores, path_scores, CompositeRecord, LinkScores, PathScore};
use crate::sim::{CompiledModel, RunTrace};

#[derive(Clone, Debug)]
pub struct AnalysisOptions {
    pub loop_cap: usize,
    pub exec: Exec,
    /// Loops to score in addition to those declared in the model.
    pub extra_loops: Vec<DeclaredPath>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            loop_cap: DEFAULT_LOOP_CAP,
            exec: Exec::default(),
            extra_loops: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Analysis {
    pub expanded: ExpandedModel,
    pub graph: CausalGraph,
    pub loop_graph: LoopGraph,
    pub compiled: CompiledModel,
    pub trace: RunTrace,
    pub scores: LinkScores,
    pub composites: Vec<CompositeRecord>,
    pub paths: Vec<PathScore>,
    pub loops: LoopAnalysis,
}

impl Analysis {
    pub fn ir(&self) -> &ModelIR {
        &self.expanded.ir
    }

    /// Score series of the reporting edge `from -> to`.
    pub fn edge_score(&self, from: &str, to: &str) -> Option<&[f64]> {
        let e = self.loop_graph.edge(self.loop_graph.node(from)?, self.loop_graph.node(to)?)?;
        Some(&self.scores.edges[e].score)
    }

    /// Raw score series of the expanded pair `from -> to`.
    pub fn pair_score(&self, from: &str, to: &str) -> Option<&[f64]> {
        Some(&self.scores.pair_scores[self.graph.pair_by_name(from, to)?])
    }
}

pub fn analyze(ir: &ModelIR, opts: &AnalysisOptions) -> Result<Analysis> {
    let expanded = expand_macros(ir)?;
    let graph = build_causal_graph(&expanded)?;
    let loop_graph = graph.loop_graph();
    let compiled = CompiledModel::new(&expanded)?;
    let trace = compiled.simulate(&expanded.sim)?;
    let scores = compute_link_scores(&compiled, &graph, &loop_graph, &trace, opts.exec);
    let composites = composite_records(&graph, &expanded.macros, &scores);
    let paths = path_scores(&loop_graph, &scores, &expanded.declared_paths)?;
    let mut declared = expanded.declared_loops.clone();
    declared.extend(opts.extra_loops.iter().cloned());
    let loops = analyze_loops(
        &loop_graph,
        &scores,
        &declared,
        LoopOptions {
            cap: opts.loop_cap,
            exec: opts.exec,
        },
    )?;
    Ok(Analysis {
        expanded,
        graph,
        loop_graph,
        compiled,
        trace,
        scores,
        composites,
        paths,
        loops,
    })
}
