// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Causal link structure.
//!
//! [`CausalGraph`] covers the expanded model, hidden variables included.
//! Its `pairs` merge the edge kinds between two variables; link scores are
//! computed per pair. [`LoopGraph`] is the view a modeler sees: only user
//! variables, with every macro crossing folded into a composite edge whose
//! pathways are the chains of pairs through hidden variables.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::expand::ExpandedModel;
use super::{is_hidden, VarKind};
use crate::error::{ModelError, ModelErrorKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Equation,
    FlowToStock,
    StockConstraint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
}

/// All edge kinds between one ordered pair of variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pair {
    pub from: usize,
    pub to: usize,
    pub kinds: Vec<EdgeKind>,
}

impl Pair {
    pub fn has(&self, kind: EdgeKind) -> bool {
        self.kinds.contains(&kind)
    }
}

#[derive(Clone, Debug)]
pub struct CausalGraph {
    pub nodes: Vec<String>,
    pub kinds: Vec<VarKind>,
    pub edges: Vec<Edge>,
    pub pairs: Vec<Pair>,
    index: HashMap<String, usize>,
    pair_index: HashMap<(usize, usize), usize>,
}

impl CausalGraph {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn pair(&self, from: usize, to: usize) -> Option<usize> {
        self.pair_index.get(&(from, to)).copied()
    }

    pub fn pair_by_name(&self, from: &str, to: &str) -> Option<usize> {
        self.pair(self.index_of(from)?, self.index_of(to)?)
    }

    pub fn has_edge(&self, from: &str, to: &str, kind: EdgeKind) -> bool {
        self.pair_by_name(from, to).is_some_and(|p| self.pairs[p].has(kind))
    }

    /// Pair indices arriving at each node, in pair order.
    pub fn incoming(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.nodes.len()];
        for (i, p) in self.pairs.iter().enumerate() {
            inc[p.to].push(i);
        }
        inc
    }

    /// The user-visible view used for loops and reporting.
    pub fn loop_graph(&self) -> LoopGraph {
        let mut visible = Vec::new();
        let mut vis_index = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if !is_hidden(n) {
                vis_index.insert(i, visible.len());
                visible.push(i);
            }
        }
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for (i, p) in self.pairs.iter().enumerate() {
            out[p.from].push(i);
        }
        let mut found: BTreeMap<(usize, usize), Vec<Vec<usize>>> = BTreeMap::new();
        for (vi, &start) in visible.iter().enumerate() {
            let mut stack: Vec<(usize, Vec<usize>)> = vec![(start, Vec::new())];
            while let Some((node, path)) = stack.pop() {
                for &pi in out[node].iter().rev() {
                    let next = self.pairs[pi].to;
                    let mut p = path.clone();
                    p.push(pi);
                    if let Some(&vj) = vis_index.get(&next) {
                        found.entry((vi, vj)).or_default().push(p);
                    } else if !path.iter().any(|&q| self.pairs[q].from == next) {
                        stack.push((next, p));
                    }
                }
            }
        }
        let edges = found
            .into_iter()
            .map(|((from, to), mut pathways)| {
                pathways.sort();
                ReportEdge { from, to, pathways }
            })
            .collect::<Vec<_>>();
        let mut index = HashMap::new();
        for (i, e) in edges.iter().enumerate() {
            index.insert((e.from, e.to), i);
        }
        LoopGraph {
            names: visible.iter().map(|&i| self.nodes[i].clone()).collect(),
            expanded_index: visible,
            edges,
            index,
        }
    }
}

/// A link between user variables in the reporting view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportEdge {
    pub from: usize,
    pub to: usize,
    /// Chains of [`CausalGraph`] pairs; a direct link is a one-pair chain.
    pub pathways: Vec<Vec<usize>>,
}

impl ReportEdge {
    pub fn is_composite(&self) -> bool {
        self.pathways.iter().any(|p| p.len() > 1)
    }
}

#[derive(Clone, Debug)]
pub struct LoopGraph {
    pub names: Vec<String>,
    /// Node index in the [`CausalGraph`] for each reporting node.
    pub expanded_index: Vec<usize>,
    pub edges: Vec<ReportEdge>,
    index: HashMap<(usize, usize), usize>,
}

impl LoopGraph {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<usize> {
        self.index.get(&(from, to)).copied()
    }

    pub fn node(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Successor lists sorted by target index.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.names.len()];
        for e in &self.edges {
            adj[e.from].push(e.to);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }
}

/// Orders items so each follows its dependencies, breaking ties by index.
/// Returns a cycle among the unorderable items on failure.
pub(crate) fn topo_order(deps: &[Vec<usize>]) -> Result<Vec<usize>, Vec<usize>> {
    let n = deps.len();
    let mut indegree = vec![0usize; n];
    let mut users = vec![Vec::new(); n];
    for (i, d) in deps.iter().enumerate() {
        for &j in d {
            indegree[i] += 1;
            users[j].push(i);
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for &u in &users[i] {
            indegree[u] -= 1;
            if indegree[u] == 0 {
                ready.push(Reverse(u));
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Walk dependencies among the leftovers until a node repeats.
    let stuck: Vec<bool> = indegree.iter().map(|&d| d > 0).collect();
    let mut node = (0..n).find(|&i| stuck[i]).expect("some node is stuck");
    let mut seen = vec![usize::MAX; n];
    let mut walk = Vec::new();
    while seen[node] == usize::MAX {
        seen[node] = walk.len();
        walk.push(node);
        node = *deps[node].iter().find(|&&d| stuck[d]).expect("stuck nodes have stuck deps");
    }
    let mut cycle = walk[seen[node]..].to_vec();
    cycle.reverse();
    Err(cycle)
}

/// Derives the causal graph and rejects algebraic loops.
pub fn build_causal_graph(em: &ExpandedModel) -> Result<CausalGraph, ModelError> {
    let nodes: Vec<String> = em.variables.iter().map(|v| v.name.clone()).collect();
    let index: HashMap<String, usize> = nodes.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect();
    let idx = |n: &str| index[n];

    let deps: Vec<Vec<usize>> = em
        .variables
        .iter()
        .map(|v| v.instantaneous_deps().iter().map(|d| idx(d)).collect())
        .collect();
    if let Err(cycle) = topo_order(&deps) {
        return Err(ModelError::new(ModelErrorKind::Simultaneity(
            cycle.into_iter().map(|i| nodes[i].clone()).collect(),
        )));
    }

    let mut edges = Vec::new();
    for (to, v) in em.variables.iter().enumerate() {
        if let Some(spec) = &v.stock {
            for f in spec.inflows.iter().chain(&spec.outflows) {
                edges.push(Edge {
                    from: idx(f),
                    to,
                    kind: EdgeKind::FlowToStock,
                });
            }
            if spec.nonneg {
                for o in &spec.outflows {
                    edges.push(Edge {
                        from: to,
                        to: idx(o),
                        kind: EdgeKind::StockConstraint,
                    });
                }
            }
            continue;
        }
        let mut refs = v.equation.causal_references();
        if let Some(c) = &v.conveyor_outflow_of {
            let conveyor = &em.variables[idx(c)];
            if let Some(t) = conveyor.stock.as_ref().and_then(|s| s.transit_time.as_ref()) {
                refs.extend(t.causal_references());
            }
        }
        for r in refs {
            edges.push(Edge {
                from: idx(&r),
                to,
                kind: EdgeKind::Equation,
            });
        }
    }
    edges.sort_by_key(|e| (e.from, e.to, e.kind));
    edges.dedup();

    let mut pairs: Vec<Pair> = Vec::new();
    let mut pair_index = HashMap::new();
    for e in &edges {
        match pairs.last_mut() {
            Some(p) if p.from == e.from && p.to == e.to => p.kinds.push(e.kind),
            _ => {
                pair_index.insert((e.from, e.to), pairs.len());
                pairs.push(Pair {
                    from: e.from,
                    to: e.to,
                    kinds: vec![e.kind],
                });
            }
        }
    }
    Ok(CausalGraph {
        kinds: em.variables.iter().map(|v| v.kind).collect(),
        nodes,
        edges,
        pairs,
        index,
        pair_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{expand_macros, parse_model};

    fn graph(src: &str) -> Result<CausalGraph, ModelError> {
        build_causal_graph(&expand_macros(&parse_model(src)?)?)
    }

    #[test]
    fn births_only_edges() {
        let g = graph("const birth_rate = 0.1\nflow births = birth_rate * Population\nstock Population = 100 [+births]\n")
            .unwrap();
        assert!(g.has_edge("Population", "births", EdgeKind::Equation));
        assert!(g.has_edge("births", "Population", EdgeKind::FlowToStock));
        assert_eq!(g.edges.len(), 3);
    }

    #[test]
    fn simultaneity_names_the_cycle() {
        let err = graph("aux a = b\naux b = a\n").unwrap_err();
        let ModelErrorKind::Simultaneity(cycle) = err.kind else { panic!("{err}") };
        let mut sorted = cycle.clone();
        sorted.sort();
        assert_eq!(sorted, ["a", "b"]);
    }

    #[test]
    fn previous_breaks_simultaneity() {
        assert!(graph("aux a = PREVIOUS(b, 0)\naux b = a + 1\n").is_ok());
    }

    #[test]
    fn nonneg_adds_constraint_edges_and_pairs_merge() {
        let g = graph("flow out = s / 2\nstock s = 1 [-out] nonneg\n").unwrap();
        let p = g.pair_by_name("s", "out").unwrap();
        assert_eq!(g.pairs[p].kinds, [EdgeKind::Equation, EdgeKind::StockConstraint]);
        assert_eq!(g.pairs.len(), 2);
    }

    #[test]
    fn composite_edges_hide_macro_internals() {
        let g = graph("const tau = 3\nflow u = 1\naux d = DELAY3(u, tau)\n").unwrap();
        let lg = g.loop_graph();
        assert_eq!(lg.names, ["tau", "u", "d"]);
        let ud = lg.edge(1, 2).unwrap();
        assert_eq!(lg.edges[ud].pathways.len(), 1);
        assert_eq!(lg.edges[ud].pathways[0].len(), 8);
        assert_eq!(lg.edges[lg.edge(0, 2).unwrap()].pathways.len(), 3);
        assert_eq!(lg.edges.len(), 2);
    }

    #[test]
    fn topo_order_breaks_ties_by_index() {
        assert_eq!(topo_order(&[vec![], vec![], vec![0, 1]]).unwrap(), [0, 1, 2]);
        assert_eq!(topo_order(&[vec![2], vec![], vec![]]).unwrap(), [1, 2, 0]);
        assert_eq!(topo_order(&[vec![1], vec![0]]).unwrap_err().len(), 2);
    }
}
