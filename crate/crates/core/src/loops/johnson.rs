// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Elementary circuit enumeration (Johnson, 1975).

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

/// Enumeration stopped after finding more than `cap` circuits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TooManyLoops {
    pub cap: usize,
}

/// All elementary circuits of the digraph given as successor lists over
/// nodes `0..adj.len()`. Each circuit starts at its smallest node.
pub fn elementary_circuits(adj: &[Vec<usize>], cap: usize) -> Result<Vec<Vec<usize>>, TooManyLoops> {
    let n = adj.len();
    let mut out = Vec::new();
    let mut blocked = vec![false; n];
    let mut b_sets: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut stack = Vec::new();
    for s in 0..n {
        let comp = component_of(adj, s);
        let in_comp = |v: usize| comp.binary_search(&v).is_ok();
        let has_cycle = comp.len() > 1 || adj[s].contains(&s);
        if !has_cycle {
            continue;
        }
        for &v in &comp {
            blocked[v] = false;
            b_sets[v].clear();
        }
        let mut ctx = Circuit {
            adj,
            s,
            in_comp: &in_comp,
            blocked: &mut blocked,
            b_sets: &mut b_sets,
            stack: &mut stack,
            out: &mut out,
            cap,
        };
        ctx.circuit(s)?;
    }
    Ok(out)
}

/// Sorted members of the strongly connected component containing `s` in
/// the subgraph induced by nodes `s..`.
fn component_of(adj: &[Vec<usize>], s: usize) -> Vec<usize> {
    let n = adj.len();
    let mut g = DiGraph::<(), ()>::with_capacity(n - s, 0);
    let nodes: Vec<_> = (s..n).map(|_| g.add_node(())).collect();
    for (v, succ) in adj.iter().enumerate().skip(s) {
        for &w in succ {
            if w >= s {
                g.add_edge(nodes[v - s], nodes[w - s], ());
            }
        }
    }
    let start = nodes[0];
    let mut comp: Vec<usize> = tarjan_scc(&g)
        .into_iter()
        .find(|c| c.contains(&start))
        .unwrap_or_default()
        .into_iter()
        .map(|ix| ix.index() + s)
        .collect();
    comp.sort_unstable();
    comp
}

struct Circuit<'a, F: Fn(usize) -> bool> {
    adj: &'a [Vec<usize>],
    s: usize,
    in_comp: &'a F,
    blocked: &'a mut Vec<bool>,
    b_sets: &'a mut Vec<Vec<usize>>,
    stack: &'a mut Vec<usize>,
    out: &'a mut Vec<Vec<usize>>,
    cap: usize,
}

impl<F: Fn(usize) -> bool> Circuit<'_, F> {
    fn unblock(&mut self, u: usize) {
        let mut pending = vec![u];
        while let Some(u) = pending.pop() {
            if !self.blocked[u] {
                continue;
            }
            self.blocked[u] = false;
            pending.append(&mut std::mem::take(&mut self.b_sets[u]));
        }
    }

    fn circuit(&mut self, v: usize) -> Result<bool, TooManyLoops> {
        let mut found = false;
        self.stack.push(v);
        self.blocked[v] = true;
        for &w in &self.adj[v] {
            if !(self.in_comp)(w) {
                continue;
            }
            if w == self.s {
                if self.out.len() >= self.cap {
                    return Err(TooManyLoops { cap: self.cap });
                }
                self.out.push(self.stack.clone());
                found = true;
            } else if !self.blocked[w] && self.circuit(w)? {
                found = true;
            }
        }
        if found {
            self.unblock(v);
        } else {
            for &w in &self.adj[v] {
                if (self.in_comp)(w) && !self.b_sets[w].contains(&v) {
                    self.b_sets[w].push(v);
                }
            }
        }
        self.stack.pop();
        Ok(found)
    }
}
