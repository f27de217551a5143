// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Strongest-loop discovery for partitions too large to enumerate.
//!
//! At every step and from every partition variable, a depth-first search
//! follows only edges with a nonzero score, strongest first, and abandons
//! a branch when it reaches a variable no more strongly than an earlier
//! branch did. The strongest loop that closes back at the start is kept.

use std::collections::BTreeSet;

/// `scores[e][t]` for edges `edges[e] = (from, to)`; `members` are the
/// partition's nodes; `names` orders ties. Returns circuits as node lists,
/// each starting at the node the search started from.
pub fn strongest_loops(
    edges: &[(usize, usize)],
    scores: &[Vec<f64>],
    members: &[usize],
    names: &[String],
    steps: std::ops::Range<usize>,
) -> BTreeSet<Vec<usize>> {
    let n = names.len();
    let in_part: Vec<bool> = {
        let mut v = vec![false; n];
        for &m in members {
            v[m] = true;
        }
        v
    };
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, &(a, b)) in edges.iter().enumerate() {
        if in_part[a] && in_part[b] {
            out_edges[a].push(e);
        }
    }
    let mut found = BTreeSet::new();
    for t in steps {
        let ordered: Vec<Vec<(usize, f64)>> = out_edges
            .iter()
            .map(|es| {
                let mut v: Vec<(usize, f64)> = es
                    .iter()
                    .map(|&e| (edges[e].1, scores[e][t].abs()))
                    .filter(|&(_, s)| s > 0.0 && s.is_finite())
                    .collect();
                v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| names[a.0].cmp(&names[b.0])));
                v
            })
            .collect();
        for &start in members {
            let mut search = Search {
                adj: &ordered,
                start,
                best_at: vec![0.0; n],
                on_path: vec![false; n],
                path: Vec::new(),
                best: None,
            };
            search.go(start, 1.0);
            if let Some((_, cycle)) = search.best {
                found.insert(cycle);
            }
        }
    }
    found
}

struct Search<'a> {
    adj: &'a [Vec<(usize, f64)>],
    start: usize,
    best_at: Vec<f64>,
    on_path: Vec<bool>,
    path: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_> {
    fn go(&mut self, v: usize, score: f64) {
        self.path.push(v);
        self.on_path[v] = true;
        for &(w, s) in &self.adj[v] {
            let reach = score * s;
            if w == self.start {
                if self.best.as_ref().is_none_or(|b| reach > b.0) {
                    self.best = Some((reach, self.path.clone()));
                }
            } else if !self.on_path[w] && reach > self.best_at[w] {
                self.best_at[w] = reach;
                self.go(w, reach);
            }
        }
        self.on_path[v] = false;
        self.path.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_the_dominant_loop_per_start() {
        // 0 <-> 1 strong, 0 <-> 2 weak.
        let edges = [(0, 1), (1, 0), (0, 2), (2, 0)];
        let scores = vec![vec![0.0, 3.0], vec![0.0, 1.0], vec![0.0, 0.5], vec![0.0, 1.0]];
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let found = strongest_loops(&edges, &scores, &[0, 1, 2], &names, 1..2);
        assert_eq!(found, BTreeSet::from([vec![0, 1], vec![1, 0], vec![2, 0]]));
    }

    #[test]
    fn ignores_zero_scores() {
        let edges = [(0, 1), (1, 0)];
        let scores = vec![vec![0.0], vec![0.0]];
        let names: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        assert!(strongest_loops(&edges, &scores, &[0, 1], &names, 0..1).is_empty());
    }
}
