// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Graphviz output for a [`SimplifiedCld`].

use std::fmt::Write;

use super::{LinkPolarity, SimplifiedCld};

pub const MIN_PENWIDTH: f64 = 0.5;
pub const MAX_PENWIDTH: f64 = 6.0;

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn penwidth(strength: f64, strongest: f64) -> f64 {
    if strongest <= 0.0 {
        return MIN_PENWIDTH;
    }
    (MAX_PENWIDTH * strength / strongest).clamp(MIN_PENWIDTH, MAX_PENWIDTH)
}

pub fn to_dot(cld: &SimplifiedCld) -> String {
    let mut out = String::new();
    let mut loops: Vec<_> = cld.loops.iter().collect();
    loops.sort_by(|a, b| b.mean_abs_composite.total_cmp(&a.mean_abs_composite).then_with(|| a.label.cmp(&b.label)));
    out.push_str("// Loops (label, mean composite relative score, contributing loops, members)\n");
    for l in loops {
        let _ = writeln!(
            out,
            "//   {:<5} {:>7.2}%  [{}]  {}",
            l.label,
            l.mean_abs_composite,
            l.contributors.join(", "),
            l.members.join(" -> ")
        );
    }
    let _ = writeln!(out, "// Explained behavior: {:.2}%", cld.explained_behavior_pct);
    out.push_str("digraph cld {\n");
    out.push_str("  node [shape=plaintext];\n");
    for v in &cld.retained {
        let _ = writeln!(out, "  {};", quote(v));
    }
    let strongest = cld.links.iter().map(|l| l.mean_abs_score).fold(0.0, f64::max);
    for l in &cld.links {
        let (color, label) = match l.polarity {
            LinkPolarity::Positive => ("blue", "+"),
            LinkPolarity::Negative => ("red", "-"),
            LinkPolarity::Mixed => ("gray", "?"),
        };
        let _ = writeln!(
            out,
            "  {} -> {} [color={color}, label=\"{label}\", penwidth={:.3}];",
            quote(&l.source),
            quote(&l.target),
            penwidth(l.mean_abs_score, strongest)
        );
    }
    out.push_str("}\n");
    out
}
