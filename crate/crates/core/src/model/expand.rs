// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Macro expansion.
//!
//! Each SMOOTH1/SMOOTH3/DELAY3 call is replaced by hidden stocks and flows
//! named `~host:k.part`, and the call site by a reference to the macro's
//! output. The structure follows the usual textbook definitions:
//!
//! - `SMOOTH1(u, tau)`: stock `s` (initially `u`) with inflow `(u - s)/tau`;
//!   the output is `s`.
//! - `SMOOTH3(u, tau)`: three SMOOTH1 stages, each with `tau/3`.
//! - `DELAY3(u, tau)`: flow `f1 = u` into a chain of three stocks drained by
//!   `f(k+1) = s(k)/(tau/3)`; the output is `f4`. Stocks start at `u*tau/3`.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::expr::{BinOp, Builtin, Expr};
use super::{DeclaredPath, ModelIR, SimConfig, StockSpec, VarKind, VariableDef, HIDDEN_PREFIX};
use crate::error::ModelError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroSource {
    /// A user variable, or a hidden auxiliary holding a compound argument.
    Variable(String),
    Literal(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroArgument {
    pub role: String,
    pub source: MacroSource,
    /// Every simple path from the source to the macro output whose interior
    /// lies inside the macro.
    pub pathways: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroInstance {
    pub id: String,
    pub function: String,
    /// The user variable whose equation contained the call.
    pub host: String,
    pub output: String,
    pub hidden: Vec<String>,
    pub arguments: Vec<MacroArgument>,
    /// Feedback loops made only of this macro's hidden variables.
    pub internal_loops: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpandedModel {
    /// The model before expansion.
    pub ir: ModelIR,
    pub variables: Vec<VariableDef>,
    pub sim: SimConfig,
    pub declared_loops: Vec<DeclaredPath>,
    pub declared_paths: Vec<DeclaredPath>,
    pub macros: Vec<MacroInstance>,
}

impl ExpandedModel {
    pub fn get(&self, name: &str) -> Option<&VariableDef> {
        self.variables.iter().find(|v| v.name == name)
    }
}

struct Expander {
    host: String,
    count: usize,
    generated: Vec<VariableDef>,
    instances: Vec<MacroInstance>,
}

fn div3(tau: &Expr) -> Expr {
    Expr::binary(BinOp::Div, tau.clone(), Expr::Num(3.0))
}

fn hidden_flow(name: &str, eq: Expr) -> VariableDef {
    VariableDef::new(name, VarKind::Flow, eq)
}

fn hidden_stock(name: &str, init: Expr, inflow: &str, outflow: Option<&str>) -> VariableDef {
    let mut v = VariableDef::new(name, VarKind::Stock, init);
    v.stock = Some(StockSpec {
        inflows: vec![inflow.to_string()],
        outflows: outflow.map(|o| vec![o.to_string()]).unwrap_or_default(),
        nonneg: false,
        transit_time: None,
    });
    v
}

impl Expander {
    fn expand(&mut self, e: &Expr) -> Expr {
        match e {
            Expr::Num(_) | Expr::Var(_) => e.clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(self.expand(a))),
            Expr::Binary(op, l, r) => Expr::binary(*op, self.expand(l), self.expand(r)),
            Expr::Call(b, args) => {
                let args: Vec<Expr> = args.iter().map(|a| self.expand(a)).collect();
                if b.is_macro() {
                    Expr::Var(self.instantiate(*b, &args))
                } else {
                    Expr::Call(*b, args)
                }
            }
        }
    }

    fn argument(&mut self, prefix: &str, role: &str, arg: &Expr) -> (MacroSource, Expr, Option<String>) {
        match arg {
            Expr::Var(n) => (MacroSource::Variable(n.clone()), arg.clone(), None),
            Expr::Num(v) => (MacroSource::Literal(*v), arg.clone(), None),
            _ => {
                let name = format!("{prefix}.{role}");
                self.generated.push(VariableDef::new(name.clone(), VarKind::Aux, arg.clone()));
                (MacroSource::Variable(name.clone()), Expr::var(name.clone()), Some(name))
            }
        }
    }

    fn instantiate(&mut self, b: Builtin, args: &[Expr]) -> String {
        self.count += 1;
        let prefix = format!("{HIDDEN_PREFIX}{}:{}", self.host, self.count);
        let first = self.generated.len();
        let (u_src, u, _) = self.argument(&prefix, "input", &args[0]);
        let (tau_src, tau, _) = self.argument(&prefix, "tau", &args[1]);
        let n = |part: &str| format!("{prefix}.{part}");
        let output = match b {
            Builtin::Smooth1 => {
                let (s, f) = (n("s"), n("f"));
                let flow = Expr::binary(
                    BinOp::Div,
                    Expr::binary(BinOp::Sub, u.clone(), Expr::var(s.clone())),
                    tau.clone(),
                );
                self.generated.push(hidden_stock(&s, u.clone(), &f, None));
                self.generated.push(hidden_flow(&f, flow));
                s
            }
            Builtin::Smooth3 => {
                let mut upstream = u.clone();
                for k in 1..=3 {
                    let (s, f) = (n(&format!("s{k}")), n(&format!("f{k}")));
                    let flow = Expr::binary(
                        BinOp::Div,
                        Expr::binary(BinOp::Sub, upstream.clone(), Expr::var(s.clone())),
                        div3(&tau),
                    );
                    self.generated.push(hidden_stock(&s, u.clone(), &f, None));
                    self.generated.push(hidden_flow(&f, flow));
                    upstream = Expr::var(s);
                }
                n("s3")
            }
            Builtin::Delay3 => {
                let init = Expr::binary(BinOp::Mul, u.clone(), div3(&tau));
                self.generated.push(hidden_flow(&n("f1"), u.clone()));
                for k in 1..=3 {
                    let s = n(&format!("s{k}"));
                    let (fin, fout) = (n(&format!("f{k}")), n(&format!("f{}", k + 1)));
                    self.generated.push(hidden_stock(&s, init.clone(), &fin, Some(&fout)));
                    self.generated.push(hidden_flow(
                        &fout,
                        Expr::binary(BinOp::Div, Expr::var(s), div3(&tau)),
                    ));
                }
                n("f4")
            }
            _ => unreachable!("not a macro"),
        };
        let members = &self.generated[first..];
        let hidden: Vec<String> = members.iter().map(|v| v.name.clone()).collect();
        let edges = local_edges(members);
        let inside: HashSet<&str> = hidden.iter().map(String::as_str).collect();
        let arguments = [("input", u_src), ("tau", tau_src)]
            .into_iter()
            .map(|(role, source)| {
                let pathways = match &source {
                    MacroSource::Variable(v) => simple_paths(&edges, &inside, v, &output),
                    MacroSource::Literal(_) => Vec::new(),
                };
                MacroArgument {
                    role: role.to_string(),
                    source,
                    pathways,
                }
            })
            .collect();
        self.instances.push(MacroInstance {
            id: prefix.clone(),
            function: b.name().to_string(),
            host: self.host.clone(),
            output: output.clone(),
            internal_loops: internal_cycles(&edges, &hidden),
            hidden,
            arguments,
        });
        output
    }
}

fn local_edges(members: &[VariableDef]) -> HashMap<String, BTreeSet<String>> {
    let mut out: HashMap<String, BTreeSet<String>> = HashMap::new();
    for v in members {
        match &v.stock {
            Some(spec) => {
                for f in spec.inflows.iter().chain(&spec.outflows) {
                    out.entry(f.clone()).or_default().insert(v.name.clone());
                }
            }
            None => {
                for r in v.equation.causal_references() {
                    out.entry(r).or_default().insert(v.name.clone());
                }
            }
        }
    }
    out
}

fn simple_paths(
    edges: &HashMap<String, BTreeSet<String>>,
    inside: &HashSet<&str>,
    from: &str,
    to: &str,
) -> Vec<Vec<String>> {
    fn go(
        edges: &HashMap<String, BTreeSet<String>>,
        inside: &HashSet<&str>,
        to: &str,
        path: &mut Vec<String>,
        out: &mut Vec<Vec<String>>,
    ) {
        let last = path.last().expect("nonempty").clone();
        for next in edges.get(&last).into_iter().flatten() {
            if next == to {
                let mut p = path.clone();
                p.push(next.clone());
                out.push(p);
            } else if inside.contains(next.as_str()) && !path.contains(next) {
                path.push(next.clone());
                go(edges, inside, to, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(edges, inside, to, &mut vec![from.to_string()], &mut out);
    out
}

fn internal_cycles(edges: &HashMap<String, BTreeSet<String>>, hidden: &[String]) -> Vec<Vec<String>> {
    let inside: HashSet<&str> = hidden.iter().map(String::as_str).collect();
    let mut cycles = BTreeSet::new();
    for start in hidden {
        let mut stack = vec![(vec![start.clone()], 0usize)];
        while let Some((path, _)) = stack.pop() {
            let last = path.last().expect("nonempty");
            for next in edges.get(last).into_iter().flatten() {
                if next == start {
                    let min = path.iter().enumerate().min_by_key(|(_, n)| *n).expect("nonempty").0;
                    let mut c = path.clone();
                    c.rotate_left(min);
                    cycles.insert(c);
                } else if inside.contains(next.as_str()) && !path.contains(next) && next > start {
                    let mut p = path.clone();
                    p.push(next.clone());
                    stack.push((p, 0));
                }
            }
        }
    }
    cycles.into_iter().collect()
}

/// Replaces every macro call with hidden structure.
pub fn expand_macros(ir: &ModelIR) -> Result<ExpandedModel, ModelError> {
    let mut variables = Vec::with_capacity(ir.variables.len());
    let mut macros = Vec::new();
    for v in &ir.variables {
        if v.kind.is_stock_like() {
            let transit = v.stock.as_ref().and_then(|s| s.transit_time.as_ref());
            if v.equation.contains_macro() || transit.is_some_and(Expr::contains_macro) {
                return Err(ModelError::invalid(format!(
                    "'{}': macros are not allowed in initial values or transit times",
                    v.name
                )));
            }
            variables.push(v.clone());
            continue;
        }
        let mut ex = Expander {
            host: v.name.clone(),
            count: 0,
            generated: Vec::new(),
            instances: Vec::new(),
        };
        let mut host = v.clone();
        host.equation = ex.expand(&v.equation);
        variables.push(host);
        variables.extend(ex.generated);
        macros.extend(ex.instances);
    }
    Ok(ExpandedModel {
        ir: ir.clone(),
        variables,
        sim: ir.sim,
        declared_loops: ir.declared_loops.clone(),
        declared_paths: ir.declared_paths.clone(),
        macros,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    #[test]
    fn no_macros_is_identity() {
        let ir = parse_model("const k = 2\nflow f = k\nstock s = 1 [+f]\n").unwrap();
        let em = expand_macros(&ir).unwrap();
        assert_eq!(em.variables, ir.variables);
        assert!(em.macros.is_empty());
    }

    #[test]
    fn delay3_structure() {
        let ir = parse_model("const tau = 6\nflow u = 1\naux d = DELAY3(u, tau)\n").unwrap();
        let em = expand_macros(&ir).unwrap();
        assert_eq!(em.variables.len(), ir.variables.len() + 7);
        let m = &em.macros[0];
        assert_eq!(m.output, "~d:1.f4");
        let stocks = m.hidden.iter().filter(|h| em.get(h).unwrap().kind == VarKind::Stock).count();
        assert_eq!((stocks, m.hidden.len() - stocks), (3, 4));
        assert_eq!(m.arguments[0].pathways.len(), 1);
        assert_eq!(m.arguments[0].pathways[0].len(), 8);
        assert_eq!(m.arguments[1].pathways.len(), 3);
        assert_eq!(m.internal_loops.len(), 3);
        assert!(m.hidden.iter().all(|h| h.starts_with(HIDDEN_PREFIX)));
        assert!(em.variables.iter().all(|v| !v.equation.contains_macro()));
    }

    #[test]
    fn compound_arguments_get_hidden_aux() {
        let ir = parse_model("const a = 1\naux x = 2 * SMOOTH1(a + 1, 3)\n").unwrap();
        let em = expand_macros(&ir).unwrap();
        let m = &em.macros[0];
        assert_eq!(m.arguments[0].source, MacroSource::Variable("~x:1.input".into()));
        assert_eq!(m.arguments[1].source, MacroSource::Literal(3.0));
        assert!(m.arguments[1].pathways.is_empty());
        assert_eq!(em.get("x").unwrap().equation.to_string(), "2 * ~x:1.s");
    }

    #[test]
    fn nested_macros_expand_inside_out() {
        let ir = parse_model("flow u = 1\naux x = SMOOTH1(SMOOTH3(u, 3), 2)\n").unwrap();
        let em = expand_macros(&ir).unwrap();
        assert_eq!(em.macros.len(), 2);
        assert_eq!(em.macros[0].function, "SMOOTH3");
        assert_eq!(
            em.macros[1].arguments[0].source,
            MacroSource::Variable(em.macros[0].output.clone())
        );
    }
}
