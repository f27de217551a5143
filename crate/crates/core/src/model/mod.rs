// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Model intermediate representation.
//!
//! A model is a flat list of variables. Stocks and conveyors accumulate
//! their in/outflows; every other kind is recomputed each dt from its
//! equation. `parse_model` builds a validated [`ModelIR`] from `.sdm`
//! text, [`expand_macros`] replaces SMOOTH/DELAY calls with hidden
//! structure, and [`build_causal_graph`] derives the link structure scored
//! by the analysis.

pub mod expand;
pub mod expr;
pub mod graph;
pub mod parser;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ModelError, ModelErrorKind};

pub use expand::{expand_macros, ExpandedModel, MacroArgument, MacroInstance, MacroSource};
pub use expr::{BinOp, Builtin, Expr};
pub use graph::{build_causal_graph, CausalGraph, EdgeKind, LoopGraph, ReportEdge};
pub use parser::parse_model;

/// Prefix carried by every generated variable name. It cannot start a
/// user identifier, so hidden names never collide with model names.
pub const HIDDEN_PREFIX: char = '~';

pub fn is_hidden(name: &str) -> bool {
    name.starts_with(HIDDEN_PREFIX)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Stock,
    Conveyor,
    Flow,
    Aux,
    Constant,
    Graphical,
}

impl VarKind {
    pub fn is_stock_like(self) -> bool {
        matches!(self, VarKind::Stock | VarKind::Conveyor)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            VarKind::Stock => "stock",
            VarKind::Conveyor => "conveyor",
            VarKind::Flow => "flow",
            VarKind::Aux => "aux",
            VarKind::Constant => "const",
            VarKind::Graphical => "graph",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StockSpec {
    pub inflows: Vec<String>,
    pub outflows: Vec<String>,
    pub nonneg: bool,
    /// Conveyors only.
    pub transit_time: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariableDef {
    pub name: String,
    pub kind: VarKind,
    /// Initial value for stocks and conveyors; the input expression for
    /// graphical variables; the defining equation otherwise.
    pub equation: Expr,
    pub stock: Option<StockSpec>,
    pub graph_points: Option<Vec<(f64, f64)>>,
    /// Set on the flow a conveyor releases. Its value comes from the
    /// conveyor's exiting slat; `equation` is the nominal reference to the
    /// conveyor.
    pub conveyor_outflow_of: Option<String>,
}

impl VariableDef {
    pub fn new(name: impl Into<String>, kind: VarKind, equation: Expr) -> Self {
        VariableDef {
            name: name.into(),
            kind,
            equation,
            stock: None,
            graph_points: None,
            conveyor_outflow_of: None,
        }
    }

    pub fn stock(name: impl Into<String>, init: Expr, inflows: &[&str], outflows: &[&str]) -> Self {
        let mut v = VariableDef::new(name, VarKind::Stock, init);
        v.stock = Some(StockSpec {
            inflows: inflows.iter().map(|s| s.to_string()).collect(),
            outflows: outflows.iter().map(|s| s.to_string()).collect(),
            nonneg: false,
            transit_time: None,
        });
        v
    }

    pub fn is_hidden(&self) -> bool {
        is_hidden(&self.name)
    }

    /// Names this variable's value depends on within the same dt.
    pub fn instantaneous_deps(&self) -> BTreeSet<String> {
        match self.kind {
            VarKind::Stock | VarKind::Conveyor => BTreeSet::new(),
            _ if self.conveyor_outflow_of.is_some() => BTreeSet::new(),
            _ => self.equation.instantaneous_references(),
        }
    }

    /// Names whose values feed the initial value of this variable.
    pub fn init_deps(&self) -> BTreeSet<String> {
        let mut deps = self.equation.instantaneous_references();
        if let Some(spec) = &self.stock {
            if let Some(t) = &spec.transit_time {
                deps.extend(t.instantaneous_references());
            }
        }
        if let Some(c) = &self.conveyor_outflow_of {
            deps.clear();
            deps.insert(c.clone());
        }
        deps
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub start: f64,
    pub stop: f64,
    pub dt: f64,
    /// Upper bound on the number of dt steps a run may take.
    #[serde(default = "default_step_cap")]
    pub step_cap: usize,
}

pub const DEFAULT_STEP_CAP: usize = 1_000_000;

fn default_step_cap() -> usize {
    DEFAULT_STEP_CAP
}

impl SimConfig {
    pub fn new(start: f64, stop: f64, dt: f64) -> Self {
        SimConfig {
            start,
            stop,
            dt,
            step_cap: DEFAULT_STEP_CAP,
        }
    }

    /// Number of dt steps, checked against the invariants.
    pub fn steps(&self) -> Result<usize, crate::error::SimError> {
        use crate::error::SimError;
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(SimError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !self.start.is_finite() || !self.stop.is_finite() || self.stop <= self.start {
            return Err(SimError::Config(format!(
                "stop ({}) must exceed start ({})",
                self.stop, self.start
            )));
        }
        let exact = (self.stop - self.start) / self.dt;
        if exact > self.step_cap as f64 {
            return Err(SimError::TooManySteps {
                steps: exact.ceil() as usize,
                cap: self.step_cap,
            });
        }
        let n = exact.round();
        if (exact - n).abs() > 1e-6 * n.max(1.0) {
            return Err(SimError::Config(format!(
                "stop - start ({}) is not a whole number of dt ({})",
                self.stop - self.start,
                self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn time_at(&self, step: usize) -> f64 {
        self.start + step as f64 * self.dt
    }
}

/// A named variable sequence declared with `loopscore` or `pathscore`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeclaredPath {
    pub name: String,
    pub vars: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelIR {
    pub variables: Vec<VariableDef>,
    pub sim: SimConfig,
    pub declared_loops: Vec<DeclaredPath>,
    pub declared_paths: Vec<DeclaredPath>,
}

impl ModelIR {
    pub fn get(&self, name: &str) -> Option<&VariableDef> {
        self.variables.iter().find(|v| v.name == name)
    }

    /// Overrides a constant's value.
    pub fn set_constant(&mut self, name: &str, value: f64) -> Result<(), ModelError> {
        match self.variables.iter_mut().find(|v| v.name == name) {
            Some(v) if v.kind == VarKind::Constant => {
                v.equation = Expr::Num(value);
                Ok(())
            }
            Some(_) => Err(ModelError::invalid(format!("'{name}' is not a constant"))),
            None => Err(ModelError::invalid(format!("no constant named '{name}'"))),
        }
    }

    /// Checks the structural invariants. `parse_model` runs this after
    /// its own positioned checks; programmatic builders should call it too.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut by_name: HashMap<&str, &VariableDef> = HashMap::new();
        for v in &self.variables {
            if by_name.insert(v.name.as_str(), v).is_some() {
                return Err(ModelError::new(ModelErrorKind::DuplicateName(v.name.clone())));
            }
        }
        let unresolved = |name: &str, context: &str| {
            ModelError::new(ModelErrorKind::UnresolvedReference {
                name: name.to_string(),
                context: context.to_string(),
            })
        };

        let mut inflow_of: HashMap<&str, &str> = HashMap::new();
        let mut outflow_of: HashMap<&str, &str> = HashMap::new();
        for v in &self.variables {
            for r in v.equation.references() {
                if !by_name.contains_key(r.as_str()) {
                    return Err(unresolved(&r, &v.name));
                }
            }
            match (&v.stock, v.kind.is_stock_like()) {
                (Some(_), false) | (None, true) => {
                    return Err(ModelError::invalid(format!(
                        "'{}': stock spec present iff the variable is a stock or conveyor",
                        v.name
                    )))
                }
                _ => {}
            }
            if (v.kind == VarKind::Graphical) != v.graph_points.is_some() {
                return Err(ModelError::invalid(format!(
                    "'{}': graph points present iff the variable is graphical",
                    v.name
                )));
            }
            if let Some(points) = &v.graph_points {
                validate_points(&v.name, points)?;
            }
            if v.kind == VarKind::Constant && !matches!(v.equation, Expr::Num(_)) {
                return Err(ModelError::invalid(format!("constant '{}' must be a number", v.name)));
            }
            if let Some(c) = &v.conveyor_outflow_of {
                let ok = v.kind == VarKind::Flow
                    && by_name.get(c.as_str()).is_some_and(|cv| {
                        cv.kind == VarKind::Conveyor
                            && cv.stock.as_ref().is_some_and(|s| s.outflows == [v.name.clone()])
                    });
                if !ok {
                    return Err(ModelError::invalid(format!(
                        "'{}' is not the outflow of conveyor '{c}'",
                        v.name
                    )));
                }
            }
            let Some(spec) = &v.stock else { continue };
            if let Some(t) = &spec.transit_time {
                for r in t.references() {
                    if !by_name.contains_key(r.as_str()) {
                        return Err(unresolved(&r, &v.name));
                    }
                }
            }
            match v.kind {
                VarKind::Conveyor => {
                    if spec.transit_time.is_none() {
                        return Err(ModelError::invalid(format!("conveyor '{}' needs transit=", v.name)));
                    }
                    if spec.outflows.len() != 1 {
                        return Err(ModelError::invalid(format!(
                            "conveyor '{}' must declare exactly one outflow",
                            v.name
                        )));
                    }
                    if spec.nonneg {
                        return Err(ModelError::invalid(format!(
                            "conveyor '{}' cannot be marked nonneg",
                            v.name
                        )));
                    }
                }
                _ if spec.transit_time.is_some() => {
                    return Err(ModelError::invalid(format!("only conveyors take transit= ('{}')", v.name)))
                }
                _ => {}
            }
            for (flows, role, seen) in [
                (&spec.inflows, "inflow", &mut inflow_of),
                (&spec.outflows, "outflow", &mut outflow_of),
            ] {
                for f in flows {
                    match by_name.get(f.as_str()) {
                        None => return Err(unresolved(f, &v.name)),
                        Some(fv) if fv.kind != VarKind::Flow => {
                            return Err(ModelError::invalid(format!(
                                "'{f}' listed as {role} of '{}' is not a flow",
                                v.name
                            )))
                        }
                        _ => {}
                    }
                    if let Some(prev) = seen.insert(f.as_str(), v.name.as_str()) {
                        return Err(ModelError::invalid(format!(
                            "flow '{f}' is an {role} of both '{prev}' and '{}'",
                            v.name
                        )));
                    }
                }
            }
            if spec.inflows.iter().any(|f| spec.outflows.contains(f)) {
                return Err(ModelError::invalid(format!(
                    "'{}' lists the same flow as inflow and outflow",
                    v.name
                )));
            }
        }
        // Conveyor outflows must be the generated flows, and vice versa.
        for v in &self.variables {
            if v.kind == VarKind::Conveyor {
                let out = &v.stock.as_ref().expect("checked").outflows[0];
                if by_name[out.as_str()].conveyor_outflow_of.as_deref() != Some(v.name.as_str()) {
                    return Err(ModelError::invalid(format!(
                        "outflow '{out}' of conveyor '{}' is defined by the conveyor and cannot have its own equation",
                        v.name
                    )));
                }
            }
        }
        for d in self.declared_loops.iter().chain(&self.declared_paths) {
            for n in &d.vars {
                if !by_name.contains_key(n.as_str()) {
                    return Err(unresolved(n, &d.name));
                }
            }
        }
        let mut declared = HashSet::new();
        for d in self.declared_loops.iter().chain(&self.declared_paths) {
            if !declared.insert(d.name.as_str()) || by_name.contains_key(d.name.as_str()) {
                return Err(ModelError::new(ModelErrorKind::DuplicateName(d.name.clone())));
            }
        }
        Ok(())
    }

    /// Canonical `.sdm` text. Parsing it yields an identical IR.
    pub fn to_source(&self) -> String {
        use expr::format_number as num;
        let mut out = String::new();
        let s = &self.sim;
        let _ = writeln!(out, "sim start={} stop={} dt={}", num(s.start), num(s.stop), num(s.dt));
        for v in &self.variables {
            if v.conveyor_outflow_of.is_some() {
                continue;
            }
            let kw = v.kind.keyword();
            match v.kind {
                VarKind::Graphical => {
                    let pts = v
                        .graph_points
                        .as_deref()
                        .unwrap_or_default()
                        .iter()
                        .map(|(x, y)| format!("({},{})", num(*x), num(*y)))
                        .collect::<Vec<_>>()
                        .join(",");
                    let _ = writeln!(out, "graph {}({}) = {pts}", v.name, v.equation);
                }
                VarKind::Stock | VarKind::Conveyor => {
                    let spec = v.stock.as_ref().expect("stock spec");
                    let flows = spec
                        .inflows
                        .iter()
                        .map(|f| format!("+{f}"))
                        .chain(spec.outflows.iter().map(|f| format!("-{f}")))
                        .collect::<Vec<_>>()
                        .join(", ");
                    let _ = write!(out, "{kw} {} = {} [{flows}]", v.name, v.equation);
                    if spec.nonneg {
                        out.push_str(" nonneg");
                    }
                    if let Some(t) = &spec.transit_time {
                        let _ = write!(out, " transit={t}");
                    }
                    out.push('\n');
                }
                _ => {
                    let _ = writeln!(out, "{kw} {} = {}", v.name, v.equation);
                }
            }
        }
        for (kw, list) in [("loopscore", &self.declared_loops), ("pathscore", &self.declared_paths)] {
            for d in list {
                let _ = writeln!(out, "{kw} {} = {}", d.name, d.vars.join(" -> "));
            }
        }
        out
    }

    /// Hex SHA-256 of the canonical text.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_source().as_bytes()))
    }
}

pub(crate) fn validate_points(name: &str, points: &[(f64, f64)]) -> Result<(), ModelError> {
    if points.len() < 2 {
        return Err(ModelError::invalid(format!("graph '{name}' needs at least 2 points")));
    }
    if points.windows(2).any(|w| w[0].0.is_nan() || w[1].0.is_nan() || w[1].0 <= w[0].0) {
        return Err(ModelError::invalid(format!(
            "graph '{name}': x values must be strictly increasing"
        )));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(ModelError::invalid(format!("graph '{name}': points must be finite")));
    }
    Ok(())
}

/// Piecewise-linear lookup, clamped to the end values outside the domain.
pub fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let i = points.partition_point(|p| p.0 <= x);
    let (x0, y0) = points[i - 1];
    let (x1, y1) = points[i];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_clamps() {
        let pts = [(0.0, 1.0), (1.0, 3.0), (2.0, 2.0)];
        assert_eq!(interpolate(&pts, -5.0), 1.0);
        assert_eq!(interpolate(&pts, 0.5), 2.0);
        assert_eq!(interpolate(&pts, 1.0), 3.0);
        assert_eq!(interpolate(&pts, 1.5), 2.5);
        assert_eq!(interpolate(&pts, 9.0), 2.0);
    }

    #[test]
    fn sim_config_checks() {
        assert_eq!(SimConfig::new(0.0, 10.0, 0.25).steps().unwrap(), 40);
        assert!(SimConfig::new(0.0, 10.0, 0.0).steps().is_err());
        assert!(SimConfig::new(5.0, 5.0, 1.0).steps().is_err());
        assert!(SimConfig::new(0.0, 10.0, 3.0).steps().is_err());
        let mut capped = SimConfig::new(0.0, 100.0, 1.0);
        capped.step_cap = 10;
        assert!(matches!(
            capped.steps(),
            Err(crate::error::SimError::TooManySteps { .. })
        ));
    }

    #[test]
    fn set_constant_rejects_non_constants() {
        let mut ir = parse_model("sim start=0 stop=1 dt=1\nconst a = 1\naux b = a\n").unwrap();
        ir.set_constant("a", 3.0).unwrap();
        assert_eq!(ir.get("a").unwrap().equation, Expr::Num(3.0));
        assert!(ir.set_constant("b", 1.0).is_err());
        assert!(ir.set_constant("zz", 1.0).is_err());
    }
}
