// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Parser for the line-oriented `.sdm` model language.
//!
//! ```text
//! sim start=0 stop=100 dt=0.25
//! const birth_rate = 0.1
//! flow births = birth_rate * Population
//! stock Population = 100 [+births, -deaths] nonneg
//! conveyor Pipe = 0 [+entering, -leaving] transit=4
//! graph effect(Population / 1000) = (0,1),(1,0.5),(2,0)
//! loopscore growth = Population -> births
//! pathscore p = birth_rate -> births -> Population
//! ```

use std::collections::HashMap;

use super::expr::{BinOp, Builtin, Expr};
use super::{validate_points, DeclaredPath, ModelIR, SimConfig, StockSpec, VarKind, VariableDef};
use crate::error::{ModelError, ModelErrorKind, Pos};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Sym(char),
    Arrow,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Num(v) => format!("number {v}"),
            Tok::Sym(c) => format!("'{c}'"),
            Tok::Arrow => "'->'".to_string(),
        }
    }
}

fn syntax(pos: Pos, msg: impl Into<String>) -> ModelError {
    ModelError::at(pos, ModelErrorKind::Syntax(msg.into()))
}

fn lex_line(line_no: usize, line: &str) -> Result<Vec<(Tok, Pos)>, ModelError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos {
            line: line_no,
            col: i + 1,
        };
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| syntax(pos, format!("malformed number '{text}'")))?;
            out.push((Tok::Num(v), pos));
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'>') {
            out.push((Tok::Arrow, pos));
            i += 2;
            continue;
        }
        if "()[],+-*/^=".contains(c) {
            out.push((Tok::Sym(c), pos));
            i += 1;
            continue;
        }
        return Err(syntax(pos, format!("unexpected character '{c}'")));
    }
    Ok(out)
}

struct Line<'a> {
    toks: &'a [(Tok, Pos)],
    i: usize,
    end: Pos,
    refs: &'a mut Vec<(String, Pos, String)>,
    context: String,
}

impl<'a> Line<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.0)
    }

    fn pos(&self) -> Pos {
        self.toks.get(self.i).map_or(self.end, |t| t.1)
    }

    fn next(&mut self) -> Option<(Tok, Pos)> {
        let t = self.toks.get(self.i).cloned();
        if t.is_some() {
            self.i += 1;
        }
        t
    }

    fn at_end(&self) -> bool {
        self.i >= self.toks.len()
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn unexpected(&self, wanted: &str) -> ModelError {
        match self.toks.get(self.i) {
            Some((t, p)) => syntax(*p, format!("expected {wanted}, found {}", t.describe())),
            None => match self.i.checked_sub(1).and_then(|k| self.toks.get(k)) {
                Some((t, p)) => syntax(*p, format!("expected {wanted} after {}", t.describe())),
                None => syntax(self.end, format!("expected {wanted}")),
            },
        }
    }

    fn expect_sym(&mut self, c: char) -> Result<(), ModelError> {
        if self.eat_sym(c) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{c}'")))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), ModelError> {
        match self.toks.get(self.i) {
            Some((Tok::Ident(s), p)) => {
                self.i += 1;
                Ok((s.clone(), *p))
            }
            _ => Err(self.unexpected("a name")),
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == kw) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn signed_number(&mut self) -> Result<f64, ModelError> {
        let neg = self.eat_sym('-');
        match self.toks.get(self.i) {
            Some((Tok::Num(v), _)) => {
                self.i += 1;
                Ok(if neg { -v } else { *v })
            }
            _ => Err(self.unexpected("a number")),
        }
    }

    fn finish(&self) -> Result<(), ModelError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.unexpected("end of line"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ModelError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Sym('+')) => BinOp::Add,
                Some(Tok::Sym('-')) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.i += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ModelError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Sym('*')) => BinOp::Mul,
                Some(Tok::Sym('/')) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.i += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ModelError> {
        if self.eat_sym('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ModelError> {
        let base = self.primary()?;
        if self.eat_sym('^') {
            let exp = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ModelError> {
        match self.toks.get(self.i).cloned() {
            Some((Tok::Num(v), _)) => {
                self.i += 1;
                Ok(Expr::Num(v))
            }
            Some((Tok::Sym('('), _)) => {
                self.i += 1;
                let e = self.expr()?;
                self.expect_sym(')')?;
                Ok(e)
            }
            Some((Tok::Ident(name), pos)) => {
                self.i += 1;
                if !self.eat_sym('(') {
                    self.refs.push((name.clone(), pos, self.context.clone()));
                    return Ok(Expr::Var(name));
                }
                let Some(b) = Builtin::from_name(&name) else {
                    return Err(ModelError::at(pos, ModelErrorKind::UnknownFunction(name)));
                };
                let mut args = Vec::new();
                if !self.eat_sym(')') {
                    loop {
                        args.push(self.expr()?);
                        if self.eat_sym(')') {
                            break;
                        }
                        self.expect_sym(',')?;
                    }
                }
                if args.len() != b.arity() {
                    return Err(ModelError::at(
                        pos,
                        ModelErrorKind::Arity {
                            name: b.name().to_string(),
                            expected: b.arity(),
                            got: args.len(),
                        },
                    ));
                }
                Ok(Expr::Call(b, args))
            }
            _ => Err(self.unexpected("an expression")),
        }
    }
}

struct Builder {
    variables: Vec<VariableDef>,
    names: HashMap<String, Pos>,
    sim: Option<SimConfig>,
    declared_loops: Vec<DeclaredPath>,
    declared_paths: Vec<DeclaredPath>,
    refs: Vec<(String, Pos, String)>,
    flow_refs: Vec<(String, Pos)>,
}

impl Builder {
    fn claim(&mut self, name: &str, pos: Pos) -> Result<(), ModelError> {
        if self.names.insert(name.to_string(), pos).is_some() {
            return Err(ModelError::at(pos, ModelErrorKind::DuplicateName(name.to_string())));
        }
        Ok(())
    }

    fn line(&mut self, line_no: usize, text: &str) -> Result<(), ModelError> {
        let toks = lex_line(line_no, text)?;
        if toks.is_empty() {
            return Ok(());
        }
        let end = Pos {
            line: line_no,
            col: text.chars().count() + 1,
        };
        let mut refs = Vec::new();
        let mut l = Line {
            toks: &toks,
            i: 0,
            end,
            refs: &mut refs,
            context: String::new(),
        };
        let (kw, kw_pos) = l.ident()?;
        match kw.as_str() {
            "sim" => {
                if self.sim.is_some() {
                    return Err(syntax(kw_pos, "duplicate sim declaration"));
                }
                let mut cfg = SimConfig::new(0.0, 100.0, 1.0);
                let mut seen = Vec::new();
                while !l.at_end() {
                    let (key, kpos) = l.ident()?;
                    l.expect_sym('=')?;
                    let v = l.signed_number()?;
                    if seen.contains(&key) {
                        return Err(syntax(kpos, format!("'{key}' given twice")));
                    }
                    match key.as_str() {
                        "start" => cfg.start = v,
                        "stop" => cfg.stop = v,
                        "dt" => cfg.dt = v,
                        _ => return Err(syntax(kpos, format!("unknown sim setting '{key}'"))),
                    }
                    seen.push(key);
                }
                if let Err(e) = cfg.steps() {
                    return Err(ModelError::at(kw_pos, ModelErrorKind::Invalid(e.to_string())));
                }
                self.sim = Some(cfg);
            }
            "const" | "aux" | "flow" => {
                let (name, pos) = l.ident()?;
                l.expect_sym('=')?;
                l.context = name.clone();
                let (kind, eq) = if kw == "const" {
                    (VarKind::Constant, Expr::Num(l.signed_number()?))
                } else {
                    let kind = if kw == "aux" { VarKind::Aux } else { VarKind::Flow };
                    (kind, l.expr()?)
                };
                l.finish()?;
                self.claim(&name, pos)?;
                self.variables.push(VariableDef::new(name, kind, eq));
            }
            "stock" | "conveyor" => {
                let (name, pos) = l.ident()?;
                l.expect_sym('=')?;
                l.context = name.clone();
                let init = l.expr()?;
                let mut spec = StockSpec {
                    inflows: Vec::new(),
                    outflows: Vec::new(),
                    nonneg: false,
                    transit_time: None,
                };
                let mut flow_pos = Vec::new();
                if l.eat_sym('[') {
                    if l.keyword("nonneg") {
                        spec.nonneg = true;
                        l.expect_sym(']')?;
                    } else if !l.eat_sym(']') {
                        loop {
                            let inflow = if l.eat_sym('+') {
                                true
                            } else if l.eat_sym('-') {
                                false
                            } else {
                                return Err(l.unexpected("'+flow' or '-flow'"));
                            };
                            let (flow, fpos) = l.ident()?;
                            flow_pos.push((flow.clone(), fpos));
                            if inflow {
                                spec.inflows.push(flow);
                            } else {
                                spec.outflows.push(flow);
                            }
                            if l.eat_sym(']') {
                                break;
                            }
                            l.expect_sym(',')?;
                        }
                    }
                }
                while !l.at_end() {
                    if l.keyword("nonneg") {
                        spec.nonneg = true;
                    } else if l.eat_sym('[') {
                        if !l.keyword("nonneg") {
                            return Err(l.unexpected("'nonneg'"));
                        }
                        l.expect_sym(']')?;
                        spec.nonneg = true;
                    } else if kw == "conveyor" && l.keyword("transit") {
                        l.expect_sym('=')?;
                        if spec.transit_time.is_some() {
                            return Err(syntax(l.pos(), "transit given twice"));
                        }
                        spec.transit_time = Some(l.expr()?);
                    } else {
                        return Err(l.unexpected(if kw == "conveyor" {
                            "'transit=' or end of line"
                        } else {
                            "'nonneg' or end of line"
                        }));
                    }
                }
                let conveyor = kw == "conveyor";
                if conveyor {
                    if spec.transit_time.is_none() {
                        return Err(syntax(kw_pos, format!("conveyor '{name}' needs transit=")));
                    }
                    if spec.outflows.len() != 1 {
                        return Err(ModelError::at(
                            pos,
                            ModelErrorKind::Invalid(format!(
                                "conveyor '{name}' must declare exactly one outflow"
                            )),
                        ));
                    }
                    if spec.nonneg {
                        return Err(ModelError::at(
                            pos,
                            ModelErrorKind::Invalid(format!("conveyor '{name}' cannot be marked nonneg")),
                        ));
                    }
                }
                for (i, (f, fpos)) in flow_pos.iter().enumerate() {
                    if flow_pos[..i].iter().any(|(g, _)| g == f) {
                        return Err(ModelError::at(
                            *fpos,
                            ModelErrorKind::Invalid(format!("flow '{f}' listed twice on '{name}'")),
                        ));
                    }
                }
                self.claim(&name, pos)?;
                let out = spec.outflows.first().cloned();
                let mut v = VariableDef::new(
                    name.clone(),
                    if conveyor { VarKind::Conveyor } else { VarKind::Stock },
                    init,
                );
                v.stock = Some(spec);
                self.variables.push(v);
                if conveyor {
                    let out = out.expect("checked above");
                    let opos = flow_pos.iter().find(|(f, _)| *f == out).map_or(pos, |p| p.1);
                    self.claim(&out, opos)?;
                    let mut flow = VariableDef::new(out, VarKind::Flow, Expr::var(name.clone()));
                    flow.conveyor_outflow_of = Some(name);
                    self.variables.push(flow);
                }
                self.flow_refs.extend(flow_pos);
            }
            "graph" => {
                let (name, pos) = l.ident()?;
                l.context = name.clone();
                l.expect_sym('(')?;
                let input = l.expr()?;
                l.expect_sym(')')?;
                l.expect_sym('=')?;
                let mut points = Vec::new();
                loop {
                    l.expect_sym('(')?;
                    let x = l.signed_number()?;
                    l.expect_sym(',')?;
                    let y = l.signed_number()?;
                    l.expect_sym(')')?;
                    points.push((x, y));
                    if l.at_end() {
                        break;
                    }
                    l.expect_sym(',')?;
                }
                validate_points(&name, &points).map_err(|e| ModelError::at(pos, e.kind))?;
                self.claim(&name, pos)?;
                let mut v = VariableDef::new(name, VarKind::Graphical, input);
                v.graph_points = Some(points);
                self.variables.push(v);
            }
            "loopscore" | "pathscore" => {
                let (name, pos) = l.ident()?;
                l.expect_sym('=')?;
                let mut vars = Vec::new();
                loop {
                    let (v, vpos) = l.ident()?;
                    l.refs.push((v.clone(), vpos, name.clone()));
                    vars.push(v);
                    if l.at_end() {
                        break;
                    }
                    if l.next().map(|t| t.0) != Some(Tok::Arrow) {
                        l.i -= 1;
                        return Err(l.unexpected("'->'"));
                    }
                }
                let min = if kw == "loopscore" { 1 } else { 2 };
                if vars.len() < min {
                    return Err(syntax(pos, format!("'{name}' needs at least {min} variables")));
                }
                self.claim(&name, pos)?;
                let d = DeclaredPath { name, vars };
                if kw == "loopscore" {
                    self.declared_loops.push(d);
                } else {
                    self.declared_paths.push(d);
                }
            }
            other => {
                return Err(syntax(kw_pos, format!("unknown declaration '{other}'")));
            }
        }
        self.refs.extend(refs);
        Ok(())
    }
}

/// Parses and validates `.sdm` source. A file without a `sim` line runs
/// from 0 to 100 with dt = 1.
pub fn parse_model(text: &str) -> Result<ModelIR, ModelError> {
    let mut b = Builder {
        variables: Vec::new(),
        names: HashMap::new(),
        sim: None,
        declared_loops: Vec::new(),
        declared_paths: Vec::new(),
        refs: Vec::new(),
        flow_refs: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        b.line(i + 1, line)?;
    }
    for (name, pos, context) in &b.refs {
        if !b.names.contains_key(name) || is_declaration(&b, name) {
            return Err(ModelError::at(
                *pos,
                ModelErrorKind::UnresolvedReference {
                    name: name.clone(),
                    context: context.clone(),
                },
            ));
        }
    }
    let kinds: HashMap<&str, VarKind> = b.variables.iter().map(|v| (v.name.as_str(), v.kind)).collect();
    for (flow, pos) in &b.flow_refs {
        match kinds.get(flow.as_str()) {
            Some(VarKind::Flow) => {}
            Some(_) => {
                return Err(ModelError::at(
                    *pos,
                    ModelErrorKind::Invalid(format!("'{flow}' is not a flow")),
                ))
            }
            None => {
                return Err(ModelError::at(
                    *pos,
                    ModelErrorKind::UnresolvedReference {
                        name: flow.clone(),
                        context: "stock flow list".to_string(),
                    },
                ))
            }
        }
    }
    let ir = ModelIR {
        variables: b.variables,
        sim: b.sim.unwrap_or(SimConfig::new(0.0, 100.0, 1.0)),
        declared_loops: b.declared_loops,
        declared_paths: b.declared_paths,
    };
    ir.validate()?;
    Ok(ir)
}

fn is_declaration(b: &Builder, name: &str) -> bool {
    b.declared_loops.iter().chain(&b.declared_paths).any(|d| d.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_declaration() {
        let ir = parse_model("const birth_rate = 0.1").unwrap();
        assert_eq!(ir.variables.len(), 1);
        assert_eq!(ir.variables[0].kind, VarKind::Constant);
        assert_eq!(ir.variables[0].equation, Expr::Num(0.1));
    }

    #[test]
    fn trailing_operator_is_located() {
        let err = parse_model("flow births = 0.1 *").unwrap_err();
        assert!(matches!(err.kind, ModelErrorKind::Syntax(_)));
        assert_eq!(err.pos, Some(Pos { line: 1, col: 19 }));
    }

    #[test]
    fn precedence_and_associativity() {
        let ir = parse_model("const a = 2\naux x = -a^2 + a*a - a - a\naux y = a^a^-a\n").unwrap();
        assert_eq!(ir.get("x").unwrap().equation.to_string(), "-a^2 + a * a - a - a");
        let y = &ir.get("y").unwrap().equation;
        let Expr::Binary(BinOp::Pow, _, rhs) = y else { panic!() };
        assert!(matches!(**rhs, Expr::Binary(BinOp::Pow, _, _)));
    }

    #[test]
    fn reports_errors_with_positions() {
        let cases = [
            ("aux a = FOO(1, 2)", ModelErrorKind::UnknownFunction("FOO".into()), 1, 9),
            (
                "aux a = MIN(1)",
                ModelErrorKind::Arity {
                    name: "MIN".into(),
                    expected: 2,
                    got: 1,
                },
                1,
                9,
            ),
            ("const a = 1\nconst a = 2", ModelErrorKind::DuplicateName("a".into()), 2, 7),
            (
                "const a = 1\naux b = a + c",
                ModelErrorKind::UnresolvedReference {
                    name: "c".into(),
                    context: "b".into(),
                },
                2,
                13,
            ),
        ];
        for (src, kind, line, col) in cases {
            let err = parse_model(src).unwrap_err();
            assert_eq!(err.kind, kind, "{src}");
            assert_eq!(err.pos, Some(Pos { line, col }), "{src}");
        }
    }

    #[test]
    fn stock_flow_lists_must_name_flows() {
        assert!(parse_model("aux a = 1\nstock s = 0 [+a]").is_err());
        assert!(parse_model("stock s = 0 [+nope]").is_err());
        assert!(parse_model("flow f = 1\nstock s = 0 [+f]\nstock t = 0 [+f]").is_err());
    }

    #[test]
    fn conveyor_generates_its_outflow() {
        let ir = parse_model("flow i = 1\nconveyor c = 0 [+i, -o] transit=3\n").unwrap();
        let o = ir.get("o").unwrap();
        assert_eq!(o.kind, VarKind::Flow);
        assert_eq!(o.conveyor_outflow_of.as_deref(), Some("c"));
        assert!(parse_model("flow i = 1\nflow o = 2\nconveyor c = 0 [+i, -o] transit=3").is_err());
        assert!(parse_model("flow i = 1\nconveyor c = 0 [+i] transit=3").is_err());
        assert!(parse_model("flow i = 1\nconveyor c = 0 [+i, -o]").is_err());
    }

    #[test]
    fn both_nonneg_spellings() {
        for src in ["flow f = 1\nstock s = 0 [-f] nonneg", "flow f = 1\nstock s = 0 [-f] [nonneg]"] {
            let ir = parse_model(src).unwrap();
            assert!(ir.get("s").unwrap().stock.as_ref().unwrap().nonneg);
        }
    }

    #[test]
    fn canonical_text_round_trips() {
        let src = "# comment\nsim start=1 stop=11 dt=0.5\nconst k = -2.5e-8\nflow f = (k - -1) * MIN(s, 3)^-2 / STEP(1, 5)\n\
                   stock s = 10 [+f] nonneg\ngraph g(s / 2) = (0,1),(1,-1)\naux p = PREVIOUS(g, k)\n\
                   flow i = SMOOTH1(p, 2)\nconveyor c = i [+i, -o] transit=1 + k\nloopscore l = s -> f\npathscore q = k -> f\n";
        let ir = parse_model(src).unwrap();
        let text = ir.to_source();
        let again = parse_model(&text).unwrap();
        assert_eq!(ir, again);
        assert_eq!(text, again.to_source());
    }
}
