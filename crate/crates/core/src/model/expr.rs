// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Equation expression trees.

use std::collections::BTreeSet;
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }

    pub fn apply(self, l: f64, r: f64) -> f64 {
        match self {
            BinOp::Add => l + r,
            BinOp::Sub => l - r,
            BinOp::Mul => l * r,
            BinOp::Div => l / r,
            BinOp::Pow => l.powf(r),
        }
    }
}

/// Builtin functions callable from equations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Builtin {
    Min,
    Max,
    /// `STEP(height, time)`: `height` once simulated time reaches `time`.
    Step,
    /// `PREVIOUS(expr, initial)`: value of `expr` one dt earlier.
    Previous,
    Smooth1,
    Smooth3,
    Delay3,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Builtin> {
        Some(match name.to_ascii_uppercase().as_str() {
            "MIN" => Builtin::Min,
            "MAX" => Builtin::Max,
            "STEP" => Builtin::Step,
            "PREVIOUS" => Builtin::Previous,
            "SMOOTH1" => Builtin::Smooth1,
            "SMOOTH3" => Builtin::Smooth3,
            "DELAY3" => Builtin::Delay3,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Min => "MIN",
            Builtin::Max => "MAX",
            Builtin::Step => "STEP",
            Builtin::Previous => "PREVIOUS",
            Builtin::Smooth1 => "SMOOTH1",
            Builtin::Smooth3 => "SMOOTH3",
            Builtin::Delay3 => "DELAY3",
        }
    }

    pub fn arity(self) -> usize {
        2
    }

    /// Builtins that expand into hidden stock-and-flow structure.
    pub fn is_macro(self) -> bool {
        matches!(self, Builtin::Smooth1 | Builtin::Smooth3 | Builtin::Delay3)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Builtin, Vec<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    /// Every variable name referenced anywhere in the tree.
    pub fn references(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_refs(&mut |name, _| {
            out.insert(name.to_string());
        });
        out
    }

    /// References that hold in the same dt. Arguments to `PREVIOUS` other than
    /// the initial value only act one step later and are excluded.
    pub fn instantaneous_references(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_refs(&mut |name, lagged| {
            if !lagged {
                out.insert(name.to_string());
            }
        });
        out
    }

    /// References that carry causal influence over the run: everything except
    /// the initial-value argument of `PREVIOUS`.
    pub fn causal_references(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_causal(&mut out);
        out
    }

    fn collect_causal(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(n) => {
                out.insert(n.clone());
            }
            Expr::Neg(e) => e.collect_causal(out),
            Expr::Binary(_, l, r) => {
                l.collect_causal(out);
                r.collect_causal(out);
            }
            Expr::Call(Builtin::Previous, args) => args[0].collect_causal(out),
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_causal(out)),
        }
    }

    fn visit_refs(&self, f: &mut dyn FnMut(&str, bool)) {
        self.visit_refs_inner(f, false)
    }

    fn visit_refs_inner(&self, f: &mut dyn FnMut(&str, bool), lagged: bool) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(n) => f(n, lagged),
            Expr::Neg(e) => e.visit_refs_inner(f, lagged),
            Expr::Binary(_, l, r) => {
                l.visit_refs_inner(f, lagged);
                r.visit_refs_inner(f, lagged);
            }
            Expr::Call(Builtin::Previous, args) => {
                args[0].visit_refs_inner(f, true);
                args[1].visit_refs_inner(f, lagged);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit_refs_inner(f, lagged)),
        }
    }

    pub fn contains_macro(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Var(_) => false,
            Expr::Neg(e) => e.contains_macro(),
            Expr::Binary(_, l, r) => l.contains_macro() || r.contains_macro(),
            Expr::Call(b, args) => b.is_macro() || args.iter().any(Expr::contains_macro),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, _, _) => op.precedence(),
            Expr::Neg(_) => 3,
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => 3,
            _ => 5,
        }
    }
}

/// Formats a literal so that parsing the text yields the identical `f64`.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-6..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => f.write_str(&format_number(*v)),
            Expr::Var(n) => f.write_str(n),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_child(f, e, e.precedence() < 3)
            }
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                let (lp, rp) = if *op == BinOp::Pow {
                    (l.precedence() <= p, r.precedence() < 3)
                } else {
                    (l.precedence() < p, r.precedence() <= p)
                };
                write_child(f, l, lp)?;
                if *op == BinOp::Pow {
                    f.write_str(op.symbol())?;
                } else {
                    write!(f, " {} ", op.symbol())?;
                }
                write_child(f, r, rp)
            }
            Expr::Call(b, args) => {
                write!(f, "{}(", b.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}
