// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Index-resolved expressions and their evaluation.

use std::collections::{BTreeSet, HashMap};

use crate::model::{interpolate, BinOp, Builtin, Expr};

#[derive(Clone, Debug)]
pub enum CExpr {
    Num(f64),
    Var(usize),
    Neg(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
    Min(Box<CExpr>, Box<CExpr>),
    Max(Box<CExpr>, Box<CExpr>),
    Step(Box<CExpr>, Box<CExpr>),
    /// Reads a recorded `PREVIOUS` slot, or evaluates `init` at the first step.
    Prev { slot: usize, init: Box<CExpr> },
}

/// A `PREVIOUS` call site. Its value at step t is `inner` evaluated at t-1.
#[derive(Clone, Debug)]
pub struct Slot {
    pub owner: usize,
    pub inner: CExpr,
    pub init: CExpr,
    pub inner_refs: BTreeSet<usize>,
}

pub trait Env {
    fn var(&self, i: usize) -> f64;
    fn slot(&self, k: usize) -> f64;
    fn time(&self) -> f64;
    fn dt(&self) -> f64;
    fn initial(&self) -> bool;
}

fn nan_aware(a: f64, b: f64, f: fn(f64, f64) -> f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        f(a, b)
    }
}

impl CExpr {
    pub fn eval<E: Env + ?Sized>(&self, env: &E) -> f64 {
        match self {
            CExpr::Num(v) => *v,
            CExpr::Var(i) => env.var(*i),
            CExpr::Neg(e) => -e.eval(env),
            CExpr::Bin(op, l, r) => op.apply(l.eval(env), r.eval(env)),
            CExpr::Min(a, b) => nan_aware(a.eval(env), b.eval(env), f64::min),
            CExpr::Max(a, b) => nan_aware(a.eval(env), b.eval(env), f64::max),
            CExpr::Step(h, at) => {
                let at = at.eval(env);
                // Guard against t = start + k*dt landing a hair below `at`.
                if env.time() >= at - 1e-9 * env.dt() {
                    h.eval(env)
                } else {
                    0.0
                }
            }
            CExpr::Prev { slot, init } => {
                if env.initial() {
                    init.eval(env)
                } else {
                    env.slot(*slot)
                }
            }
        }
    }
}

pub struct Compiler<'a> {
    pub index: &'a HashMap<String, usize>,
    pub slots: Vec<Slot>,
}

impl Compiler<'_> {
    pub fn compile(&mut self, owner: usize, e: &Expr) -> CExpr {
        let b = |c: &mut Self, e: &Expr| Box::new(c.compile(owner, e));
        match e {
            Expr::Num(v) => CExpr::Num(*v),
            Expr::Var(n) => CExpr::Var(self.index[n]),
            Expr::Neg(a) => CExpr::Neg(b(self, a)),
            Expr::Binary(op, l, r) => CExpr::Bin(*op, b(self, l), b(self, r)),
            Expr::Call(f, args) => match f {
                Builtin::Min => CExpr::Min(b(self, &args[0]), b(self, &args[1])),
                Builtin::Max => CExpr::Max(b(self, &args[0]), b(self, &args[1])),
                Builtin::Step => CExpr::Step(b(self, &args[0]), b(self, &args[1])),
                Builtin::Previous => {
                    let inner = self.compile(owner, &args[0]);
                    let init = self.compile(owner, &args[1]);
                    let inner_refs = args[0].references().iter().map(|n| self.index[n]).collect();
                    self.slots.push(Slot {
                        owner,
                        inner,
                        init: init.clone(),
                        inner_refs,
                    });
                    CExpr::Prev {
                        slot: self.slots.len() - 1,
                        init: Box::new(init),
                    }
                }
                Builtin::Smooth1 | Builtin::Smooth3 | Builtin::Delay3 => {
                    unreachable!("macros are expanded before compilation")
                }
            },
        }
    }
}

/// A variable's compiled equation, with graphical lookup applied on top.
#[derive(Clone, Debug)]
pub struct Equation {
    pub expr: CExpr,
    pub points: Option<Vec<(f64, f64)>>,
}

impl Equation {
    pub fn eval<E: Env + ?Sized>(&self, env: &E) -> f64 {
        let v = self.expr.eval(env);
        match &self.points {
            Some(p) => interpolate(p, v),
            None => v,
        }
    }
}

/// Values at step t for one varying input and t-1 for everything else.
pub struct Partial<'a> {
    pub cur: &'a [f64],
    pub prev: &'a [f64],
    pub vary: usize,
    pub slots_cur: &'a [f64],
    pub slots_prev: &'a [f64],
    pub slots: &'a [Slot],
    pub time: f64,
    pub dt: f64,
}

impl Env for Partial<'_> {
    fn var(&self, i: usize) -> f64 {
        if i == self.vary {
            self.cur[i]
        } else {
            self.prev[i]
        }
    }

    fn slot(&self, k: usize) -> f64 {
        if self.slots[k].inner_refs.contains(&self.vary) {
            self.slots_cur[k]
        } else {
            self.slots_prev[k]
        }
    }

    fn time(&self) -> f64 {
        self.time
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn initial(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    struct Fixed(Vec<f64>, f64);

    impl Env for Fixed {
        fn var(&self, i: usize) -> f64 {
            self.0[i]
        }
        fn slot(&self, _: usize) -> f64 {
            0.0
        }
        fn time(&self) -> f64 {
            self.1
        }
        fn dt(&self) -> f64 {
            1.0
        }
        fn initial(&self) -> bool {
            false
        }
    }

    fn compiled(src: &str, name: &str) -> CExpr {
        let ir = parse_model(src).unwrap();
        let index: HashMap<String, usize> =
            ir.variables.iter().enumerate().map(|(i, v)| (v.name.clone(), i)).collect();
        let mut c = Compiler {
            index: &index,
            slots: Vec::new(),
        };
        c.compile(index[name], &ir.get(name).unwrap().equation)
    }

    #[test]
    fn step_switches_at_its_time() {
        let e = compiled("const h = 50\naux s = STEP(h, 5)\n", "s");
        assert_eq!(e.eval(&Fixed(vec![50.0, 0.0], 4.5)), 0.0);
        assert_eq!(e.eval(&Fixed(vec![50.0, 0.0], 5.0)), 50.0);
    }

    #[test]
    fn min_max_propagate_nan() {
        let e = compiled("const a = 1\nconst b = 2\naux m = MIN(a, b) + MAX(a, b)\n", "m");
        assert_eq!(e.eval(&Fixed(vec![1.0, 2.0, 0.0], 0.0)), 3.0);
        assert!(e.eval(&Fixed(vec![f64::NAN, 2.0, 0.0], 0.0)).is_nan());
    }
}
