// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Euler simulation of an expanded model.
//!
//! Each step first advances stocks and conveyors from the previous step's
//! flows, then evaluates the remaining variables in dependency order.
//! Outflows of a nonneg stock are rationed together: once all of them and
//! the stock's inflows are known, the requested total is scaled down to
//! what the stock can supply, and only the rationed values are visible to
//! the rest of the model.

pub mod eval;

use std::collections::{HashMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, ModelErrorKind, SimError};
use crate::model::graph::topo_order;
use crate::model::{ExpandedModel, SimConfig, VarKind};
pub use eval::{CExpr, Env, Equation, Partial, Slot};
use eval::Compiler;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Item {
    Var(usize),
    Ration(usize),
}

#[derive(Clone, Debug)]
pub enum Role {
    Stock { inflows: Vec<usize>, outflows: Vec<usize>, nonneg: bool, init: Equation },
    Conveyor { conveyor: usize, init: Equation },
    ConveyorOutflow { conveyor: usize },
    Computed(Equation),
}

/// A nonneg stock and the outflows it rations.
#[derive(Clone, Debug)]
pub struct Group {
    pub stock: usize,
    pub inflows: Vec<usize>,
    pub outflows: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Conveyor {
    pub stock: usize,
    pub inflows: Vec<usize>,
    pub outflow: usize,
    pub transit: CExpr,
}

/// An expanded model resolved to indices, ready to run.
#[derive(Clone, Debug)]
pub struct CompiledModel {
    pub names: Vec<String>,
    pub kinds: Vec<VarKind>,
    pub roles: Vec<Role>,
    pub slots: Vec<Slot>,
    pub groups: Vec<Group>,
    pub conveyors: Vec<Conveyor>,
    /// For each variable, the nonneg group rationing it, if any.
    pub rationed_by: Vec<Option<usize>>,
    init_order: Vec<Item>,
    step_order: Vec<Item>,
}

struct Full<'a> {
    vals: &'a [f64],
    slots: &'a [f64],
    time: f64,
    dt: f64,
    initial: bool,
}

impl Env for Full<'_> {
    fn var(&self, i: usize) -> f64 {
        self.vals[i]
    }
    fn slot(&self, k: usize) -> f64 {
        self.slots[k]
    }
    fn time(&self) -> f64 {
        self.time
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn initial(&self) -> bool {
        self.initial
    }
}

fn slat_count(transit: f64, dt: f64) -> usize {
    let n = (transit / dt).round();
    if n >= 1.0 {
        n as usize
    } else {
        1
    }
}

impl CompiledModel {
    pub fn new(em: &ExpandedModel) -> Result<Self, ModelError> {
        let names: Vec<String> = em.variables.iter().map(|v| v.name.clone()).collect();
        let index: HashMap<String, usize> = names.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect();
        let mut compiler = Compiler {
            index: &index,
            slots: Vec::new(),
        };
        let mut roles = Vec::with_capacity(names.len());
        let mut groups = Vec::new();
        let mut conveyors = Vec::new();
        let mut rationed_by = vec![None; names.len()];
        let conveyor_ids: HashMap<usize, usize> = em
            .variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Conveyor)
            .enumerate()
            .map(|(k, (i, _))| (i, k))
            .collect();
        for (i, v) in em.variables.iter().enumerate() {
            let ids = |xs: &[String]| xs.iter().map(|n| index[n]).collect::<Vec<_>>();
            let role = match (&v.stock, v.kind) {
                (Some(spec), VarKind::Conveyor) => {
                    conveyors.push(Conveyor {
                        stock: i,
                        inflows: ids(&spec.inflows),
                        outflow: index[&spec.outflows[0]],
                        transit: compiler.compile(i, spec.transit_time.as_ref().expect("validated")),
                    });
                    Role::Conveyor {
                        conveyor: conveyors.len() - 1,
                        init: Equation {
                            expr: compiler.compile(i, &v.equation),
                            points: None,
                        },
                    }
                }
                (Some(spec), _) => {
                    if spec.nonneg {
                        for o in ids(&spec.outflows) {
                            rationed_by[o] = Some(groups.len());
                        }
                        groups.push(Group {
                            stock: i,
                            inflows: ids(&spec.inflows),
                            outflows: ids(&spec.outflows),
                        });
                    }
                    Role::Stock {
                        inflows: ids(&spec.inflows),
                        outflows: ids(&spec.outflows),
                        nonneg: spec.nonneg,
                        init: Equation {
                            expr: compiler.compile(i, &v.equation),
                            points: None,
                        },
                    }
                }
                (None, _) => match &v.conveyor_outflow_of {
                    Some(c) => Role::ConveyorOutflow {
                        conveyor: conveyor_ids[&index[c]],
                    },
                    None => Role::Computed(Equation {
                        expr: compiler.compile(i, &v.equation),
                        points: v.graph_points.clone(),
                    }),
                },
            };
            roles.push(role);
        }
        let slots = compiler.slots;

        let n = names.len();
        let item_index = |it: Item| match it {
            Item::Var(i) => i,
            Item::Ration(g) => n + g,
        };
        let redirect = |d: usize| match rationed_by[d] {
            Some(g) => item_index(Item::Ration(g)),
            None => d,
        };
        let step_deps = || -> Vec<Vec<usize>> {
            let mut deps: Vec<Vec<usize>> = em
                .variables
                .iter()
                .map(|v| {
                    let raw = if v.kind.is_stock_like() || v.conveyor_outflow_of.is_some() {
                        Default::default()
                    } else {
                        v.instantaneous_deps()
                    };
                    raw.iter().map(|d| redirect(index[d])).collect()
                })
                .collect();
            for g in &groups {
                let mut d: Vec<usize> = g.inflows.iter().map(|&f| redirect(f)).collect();
                d.extend(&g.outflows);
                deps.push(d);
            }
            deps
        };
        let to_items = |order: Vec<usize>| -> Vec<Item> {
            order
                .into_iter()
                .map(|k| if k < n { Item::Var(k) } else { Item::Ration(k - n) })
                .collect()
        };
        let name_of = |k: usize| {
            if k < n {
                names[k].clone()
            } else {
                format!("{} (rationing)", names[groups[k - n].stock])
            }
        };
        let simultaneity = |cycle: Vec<usize>| {
            ModelError::new(ModelErrorKind::Simultaneity(cycle.into_iter().map(name_of).collect()))
        };
        let raw_init: Vec<Vec<usize>> = em
            .variables
            .iter()
            .map(|v| {
                let raw = if v.kind.is_stock_like() || v.conveyor_outflow_of.is_some() {
                    v.init_deps()
                } else {
                    v.instantaneous_deps()
                };
                raw.iter().map(|d| index[d]).collect()
            })
            .collect();
        let init_order = to_items(topo_order(&raw_init).map_err(simultaneity)?);
        let step_order: Vec<Item> = to_items(topo_order(&step_deps()).map_err(simultaneity)?)
            .into_iter()
            .filter(|it| match it {
                Item::Var(i) => matches!(roles[*i], Role::Computed(_)),
                Item::Ration(_) => true,
            })
            .collect();
        Ok(CompiledModel {
            kinds: em.variables.iter().map(|v| v.kind).collect(),
            names,
            roles,
            slots,
            groups,
            conveyors,
            rationed_by,
            init_order,
            step_order,
        })
    }

    /// Inflows and outflows of a stock or conveyor.
    pub fn stock_flows(&self, i: usize) -> (&[usize], &[usize]) {
        match &self.roles[i] {
            Role::Stock { inflows, outflows, .. } => (inflows, outflows),
            Role::Conveyor { conveyor, .. } => {
                let c = &self.conveyors[*conveyor];
                (&c.inflows, std::slice::from_ref(&c.outflow))
            }
            _ => (&[], &[]),
        }
    }

    /// Non-stock variables in the order they are computed each step.
    pub fn evaluation_order(&self) -> Vec<&str> {
        self.step_order
            .iter()
            .filter_map(|it| match it {
                Item::Var(i) => Some(self.names[*i].as_str()),
                Item::Ration(_) => None,
            })
            .collect()
    }

    pub fn simulate(&self, cfg: &SimConfig) -> Result<RunTrace, SimError> {
        let steps = cfg.steps()?;
        let dt = cfg.dt;
        let nv = self.names.len();
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
        let mut slot_values: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
        let mut queues: Vec<VecDeque<f64>> = vec![VecDeque::new(); self.conveyors.len()];
        let mut conveyors: Vec<ConveyorTrace> = self
            .conveyors
            .iter()
            .map(|c| ConveyorTrace {
                conveyor: self.names[c.stock].clone(),
                outflow: self.names[c.outflow].clone(),
                transit: Vec::with_capacity(steps + 1),
                slats: Vec::with_capacity(steps + 1),
            })
            .collect();
        let mut nonneg: Vec<NonnegTrace> = self
            .groups
            .iter()
            .map(|g| NonnegTrace {
                stock: self.names[g.stock].clone(),
                outflows: g.outflows.iter().map(|&o| self.names[o].clone()).collect(),
                binding: Vec::with_capacity(steps + 1),
                requested: Vec::with_capacity(steps + 1),
            })
            .collect();

        for t in 0..=steps {
            let time = cfg.time_at(t);
            let initial = t == 0;
            let mut cur = vec![f64::NAN; nv];
            let mut slots_now = vec![f64::NAN; self.slots.len()];
            if !initial {
                let prev = &values[t - 1];
                let env = Full {
                    vals: prev,
                    slots: &slot_values[t - 1],
                    time: cfg.time_at(t - 1),
                    dt,
                    initial: t == 1,
                };
                for (k, s) in self.slots.iter().enumerate() {
                    slots_now[k] = s.inner.eval(&env);
                }
                for (i, role) in self.roles.iter().enumerate() {
                    if let Role::Stock { inflows, outflows, nonneg, .. } = role {
                        let net = inflows.iter().map(|&f| prev[f]).sum::<f64>()
                            - outflows.iter().map(|&f| prev[f]).sum::<f64>();
                        let next = prev[i] + dt * net;
                        cur[i] = if *nonneg { next.max(0.0) } else { next };
                    }
                }
                for (k, c) in self.conveyors.iter().enumerate() {
                    let q = &mut queues[k];
                    q.pop_front();
                    let entering = c.inflows.iter().map(|&f| prev[f]).sum::<f64>() * dt;
                    let n = slat_count(conveyors[k].transit[t - 1], dt);
                    if q.len() < n {
                        q.resize(n, 0.0);
                    }
                    q[n - 1] += entering;
                    cur[c.stock] = q.iter().sum();
                    cur[c.outflow] = q[0] / dt;
                }
            }
            if initial {
                // Initial values come first, from unrationed flows; the
                // regular pass below then settles every non-stock.
                for &item in &self.init_order {
                    let Item::Var(i) = item else { continue };
                    let env = Full {
                        vals: &cur,
                        slots: &slots_now,
                        time,
                        dt,
                        initial,
                    };
                    cur[i] = match &self.roles[i] {
                        Role::Computed(eq) => eq.eval(&env),
                        Role::Stock { init, .. } => init.eval(&env),
                        Role::Conveyor { conveyor, init } => {
                            let content = init.eval(&env);
                            let n = slat_count(self.conveyors[*conveyor].transit.eval(&env), dt);
                            let q = &mut queues[*conveyor];
                            q.clear();
                            q.resize(n, content / n as f64);
                            q.iter().sum()
                        }
                        Role::ConveyorOutflow { conveyor } => queues[*conveyor][0] / dt,
                    };
                }
            }
            for &item in &self.step_order {
                match item {
                    Item::Ration(g) => {
                        let group = &self.groups[g];
                        let requested: Vec<f64> = group.outflows.iter().map(|&o| cur[o]).collect();
                        let total: f64 = requested.iter().sum();
                        let available =
                            (cur[group.stock] / dt + group.inflows.iter().map(|&f| cur[f]).sum::<f64>()).max(0.0);
                        let binding = total > 0.0 && total > available;
                        if binding {
                            let scale = available / total;
                            for &o in &group.outflows {
                                cur[o] *= scale;
                            }
                        }
                        nonneg[g].binding.push(binding);
                        nonneg[g].requested.push(requested);
                    }
                    Item::Var(i) => {
                        let env = Full {
                            vals: &cur,
                            slots: &slots_now,
                            time,
                            dt,
                            initial,
                        };
                        let Role::Computed(eq) = &self.roles[i] else {
                            unreachable!("the step order holds computed variables only")
                        };
                        cur[i] = eq.eval(&env);
                    }
                }
            }
            if let Some(i) = cur.iter().position(|v| !v.is_finite()) {
                return Err(SimError::NonFinite {
                    time,
                    variable: self.names[i].clone(),
                });
            }
            if initial {
                let env = Full {
                    vals: &cur,
                    slots: &slots_now,
                    time,
                    dt,
                    initial,
                };
                slots_now = self.slots.iter().map(|s| s.init.eval(&env)).collect();
            }
            let env = Full {
                vals: &cur,
                slots: &slots_now,
                time,
                dt,
                initial,
            };
            for (k, c) in self.conveyors.iter().enumerate() {
                let tau = c.transit.eval(&env);
                if !tau.is_finite() {
                    return Err(SimError::NonFinite {
                        time,
                        variable: format!("{} (transit)", self.names[c.stock]),
                    });
                }
                conveyors[k].transit.push(tau);
                conveyors[k].slats.push(queues[k].iter().copied().collect());
            }
            values.push(cur);
            slot_values.push(slots_now);
        }
        Ok(RunTrace {
            names: self.names.clone(),
            time: (0..=steps).map(|t| cfg.time_at(t)).collect(),
            values,
            slots: slot_values,
            conveyors,
            nonneg,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConveyorTrace {
    pub conveyor: String,
    pub outflow: String,
    /// Transit time evaluated at each step; material entering at t uses `transit[t]`.
    pub transit: Vec<f64>,
    /// Slat contents at each step, exiting slat first.
    pub slats: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonnegTrace {
    pub stock: String,
    pub outflows: Vec<String>,
    pub binding: Vec<bool>,
    /// Outflow values before rationing, `[step][outflow]`.
    pub requested: Vec<Vec<f64>>,
}

/// Every variable's value at every step.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub names: Vec<String>,
    pub time: Vec<f64>,
    /// `values[step][variable]`.
    pub values: Vec<Vec<f64>>,
    /// `PREVIOUS` slot values, `[step][slot]`.
    pub slots: Vec<Vec<f64>>,
    pub conveyors: Vec<ConveyorTrace>,
    pub nonneg: Vec<NonnegTrace>,
}

impl RunTrace {
    /// Number of dt steps; series have one more entry than this.
    pub fn steps(&self) -> usize {
        self.time.len() - 1
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.index_of(name)?;
        Some(self.values.iter().map(|row| row[i]).collect())
    }

    pub fn binding(&self, stock: &str) -> Option<&[bool]> {
        self.nonneg.iter().find(|n| n.stock == stock).map(|n| n.binding.as_slice())
    }

    /// CSV with `time` first, one column per variable, then one `STOCK.binding`
    /// column (0/1) per nonneg stock.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["time".to_string()];
        header.extend(self.names.iter().cloned());
        header.extend(self.nonneg.iter().map(|n| format!("{}.binding", n.stock)));
        out.write_record(&header)?;
        for (t, row) in self.values.iter().enumerate() {
            let mut rec = vec![self.time[t].to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            rec.extend(self.nonneg.iter().map(|n| u8::from(n.binding[t]).to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Non-stock variables of `em` in evaluation order.
pub fn evaluation_order(em: &ExpandedModel) -> Result<Vec<String>, ModelError> {
    Ok(CompiledModel::new(em)?
        .evaluation_order()
        .into_iter()
        .map(String::from)
        .collect())
}

/// Compiles and runs `em` under its own sim settings.
pub fn simulate(em: &ExpandedModel, cfg: &SimConfig) -> Result<RunTrace, crate::error::Error> {
    Ok(CompiledModel::new(em)?.simulate(cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{expand_macros, parse_model};

    fn run(src: &str) -> RunTrace {
        let em = expand_macros(&parse_model(src).unwrap()).unwrap();
        simulate(&em, &em.sim).unwrap()
    }

    #[test]
    fn one_euler_step() {
        let tr = run("sim start=0 stop=1 dt=1\nconst birth_rate = 0.1\nflow births = birth_rate * Population\nstock Population = 100 [+births]\n");
        assert_eq!(tr.series("Population").unwrap(), [100.0, 110.0]);
    }

    #[test]
    fn chain_order() {
        let em = expand_macros(&parse_model("aux c = b\naux b = a\nconst a = 1\n").unwrap()).unwrap();
        assert_eq!(evaluation_order(&em).unwrap(), ["a", "b", "c"]);
    }

    #[test]
    fn step_and_previous() {
        let tr = run("sim start=0 stop=4 dt=1\naux s = STEP(2, 2)\naux p = PREVIOUS(s, -1)\n");
        assert_eq!(tr.series("s").unwrap(), [0.0, 0.0, 2.0, 2.0, 2.0]);
        assert_eq!(tr.series("p").unwrap(), [-1.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn nonneg_rations_proportionally() {
        let tr = run("sim start=0 stop=3 dt=1\nflow a = 3\nflow b = 1\nstock s = 2 [-a, -b] nonneg\n");
        assert_eq!(tr.series("s").unwrap(), [2.0, 0.0, 0.0, 0.0]);
        assert_eq!(tr.series("a").unwrap(), [1.5, 0.0, 0.0, 0.0]);
        assert_eq!(tr.series("b").unwrap(), [0.5, 0.0, 0.0, 0.0]);
        assert_eq!(tr.binding("s").unwrap(), [true; 4]);
        assert_eq!(tr.nonneg[0].requested[0], [3.0, 1.0]);
    }

    #[test]
    fn rationed_values_are_what_users_see() {
        let tr = run("sim start=0 stop=1 dt=1\nflow out = 5\nstock s = 2 [-out] nonneg\naux seen = out\n");
        assert_eq!(tr.series("seen").unwrap()[0], 2.0);
    }

    #[test]
    fn conveyor_delays_by_transit() {
        let tr = run("sim start=0 stop=6 dt=1\nflow i = STEP(1, 1)\nconveyor c = 0 [+i, -o] transit=2\n");
        assert_eq!(tr.series("o").unwrap(), [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(tr.series("c").unwrap(), [0.0, 0.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
        for (t, slats) in tr.conveyors[0].slats.iter().enumerate() {
            assert_eq!(slats.iter().sum::<f64>(), tr.values[t][tr.index_of("c").unwrap()]);
        }
    }

    #[test]
    fn conveyor_initial_content_is_spread() {
        let tr = run("sim start=0 stop=4 dt=0.5\nflow i = 0\nconveyor c = 6 [+i, -o] transit=1.5\n");
        assert_eq!(tr.conveyors[0].slats[0], [2.0, 2.0, 2.0]);
        assert_eq!(tr.series("o").unwrap()[..4], [4.0, 4.0, 4.0, 0.0]);
    }

    #[test]
    fn non_finite_aborts_with_name() {
        let em = expand_macros(&parse_model("sim start=0 stop=2 dt=1\nflow f = 1 / (1 - s)\nstock s = 0 [+f]\n").unwrap())
            .unwrap();
        let err = simulate(&em, &em.sim).unwrap_err();
        assert!(err.to_string().contains("'f'"), "{err}");
    }
}
