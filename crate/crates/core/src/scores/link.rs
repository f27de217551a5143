// Copyright 2026 The ltm Authors. All rights reserved.
// Use of this source code is governed by the Apache License,
// Version 2.0, that can be found in the LICENSE file.

//! Per-step scores for a single causal pair.

use crate::model::graph::{EdgeKind, Pair};
use crate::sim::{CompiledModel, Env, Partial, Role, RunTrace};

/// The discrete link score from the change in the target, the change in
/// the source, and the change the source alone would have caused.
pub fn link_score(dz: f64, dx: f64, dxz: f64) -> f64 {
    if dz == 0.0 || dx == 0.0 {
        return 0.0;
    }
    let r = dxz / dz;
    let s = dxz / dx;
    if s == 0.0 {
        0.0
    } else {
        r.abs() * s.signum()
    }
}

/// Score of a flow into (`inflow`) or out of a stock whose net flow is `net`.
pub fn flow_to_stock_score(flow: f64, net: f64, inflow: bool) -> f64 {
    if net == 0.0 {
        return 0.0;
    }
    let m = (flow / net).abs();
    if inflow {
        m
    } else {
        -m
    }
}

/// Net flows within this many ulps of the gross flow are cancellation noise.
const NET_NOISE: f64 = 8.0 * f64::EPSILON;

/// Holds the previous step for all but one variable.
fn partial<'a>(m: &'a CompiledModel, tr: &'a RunTrace, t: usize, vary: usize) -> Partial<'a> {
    let dt = tr.time[1] - tr.time[0];
    Partial {
        cur: &tr.values[t],
        prev: &tr.values[t - 1],
        vary,
        slots_cur: &tr.slots[t],
        slots_prev: &tr.slots[t - 1],
        slots: &m.slots,
        time: tr.time[t - 1],
        dt,
    }
}

/// Outcome for one step: the score, or `None` if evaluation was non-finite.
pub fn pair_score_at(m: &CompiledModel, tr: &RunTrace, pair: &Pair, t: usize) -> Option<f64> {
    let (x, z) = (pair.from, pair.to);
    let cur = &tr.values[t];
    let prev = &tr.values[t - 1];
    let dz = cur[z] - prev[z];
    let dx = cur[x] - prev[x];
    let dt = tr.time[1] - tr.time[0];

    let dxz = match &m.roles[z] {
        Role::Stock { .. } | Role::Conveyor { .. } => {
            if !pair.has(EdgeKind::FlowToStock) {
                return Some(0.0);
            }
            let (inflows, outflows) = m.stock_flows(z);
            let net = inflows.iter().map(|&f| cur[f]).sum::<f64>() - outflows.iter().map(|&f| cur[f]).sum::<f64>();
            let gross: f64 = inflows.iter().chain(outflows).map(|&f| cur[f].abs()).sum();
            // Rationed outflows only sum to the available amount up to rounding.
            let net = if net.abs() <= NET_NOISE * gross { 0.0 } else { net };
            let s = flow_to_stock_score(cur[x], net, inflows.contains(&x));
            return s.is_finite().then_some(s);
        }
        Role::ConveyorOutflow { conveyor } => {
            let c = &m.conveyors[*conveyor];
            let tau = &tr.conveyors[*conveyor].transit;
            let content = |v: f64, tau: f64| v / tau;
            let dz = content(cur[c.stock], tau[t]) - content(prev[c.stock], tau[t - 1]);
            let env = partial(m, tr, t, x);
            let dxz = content(env.var(c.stock), c.transit.eval(&env)) - content(prev[c.stock], tau[t - 1]);
            let s = link_score(dz, dx, dxz);
            return s.is_finite().then_some(s);
        }
        Role::Computed(eq) => {
            let binding = m.rationed_by[z].map(|grp| (grp, tr.nonneg[grp].binding[t]));
            match binding {
                Some((grp, true)) => {
                    let group = &m.groups[grp];
                    let env = partial(m, tr, t, x);
                    let requests: Vec<f64> = group
                        .outflows
                        .iter()
                        .map(|&o| match &m.roles[o] {
                            Role::Computed(e) => e.eval(&env),
                            _ => unreachable!("nonneg outflows are computed"),
                        })
                        .collect();
                    let total: f64 = requests.iter().sum();
                    let k = group.outflows.iter().position(|&o| o == z).expect("member");
                    let share = if total == 0.0 {
                        1.0 / requests.len() as f64
                    } else {
                        requests[k] / total
                    };
                    let available =
                        (env.var(group.stock) / dt + group.inflows.iter().map(|&f| env.var(f)).sum::<f64>()).max(0.0);
                    share * available - prev[z]
                }
                _ if !pair.has(EdgeKind::Equation) => return Some(0.0),
                _ => eq.eval(&partial(m, tr, t, x)) - prev[z],
            }
        }
    };
    let s = link_score(dz, dx, dxz);
    s.is_finite().then_some(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        // z = x + y, only x moves.
        assert_eq!(link_score(1.0, 1.0, 1.0), 1.0);
        // z = x*y from (2,3) to (3,4).
        assert_eq!(link_score(6.0, 1.0, 3.0), 0.5);
        assert!((link_score(6.0, 1.0, 2.0) - 1.0 / 3.0).abs() < 1e-15);
        // z = -x.
        assert_eq!(link_score(-2.0, 2.0, -2.0), -1.0);
        assert_eq!(link_score(0.0, 1.0, 1.0), 0.0);
        assert_eq!(link_score(1.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn flow_to_stock_examples() {
        assert_eq!(flow_to_stock_score(2.0, 1.0, true), 2.0);
        assert_eq!(flow_to_stock_score(1.0, 1.0, false), -1.0);
        assert_eq!(flow_to_stock_score(3.0, 3.0, true), 1.0);
        assert_eq!(flow_to_stock_score(1.0, 0.0, true), 0.0);
        assert_eq!(flow_to_stock_score(1.0, 0.0, false), 0.0);
    }
}
