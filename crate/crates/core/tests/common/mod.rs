//! Shared helpers for integration tests: fixture loading, a seeded uniform
//! source and random network instances.
#![allow(dead_code)]

use std::path::PathBuf;

use stochnet::algebra::{Expr, OpKind, VarId};
use stochnet::config::load_model;
use stochnet::ipa::{ipa_activity, ipa_queueing_delta, ipa_reliability};
use stochnet::model::Model;
use stochnet::networks::{
    simulate_queueing, unroll_queueing, Dag, DagKind, DagNetwork, QueueingNetwork, Routing, RoutingTable, Status,
    DEFAULT_NODE_BUDGET,
};
use stochnet::variates::{stream, Base, Coef, Family, Replication, UniformStream, VariateSpec};
use stochnet::Error;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn model(name: &str) -> Model {
    load_model(&fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub struct Rng(UniformStream);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(stream(seed, 0, 0))
    }

    pub fn uniform(&mut self) -> f64 {
        self.0.next().unwrap()
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn int(&mut self, lo: i64, hi: i64) -> i64 {
        lo + self.below((hi - lo + 1) as usize) as i64
    }
}

/// Random max/min/+ tree with exactly `leaves` leaves over `vars`
/// variables; a quarter of the leaves are integer constants in [-5, 5].
pub fn random_expr(rng: &mut Rng, leaves: usize, vars: u32) -> Expr {
    if leaves == 1 {
        return if rng.below(4) == 0 {
            Expr::constant(rng.int(-5, 5) as f64)
        } else {
            Expr::Var(VarId(rng.below(vars as usize) as u32))
        };
    }
    let arity = 2 + rng.below(leaves.min(3) - 1);
    let mut sizes = vec![1; arity];
    for _ in arity..leaves {
        let k = rng.below(arity);
        sizes[k] += 1;
    }
    let children = sizes.into_iter().map(|s| random_expr(rng, s, vars)).collect();
    let kind = [OpKind::Max, OpKind::Min, OpKind::Sum][rng.below(3)];
    Expr::op(kind, children)
}

/// Exponential (optionally shifted) variates whose scales depend on one of
/// `dim` parameters; each variate has its own stream.
pub fn random_table(rng: &mut Rng, count: usize, dim: usize) -> Vec<VariateSpec> {
    (0..count)
        .map(|i| {
            let base = if rng.below(2) == 0 { Base::Exponential } else { Base::Uniform };
            let scale = Coef {
                param: Some(rng.below(dim)),
                weight: rng.range(0.5, 2.0),
                offset: 0.0,
            };
            let location = if rng.below(3) == 0 {
                Coef {
                    param: Some(rng.below(dim)),
                    weight: rng.range(0.1, 1.0),
                    offset: 0.1,
                }
            } else {
                Coef::fixed(0.0)
            };
            VariateSpec::new(format!("v{i}"), Family::LocationScale { base, scale, location }, i as u64)
        })
        .collect()
}

pub fn random_theta(rng: &mut Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.range(0.5, 2.0)).collect()
}

pub fn random_dag(rng: &mut Rng, kind: DagKind) -> DagNetwork {
    let n = 1 + rng.below(8);
    let mut arcs = Vec::new();
    for b in 1..n {
        for a in 0..b {
            if rng.uniform() < 0.35 {
                arcs.push((a, b));
            }
        }
    }
    DagNetwork::new(kind, Dag::new(n, &arcs).unwrap(), (0..n).collect()).unwrap()
}

pub fn random_queueing(rng: &mut Rng) -> Option<QueueingNetwork> {
    let nodes = 1 + rng.below(4);
    let rows = (0..nodes)
        .map(|_| (0..1 + rng.below(4)).map(|_| rng.below(nodes)).collect())
        .collect();
    let initial: Vec<usize> = (0..nodes).map(|_| rng.below(3)).collect();
    let k = rng.below(nodes);
    let m = 1 + rng.below(4);
    QueueingNetwork::new(
        (0..nodes).collect(),
        initial,
        Routing::Deterministic(RoutingTable::new(rows)),
        k,
        m,
    )
    .ok()
}

pub struct Comparison {
    pub sim: f64,
    pub expr: f64,
    pub ipa: Vec<f64>,
    pub path: Vec<f64>,
}

impl Comparison {
    pub fn max_error(&self) -> f64 {
        let mut e = (self.sim - self.expr).abs();
        for (a, b) in self.ipa.iter().zip(&self.path) {
            e = e.max((a - b).abs());
        }
        e
    }
}

/// Simulation and IPA against evaluation and path derivative of the
/// unrolled expression on the same replication.
pub fn compare_dag(net: &DagNetwork, table: &[VariateSpec], theta: &[f64], rep: &mut Replication) -> Comparison {
    let (sim, ipa) = match net.kind {
        DagKind::Activity => ipa_activity(net, table, theta, rep),
        DagKind::Reliability => ipa_reliability(net, table, theta, rep),
    };
    let draws: Vec<(f64, f64)> = net.variates.iter().map(|&v| table[v].draw(theta, rep, 0)).collect();
    let (expr, path) = net
        .unroll()
        .path_derivative(
            |v| Some(draws[v.index()].1),
            |v| Some(table[net.variates[v.index()]].family.gradient(theta, draws[v.index()].0, 0)),
            theta.len(),
        )
        .unwrap();
    Comparison { sim, expr, ipa, path }
}

/// As [`compare_dag`] for δ_KM of a queueing network; `None` when the
/// target has no representation or exceeds the unroll budget. A mismatch
/// between simulation and unroll about reachability is an error.
pub fn compare_queueing(
    net: &QueueingNetwork,
    table: &[VariateSpec],
    theta: &[f64],
    rep: &mut Replication,
) -> Result<Option<Comparison>, String> {
    let completes = |net: &QueueingNetwork, rep: &mut Replication| {
        let trace = simulate_queueing(net, table, theta, rep);
        let done = trace.status == Status::Completed && trace.services[net.target_node].len() >= net.target_completion;
        (done, trace)
    };
    let un = match unroll_queueing(net, DEFAULT_NODE_BUDGET) {
        Ok(u) => u,
        Err(Error::NoRepresentation { .. }) => {
            let mut capped = net.clone();
            capped.event_cap = 10_000;
            return if completes(&capped, rep).0 {
                Err(format!("unroll found no representation but the run completed: {net:?}"))
            } else {
                Ok(None)
            };
        }
        Err(Error::Algebra(_)) => return Ok(None),
        Err(e) => return Err(e.to_string()),
    };
    let (done, trace) = completes(net, rep);
    if !done {
        return Err(format!("unrolled target never completed in simulation: {net:?}"));
    }
    let sim = trace.services[net.target_node][net.target_completion - 1].delta;
    let (ipa_value, ipa) = ipa_queueing_delta(net, table, theta, rep).map_err(|e| e.to_string())?;
    if ipa_value != sim {
        return Err(format!("IPA run value {ipa_value} differs from trace {sim}"));
    }
    let leaves: Vec<(f64, Vec<f64>)> = un
        .services
        .iter()
        .map(|&(node, j)| {
            let spec = &table[net.services[node]];
            let (u, tau) = spec.draw(theta, rep, j - 1);
            (tau, spec.family.gradient(theta, u, j - 1))
        })
        .collect();
    let (expr, path) = un
        .expr
        .path_derivative(
            |v| Some(leaves[v.index()].0),
            |v| Some(leaves[v.index()].1.clone()),
            theta.len(),
        )
        .map_err(|e| e.to_string())?;
    Ok(Some(Comparison { sim, expr, ipa, path }))
}
