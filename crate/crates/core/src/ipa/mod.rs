//! Single-run gradient accumulation inside the simulators.
//!
//! Every node carries a gradient vector `g_i`. A completion adds the
//! derivative of its own duration; a node that starts because of another
//! node's event inherits that node's vector. At the end the vector of the
//! observed node is the sample gradient.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use crate::networks::{
    run_queueing, DagNetwork, Measures, Observer, QueueingNetwork, ServiceDraw, ServiceRecord,
    Status,
};
use crate::variates::{Replication, VariateSpec};
use crate::{Error, Result};

/// Per-node gradient vectors, zero at the start of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientAccumulator {
    g: Vec<Vec<f64>>,
}

impl GradientAccumulator {
    pub fn new(nodes: usize, dim: usize) -> Self {
        GradientAccumulator {
            g: vec![vec![0.0; dim]; nodes],
        }
    }

    pub fn dim(&self) -> usize {
        self.g.first().map_or(0, Vec::len)
    }

    pub fn get(&self, node: usize) -> &[f64] {
        &self.g[node]
    }

    /// `g_node += d`
    pub fn add(&mut self, node: usize, d: &[f64]) {
        for (a, b) in self.g[node].iter_mut().zip(d) {
            *a += b;
        }
    }

    /// `g_to = g_from`
    pub fn inherit(&mut self, to: usize, from: usize) {
        if to != from {
            let src = self.g[from].clone();
            self.g[to] = src;
        }
    }

    pub fn set(&mut self, node: usize, value: &[f64]) {
        self.g[node].copy_from_slice(value);
    }
}

#[derive(PartialEq)]
struct Completion {
    time: f64,
    node: usize,
}

impl Eq for Completion {}

impl Ord for Completion {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Completion {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Completion time of an activity network and its gradient.
///
/// Activities are processed in completion order. When the last father of
/// an activity completes, the activity starts and inherits that father's
/// gradient.
pub fn ipa_activity(
    net: &DagNetwork,
    table: &[VariateSpec],
    theta: &[f64],
    rep: &mut Replication,
) -> (f64, Vec<f64>) {
    let dag = &net.dag;
    let draws = net.durations(table, theta, rep);
    let mut acc = GradientAccumulator::new(dag.len(), theta.len());
    let mut remaining: Vec<usize> = (0..dag.len()).map(|i| dag.fathers(i).len()).collect();
    let mut heap: BinaryHeap<Completion> = dag
        .starts()
        .into_iter()
        .map(|i| Completion {
            time: draws[i].1,
            node: i,
        })
        .collect();
    let mut last = (f64::NEG_INFINITY, 0);
    while let Some(Completion { time, node: i }) = heap.pop() {
        let (u, _) = draws[i];
        let d = table[net.variates[i]].family.gradient(theta, u, 0);
        acc.add(i, &d);
        if dag.is_end(i) {
            last = (time, i);
        }
        for &j in dag.daughters(i) {
            remaining[j] -= 1;
            if remaining[j] == 0 {
                acc.inherit(j, i);
                heap.push(Completion {
                    time: time + draws[j].1,
                    node: j,
                });
            }
        }
    }
    (last.0, acc.get(last.1).to_vec())
}

/// Lifetime of a reliability network and its gradient.
///
/// Elements fail in increasing order of lifetime. An element works while
/// it has not failed and is a start element or has a working father. When
/// no end element works the system lifetime is the lifetime of the element
/// that failed last, and so is its gradient.
pub fn ipa_reliability(
    net: &DagNetwork,
    table: &[VariateSpec],
    theta: &[f64],
    rep: &mut Replication,
) -> (f64, Vec<f64>) {
    let dag = &net.dag;
    let draws = net.durations(table, theta, rep);
    let mut order: Vec<usize> = (0..dag.len()).collect();
    order.sort_by(|&a, &b| draws[a].1.total_cmp(&draws[b].1).then(a.cmp(&b)));
    let ends = dag.ends();
    let mut failed = vec![false; dag.len()];
    let mut working = vec![true; dag.len()];
    for i in order {
        failed[i] = true;
        for &k in dag.topological_order() {
            working[k] = !failed[k] && (dag.is_start(k) || dag.fathers(k).iter().any(|&f| working[f]));
        }
        if !ends.iter().any(|&e| working[e]) {
            let d = table[net.variates[i]].family.gradient(theta, draws[i].0, 0);
            return (draws[i].1, d);
        }
    }
    unreachable!("every element has failed")
}

/// Gradients of node K's α, β, δ and τ for one customer.
#[derive(Clone, Debug, PartialEq)]
pub struct CustomerGradient {
    pub record: ServiceRecord,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub tau: Vec<f64>,
}

/// Queueing IPA as a simulator observer.
///
/// On the j-th completion at node i, `g_i += ∂τ_ij`. A customer routed to a
/// free server at r sets `g_r = g_i`. At node K the derivatives of each
/// customer's arrival, start and departure are kept in FCFS order.
struct QueueingTracker<'a> {
    table: &'a [VariateSpec],
    services: &'a [usize],
    theta: &'a [f64],
    acc: GradientAccumulator,
    target: usize,
    arrivals: VecDeque<(f64, Vec<f64>)>,
    started: VecDeque<(f64, f64, Vec<f64>, Vec<f64>)>,
    customers: Vec<CustomerGradient>,
}

impl Observer for QueueingTracker<'_> {
    fn on_arrival(&mut self, from: Option<(usize, usize)>, to: usize, time: f64, idle: bool) {
        let sender = match from {
            Some((i, _)) => self.acc.get(i).to_vec(),
            None => vec![0.0; self.theta.len()],
        };
        if idle {
            self.acc.set(to, &sender);
        }
        if to == self.target {
            self.arrivals.push_back((time, sender));
        }
    }

    fn on_start(&mut self, node: usize, _j: usize, arrival: f64, start: f64) {
        if node == self.target {
            let (_, dalpha) = self.arrivals.pop_front().unwrap();
            let dbeta = self.acc.get(node).to_vec();
            self.started.push_back((arrival, start, dalpha, dbeta));
        }
    }

    fn on_departure(&mut self, node: usize, _j: usize, time: f64, draw: &ServiceDraw) {
        let d = self.table[self.services[node]]
            .family
            .gradient(self.theta, draw.u, draw.index);
        self.acc.add(node, &d);
        if node == self.target {
            let (alpha, beta, dalpha, dbeta) = self.started.pop_front().unwrap();
            self.customers.push(CustomerGradient {
                record: ServiceRecord {
                    alpha,
                    beta,
                    delta: time,
                    tau: draw.tau,
                },
                alpha: dalpha,
                beta: dbeta,
                delta: self.acc.get(node).to_vec(),
                tau: d,
            });
        }
    }
}

fn track_queueing(
    net: &QueueingNetwork,
    table: &[VariateSpec],
    theta: &[f64],
    rep: &mut Replication,
) -> Result<Vec<CustomerGradient>> {
    let mut tracker = QueueingTracker {
        table,
        services: &net.services,
        theta,
        acc: GradientAccumulator::new(net.len(), theta.len()),
        target: net.target_node,
        arrivals: VecDeque::new(),
        started: VecDeque::new(),
        customers: Vec::new(),
    };
    let summary = run_queueing(net, table, theta, rep, &mut tracker);
    if summary.status != Status::Completed {
        return Err(Error::Starved(format!(
            "node {} did not complete service {} ({:?} after {} events)",
            net.target_node + 1,
            net.target_completion,
            summary.status,
            summary.events
        )));
    }
    Ok(tracker.customers)
}

/// δ_KM and its gradient.
pub fn ipa_queueing_delta(
    net: &QueueingNetwork,
    table: &[VariateSpec],
    theta: &[f64],
    rep: &mut Replication,
) -> Result<(f64, Vec<f64>)> {
    let customers = track_queueing(net, table, theta, rep)?;
    let last = customers.last().unwrap();
    Ok((last.record.delta, last.delta.clone()))
}

/// Values and gradients of t, w, u, c, q and δ_KM.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureGradients {
    pub values: Measures,
    pub t: Vec<f64>,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub c: Vec<f64>,
    pub q: Vec<f64>,
    pub delta: Vec<f64>,
    pub customers: Vec<CustomerGradient>,
}

fn quotient(num: f64, dnum: &[f64], den: f64, dden: &[f64]) -> Vec<f64> {
    dnum.iter()
        .zip(dden)
        .map(|(a, b)| (a * den - num * b) / (den * den))
        .collect()
}

/// All queueing measure gradients at the target from one run.
///
/// With `d = Σ ∂τ_Kj`, `t = Σ τ_Kj`, `h = δ_KM` and `g_K = ∂δ_KM`, the
/// utilization gradient is `(d·h − t·g_K)/h²`; c and q follow the same
/// quotient rule with their own numerators.
pub fn ipa_queueing_measures(
    net: &QueueingNetwork,
    table: &[VariateSpec],
    theta: &[f64],
    rep: &mut Replication,
) -> Result<MeasureGradients> {
    let customers = track_queueing(net, table, theta, rep)?;
    let dim = theta.len();
    let m = customers.len() as f64;
    let records: Vec<ServiceRecord> = customers.iter().map(|c| c.record).collect();
    let values = Measures::from_records(&records);

    let mut sojourn = vec![0.0; dim];
    let mut wait = vec![0.0; dim];
    let mut busy = vec![0.0; dim];
    for c in &customers {
        for k in 0..dim {
            sojourn[k] += c.delta[k] - c.alpha[k];
            wait[k] += c.beta[k] - c.alpha[k];
            busy[k] += c.tau[k];
        }
    }
    let h = values.delta;
    let g = customers.last().unwrap().delta.clone();
    let total_busy: f64 = records.iter().map(|r| r.tau).sum();
    let total_sojourn: f64 = records.iter().map(|r| r.delta - r.alpha).sum();
    let total_wait: f64 = records.iter().map(|r| r.beta - r.alpha).sum();

    Ok(MeasureGradients {
        values,
        t: sojourn.iter().map(|x| x / m).collect(),
        w: wait.iter().map(|x| x / m).collect(),
        u: quotient(total_busy, &busy, h, &g),
        c: quotient(total_sojourn, &sojourn, h, &g),
        q: quotient(total_wait, &wait, h, &g),
        delta: g,
        customers,
    })
}
