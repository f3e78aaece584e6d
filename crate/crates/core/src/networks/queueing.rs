//! Closed single-class FCFS queueing networks with instantaneous routing.
//!
//! Node indices are 0-based; service indices `j` are 1-based, so `τ_ij` is
//! draw `j − 1` of node `i`'s service variate.

use std::collections::VecDeque;

use crate::variates::{Replication, VariateSpec, ROUTING_STREAM_BASE};
use crate::{Error, Result};

/// Stream selecting the routing table of a mixture policy.
pub const MIXTURE_STREAM: u64 = ROUTING_STREAM_BASE - 1;

/// Default bound on processed departures.
pub const DEFAULT_EVENT_CAP: u64 = 1_000_000;

/// Destinations `s_ij`. Each row is finite and repeats periodically, so
/// `s_ij = rows[i][(j − 1) mod len]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RoutingTable {
    rows: Vec<Vec<usize>>,
}

impl RoutingTable {
    pub fn new(rows: Vec<Vec<usize>>) -> Self {
        RoutingTable { rows }
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn destination(&self, i: usize, j: usize) -> usize {
        let row = &self.rows[i];
        row[(j - 1) % row.len()]
    }

    fn validate(&self, nodes: usize) -> Result<()> {
        if self.rows.len() != nodes {
            return Err(Error::InvalidNetwork(format!(
                "routing table has {} rows for {nodes} nodes",
                self.rows.len()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::InvalidNetwork(format!("routing row {} is empty", i + 1)));
            }
            if let Some(&d) = row.iter().find(|&&d| d >= nodes) {
                return Err(Error::InvalidNetwork(format!(
                    "routing row {} sends to node {} outside 1..={nodes}",
                    i + 1,
                    d + 1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Routing {
    Deterministic(RoutingTable),
    /// Per-node destination probabilities; departure `j` from node `i` uses
    /// uniform `j − 1` of routing stream `i`.
    Stochastic(Vec<Vec<f64>>),
    /// A random table drawn once per replication.
    Mixture(Vec<(f64, RoutingTable)>),
}

fn check_probabilities(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidNetwork(format!("{what} has a negative or non-finite probability")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidNetwork(format!("{what} probabilities sum to {total}, not 1")));
    }
    Ok(())
}

/// Inverse-CDF pick of an index from `probs` by `u`.
fn pick(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Realized routing for one replication.
#[derive(Debug)]
pub enum Router<'a> {
    Table(&'a RoutingTable),
    Random(&'a [Vec<f64>]),
}

impl Router<'_> {
    pub fn destination(&self, i: usize, j: usize, rep: &mut Replication) -> usize {
        match self {
            Router::Table(t) => t.destination(i, j),
            Router::Random(p) => pick(&p[i], rep.uniform(ROUTING_STREAM_BASE + i as u64, j - 1)),
        }
    }
}

impl Routing {
    /// Fixes the routing for one replication. Depends on ω only, never on θ.
    pub fn realize(&self, rep: &mut Replication) -> Router<'_> {
        match self {
            Routing::Deterministic(t) => Router::Table(t),
            Routing::Stochastic(p) => Router::Random(p),
            Routing::Mixture(tables) => {
                let probs: Vec<f64> = tables.iter().map(|t| t.0).collect();
                let k = pick(&probs, rep.uniform(MIXTURE_STREAM, 0));
                Router::Table(&tables[k].1)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueueingNetwork {
    /// Service variate of each node.
    pub services: Vec<usize>,
    /// Initial buffer contents n_i.
    pub initial: Vec<usize>,
    pub routing: Routing,
    /// Observed node K (0-based).
    pub target_node: usize,
    /// Observed completion M (1-based).
    pub target_completion: usize,
    pub event_cap: u64,
}

impl QueueingNetwork {
    pub fn new(
        services: Vec<usize>,
        initial: Vec<usize>,
        routing: Routing,
        target_node: usize,
        target_completion: usize,
    ) -> Result<Self> {
        let net = QueueingNetwork {
            services,
            initial,
            routing,
            target_node,
            target_completion,
            event_cap: DEFAULT_EVENT_CAP,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn len(&self) -> usize {
        self.services.len()
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.len();
        if l == 0 {
            return Err(Error::InvalidNetwork("network has no nodes".into()));
        }
        if self.initial.len() != l {
            return Err(Error::InvalidNetwork(format!(
                "{} initial buffer entries for {l} nodes",
                self.initial.len()
            )));
        }
        if self.initial.iter().sum::<usize>() == 0 {
            return Err(Error::InvalidNetwork("no customers in the network".into()));
        }
        if self.target_node >= l {
            return Err(Error::InvalidNetwork(format!(
                "target node {} outside 1..={l}",
                self.target_node + 1
            )));
        }
        if self.target_completion == 0 {
            return Err(Error::InvalidNetwork("target completion must be at least 1".into()));
        }
        match &self.routing {
            Routing::Deterministic(t) => t.validate(l)?,
            Routing::Stochastic(p) => {
                if p.len() != l {
                    return Err(Error::InvalidNetwork(format!(
                        "{} routing distributions for {l} nodes",
                        p.len()
                    )));
                }
                for (i, row) in p.iter().enumerate() {
                    if row.len() != l {
                        return Err(Error::InvalidNetwork(format!(
                            "routing distribution {} has {} entries for {l} nodes",
                            i + 1,
                            row.len()
                        )));
                    }
                    check_probabilities(row, &format!("routing distribution {}", i + 1))?;
                }
            }
            Routing::Mixture(tables) => {
                if tables.is_empty() {
                    return Err(Error::InvalidNetwork("routing mixture is empty".into()));
                }
                let probs: Vec<f64> = tables.iter().map(|t| t.0).collect();
                check_probabilities(&probs, "routing mixture")?;
                for (_, t) in tables {
                    t.validate(l)?;
                }
            }
        }
        Ok(())
    }
}

/// The uniform and value behind one service time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServiceDraw {
    pub u: f64,
    /// 0-based draw index within the node's stream (`j − 1`).
    pub index: usize,
    pub tau: f64,
}

/// Hooks called by the simulator, in event order.
pub trait Observer {
    /// A customer arrives at `to`. `from` is the departing `(node, j)`, or
    /// `None` for initial customers. `idle` is true when the server at `to`
    /// is free and its buffer empty at the arrival instant.
    fn on_arrival(&mut self, _from: Option<(usize, usize)>, _to: usize, _time: f64, _idle: bool) {}
    /// Service `j` starts at `node`.
    fn on_start(&mut self, _node: usize, _j: usize, _arrival: f64, _start: f64) {}
    /// Service `j` completes at `node`.
    fn on_departure(&mut self, _node: usize, _j: usize, _time: f64, _draw: &ServiceDraw) {}
}

impl Observer for () {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    /// Node K completed its M-th service.
    Completed,
    /// Every server idle before the target completion.
    Starved,
    EventCapHit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServiceRecord {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub tau: f64,
}

/// α/β/δ/τ of every completed service, routing decisions, and status.
#[derive(Clone, Debug, PartialEq)]
pub struct EventTrace {
    /// `services[i][j − 1]` describes the j-th service at node i.
    pub services: Vec<Vec<ServiceRecord>>,
    /// `(i, j, r)`: the j-th departure from i went to r.
    pub routing: Vec<(usize, usize, usize)>,
    pub status: Status,
    pub events: u64,
}

struct InService {
    j: usize,
    completion: f64,
    draw: ServiceDraw,
}

#[derive(Default)]
struct NodeState {
    queue: VecDeque<f64>,
    busy: Option<InService>,
    completed: usize,
}

/// Summary of a run without a recorder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSummary {
    pub status: Status,
    pub events: u64,
}

/// Event-driven FCFS simulation until the target completion, starvation,
/// or the event cap. Only departures are events; simultaneous departures
/// are processed in ascending node index.
pub fn run_queueing<O: Observer>(
    net: &QueueingNetwork,
    table: &[VariateSpec],
    theta: &[f64],
    rep: &mut Replication,
    observer: &mut O,
) -> RunSummary {
    let l = net.len();
    let router = net.routing.realize(rep);
    let mut nodes: Vec<NodeState> = (0..l).map(|_| NodeState::default()).collect();

    let start = |i: usize, nodes: &mut [NodeState], rep: &mut Replication, observer: &mut O, now: f64| {
        let node = &mut nodes[i];
        let alpha = node.queue.pop_front().expect("start with an empty buffer");
        let j = node.completed + 1;
        let (u, tau) = table[net.services[i]].draw(theta, rep, j - 1);
        observer.on_start(i, j, alpha, now);
        node.busy = Some(InService {
            j,
            completion: now + tau,
            draw: ServiceDraw { u, index: j - 1, tau },
        });
    };

    for i in 0..l {
        for _ in 0..net.initial[i] {
            let idle = nodes[i].busy.is_none() && nodes[i].queue.is_empty();
            nodes[i].queue.push_back(0.0);
            observer.on_arrival(None, i, 0.0, idle);
            if idle {
                start(i, &mut nodes, rep, observer, 0.0);
            }
        }
    }

    let mut events = 0u64;
    loop {
        let next = nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.busy.as_ref().map(|s| (i, s.completion)))
            .fold(None, |best: Option<(usize, f64)>, (i, c)| match best {
                Some((_, b)) if b <= c => best,
                _ => Some((i, c)),
            });
        let Some((i, now)) = next else {
            return RunSummary {
                status: Status::Starved,
                events,
            };
        };
        if events >= net.event_cap {
            return RunSummary {
                status: Status::EventCapHit,
                events,
            };
        }
        events += 1;

        let done = nodes[i].busy.take().unwrap();
        nodes[i].completed = done.j;
        observer.on_departure(i, done.j, now, &done.draw);
        if i == net.target_node && done.j == net.target_completion {
            return RunSummary {
                status: Status::Completed,
                events,
            };
        }

        let r = router.destination(i, done.j, rep);
        let idle = nodes[r].busy.is_none() && nodes[r].queue.is_empty();
        nodes[r].queue.push_back(now);
        observer.on_arrival(Some((i, done.j)), r, now, idle);
        if idle {
            start(r, &mut nodes, rep, observer, now);
        }
        if nodes[i].busy.is_none() && !nodes[i].queue.is_empty() {
            start(i, &mut nodes, rep, observer, now);
        }
    }
}

/// Records the full trace.
#[derive(Debug)]
pub struct TraceRecorder {
    services: Vec<Vec<ServiceRecord>>,
    pending: Vec<VecDeque<(f64, f64)>>,
    routing: Vec<(usize, usize, usize)>,
}

impl TraceRecorder {
    pub fn new(nodes: usize) -> Self {
        TraceRecorder {
            services: vec![Vec::new(); nodes],
            pending: vec![VecDeque::new(); nodes],
            routing: Vec::new(),
        }
    }
}

impl Observer for TraceRecorder {
    fn on_arrival(&mut self, from: Option<(usize, usize)>, to: usize, _time: f64, _idle: bool) {
        if let Some((i, j)) = from {
            self.routing.push((i, j, to));
        }
    }

    fn on_start(&mut self, node: usize, _j: usize, arrival: f64, start: f64) {
        self.pending[node].push_back((arrival, start));
    }

    fn on_departure(&mut self, node: usize, _j: usize, time: f64, draw: &ServiceDraw) {
        let (alpha, beta) = self.pending[node].pop_front().unwrap();
        self.services[node].push(ServiceRecord {
            alpha,
            beta,
            delta: time,
            tau: draw.tau,
        });
    }
}

/// One replication with the full event trace.
pub fn simulate_queueing(
    net: &QueueingNetwork,
    table: &[VariateSpec],
    theta: &[f64],
    rep: &mut Replication,
) -> EventTrace {
    let mut rec = TraceRecorder::new(net.len());
    let summary = run_queueing(net, table, theta, rep, &mut rec);
    EventTrace {
        services: rec.services,
        routing: rec.routing,
        status: summary.status,
        events: summary.events,
    }
}

/// The five per-run queueing measures at the target `(K, M)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measures {
    /// Average total time per customer.
    pub t: f64,
    /// Average waiting time per customer.
    pub w: f64,
    /// Utilization per unit time.
    pub u: f64,
    /// Average number of customers per unit time.
    pub c: f64,
    /// Average queue length per unit time.
    pub q: f64,
    /// δ_KM itself.
    pub delta: f64,
}

impl Measures {
    pub fn from_records(records: &[ServiceRecord]) -> Measures {
        let m = records.len() as f64;
        let h = records.last().unwrap().delta;
        let sojourn: f64 = records.iter().map(|r| r.delta - r.alpha).sum();
        let wait: f64 = records.iter().map(|r| r.beta - r.alpha).sum();
        let busy: f64 = records.iter().map(|r| r.tau).sum();
        Measures {
            t: sojourn / m,
            w: wait / m,
            u: busy / h,
            c: sojourn / h,
            q: wait / h,
            delta: h,
        }
    }
}

/// Measures of a trace at node `k` (0-based) over its first `m` services.
pub fn measures(trace: &EventTrace, k: usize, m: usize) -> Result<Measures> {
    let records = trace
        .services
        .get(k)
        .filter(|r| m >= 1 && r.len() >= m)
        .ok_or_else(|| {
            Error::Starved(format!(
                "node {} completed fewer than {m} services ({:?})",
                k + 1,
                trace.status
            ))
        })?;
    Ok(Measures::from_records(&records[..m]))
}

/// Records only node K, for measure evaluation without a full trace.
#[derive(Debug)]
pub struct TargetRecorder {
    node: usize,
    pending: VecDeque<(f64, f64)>,
    pub records: Vec<ServiceRecord>,
}

impl TargetRecorder {
    pub fn new(node: usize) -> Self {
        TargetRecorder {
            node,
            pending: VecDeque::new(),
            records: Vec::new(),
        }
    }
}

impl Observer for TargetRecorder {
    fn on_start(&mut self, node: usize, _j: usize, arrival: f64, start: f64) {
        if node == self.node {
            self.pending.push_back((arrival, start));
        }
    }

    fn on_departure(&mut self, node: usize, _j: usize, time: f64, draw: &ServiceDraw) {
        if node == self.node {
            let (alpha, beta) = self.pending.pop_front().unwrap();
            self.records.push(ServiceRecord {
                alpha,
                beta,
                delta: time,
                tau: draw.tau,
            });
        }
    }
}

/// Measures for one replication, `None` when the target never completes.
/// Works for every routing policy; stochastic routing is realized from the
/// replication's routing streams.
pub fn stochastic_measure_value(
    net: &QueueingNetwork,
    table: &[VariateSpec],
    theta: &[f64],
    rep: &mut Replication,
) -> Option<Measures> {
    let mut rec = TargetRecorder::new(net.target_node);
    let summary = run_queueing(net, table, theta, rep, &mut rec);
    (summary.status == Status::Completed).then(|| Measures::from_records(&rec.records))
}
