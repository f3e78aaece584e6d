//! Activity (PERT) and reliability networks on a directed acyclic graph.
//!
//! Nodes are 0-based internally; model files and expression variable names
//! use 1-based numbering.

use crate::algebra::{Expr, Symbols, VarId};
use crate::variates::{Replication, VariateSpec};
use crate::{Error, Result};

/// A validated DAG with father/daughter sets and a topological order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dag {
    fathers: Vec<Vec<usize>>,
    daughters: Vec<Vec<usize>>,
    order: Vec<usize>,
}

impl Dag {
    /// `arcs` are 0-based `(from, to)` pairs.
    pub fn new(nodes: usize, arcs: &[(usize, usize)]) -> Result<Dag> {
        if nodes == 0 {
            return Err(Error::InvalidNetwork("network has no nodes".into()));
        }
        let mut fathers = vec![Vec::new(); nodes];
        let mut daughters = vec![Vec::new(); nodes];
        for &(a, b) in arcs {
            if a >= nodes || b >= nodes {
                return Err(Error::InvalidNetwork(format!(
                    "arc ({}, {}) references a node outside 1..={nodes}",
                    a + 1,
                    b + 1
                )));
            }
            if a == b {
                return Err(Error::InvalidNetwork(format!("self-loop at node {}", a + 1)));
            }
            if !daughters[a].contains(&b) {
                daughters[a].push(b);
                fathers[b].push(a);
            }
        }
        for list in fathers.iter_mut().chain(daughters.iter_mut()) {
            list.sort_unstable();
        }

        let mut indegree: Vec<usize> = fathers.iter().map(Vec::len).collect();
        let mut ready: std::collections::BTreeSet<usize> =
            (0..nodes).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(nodes);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &d in &daughters[i] {
                indegree[d] -= 1;
                if indegree[d] == 0 {
                    ready.insert(d);
                }
            }
        }
        if order.len() != nodes {
            return Err(Error::InvalidNetwork("arcs contain a cycle".into()));
        }
        Ok(Dag {
            fathers,
            daughters,
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.fathers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fathers.is_empty()
    }

    pub fn fathers(&self, i: usize) -> &[usize] {
        &self.fathers[i]
    }

    pub fn daughters(&self, i: usize) -> &[usize] {
        &self.daughters[i]
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    /// Nodes without fathers.
    pub fn starts(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.fathers[i].is_empty()).collect()
    }

    /// Nodes without daughters.
    pub fn ends(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.daughters[i].is_empty()).collect()
    }

    pub fn is_start(&self, i: usize) -> bool {
        self.fathers[i].is_empty()
    }

    pub fn is_end(&self, i: usize) -> bool {
        self.daughters[i].is_empty()
    }

    /// Node variable names `t1..tn`.
    pub fn symbols(&self) -> Symbols {
        Symbols::from_names((1..=self.len()).map(|i| format!("t{i}")))
    }
}

/// Whether a DAG is read as an activity network or a reliability network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DagKind {
    Activity,
    Reliability,
}

/// A DAG whose node `i` carries the duration (activity) or lifetime
/// (reliability) variate `variates[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DagNetwork {
    pub kind: DagKind,
    pub dag: Dag,
    pub variates: Vec<usize>,
}

pub type ActivityNetwork = DagNetwork;
pub type ReliabilityNetwork = DagNetwork;

impl DagNetwork {
    pub fn new(kind: DagKind, dag: Dag, variates: Vec<usize>) -> Result<Self> {
        if variates.len() != dag.len() {
            return Err(Error::InvalidNetwork(format!(
                "{} nodes but {} node variates",
                dag.len(),
                variates.len()
            )));
        }
        let mut seen = variates.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidNetwork(
                "a variate is attached to more than one node".into(),
            ));
        }
        Ok(DagNetwork {
            kind,
            dag,
            variates,
        })
    }

    pub fn len(&self) -> usize {
        self.dag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dag.is_empty()
    }

    /// τ_i for every node, each from draw 0 of its variate's stream.
    pub fn durations(&self, table: &[VariateSpec], theta: &[f64], rep: &mut Replication) -> Vec<(f64, f64)> {
        self.variates
            .iter()
            .map(|&v| table[v].draw(theta, rep, 0))
            .collect()
    }

    /// Per-node times by the network recursion and the overall time
    /// `t = max over end nodes`.
    pub fn node_times(&self, tau: &[f64]) -> (f64, Vec<f64>) {
        let dag = &self.dag;
        let mut t = vec![0.0; dag.len()];
        for &i in dag.topological_order() {
            t[i] = if dag.is_start(i) {
                tau[i]
            } else {
                let supply = dag.fathers(i).iter().map(|&j| t[j]).fold(f64::NEG_INFINITY, f64::max);
                match self.kind {
                    DagKind::Activity => supply + tau[i],
                    DagKind::Reliability => supply.min(tau[i]),
                }
            };
        }
        let total = dag.ends().iter().map(|&i| t[i]).fold(f64::NEG_INFINITY, f64::max);
        (total, t)
    }

    /// The network recursion unrolled into an expression over `VarId(i)` =
    /// τ of node `i`.
    pub fn unroll(&self) -> Expr {
        let dag = &self.dag;
        let mut e: Vec<Option<Expr>> = vec![None; dag.len()];
        for &i in dag.topological_order() {
            let own = Expr::Var(VarId(i as u32));
            e[i] = Some(if dag.is_start(i) {
                own
            } else {
                let supply = Expr::max(
                    dag.fathers(i)
                        .iter()
                        .map(|&j| e[j].clone().unwrap())
                        .collect(),
                );
                match self.kind {
                    DagKind::Activity => supply + own,
                    DagKind::Reliability => Expr::min(vec![supply, own]),
                }
            });
        }
        Expr::max(dag.ends().into_iter().map(|i| e[i].clone().unwrap()).collect())
    }
}

/// One replication of an activity network: completion time and per-node
/// completion times.
pub fn simulate_activity(
    net: &DagNetwork,
    table: &[VariateSpec],
    theta: &[f64],
    rep: &mut Replication,
) -> (f64, Vec<f64>) {
    let tau: Vec<f64> = net.durations(table, theta, rep).into_iter().map(|d| d.1).collect();
    net.node_times(&tau)
}

/// One replication of a reliability network: system lifetime and per-node
/// in-order times.
pub fn simulate_reliability(
    net: &DagNetwork,
    table: &[VariateSpec],
    theta: &[f64],
    rep: &mut Replication,
) -> (f64, Vec<f64>) {
    simulate_activity(net, table, theta, rep)
}
