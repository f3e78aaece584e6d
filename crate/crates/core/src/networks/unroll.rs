//! Symbolic unrolling of the queueing recursion
//!
//! ```text
//! δ_ij = max(α_ij, δ_i,j−1) + τ_ij,   δ_i0 = 0
//! α_ij = 0                              for j ≤ n_i
//! α_ij = (j − n_i)-th smallest of Δ(i,j) otherwise
//! ```
//!
//! where Δ(i,j) holds the departures `δ_km` routed to `i` (with `m < j` when
//! `k = i`). Departure sequences are increasing, so only the first `j − n_i`
//! candidates of each source can matter.
//!
//! The recursion may refer back to departures of a node that is already
//! being expanded. While `δ_ij` is expanded every `δ_ij'` with `j' ≥ j` is
//! treated as +∞: such a departure happens no earlier than `δ_ij`, which is
//! strictly later than any arrival it could influence, so dropping it never
//! changes an order statistic that is actually realized. A departure that
//! has no finite representation under these bounds cannot occur.

use std::collections::HashMap;

use super::queueing::{QueueingNetwork, Routing, RoutingTable};
use crate::algebra::{order_statistic_expr, AlgebraError, Expr, Symbols};
use crate::{Error, Result};

/// Default limit on operator nodes created while unrolling.
pub const DEFAULT_NODE_BUDGET: usize = 200_000;

/// δ_KM as an expression over the service times it depends on.
#[derive(Clone, Debug)]
pub struct Unrolled {
    pub expr: Expr,
    /// Variable names `t{i}_{j}` (1-based node and service index).
    pub symbols: Symbols,
    /// `services[v]` = 0-based `(node, j)` of variable `v`, `j` 1-based.
    pub services: Vec<(usize, usize)>,
}

struct Unroller<'a> {
    table: &'a RoutingTable,
    initial: &'a [usize],
    symbols: Symbols,
    services: Vec<(usize, usize)>,
    memo: HashMap<(usize, usize, Vec<usize>), Option<Expr>>,
    created: usize,
    budget: usize,
}

impl Unroller<'_> {
    fn var(&mut self, i: usize, j: usize) -> Expr {
        let before = self.symbols.len();
        let id = self.symbols.intern(format!("t{}_{}", i + 1, j));
        if self.symbols.len() > before {
            self.services.push((i, j));
        }
        Expr::Var(id)
    }

    fn charge(&mut self, nodes: usize) -> Result<()> {
        self.created = self.created.saturating_add(nodes);
        if self.created > self.budget {
            return Err(AlgebraError::SizeCap {
                size: self.created as u64,
                cap: self.budget as u64,
            }
            .into());
        }
        Ok(())
    }

    fn departure(&mut self, i: usize, j: usize, bounds: &mut Vec<usize>) -> Result<Option<Expr>> {
        if j >= bounds[i] {
            return Ok(None);
        }
        let key = (i, j, bounds.clone());
        if let Some(e) = self.memo.get(&key) {
            return Ok(e.clone());
        }
        let saved = bounds[i];
        bounds[i] = j;
        let result = self.expand(i, j, bounds);
        bounds[i] = saved;
        let result = result?;
        self.memo.insert(key, result.clone());
        Ok(result)
    }

    fn expand(&mut self, i: usize, j: usize, bounds: &mut Vec<usize>) -> Result<Option<Expr>> {
        let prev = if j == 1 {
            Some(Expr::Const(0.0))
        } else {
            self.departure(i, j - 1, bounds)?
        };
        let Some(prev) = prev else { return Ok(None) };
        let Some(alpha) = self.arrival(i, j, bounds)? else {
            return Ok(None);
        };
        let tau = self.var(i, j);
        let start = match (&alpha, &prev) {
            (Expr::Const(a), Expr::Const(b)) => Expr::Const(a.max(*b)),
            _ => {
                self.charge(1)?;
                Expr::max(vec![alpha, prev])
            }
        };
        Ok(Some(match start {
            Expr::Const(0.0) => tau,
            start => {
                self.charge(1)?;
                start + tau
            }
        }))
    }

    fn arrival(&mut self, i: usize, j: usize, bounds: &mut Vec<usize>) -> Result<Option<Expr>> {
        let n = self.initial[i];
        if j <= n {
            return Ok(Some(Expr::Const(0.0)));
        }
        let r = j - n;
        let mut candidates = Vec::new();
        for k in 0..self.initial.len() {
            let row = &self.table.rows()[k];
            if !row.contains(&i) {
                continue;
            }
            let mut found = 0;
            let mut m = 0;
            while found < r {
                m += 1;
                if k == i && m >= j {
                    break;
                }
                if self.table.destination(k, m) != i {
                    continue;
                }
                match self.departure(k, m, bounds)? {
                    Some(e) => {
                        candidates.push(e);
                        found += 1;
                    }
                    None => break,
                }
            }
        }
        if candidates.len() < r {
            return Ok(None);
        }
        let e = order_statistic_expr(&candidates, r)?;
        self.charge(num_subsets(candidates.len(), r))?;
        Ok(Some(e))
    }
}

/// Operator nodes of a k-th order statistic over n operands.
fn num_subsets(n: usize, k: usize) -> usize {
    let mut binom: usize = 1;
    for x in 0..k.min(n - k) {
        binom = binom.saturating_mul(n - x) / (x + 1);
    }
    if binom == 1 {
        1
    } else {
        binom.saturating_add(1)
    }
}

/// Unrolls δ_KM for the network's target `(K, M)` under its deterministic
/// routing table.
pub fn unroll_queueing(net: &QueueingNetwork, node_budget: usize) -> Result<Unrolled> {
    unroll_queueing_at(net, net.target_node, net.target_completion, node_budget)
}

/// Unrolls δ_km for an arbitrary node `k` (0-based) and completion `m`.
pub fn unroll_queueing_at(
    net: &QueueingNetwork,
    k: usize,
    m: usize,
    node_budget: usize,
) -> Result<Unrolled> {
    let table = match &net.routing {
        Routing::Deterministic(t) => t,
        Routing::Mixture(tables) if tables.len() == 1 => &tables[0].1,
        _ => {
            return Err(Error::InvalidArgument(
                "symbolic unrolling needs a deterministic routing table".into(),
            ))
        }
    };
    if k >= net.len() || m == 0 {
        return Err(Error::InvalidArgument(format!("no target ({}, {m})", k + 1)));
    }
    let mut u = Unroller {
        table,
        initial: &net.initial,
        symbols: Symbols::new(),
        services: Vec::new(),
        memo: HashMap::new(),
        created: 0,
        budget: node_budget,
    };
    let mut bounds = vec![usize::MAX; net.len()];
    match u.departure(k, m, &mut bounds)? {
        Some(expr) => Ok(Unrolled {
            expr,
            symbols: u.symbols,
            services: u.services,
        }),
        None => Err(Error::NoRepresentation {
            node: k + 1,
            completion: m,
        }),
    }
}
