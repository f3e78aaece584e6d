use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::AlgebraError;

/// Index of a primitive random variable inside the enclosing variate table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Max,
    Min,
    Sum,
}

impl OpKind {
    pub fn symbol(self) -> &'static str {
        match self {
            OpKind::Max => "max",
            OpKind::Min => "min",
            OpKind::Sum => "+",
        }
    }
}

/// A max/min/+ expression over variates.
///
/// Operator nodes are reference counted, so sub-expressions can be shared
/// and the structure is a DAG. Evaluation memoizes shared nodes, which keeps
/// the unrolled queueing expressions (whose tree size grows combinatorially)
/// cheap to evaluate.
#[derive(Clone, Debug)]
pub enum Expr {
    Var(VarId),
    Const(f64),
    Op(Arc<OpNode>),
}

#[derive(Debug)]
pub struct OpNode {
    kind: OpKind,
    children: Vec<Expr>,
    leaves: u64,
}

impl OpNode {
    pub fn kind(&self) -> OpKind {
        self.kind
    }

    pub fn children(&self) -> &[Expr] {
        &self.children
    }
}

impl Expr {
    pub fn var(id: VarId) -> Expr {
        Expr::Var(id)
    }

    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    /// Builds an operator node. A single operand is returned unwrapped.
    ///
    /// Panics if `children` is empty.
    pub fn op(kind: OpKind, children: Vec<Expr>) -> Expr {
        assert!(!children.is_empty(), "{} of an empty operand list", kind.symbol());
        if children.len() == 1 {
            return children.into_iter().next().unwrap();
        }
        let leaves = children
            .iter()
            .fold(0u64, |acc, c| acc.saturating_add(c.leaf_count()));
        Expr::Op(Arc::new(OpNode {
            kind,
            children,
            leaves,
        }))
    }

    pub fn max(children: Vec<Expr>) -> Expr {
        Expr::op(OpKind::Max, children)
    }

    pub fn min(children: Vec<Expr>) -> Expr {
        Expr::op(OpKind::Min, children)
    }

    pub fn sum(children: Vec<Expr>) -> Expr {
        Expr::op(OpKind::Sum, children)
    }

    /// Number of leaves of the expression viewed as a tree (shared nodes are
    /// counted once per occurrence). Saturates at `u64::MAX`.
    pub fn leaf_count(&self) -> u64 {
        match self {
            Expr::Var(_) | Expr::Const(_) => 1,
            Expr::Op(node) => node.leaves,
        }
    }

    /// Number of distinct operator nodes reachable from the root.
    pub fn distinct_ops(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            if let Expr::Op(node) = e {
                if seen.insert(Arc::as_ptr(node)) {
                    stack.extend(node.children.iter());
                }
            }
        }
        seen.len()
    }

    /// Variables referenced by the expression, sorted and deduplicated.
    pub fn variables(&self) -> Vec<VarId> {
        let mut seen = std::collections::HashSet::new();
        let mut vars = Vec::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            match e {
                Expr::Var(v) => vars.push(*v),
                Expr::Const(_) => {}
                Expr::Op(node) => {
                    if seen.insert(Arc::as_ptr(node)) {
                        stack.extend(node.children.iter());
                    }
                }
            }
        }
        vars.sort();
        vars.dedup();
        vars
    }

    /// Evaluates the expression, applying max/min/+ per node.
    pub fn evaluate<F>(&self, value: F) -> Result<f64, AlgebraError>
    where
        F: Fn(VarId) -> Option<f64>,
    {
        let mut memo = HashMap::new();
        eval_node(self, &value, &mut memo)
    }

    /// Value and almost-everywhere gradient of the expression.
    ///
    /// `Sum` adds child gradients; `Max`/`Min` take the gradient of the
    /// achieving child, the lowest-index one on ties.
    pub fn path_derivative<F, G>(
        &self,
        value: F,
        derivative: G,
        dim: usize,
    ) -> Result<(f64, Vec<f64>), AlgebraError>
    where
        F: Fn(VarId) -> Option<f64>,
        G: Fn(VarId) -> Option<Vec<f64>>,
    {
        let mut memo = HashMap::new();
        let (v, g) = diff_node(self, &value, &derivative, dim, &mut memo)?;
        Ok((v, g.as_ref().clone()))
    }
}

fn shared(node: &Arc<OpNode>) -> bool {
    Arc::strong_count(node) > 1
}

fn eval_node<F>(
    e: &Expr,
    value: &F,
    memo: &mut HashMap<*const OpNode, f64>,
) -> Result<f64, AlgebraError>
where
    F: Fn(VarId) -> Option<f64>,
{
    match e {
        Expr::Var(v) => value(*v).ok_or(AlgebraError::Unbound(*v)),
        Expr::Const(c) => Ok(*c),
        Expr::Op(node) => {
            let key = Arc::as_ptr(node);
            if shared(node) {
                if let Some(v) = memo.get(&key) {
                    return Ok(*v);
                }
            }
            let mut acc = eval_node(&node.children[0], value, memo)?;
            for child in &node.children[1..] {
                let x = eval_node(child, value, memo)?;
                acc = match node.kind {
                    OpKind::Max => acc.max(x),
                    OpKind::Min => acc.min(x),
                    OpKind::Sum => acc + x,
                };
            }
            if shared(node) {
                memo.insert(key, acc);
            }
            Ok(acc)
        }
    }
}

type DiffMemo = HashMap<*const OpNode, (f64, Arc<Vec<f64>>)>;

fn diff_node<F, G>(
    e: &Expr,
    value: &F,
    derivative: &G,
    dim: usize,
    memo: &mut DiffMemo,
) -> Result<(f64, Arc<Vec<f64>>), AlgebraError>
where
    F: Fn(VarId) -> Option<f64>,
    G: Fn(VarId) -> Option<Vec<f64>>,
{
    match e {
        Expr::Var(v) => {
            let x = value(*v).ok_or(AlgebraError::Unbound(*v))?;
            let g = derivative(*v).ok_or(AlgebraError::Unbound(*v))?;
            if g.len() != dim {
                return Err(AlgebraError::GradientDimension {
                    var: *v,
                    expected: dim,
                    found: g.len(),
                });
            }
            Ok((x, Arc::new(g)))
        }
        Expr::Const(c) => Ok((*c, Arc::new(vec![0.0; dim]))),
        Expr::Op(node) => {
            let key = Arc::as_ptr(node);
            if shared(node) {
                if let Some((v, g)) = memo.get(&key) {
                    return Ok((*v, Arc::clone(g)));
                }
            }
            let result = match node.kind {
                OpKind::Sum => {
                    let mut total = 0.0;
                    let mut grad = vec![0.0; dim];
                    for child in &node.children {
                        let (x, g) = diff_node(child, value, derivative, dim, memo)?;
                        total += x;
                        for (a, b) in grad.iter_mut().zip(g.iter()) {
                            *a += b;
                        }
                    }
                    (total, Arc::new(grad))
                }
                OpKind::Max | OpKind::Min => {
                    let mut best = diff_node(&node.children[0], value, derivative, dim, memo)?;
                    for child in &node.children[1..] {
                        let cand = diff_node(child, value, derivative, dim, memo)?;
                        let better = match node.kind {
                            OpKind::Max => cand.0 > best.0,
                            _ => cand.0 < best.0,
                        };
                        if better {
                            best = cand;
                        }
                    }
                    best
                }
            };
            if shared(node) {
                memo.insert(key, (result.0, Arc::clone(&result.1)));
            }
            Ok(result)
        }
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;

    fn add(self, rhs: Expr) -> Expr {
        Expr::sum(vec![self, rhs])
    }
}
