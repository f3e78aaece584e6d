//! Max/min/+ expressions: evaluation, path derivatives, order statistics
//! as min-of-max over subsets, and the max-of-min-of-sums normal form.

mod canonical;
mod expr;
mod sexpr;

pub use canonical::{canonicalize, CanonicalForm, LinearTerm};
pub use expr::{Expr, OpKind, OpNode, VarId};
pub use sexpr::{parse_sexpr, to_sexpr, Symbols};

use itertools::Itertools;
use thiserror::Error;

/// Largest operand count accepted by [`order_statistic_expr`].
pub const MAX_ORDER_STAT_OPERANDS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("variable {0} has no assigned value")]
    Unbound(VarId),
    #[error("gradient for {var} has dimension {found}, expected {expected}")]
    GradientDimension {
        var: VarId,
        expected: usize,
        found: usize,
    },
    #[error("order statistic k = {k} out of range 1..={n}")]
    OrderOutOfRange { k: usize, n: usize },
    #[error("order statistic over {n} operands exceeds the limit of {max}")]
    TooManyOperands { n: usize, max: usize },
    #[error("expression size {size} exceeds cap {cap}")]
    SizeCap { size: u64, cap: u64 },
    #[error("constant {0} is not an integer")]
    NonIntegerConst(f64),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unknown symbol '{name}' at byte {offset}")]
    UnknownSymbol { name: String, offset: usize },
}

/// The k-th smallest of `operands` as the minimum, over all k-subsets, of
/// the subset maximum. `k` is 1-based.
pub fn order_statistic_expr(operands: &[Expr], k: usize) -> Result<Expr, AlgebraError> {
    let n = operands.len();
    if k == 0 || k > n {
        return Err(AlgebraError::OrderOutOfRange { k, n });
    }
    if n > MAX_ORDER_STAT_OPERANDS {
        return Err(AlgebraError::TooManyOperands {
            n,
            max: MAX_ORDER_STAT_OPERANDS,
        });
    }
    let maxima = (0..n)
        .combinations(k)
        .map(|subset| Expr::max(subset.into_iter().map(|i| operands[i].clone()).collect()))
        .collect();
    Ok(Expr::min(maxima))
}

/// Convenience form of [`order_statistic_expr`] over plain variables.
pub fn order_statistic_of_vars(vars: &[VarId], k: usize) -> Result<Expr, AlgebraError> {
    let operands: Vec<Expr> = vars.iter().map(|v| Expr::Var(*v)).collect();
    order_statistic_expr(&operands, k)
}
