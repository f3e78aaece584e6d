use std::collections::HashMap;

use super::{AlgebraError, Expr, OpKind, VarId};

/// An integer linear combination `constant + Σ coeffs[k]·x_k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LinearTerm {
    pub coeffs: Vec<i64>,
    pub constant: i64,
}

impl LinearTerm {
    fn add(&self, other: &LinearTerm) -> LinearTerm {
        LinearTerm {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
            constant: self.constant + other.constant,
        }
    }
}

/// `⋁_{i∈I} ⋀_{j∈J_i} (constant_ij + Σ_k α_ij^k x_k)` with integer
/// coefficients. `vars[k]` names the variable multiplied by coefficient `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalForm {
    pub vars: Vec<VarId>,
    pub terms: Vec<Vec<LinearTerm>>,
}

impl CanonicalForm {
    /// Total number of inner linear terms.
    pub fn size(&self) -> usize {
        self.terms.iter().map(Vec::len).sum()
    }

    pub fn evaluate<F>(&self, value: F) -> Result<f64, AlgebraError>
    where
        F: Fn(VarId) -> Option<f64>,
    {
        let xs = self
            .vars
            .iter()
            .map(|v| value(*v).ok_or(AlgebraError::Unbound(*v)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut outer = f64::NEG_INFINITY;
        for group in &self.terms {
            let mut inner = f64::INFINITY;
            for term in group {
                let mut s = term.constant as f64;
                for (c, x) in term.coeffs.iter().zip(&xs) {
                    if *c != 0 {
                        s += *c as f64 * x;
                    }
                }
                inner = inner.min(s);
            }
            outer = outer.max(inner);
        }
        Ok(outer)
    }

    /// Exact evaluation over integer inputs.
    pub fn evaluate_int<F>(&self, value: F) -> Result<i128, AlgebraError>
    where
        F: Fn(VarId) -> Option<i64>,
    {
        let xs = self
            .vars
            .iter()
            .map(|v| value(*v).ok_or(AlgebraError::Unbound(*v)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut outer = i128::MIN;
        for group in &self.terms {
            let mut inner = i128::MAX;
            for term in group {
                let s = term.constant as i128
                    + term
                        .coeffs
                        .iter()
                        .zip(&xs)
                        .map(|(c, x)| *c as i128 * *x as i128)
                        .sum::<i128>();
                inner = inner.min(s);
            }
            outer = outer.max(inner);
        }
        Ok(outer)
    }
}

type Form = Vec<Vec<LinearTerm>>;

/// Rewrites `e` into max-of-min-of-sums form by distributing `+` over
/// max/min and min over max. Identical terms inside one min group, and
/// identical min groups, are merged; dominated terms are kept.
///
/// `size_cap` bounds the number of inner terms of every intermediate form.
pub fn canonicalize(e: &Expr, size_cap: usize) -> Result<CanonicalForm, AlgebraError> {
    let vars = e.variables();
    let index: HashMap<VarId, usize> = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let mut memo = HashMap::new();
    let terms = build(e, &index, vars.len(), size_cap, &mut memo)?;
    Ok(CanonicalForm { vars, terms })
}

fn check_cap(size: usize, cap: usize) -> Result<(), AlgebraError> {
    if size > cap {
        Err(AlgebraError::SizeCap {
            size: size as u64,
            cap: cap as u64,
        })
    } else {
        Ok(())
    }
}

fn build(
    e: &Expr,
    index: &HashMap<VarId, usize>,
    p: usize,
    cap: usize,
    memo: &mut HashMap<*const super::OpNode, Form>,
) -> Result<Form, AlgebraError> {
    match e {
        Expr::Var(v) => {
            let mut coeffs = vec![0; p];
            coeffs[index[v]] = 1;
            Ok(vec![vec![LinearTerm { coeffs, constant: 0 }]])
        }
        Expr::Const(c) => {
            if c.fract() != 0.0 || !c.is_finite() || c.abs() > i64::MAX as f64 / 4.0 {
                return Err(AlgebraError::NonIntegerConst(*c));
            }
            Ok(vec![vec![LinearTerm {
                coeffs: vec![0; p],
                constant: *c as i64,
            }]])
        }
        Expr::Op(node) => {
            let key = std::sync::Arc::as_ptr(node);
            if let Some(f) = memo.get(&key) {
                return Ok(f.clone());
            }
            let mut acc = build(&node.children()[0], index, p, cap, memo)?;
            for child in &node.children()[1..] {
                let rhs = build(child, index, p, cap, memo)?;
                acc = match node.kind() {
                    OpKind::Max => join_max(acc, rhs, cap)?,
                    OpKind::Min => join_min(&acc, &rhs, cap)?,
                    OpKind::Sum => join_sum(&acc, &rhs, cap)?,
                };
            }
            memo.insert(key, acc.clone());
            Ok(acc)
        }
    }
}

fn size(f: &Form) -> usize {
    f.iter().map(Vec::len).sum()
}

fn dedup_group(group: &mut Vec<LinearTerm>) {
    let mut seen = std::collections::HashSet::new();
    group.retain(|t| seen.insert(t.clone()));
}

fn push_group(form: &mut Form, mut group: Vec<LinearTerm>) {
    dedup_group(&mut group);
    if !form.contains(&group) {
        form.push(group);
    }
}

fn join_max(mut a: Form, b: Form, cap: usize) -> Result<Form, AlgebraError> {
    check_cap(size(&a) + size(&b), cap)?;
    for g in b {
        push_group(&mut a, g);
    }
    Ok(a)
}

// (∨_i A_i) ∧ (∨_k B_k) = ∨_{i,k} (A_i ∧ B_k)
fn join_min(a: &Form, b: &Form, cap: usize) -> Result<Form, AlgebraError> {
    let projected: usize = a
        .iter()
        .map(|ga| b.iter().map(|gb| ga.len() + gb.len()).sum::<usize>())
        .sum();
    check_cap(projected, cap)?;
    let mut out = Vec::with_capacity(a.len() * b.len());
    for ga in a {
        for gb in b {
            let mut g = ga.clone();
            g.extend(gb.iter().cloned());
            push_group(&mut out, g);
        }
    }
    Ok(out)
}

// (∨_i ∧_j a_ij) + (∨_k ∧_l b_kl) = ∨_{i,k} ∧_{j,l} (a_ij + b_kl)
fn join_sum(a: &Form, b: &Form, cap: usize) -> Result<Form, AlgebraError> {
    let projected: usize = a
        .iter()
        .map(|ga| b.iter().map(|gb| ga.len() * gb.len()).sum::<usize>())
        .sum();
    check_cap(projected, cap)?;
    let mut out = Vec::with_capacity(a.len() * b.len());
    for ga in a {
        for gb in b {
            let g = ga
                .iter()
                .flat_map(|x| gb.iter().map(move |y| x.add(y)))
                .collect();
            push_group(&mut out, g);
        }
    }
    Ok(out)
}
