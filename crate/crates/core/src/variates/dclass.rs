//! Certificate checker for the sufficient conditions under which the IPA
//! estimate is unbiased.
//!
//! Per variate: differentiable in θ w.p. 1, Lipschitz in θ with an
//! integrable random constant, continuous, and independent of every other
//! variate. Quotient measures (utilization, customers, queue length) also
//! need the numerator bounded by μ and the denominator bounded below by a
//! positive ν with `E[μλ₂/ν² + λ₁/ν] < ∞`.
//!
//! The checker is sound but not complete: it may reject a model whose sample
//! function is nevertheless well behaved, but never accepts one that fails a
//! listed hypothesis.

use std::collections::BTreeMap;
use std::fmt;

use super::{LipschitzBound, ThetaBox, VariateSpec};

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureKind {
    /// Sums, maxima and minima of the variates.
    Plain,
    /// A ratio whose denominator dominates the sum of `completions` draws of
    /// each of `denominator` (the service variates of the observed node).
    Quotient {
        denominator: Vec<usize>,
        completions: usize,
        /// The moment condition was asserted in the model file.
        asserted: bool,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariateCertificate {
    pub id: String,
    pub differentiable: bool,
    pub lipschitz: LipschitzBound,
    pub continuous: bool,
    pub independent: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuotientCertificate {
    /// Description of μ bounding the numerator.
    pub numerator_bound: String,
    /// Deterministic ν bounding the denominator from below, when derived.
    pub denominator_lower: Option<f64>,
    pub moment_condition: bool,
    pub asserted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DClassCertificate {
    pub variates: Vec<VariateCertificate>,
    pub quotient: Option<QuotientCertificate>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    Dependent { variates: Vec<String>, reason: String },
    Discontinuous { variate: String, reason: String },
    NotDifferentiable { variate: String },
    LipschitzNotIntegrable { variate: String },
    ScaleNotPositive { variate: String },
    QuotientMoments { reason: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dependent { variates, reason } => {
                write!(f, "independence violated by {}: {reason}", variates.join(", "))
            }
            Violation::Discontinuous { variate, reason } => {
                write!(f, "continuity violated by {variate}: {reason}")
            }
            Violation::NotDifferentiable { variate } => {
                write!(f, "differentiability violated by {variate}")
            }
            Violation::LipschitzNotIntegrable { variate } => {
                write!(f, "no integrable Lipschitz bound for {variate}")
            }
            Violation::ScaleNotPositive { variate } => {
                write!(f, "scale of {variate} is not positive on the parameter box")
            }
            Violation::QuotientMoments { reason } => {
                write!(f, "quotient moment condition not established: {reason}")
            }
        }
    }
}

/// Checks every variate of `table` and, for quotient measures, the
/// denominator bound. Returns the certificate or all violations, sorted.
pub fn check_dclass(
    table: &[VariateSpec],
    theta: &ThetaBox,
    measure: &MeasureKind,
) -> Result<DClassCertificate, Vec<Violation>> {
    let mut violations = Vec::new();

    let mut by_stream: BTreeMap<u64, Vec<&str>> = BTreeMap::new();
    for v in table {
        by_stream.entry(v.stream).or_default().push(&v.id);
    }
    let mut shared_stream = std::collections::HashSet::new();
    for ids in by_stream.values() {
        if ids.len() > 1 {
            let mut ids: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
            ids.sort();
            shared_stream.extend(ids.iter().cloned());
            violations.push(Violation::Dependent {
                variates: ids,
                reason: "shared uniform stream".to_string(),
            });
        }
    }

    let mut certs = Vec::with_capacity(table.len());
    for v in table {
        let differentiable = v.family.is_differentiable(theta);
        if !differentiable {
            violations.push(Violation::NotDifferentiable {
                variate: v.id.clone(),
            });
        }
        let lipschitz = v.family.lipschitz(theta);
        if !lipschitz.mean_bound.is_some_and(f64::is_finite) {
            violations.push(Violation::LipschitzNotIntegrable {
                variate: v.id.clone(),
            });
        }
        if let Some((lo, _)) = v.family.scale_range(theta) {
            if lo <= 0.0 {
                violations.push(Violation::ScaleNotPositive {
                    variate: v.id.clone(),
                });
            }
        }
        let discontinuity = v.family.discontinuity(theta);
        if let Some(reason) = &discontinuity {
            violations.push(Violation::Discontinuous {
                variate: v.id.clone(),
                reason: reason.clone(),
            });
        }
        if !v.independent {
            violations.push(Violation::Dependent {
                variates: vec![v.id.clone()],
                reason: "declared dependent".to_string(),
            });
        }
        certs.push(VariateCertificate {
            id: v.id.clone(),
            differentiable,
            lipschitz,
            continuous: discontinuity.is_none(),
            independent: v.independent && !shared_stream.contains(&v.id),
        });
    }
    certs.sort_by(|a, b| a.id.cmp(&b.id));

    let quotient = match measure {
        MeasureKind::Plain => None,
        MeasureKind::Quotient {
            denominator,
            completions,
            asserted,
        } => {
            let lower = denominator
                .iter()
                .map(|&i| table[i].family.support_lower(theta))
                .fold(f64::INFINITY, f64::min);
            let nu = (lower > 0.0 && lower.is_finite()).then_some(lower * *completions as f64);
            let moment_condition = nu.is_some() || *asserted;
            if !moment_condition {
                violations.push(Violation::QuotientMoments {
                    reason: format!(
                        "service times at the observed node are not bounded away from zero (infimum {lower})"
                    ),
                });
            }
            Some(QuotientCertificate {
                numerator_bound: "sum of observed-node durations".to_string(),
                denominator_lower: nu,
                moment_condition,
                asserted: *asserted && nu.is_none(),
            })
        }
    };

    if violations.is_empty() {
        Ok(DClassCertificate {
            variates: certs,
            quotient,
        })
    } else {
        violations.sort();
        violations.dedup();
        Err(violations)
    }
}
