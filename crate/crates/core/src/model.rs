//! A network bound to its variate table and parameter box, and the
//! performance measures estimators work with.

use std::fmt;
use std::str::FromStr;

use crate::algebra::{Expr, Symbols, VarId};
use crate::ipa::{ipa_activity, ipa_queueing_delta, ipa_queueing_measures, ipa_reliability};
use crate::networks::{
    stochastic_measure_value, unroll_queueing, DagNetwork, QueueingNetwork,
};
use crate::variates::{
    check_dclass, DClassCertificate, MeasureKind, Replication, ThetaBox, VariateSpec, Violation,
};
use crate::{Error, Result};

/// A free-form max/min/+ expression over the variates, `VarId(k)` being
/// variate `k` (first draw of its stream).
#[derive(Clone, Debug)]
pub struct ExpressionNetwork {
    pub expr: Expr,
}

#[derive(Clone, Debug)]
pub enum Network {
    Activity(DagNetwork),
    Reliability(DagNetwork),
    Queueing(QueueingNetwork),
    Expression(ExpressionNetwork),
}

impl Network {
    pub fn kind(&self) -> &'static str {
        match self {
            Network::Activity(_) => "activity",
            Network::Reliability(_) => "reliability",
            Network::Queueing(_) => "queueing",
            Network::Expression(_) => "expression",
        }
    }
}

/// Performance measure. Activity, reliability and expression models only
/// have `T` (completion time, lifetime, expression value).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    T,
    W,
    U,
    C,
    Q,
    Delta,
}

impl Measure {
    pub const QUEUEING: [Measure; 6] = [
        Measure::T,
        Measure::W,
        Measure::U,
        Measure::C,
        Measure::Q,
        Measure::Delta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::T => "t",
            Measure::W => "w",
            Measure::U => "u",
            Measure::C => "c",
            Measure::Q => "q",
            Measure::Delta => "delta",
        }
    }

    pub fn is_quotient(self) -> bool {
        matches!(self, Measure::U | Measure::C | Measure::Q)
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "t" => Measure::T,
            "w" => Measure::W,
            "u" => Measure::U,
            "c" => Measure::C,
            "q" => Measure::Q,
            "delta" => Measure::Delta,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown measure '{s}' (expected t, w, u, c, q or delta)"
                )))
            }
        })
    }
}

/// Analytic gradient shipped with a model, used as the MSE oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct Oracle {
    pub theta: Vec<f64>,
    pub gradient: Vec<f64>,
    pub measure: Measure,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub theta: ThetaBox,
    pub initial: Vec<f64>,
    pub variates: Vec<VariateSpec>,
    pub network: Network,
    /// The quotient moment condition is asserted rather than derived.
    pub assume_quotient_moments: bool,
    pub oracle: Option<Oracle>,
    pub seed: Option<u64>,
}

impl Model {
    pub fn check_measure(&self, measure: Measure) -> Result<()> {
        match (&self.network, measure) {
            (Network::Queueing(_), _) | (_, Measure::T) => Ok(()),
            (n, m) => Err(Error::UnsupportedMeasure {
                measure: m.name().to_string(),
                kind: n.kind(),
            }),
        }
    }

    pub fn measure_kind(&self, measure: Measure) -> MeasureKind {
        match &self.network {
            Network::Queueing(q) if measure.is_quotient() => MeasureKind::Quotient {
                denominator: vec![q.services[q.target_node]],
                completions: q.target_completion,
                asserted: self.assume_quotient_moments,
            },
            _ => MeasureKind::Plain,
        }
    }

    pub fn certify(&self, measure: Measure) -> std::result::Result<DClassCertificate, Vec<Violation>> {
        check_dclass(&self.variates, &self.theta, &self.measure_kind(measure))
    }

    /// Sample performance `f(θ, ω)`; `None` when the target never occurs.
    pub fn value(&self, measure: Measure, theta: &[f64], rep: &mut Replication) -> Result<Option<f64>> {
        self.theta.check(theta)?;
        self.check_measure(measure)?;
        let table = &self.variates;
        Ok(match &self.network {
            Network::Activity(n) | Network::Reliability(n) => Some(n.node_times(&tau(n, table, theta, rep)).0),
            Network::Expression(e) => {
                let draws: Vec<f64> = table.iter().map(|s| s.draw(theta, rep, 0).1).collect();
                Some(e.expr.evaluate(|v| draws.get(v.index()).copied())?)
            }
            Network::Queueing(q) => stochastic_measure_value(q, table, theta, rep).map(|m| match measure {
                Measure::T => m.t,
                Measure::W => m.w,
                Measure::U => m.u,
                Measure::C => m.c,
                Measure::Q => m.q,
                Measure::Delta => m.delta,
            }),
        })
    }

    /// Sample performance and its IPA gradient from one run.
    pub fn gradient(
        &self,
        measure: Measure,
        theta: &[f64],
        rep: &mut Replication,
    ) -> Result<Option<(f64, Vec<f64>)>> {
        self.theta.check(theta)?;
        self.check_measure(measure)?;
        let table = &self.variates;
        match &self.network {
            Network::Activity(n) => Ok(Some(ipa_activity(n, table, theta, rep))),
            Network::Reliability(n) => Ok(Some(ipa_reliability(n, table, theta, rep))),
            Network::Expression(e) => {
                let draws: Vec<(f64, f64)> = table.iter().map(|s| s.draw(theta, rep, 0)).collect();
                let r = e.expr.path_derivative(
                    |v| draws.get(v.index()).map(|d| d.1),
                    |v| {
                        draws
                            .get(v.index())
                            .map(|d| table[v.index()].family.gradient(theta, d.0, 0))
                    },
                    theta.len(),
                )?;
                Ok(Some(r))
            }
            Network::Queueing(q) => {
                let result = if measure == Measure::Delta {
                    ipa_queueing_delta(q, table, theta, rep)
                } else {
                    ipa_queueing_measures(q, table, theta, rep).map(|g| match measure {
                        Measure::T => (g.values.t, g.t),
                        Measure::W => (g.values.w, g.w),
                        Measure::U => (g.values.u, g.u),
                        Measure::C => (g.values.c, g.c),
                        Measure::Q => (g.values.q, g.q),
                        Measure::Delta => unreachable!(),
                    })
                };
                match result {
                    Ok(r) => Ok(Some(r)),
                    Err(Error::Starved(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            }
        }
    }

    /// The sample performance as an expression: δ_KM for queueing models
    /// (deterministic routing only), t otherwise.
    pub fn unroll(&self, node_budget: usize) -> Result<(Expr, Symbols)> {
        match &self.network {
            Network::Activity(n) | Network::Reliability(n) => Ok((n.unroll(), n.dag.symbols())),
            Network::Expression(e) => Ok((
                e.expr.clone(),
                Symbols::from_names(self.variates.iter().map(|v| v.id.clone())),
            )),
            Network::Queueing(q) => {
                let u = unroll_queueing(q, node_budget)?;
                Ok((u.expr, u.symbols))
            }
        }
    }
}

fn tau(n: &DagNetwork, table: &[VariateSpec], theta: &[f64], rep: &mut Replication) -> Vec<f64> {
    n.durations(table, theta, rep).into_iter().map(|d| d.1).collect()
}

/// A scalar performance measure `F(θ) = E f(θ, ω)` with a sample gradient.
pub trait Performance: Sync {
    fn theta_box(&self) -> &ThetaBox;

    fn dim(&self) -> usize {
        self.theta_box().dim()
    }

    /// `f(θ, ω)`, or `None` when the run starves.
    fn value(&self, theta: &[f64], rep: &mut Replication) -> Result<Option<f64>>;

    /// `f(θ, ω)` and `∇f(θ, ω)` from a single run.
    fn gradient(&self, theta: &[f64], rep: &mut Replication) -> Result<Option<(f64, Vec<f64>)>>;

    fn certify(&self) -> std::result::Result<DClassCertificate, Vec<Violation>>;
}

/// A model together with the measure being estimated.
#[derive(Clone, Copy, Debug)]
pub struct ModelMeasure<'a> {
    pub model: &'a Model,
    pub measure: Measure,
}

impl<'a> ModelMeasure<'a> {
    pub fn new(model: &'a Model, measure: Measure) -> Result<Self> {
        model.check_measure(measure)?;
        Ok(ModelMeasure { model, measure })
    }
}

impl Performance for ModelMeasure<'_> {
    fn theta_box(&self) -> &ThetaBox {
        &self.model.theta
    }

    fn value(&self, theta: &[f64], rep: &mut Replication) -> Result<Option<f64>> {
        self.model.value(self.measure, theta, rep)
    }

    fn gradient(&self, theta: &[f64], rep: &mut Replication) -> Result<Option<(f64, Vec<f64>)>> {
        self.model.gradient(self.measure, theta, rep)
    }

    fn certify(&self) -> std::result::Result<DClassCertificate, Vec<Violation>> {
        self.model.certify(self.measure)
    }
}

/// Resolves expression symbols to variate indices.
pub fn expression_var(variates: &[VariateSpec], name: &str) -> Option<VarId> {
    variates.iter().position(|v| v.id == name).map(|k| VarId(k as u32))
}
