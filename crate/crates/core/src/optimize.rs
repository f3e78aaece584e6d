//! Projected Robbins–Monro iteration driven by IPA gradient estimates.

use std::io::Write;

use serde::Serialize;

use crate::estimators::{estimate_ipa, estimate_value, Estimate, IpaOptions};
use crate::model::Performance;
use crate::variates::{derive_seed, DClassCertificate, Replication, ThetaBox, Violation};
use crate::{Error, Result};

/// Gains `a_n = a/(n + s)` for `n = 1, 2, ...`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GainSchedule {
    pub a: f64,
    pub s: f64,
}

impl Default for GainSchedule {
    fn default() -> Self {
        GainSchedule { a: 1.0, s: 10.0 }
    }
}

impl GainSchedule {
    pub fn gain(&self, n: u64) -> f64 {
        self.a / (n as f64 + self.s)
    }

    fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite() && self.s > -1.0 && self.s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gain schedule needs a > 0 and s > -1, got a = {}, s = {}",
                self.a, self.s
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StopRule {
    pub max_iterations: u64,
    /// Stop once a step moves θ by less than this (max norm).
    pub tolerance: Option<f64>,
}

/// Objective estimates on a fixed validation seed, every `every` iterations
/// and at the last iterate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Validation {
    pub every: u64,
    pub replications: u64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StopReason {
    #[serde(rename = "iterations")]
    Iterations,
    #[serde(rename = "tolerance")]
    Tolerance,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Iterate {
    pub n: u64,
    /// θ_n, before the step.
    pub theta: Vec<f64>,
    pub gradient: Estimate,
    pub gain: f64,
    /// Whether the step was clipped to the box.
    pub projected: bool,
    pub objective: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizationRun {
    pub schedule: GainSchedule,
    pub inner_replications: u64,
    pub seed: u64,
    pub history: Vec<Iterate>,
    pub theta: Vec<f64>,
    /// Objective estimate at the returned θ, when validation was requested.
    pub final_objective: Option<f64>,
    pub projections: u64,
    pub stop: StopReason,
}

/// `θ_{n+1} = Π(θ_n − a_n G_n)`, `G_n` the IPA estimate from `inner_n`
/// replications seeded by `derive_seed(seed, n)`.
#[allow(clippy::too_many_arguments)]
pub fn robbins_monro<P: Performance + ?Sized>(
    perf: &P,
    theta0: &[f64],
    schedule: GainSchedule,
    inner_n: u64,
    stop: StopRule,
    seed: u64,
    options: IpaOptions,
    validation: Option<Validation>,
) -> Result<OptimizationRun> {
    schedule.validate()?;
    let bounds = perf.theta_box();
    bounds.check(theta0)?;
    if !options.allow_uncertified {
        perf.certify().map_err(Error::Uncertified)?;
    }
    let objective = |theta: &[f64]| -> Result<f64> {
        let v = validation.expect("validation requested");
        Ok(estimate_value(perf, theta, v.replications, v.seed)?.mean)
    };

    let mut theta = theta0.to_vec();
    let mut history = Vec::new();
    let mut projections = 0;
    let mut reason = StopReason::Iterations;
    for n in 1..=stop.max_iterations {
        let g = estimate_ipa(perf, &theta, inner_n, derive_seed(seed, n), options)?;
        if g.value.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient(n as usize));
        }
        let gain = schedule.gain(n);
        let mut next: Vec<f64> = theta.iter().zip(&g.value).map(|(t, d)| t - gain * d).collect();
        let projected = bounds.project(&mut next);
        projections += projected as u64;
        let obj = match validation {
            Some(v) if v.every > 0 && (n - 1) % v.every == 0 => Some(objective(&theta)?),
            _ => None,
        };
        let moved = theta.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        history.push(Iterate {
            n,
            theta: std::mem::replace(&mut theta, next),
            gradient: g,
            gain,
            projected,
            objective: obj,
        });
        if stop.tolerance.is_some_and(|tol| moved < tol) {
            reason = StopReason::Tolerance;
            break;
        }
    }
    let final_objective = match validation {
        Some(_) => Some(objective(&theta)?),
        None => None,
    };
    Ok(OptimizationRun {
        schedule,
        inner_replications: inner_n,
        seed,
        history,
        theta,
        final_objective,
        projections,
        stop: reason,
    })
}

/// Iterate history: `n`, θ coordinates, gradient coordinates, gain,
/// projection flag and validation objective; a final row `n = last + 1`
/// carries the returned θ.
pub fn write_history_csv<W: Write>(out: W, run: &OptimizationRun) -> Result<()> {
    let dim = run.theta.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["n".to_string()];
    header.extend((1..=dim).map(|k| format!("theta{k}")));
    header.extend((1..=dim).map(|k| format!("grad{k}")));
    header.extend(["gain", "projected", "objective"].map(String::from));
    w.write_record(&header)?;
    for it in &run.history {
        let mut row = vec![it.n.to_string()];
        row.extend(it.theta.iter().map(f64::to_string));
        row.extend(it.gradient.value.iter().map(f64::to_string));
        row.push(it.gain.to_string());
        row.push(it.projected.to_string());
        row.push(it.objective.map(|v| v.to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    let mut last = vec![(run.history.len() as u64 + 1).to_string()];
    last.extend(run.theta.iter().map(f64::to_string));
    last.extend(std::iter::repeat_n(String::new(), dim + 2));
    last.push(run.final_objective.map(|v| v.to_string()).unwrap_or_default());
    w.write_record(&last)?;
    w.flush()?;
    Ok(())
}

/// `F(θ) + Σ_k w_k/θ_k`: a measure plus a cost of shrinking positive
/// parameters such as activity scales.
pub struct CostAugmented<'a, P: ?Sized> {
    pub inner: &'a P,
    pub weights: Vec<f64>,
}

impl<'a, P: Performance + ?Sized> CostAugmented<'a, P> {
    pub fn new(inner: &'a P, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != inner.dim() {
            return Err(Error::ThetaDimension {
                expected: inner.dim(),
                found: weights.len(),
            });
        }
        if inner.theta_box().lower.iter().zip(&weights).any(|(l, w)| *w != 0.0 && *l <= 0.0) {
            return Err(Error::InvalidArgument("cost terms need a strictly positive lower bound".into()));
        }
        Ok(CostAugmented { inner, weights })
    }

    fn cost(&self, theta: &[f64]) -> f64 {
        self.weights.iter().zip(theta).map(|(w, t)| w / t).sum()
    }
}

impl<P: Performance + ?Sized> Performance for CostAugmented<'_, P> {
    fn theta_box(&self) -> &ThetaBox {
        self.inner.theta_box()
    }

    fn value(&self, theta: &[f64], rep: &mut Replication) -> Result<Option<f64>> {
        Ok(self.inner.value(theta, rep)?.map(|v| v + self.cost(theta)))
    }

    fn gradient(&self, theta: &[f64], rep: &mut Replication) -> Result<Option<(f64, Vec<f64>)>> {
        Ok(self.inner.gradient(theta, rep)?.map(|(v, mut g)| {
            for ((gk, w), t) in g.iter_mut().zip(&self.weights).zip(theta) {
                *gk -= w / (t * t);
            }
            (v + self.cost(theta), g)
        }))
    }

    fn certify(&self) -> std::result::Result<DClassCertificate, Vec<Violation>> {
        self.inner.certify()
    }
}
