//! Empirical mean squared error of the gradient estimators over a grid of
//! replication counts.

use rayon::prelude::*;
use serde::Serialize;

use super::{estimate, IpaOptions, Method, Moments};
use crate::model::Performance;
use crate::variates::derive_seed;
use crate::{Error, Result};

/// Difference steps `Δ(N) = c·N^(-p)`: `p = 1/6` for CMC, `p = 1/4` for
/// CRN and SD-CRN.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeltaSchedule {
    pub cmc: f64,
    pub crn: f64,
    pub sd_crn: f64,
}

impl Default for DeltaSchedule {
    fn default() -> Self {
        DeltaSchedule {
            cmc: 1.0,
            crn: 1.0,
            sd_crn: 1.0,
        }
    }
}

impl DeltaSchedule {
    pub fn delta(&self, method: Method, n: u64) -> Option<f64> {
        let n = n as f64;
        match method {
            Method::Cmc => Some(self.cmc * n.powf(-1.0 / 6.0)),
            Method::Crn => Some(self.crn * n.powf(-0.25)),
            Method::SdCrn => Some(self.sd_crn * n.powf(-0.25)),
            Method::Ipa => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MseRow {
    pub method: Method,
    pub n: u64,
    pub delta: Option<f64>,
    /// Mean of `|G − ∇F|²` over macro-replications.
    pub mse: f64,
    pub mse_std_error: f64,
    /// `|mean(G) − ∇F|`.
    pub bias: f64,
    pub macro_reps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MseStudy {
    pub rows: Vec<MseRow>,
    /// Least-squares slope of `ln MSE` against `ln N` per method; absent
    /// when fewer than two grid points have positive MSE.
    pub slopes: Vec<(Method, Option<f64>)>,
}

impl MseStudy {
    pub fn row(&self, method: Method, n: u64) -> Option<&MseRow> {
        self.rows.iter().find(|r| r.method == method && r.n == n)
    }

    pub fn slope(&self, method: Method) -> Option<f64> {
        self.slopes.iter().find(|s| s.0 == method).and_then(|s| s.1)
    }
}

/// Macro-replication `m` uses seed `derive_seed(seed, m)` for every method
/// and grid point, so methods are compared on paired randomness.
#[allow(clippy::too_many_arguments)]
pub fn mse_study<P: Performance + ?Sized>(
    perf: &P,
    theta: &[f64],
    methods: &[Method],
    grid: &[u64],
    macro_reps: u64,
    oracle: &[f64],
    schedule: DeltaSchedule,
    seed: u64,
) -> Result<MseStudy> {
    if oracle.len() != theta.len() {
        return Err(Error::ThetaDimension {
            expected: theta.len(),
            found: oracle.len(),
        });
    }
    if macro_reps < 2 {
        return Err(Error::InvalidArgument("need at least 2 macro-replications".into()));
    }
    let options = IpaOptions {
        allow_uncertified: true,
        ..IpaOptions::default()
    };
    let mut rows = Vec::new();
    for &method in methods {
        for &n in grid {
            let delta = schedule.delta(method, n);
            let estimates = (0..macro_reps)
                .into_par_iter()
                .map(|m| estimate(perf, method, theta, delta.unwrap_or(0.0), n, derive_seed(seed, m), options))
                .collect::<Result<Vec<_>>>()?;
            let mut sq = Moments::default();
            let mut mean = vec![Moments::default(); theta.len()];
            for e in &estimates {
                sq.push(e.value.iter().zip(oracle).map(|(g, o)| (g - o).powi(2)).sum());
                for (m, g) in mean.iter_mut().zip(&e.value) {
                    m.push(*g);
                }
            }
            let bias = mean.iter().zip(oracle).map(|(m, o)| (m.mean - o).powi(2)).sum::<f64>().sqrt();
            rows.push(MseRow {
                method,
                n,
                delta,
                mse: sq.mean,
                mse_std_error: sq.std_error(),
                bias,
                macro_reps,
            });
        }
    }
    let slopes = methods
        .iter()
        .map(|&m| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.method == m && r.mse > 0.0)
                .map(|r| ((r.n as f64).ln(), r.mse.ln()))
                .collect();
            (m, log_log_slope(&pts))
        })
        .collect();
    Ok(MseStudy { rows, slopes })
}

/// Ordinary least-squares slope through `(x, y)` points.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}
