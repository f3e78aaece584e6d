//! Gradient estimators: crude Monte Carlo (CMC), common random numbers
//! (CRN), symmetric-difference CRN, and the IPA sample mean.
//!
//! Replication `i` of an estimate with seed `s` is `Replication::new(s, i)`.
//! Replications run in parallel in fixed chunks whose moments are merged in
//! index order, so results do not depend on the number of worker threads.

mod mse;
mod output;
mod unbiased;

pub use mse::{mse_study, log_log_slope, DeltaSchedule, MseRow, MseStudy};
pub use output::{write_estimates_csv, write_mse_csv, ESTIMATE_SCHEMA_VERSION};
pub use unbiased::{unbiasedness_test, CoordinateTest, UnbiasednessOptions, UnbiasednessReport};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::model::Performance;
use crate::variates::Replication;
use crate::{Error, Result};

/// Replications per parallel task.
const CHUNK: u64 = 1024;

/// Default largest tolerated fraction of starved IPA replications.
pub const DEFAULT_STARVATION_THRESHOLD: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Method {
    #[serde(rename = "cmc")]
    Cmc,
    #[serde(rename = "crn")]
    Crn,
    #[serde(rename = "sd-crn")]
    SdCrn,
    #[serde(rename = "ipa")]
    Ipa,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Cmc, Method::Crn, Method::SdCrn, Method::Ipa];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cmc => "cmc",
            Method::Crn => "crn",
            Method::SdCrn => "sd-crn",
            Method::Ipa => "ipa",
        }
    }

    /// Simulation runs consumed by `n` replications in dimension `dim`.
    pub fn runs(self, dim: usize, n: u64) -> u64 {
        let dim = dim as u64;
        match self {
            Method::Cmc | Method::Crn => (dim + 1) * n,
            Method::SdCrn => 2 * dim * n,
            Method::Ipa => n,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}' (expected ipa, crn, cmc or sd-crn)")))
    }
}

/// Streaming mean and variance.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * (self.count as f64) * (other.count as f64) / n;
        self.count += other.count;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Tally {
    pub moments: Vec<Moments>,
    pub starved: u64,
}

/// Runs `f(i)` for `i in 0..n` and accumulates per-coordinate moments;
/// `None` results are counted as starved.
pub(crate) fn replicate<F>(n: u64, dim: usize, f: F) -> Result<Tally>
where
    F: Fn(u64) -> Result<Option<Vec<f64>>> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut t = Tally {
                moments: vec![Moments::default(); dim],
                starved: 0,
            };
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                match f(i)? {
                    Some(v) => {
                        for (m, x) in t.moments.iter_mut().zip(&v) {
                            m.push(*x);
                        }
                    }
                    None => t.starved += 1,
                }
            }
            Ok(t)
        })
        .collect::<Result<Vec<Tally>>>()?;
    let mut total = Tally {
        moments: vec![Moments::default(); dim],
        starved: 0,
    };
    for p in &parts {
        for (a, b) in total.moments.iter_mut().zip(&p.moments) {
            a.merge(b);
        }
        total.starved += p.starved;
    }
    Ok(total)
}

/// Point value, standard errors and provenance of a gradient estimate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub method: Method,
    pub value: Vec<f64>,
    /// Sample standard deviation over `sqrt(used)`, per coordinate.
    pub std_error: Vec<f64>,
    /// Requested replications N.
    pub replications: u64,
    /// Replications that produced a value.
    pub used: u64,
    /// Replications excluded because the target never occurred.
    pub starved: u64,
    pub delta: Option<f64>,
    pub seed: u64,
    /// Simulation runs consumed.
    pub runs: u64,
    /// Set when an uncertified model was estimated by IPA on request.
    pub potentially_biased: bool,
}

impl Estimate {
    fn from_tally(method: Method, tally: Tally, n: u64, dim: usize, delta: Option<f64>, seed: u64) -> Result<Self> {
        let used = n - tally.starved;
        if used < 2 {
            return Err(Error::Starved(format!("only {used} of {n} replications reached the target")));
        }
        Ok(Estimate {
            method,
            value: tally.moments.iter().map(|m| m.mean).collect(),
            std_error: tally.moments.iter().map(Moments::std_error).collect(),
            replications: n,
            used,
            starved: tally.starved,
            delta,
            seed,
            runs: method.runs(dim, n),
            potentially_biased: false,
        })
    }
}

fn check_common<P: Performance + ?Sized>(perf: &P, theta: &[f64], n: u64) -> Result<()> {
    perf.theta_box().check(theta)?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 replications, got {n}")));
    }
    Ok(())
}

fn check_delta<P: Performance + ?Sized>(perf: &P, theta: &[f64], delta: f64, both_sides: bool) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("difference step {delta} must be positive")));
    }
    for k in 0..theta.len() {
        let mut p = theta.to_vec();
        p[k] += delta;
        perf.theta_box().check(&p)?;
        if both_sides {
            p[k] = theta[k] - delta;
            perf.theta_box().check(&p)?;
        }
    }
    Ok(())
}

fn shifted(theta: &[f64], k: usize, h: f64) -> Vec<f64> {
    let mut p = theta.to_vec();
    p[k] += h;
    p
}

/// Per-replication one-sided difference quotients `(f(θ+h·e_k) − f(θ))/h`
/// with the θ evaluation on replication `base_offset + i`.
fn one_sided<P: Performance + ?Sized>(
    perf: &P,
    theta: &[f64],
    h: f64,
    n: u64,
    seed: u64,
    base_offset: u64,
) -> Result<Tally> {
    let dim = theta.len();
    replicate(n, dim, |i| {
        let mut shifted_rep = Replication::new(seed, i);
        let base = if base_offset == 0 {
            perf.value(theta, &mut shifted_rep)?
        } else {
            perf.value(theta, &mut Replication::new(seed, base_offset + i))?
        };
        let Some(base) = base else { return Ok(None) };
        let mut out = Vec::with_capacity(dim);
        for k in 0..dim {
            match perf.value(&shifted(theta, k, h), &mut shifted_rep)? {
                Some(v) => out.push((v - base) / h),
                None => return Ok(None),
            }
        }
        Ok(Some(out))
    })
}

/// `(1/(NΔ)) Σ (f(θ+Δe_k, ω_i) − f(θ, ω_{N+i}))`: independent streams on the
/// two sides. The θ side is shared by all coordinates, so a run costs
/// `(n + 1)·N` simulations.
pub fn estimate_cmc<P: Performance + ?Sized>(perf: &P, theta: &[f64], delta: f64, n: u64, seed: u64) -> Result<Estimate> {
    check_common(perf, theta, n)?;
    check_delta(perf, theta, delta, false)?;
    let tally = one_sided(perf, theta, delta, n, seed, n)?;
    Estimate::from_tally(Method::Cmc, tally, n, theta.len(), Some(delta), seed)
}

/// Forward difference with the same ω at θ and θ+Δe_k.
pub fn estimate_crn<P: Performance + ?Sized>(perf: &P, theta: &[f64], delta: f64, n: u64, seed: u64) -> Result<Estimate> {
    check_common(perf, theta, n)?;
    check_delta(perf, theta, delta, false)?;
    let tally = one_sided(perf, theta, delta, n, seed, 0)?;
    Estimate::from_tally(Method::Crn, tally, n, theta.len(), Some(delta), seed)
}

/// Backward difference `(f(θ) − f(θ−Δe_k))/Δ` under CRN.
pub fn estimate_crn_backward<P: Performance + ?Sized>(
    perf: &P,
    theta: &[f64],
    delta: f64,
    n: u64,
    seed: u64,
) -> Result<Estimate> {
    check_common(perf, theta, n)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("difference step {delta} must be positive")));
    }
    for k in 0..theta.len() {
        perf.theta_box().check(&shifted(theta, k, -delta))?;
    }
    let tally = one_sided(perf, theta, -delta, n, seed, 0)?;
    Estimate::from_tally(Method::Crn, tally, n, theta.len(), Some(delta), seed)
}

/// `(1/(2NΔ)) Σ (f(θ+Δe_k, ω_i) − f(θ−Δe_k, ω_i))`.
pub fn estimate_sd_crn<P: Performance + ?Sized>(perf: &P, theta: &[f64], delta: f64, n: u64, seed: u64) -> Result<Estimate> {
    check_common(perf, theta, n)?;
    check_delta(perf, theta, delta, true)?;
    let dim = theta.len();
    let tally = replicate(n, dim, |i| {
        let mut rep = Replication::new(seed, i);
        let mut out = Vec::with_capacity(dim);
        for k in 0..dim {
            let up = perf.value(&shifted(theta, k, delta), &mut rep)?;
            let down = perf.value(&shifted(theta, k, -delta), &mut rep)?;
            match (up, down) {
                (Some(a), Some(b)) => out.push((a - b) / (2.0 * delta)),
                _ => return Ok(None),
            }
        }
        Ok(Some(out))
    })?;
    Estimate::from_tally(Method::SdCrn, tally, n, dim, Some(delta), seed)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IpaOptions {
    /// Estimate even without a certificate, stamping the result.
    pub allow_uncertified: bool,
    pub starvation_threshold: f64,
}

impl Default for IpaOptions {
    fn default() -> Self {
        IpaOptions {
            allow_uncertified: false,
            starvation_threshold: DEFAULT_STARVATION_THRESHOLD,
        }
    }
}

/// Sample mean of single-run IPA gradients.
pub fn estimate_ipa<P: Performance + ?Sized>(
    perf: &P,
    theta: &[f64],
    n: u64,
    seed: u64,
    options: IpaOptions,
) -> Result<Estimate> {
    check_common(perf, theta, n)?;
    let certified = match perf.certify() {
        Ok(_) => true,
        Err(v) if !options.allow_uncertified => return Err(Error::Uncertified(v)),
        Err(_) => false,
    };
    let dim = theta.len();
    let tally = replicate(n, dim, |i| {
        let mut rep = Replication::new(seed, i);
        Ok(perf.gradient(theta, &mut rep)?.map(|(_, g)| g))
    })?;
    if tally.starved as f64 > options.starvation_threshold * n as f64 {
        return Err(Error::StarvationRate {
            starved: tally.starved as usize,
            total: n as usize,
            threshold: options.starvation_threshold,
        });
    }
    let mut e = Estimate::from_tally(Method::Ipa, tally, n, dim, None, seed)?;
    e.potentially_biased = !certified;
    Ok(e)
}

/// Dispatches on `method`; `delta` is ignored by IPA.
pub fn estimate<P: Performance + ?Sized>(
    perf: &P,
    method: Method,
    theta: &[f64],
    delta: f64,
    n: u64,
    seed: u64,
    options: IpaOptions,
) -> Result<Estimate> {
    match method {
        Method::Cmc => estimate_cmc(perf, theta, delta, n, seed),
        Method::Crn => estimate_crn(perf, theta, delta, n, seed),
        Method::SdCrn => estimate_sd_crn(perf, theta, delta, n, seed),
        Method::Ipa => estimate_ipa(perf, theta, n, seed, options),
    }
}

/// Mean of `f(θ, ω_i)` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub used: u64,
    pub starved: u64,
}

pub fn estimate_value<P: Performance + ?Sized>(perf: &P, theta: &[f64], n: u64, seed: u64) -> Result<ValueEstimate> {
    check_common(perf, theta, n)?;
    let tally = replicate(n, 1, |i| Ok(perf.value(theta, &mut Replication::new(seed, i))?.map(|v| vec![v])))?;
    let m = tally.moments[0];
    Ok(ValueEstimate {
        mean: m.mean,
        std_error: m.std_error(),
        used: m.count,
        starved: tally.starved,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::variates::{DClassCertificate, ThetaBox, Violation};

    /// f(θ, ω) = c(θ) + s·Σ_k θ_k·ω_k with one uniform per coordinate.
    pub(crate) struct Fixture {
        pub theta: ThetaBox,
        pub f: fn(&[f64], &[f64]) -> f64,
        pub df: fn(&[f64], &[f64]) -> Vec<f64>,
    }

    impl Performance for Fixture {
        fn theta_box(&self) -> &ThetaBox {
            &self.theta
        }

        fn value(&self, theta: &[f64], rep: &mut Replication) -> Result<Option<f64>> {
            let w: Vec<f64> = (0..theta.len()).map(|k| rep.uniform(k as u64, 0)).collect();
            Ok(Some((self.f)(theta, &w)))
        }

        fn gradient(&self, theta: &[f64], rep: &mut Replication) -> Result<Option<(f64, Vec<f64>)>> {
            let w: Vec<f64> = (0..theta.len()).map(|k| rep.uniform(k as u64, 0)).collect();
            Ok(Some(((self.f)(theta, &w), (self.df)(theta, &w))))
        }

        fn certify(&self) -> std::result::Result<DClassCertificate, Vec<Violation>> {
            Ok(DClassCertificate {
                variates: vec![],
                quotient: None,
            })
        }
    }

    pub(crate) fn linear() -> Fixture {
        Fixture {
            theta: ThetaBox::new(vec![0.0], vec![4.0]),
            f: |t, w| t[0] * w[0],
            df: |_, w| vec![w[0]],
        }
    }

    fn identity() -> Fixture {
        Fixture {
            theta: ThetaBox::new(vec![0.0], vec![4.0]),
            f: |t, _| t[0],
            df: |_, _| vec![1.0],
        }
    }

    fn cube() -> Fixture {
        Fixture {
            theta: ThetaBox::new(vec![0.0], vec![4.0]),
            f: |t, _| t[0].powi(3),
            df: |t, _| vec![3.0 * t[0] * t[0]],
        }
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let mut all = Moments::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..37].iter().for_each(|&x| a.push(x));
        xs[37..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.mean - all.mean).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-12);
    }

    #[test]
    fn cmc_on_identity_is_exact() {
        let e = estimate_cmc(&identity(), &[1.0], 0.25, 10, 3).unwrap();
        assert!((e.value[0] - 1.0).abs() < 1e-12);
        assert_eq!(e.runs, 20);
    }

    #[test]
    fn crn_on_linear_is_omega() {
        let e = estimate_crn(&linear(), &[1.0], 0.5, 2000, 4).unwrap();
        let mut direct = Moments::default();
        for i in 0..2000 {
            direct.push(Replication::new(4, i).uniform(0, 0));
        }
        assert!((e.value[0] - direct.mean).abs() < 1e-12);
        assert!((e.value[0] - 0.5).abs() < 4.0 * e.std_error[0]);
    }

    #[test]
    fn cmc_mean_over_macro_reps_is_half() {
        let f = linear();
        let mut m = Moments::default();
        for r in 0..200 {
            m.push(estimate_cmc(&f, &[1.0], 0.5, 50, 1000 + r).unwrap().value[0]);
        }
        assert!((m.mean - 0.5).abs() < 4.0 * m.std_error(), "{} ± {}", m.mean, m.std_error());
    }

    #[test]
    fn cmc_variance_exceeds_crn() {
        let f = linear();
        let (mut cmc, mut crn) = (Moments::default(), Moments::default());
        for r in 0..200 {
            cmc.push(estimate_cmc(&f, &[1.0], 0.5, 50, r).unwrap().value[0]);
            crn.push(estimate_crn(&f, &[1.0], 0.5, 50, r).unwrap().value[0]);
        }
        assert!(cmc.variance() > crn.variance());
    }

    #[test]
    fn symmetric_difference_is_exact_for_quadratics() {
        let f = Fixture {
            theta: ThetaBox::new(vec![-4.0], vec![4.0]),
            f: |t, _| 3.0 * t[0] * t[0] - 2.0 * t[0] + 1.0,
            df: |t, _| vec![6.0 * t[0] - 2.0],
        };
        let e = estimate_sd_crn(&f, &[0.7], 0.3, 8, 0).unwrap();
        assert!((e.value[0] - 2.2).abs() < 1e-12);
        assert_eq!(e.runs, 16);
    }

    #[test]
    fn symmetric_difference_has_smaller_bias_on_cube() {
        let f = cube();
        let truth = 3.0;
        let (mut crn, mut sd) = (Moments::default(), Moments::default());
        for r in 0..200 {
            crn.push(estimate_crn(&f, &[1.0], 0.1, 10, r).unwrap().value[0] - truth);
            sd.push(estimate_sd_crn(&f, &[1.0], 0.1, 10, r).unwrap().value[0] - truth);
        }
        assert!(crn.mean > 0.0 && sd.mean > 0.0);
        assert!(sd.mean.abs() < crn.mean.abs());
    }

    #[test]
    fn ipa_on_deterministic_has_zero_error() {
        let e = estimate_ipa(&cube(), &[2.0], 10, 0, IpaOptions::default()).unwrap();
        assert_eq!(e.value, vec![12.0]);
        assert_eq!(e.std_error, vec![0.0]);
        assert_eq!(e.runs, 10);
    }

    #[test]
    fn accounting_matches_method() {
        let f = Fixture {
            theta: ThetaBox::new(vec![0.0; 3], vec![4.0; 3]),
            f: |t, w| t.iter().zip(w).map(|(a, b)| a * b).sum(),
            df: |_, w| w.to_vec(),
        };
        let th = [1.0, 1.0, 1.0];
        assert_eq!(estimate_cmc(&f, &th, 0.1, 7, 0).unwrap().runs, 28);
        assert_eq!(estimate_crn(&f, &th, 0.1, 7, 0).unwrap().runs, 28);
        assert_eq!(estimate_sd_crn(&f, &th, 0.1, 7, 0).unwrap().runs, 42);
        assert_eq!(estimate_ipa(&f, &th, 7, 0, IpaOptions::default()).unwrap().runs, 7);
        let g = linear();
        assert_eq!(estimate_cmc(&g, &[1.0], 0.1, 7, 0).unwrap().runs, 14);
        assert_eq!(estimate_crn(&g, &[1.0], 0.1, 7, 0).unwrap().runs, 14);
    }

    #[test]
    fn boundary_is_enforced() {
        let f = linear();
        assert!(matches!(estimate_crn(&f, &[3.9], 0.5, 10, 0), Err(Error::ThetaOutOfBox { .. })));
        assert!(matches!(estimate_sd_crn(&f, &[0.1], 0.5, 10, 0), Err(Error::ThetaOutOfBox { .. })));
        assert!(estimate_crn(&f, &[1.0], 0.0, 10, 0).is_err());
        assert!(estimate_crn(&f, &[1.0], 0.1, 1, 0).is_err());
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let f = linear();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_cmc(&f, &[1.0], 0.3, 5000, 11).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
