//! Statistical check of IPA against a symmetric-difference reference, with
//! one-sided differences to expose kinks in `F`.

use serde::Serialize;

use super::{estimate_crn, estimate_crn_backward, estimate_ipa, estimate_sd_crn, Estimate, IpaOptions};
use crate::model::Performance;
use crate::variates::derive_seed;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UnbiasednessOptions {
    /// Difference step of the reference and one-sided estimates.
    pub delta: f64,
    /// Rejection threshold in combined standard errors.
    pub threshold: f64,
}

impl Default for UnbiasednessOptions {
    fn default() -> Self {
        UnbiasednessOptions {
            delta: 1e-3,
            threshold: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoordinateTest {
    pub ipa: f64,
    pub reference: f64,
    pub combined_std_error: f64,
    /// `(ipa − reference)/combined SE`; infinite when the SE is zero and the
    /// values differ beyond the truncation tolerance.
    pub z: f64,
    pub pass: bool,
    pub left: f64,
    pub right: f64,
    /// Left and right difference quotients disagree.
    pub kink: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnbiasednessReport {
    pub certified: bool,
    pub violations: Vec<String>,
    pub coordinates: Vec<CoordinateTest>,
    pub pass: bool,
    pub ipa: Estimate,
    pub reference: Estimate,
}

/// `|a − b| / se` with a degenerate-SE fallback: when `se == 0` the
/// difference is compared against `tol` instead.
fn z_score(a: f64, b: f64, se: f64, tol: f64) -> f64 {
    let d = (a - b).abs();
    if se > 0.0 {
        d / se
    } else if d <= tol {
        0.0
    } else {
        f64::INFINITY
    }
}

/// IPA on replications seeded by `seed`, the SD-CRN reference on
/// `derive_seed(seed, 1)`, and the one-sided CRN pair on
/// `derive_seed(seed, 2)`.
pub fn unbiasedness_test<P: Performance + ?Sized>(
    perf: &P,
    theta: &[f64],
    n: u64,
    seed: u64,
    options: UnbiasednessOptions,
) -> Result<UnbiasednessReport> {
    let (certified, violations) = match perf.certify() {
        Ok(_) => (true, Vec::new()),
        Err(v) => (false, v.iter().map(ToString::to_string).collect()),
    };
    let ipa_options = IpaOptions {
        allow_uncertified: true,
        ..IpaOptions::default()
    };
    let ipa = estimate_ipa(perf, theta, n, seed, ipa_options)?;
    let reference = estimate_sd_crn(perf, theta, options.delta, n, derive_seed(seed, 1))?;
    let side_seed = derive_seed(seed, 2);
    let left = estimate_crn_backward(perf, theta, options.delta, n, side_seed)?;
    let right = estimate_crn(perf, theta, options.delta, n, side_seed)?;

    let delta = options.delta;
    let coordinates: Vec<CoordinateTest> = (0..theta.len())
        .map(|k| {
            let se = ipa.std_error[k].hypot(reference.std_error[k]);
            let z = z_score(ipa.value[k], reference.value[k], se, delta * (1.0 + reference.value[k].abs()));
            let side_se = left.std_error[k].hypot(right.std_error[k]);
            let (l, r) = (left.value[k], right.value[k]);
            // One-sided quotients of a smooth F differ by O(Δ); a kink moves
            // them apart by the jump in the derivative.
            let kink_tol = delta.sqrt() * (1.0 + l.abs() + r.abs());
            let kink = (l - r).abs() > options.threshold * side_se + kink_tol;
            CoordinateTest {
                ipa: ipa.value[k],
                reference: reference.value[k],
                combined_std_error: se,
                z,
                pass: z <= options.threshold,
                left: l,
                right: r,
                kink,
            }
        })
        .collect();
    let pass = coordinates.iter().all(|c| c.pass);
    Ok(UnbiasednessReport {
        certified,
        violations,
        coordinates,
        pass,
        ipa,
        reference,
    })
}
