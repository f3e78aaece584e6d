//! CSV tables for estimates and MSE studies. JSON summaries serialize the
//! `Estimate`/`MseStudy` structs directly.

use std::io::Write;

use super::{Estimate, MseStudy};
use crate::Result;

/// Bumped whenever CSV columns or JSON fields change.
pub const ESTIMATE_SCHEMA_VERSION: u32 = 1;

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per coordinate per estimate.
pub fn write_estimates_csv<W: Write>(out: W, estimates: &[Estimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "coordinate",
        "value",
        "std_error",
        "replications",
        "used",
        "starved",
        "delta",
        "seed",
        "runs",
        "potentially_biased",
    ])?;
    for e in estimates {
        for (k, (v, se)) in e.value.iter().zip(&e.std_error).enumerate() {
            w.write_record([
                e.method.name().to_string(),
                (k + 1).to_string(),
                v.to_string(),
                se.to_string(),
                e.replications.to_string(),
                e.used.to_string(),
                e.starved.to_string(),
                opt(e.delta),
                e.seed.to_string(),
                e.runs.to_string(),
                e.potentially_biased.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_mse_csv<W: Write>(out: W, study: &MseStudy) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "n", "delta", "mse", "mse_std_error", "bias", "macro_reps", "slope"])?;
    for r in &study.rows {
        w.write_record([
            r.method.name().to_string(),
            r.n.to_string(),
            opt(r.delta),
            r.mse.to_string(),
            r.mse_std_error.to_string(),
            r.bias.to_string(),
            r.macro_reps.to_string(),
            opt(study.slope(r.method)),
        ])?;
    }
    w.flush()?;
    Ok(())
}
