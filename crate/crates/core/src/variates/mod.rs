//! θ-parameterized random variates driven by explicit uniform streams.
//!
//! Every random duration is produced by inverse transform from a uniform
//! drawn out of a counter-based stream, so ω is a fixed, replayable object:
//! evaluating a model at two parameter points with the same replication
//! uses the same uniforms.

mod dclass;
mod family;
mod stream;

pub use dclass::{
    check_dclass, DClassCertificate, MeasureKind, QuotientCertificate, VariateCertificate,
    Violation,
};
pub use family::{Base, Coef, Family, LipschitzBound, Transform};
pub use stream::{derive_seed, stream, Replication, UniformStream, ROUTING_STREAM_BASE};

use crate::{Error, Result};

/// Axis-aligned admissible parameter set Θ.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaBox {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ThetaBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let names = (1..=lower.len()).map(|i| format!("theta{i}")).collect();
        ThetaBox {
            names,
            lower,
            upper,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::ThetaDimension {
                expected: self.dim(),
                found: theta.len(),
            });
        }
        for (index, &value) in theta.iter().enumerate() {
            let (lower, upper) = (self.lower[index], self.upper[index]);
            if !(value >= lower && value <= upper) {
                return Err(Error::ThetaOutOfBox {
                    index,
                    value,
                    lower,
                    upper,
                });
            }
        }
        Ok(())
    }

    /// Coordinate-wise clipping onto the box.
    pub fn project(&self, theta: &mut [f64]) -> bool {
        let mut moved = false;
        for (i, x) in theta.iter_mut().enumerate() {
            let clipped = x.clamp(self.lower[i], self.upper[i]);
            if clipped != *x {
                moved = true;
                *x = clipped;
            }
        }
        moved
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariateSpec {
    pub id: String,
    pub family: Family,
    /// Uniform stream feeding this variate. Variates sharing a stream are
    /// functions of the same uniforms.
    pub stream: u64,
    /// Declared independence of all other variates; `false` records a
    /// dependence the stream layout does not show.
    pub independent: bool,
}

impl VariateSpec {
    pub fn new(id: impl Into<String>, family: Family, stream: u64) -> Self {
        VariateSpec {
            id: id.into(),
            family,
            stream,
            independent: true,
        }
    }

    /// τ(θ, u). Deterministic in its arguments.
    pub fn sample(&self, theta_box: &ThetaBox, theta: &[f64], u: f64) -> Result<f64> {
        check_draw(theta_box, theta, u)?;
        Ok(self.family.value(theta, u, 0))
    }

    /// ∂τ/∂θ at fixed u.
    pub fn sample_derivative(&self, theta_box: &ThetaBox, theta: &[f64], u: f64) -> Result<Vec<f64>> {
        check_draw(theta_box, theta, u)?;
        Ok(self.family.gradient(theta, u, 0))
    }

    /// The `n`-th draw of this variate in a replication.
    pub fn draw(&self, theta: &[f64], rep: &mut Replication, n: usize) -> (f64, f64) {
        let u = rep.uniform(self.stream, n);
        (u, self.family.value(theta, u, n))
    }
}

fn check_draw(theta_box: &ThetaBox, theta: &[f64], u: f64) -> Result<()> {
    theta_box.check(theta)?;
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidArgument(format!("uniform {u} not in (0, 1)")));
    }
    Ok(())
}
