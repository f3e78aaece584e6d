use std::f64::consts::{FRAC_2_PI, SQRT_2};

use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::gamma;

use super::ThetaBox;

/// Affine function of at most one parameter: `offset + weight·θ[param]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coef {
    pub param: Option<usize>,
    pub weight: f64,
    pub offset: f64,
}

impl Coef {
    pub fn fixed(value: f64) -> Self {
        Coef {
            param: None,
            weight: 0.0,
            offset: value,
        }
    }

    pub fn param(index: usize) -> Self {
        Coef {
            param: Some(index),
            weight: 1.0,
            offset: 0.0,
        }
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        match self.param {
            Some(p) => self.offset + self.weight * theta[p],
            None => self.offset,
        }
    }

    /// Smallest and largest value over the box.
    pub fn range(&self, theta: &ThetaBox) -> (f64, f64) {
        match self.param {
            Some(p) => {
                let a = self.offset + self.weight * theta.lower[p];
                let b = self.offset + self.weight * theta.upper[p];
                (a.min(b), a.max(b))
            }
            None => (self.offset, self.offset),
        }
    }

    fn add_derivative(&self, factor: f64, out: &mut [f64]) {
        if let Some(p) = self.param {
            out[p] += self.weight * factor;
        }
    }
}

/// Standardized base variable ξ of a location–scale family.
#[derive(Clone, Debug, PartialEq)]
pub enum Base {
    Exponential,
    Uniform,
    Normal,
    TruncatedNormal { lo: f64, hi: f64 },
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

fn std_normal_quantile(u: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * u)
}

impl Base {
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Base::Exponential => -(-u).ln_1p(),
            Base::Uniform => u,
            Base::Normal => std_normal_quantile(u),
            Base::TruncatedNormal { lo, hi } => {
                let (a, b) = (std_normal_cdf(*lo), std_normal_cdf(*hi));
                std_normal_quantile(a + u * (b - a)).clamp(*lo, *hi)
            }
        }
    }

    /// An upper bound on E|ξ|.
    pub fn mean_abs_bound(&self) -> f64 {
        match self {
            Base::Exponential => 1.0,
            Base::Uniform => 0.5,
            Base::Normal => FRAC_2_PI.sqrt(),
            Base::TruncatedNormal { lo, hi } => {
                let mass = std_normal_cdf(*hi) - std_normal_cdf(*lo);
                let tail_free = FRAC_2_PI.sqrt() / mass;
                if lo.is_finite() && hi.is_finite() {
                    tail_free.min(lo.abs().max(hi.abs()))
                } else {
                    tail_free
                }
            }
        }
    }

    /// Infimum of the support.
    pub fn lower(&self) -> f64 {
        match self {
            Base::Exponential | Base::Uniform => 0.0,
            Base::Normal => f64::NEG_INFINITY,
            Base::TruncatedNormal { lo, .. } => *lo,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Base::Exponential => "exponential",
            Base::Uniform => "uniform",
            Base::Normal => "normal",
            Base::TruncatedNormal { .. } => "truncated normal",
        }
    }
}

/// Monotone quantile transforms outside the location–scale scheme.
#[derive(Clone, Debug, PartialEq)]
pub enum Transform {
    /// `scale · (−ln(1−u))^{1/shape}`
    Weibull { shape: f64, scale: Coef },
    /// `exp(mu + sigma·Φ⁻¹(u))`
    LogNormal { mu: Coef, sigma: Coef },
    /// `weight · θ[param]^exponent`, independent of u (a point mass).
    Monomial {
        param: usize,
        exponent: f64,
        weight: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// `scale(θ)·ξ(u) + location(θ)`
    LocationScale {
        base: Base,
        scale: Coef,
        location: Coef,
    },
    InverseTransform(Transform),
    /// Point masses: the n-th draw takes `values[n]`, the last value repeats.
    Deterministic { values: Vec<f64> },
    /// Takes `atom_value` with probability `atom_prob` (when u > 1 − p),
    /// otherwise `otherwise` driven by the rescaled uniform.
    Atomic {
        atom_prob: f64,
        atom_value: f64,
        otherwise: Box<Family>,
    },
}

/// Lipschitz constant descriptor: λ(ω) with |τ(θ₁)−τ(θ₂)| ≤ λ‖θ₁−θ₂‖.
#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzBound {
    pub description: String,
    /// Finite upper bound on E λ, or `None` when none is known.
    pub mean_bound: Option<f64>,
}

impl Family {
    pub fn exponential_scale(param: usize) -> Family {
        Family::LocationScale {
            base: Base::Exponential,
            scale: Coef::param(param),
            location: Coef::fixed(0.0),
        }
    }

    /// Value of the `n`-th draw given its uniform `u`.
    pub fn value(&self, theta: &[f64], u: f64, n: usize) -> f64 {
        match self {
            Family::LocationScale {
                base,
                scale,
                location,
            } => scale.value(theta) * base.quantile(u) + location.value(theta),
            Family::InverseTransform(t) => match t {
                Transform::Weibull { shape, scale } => {
                    scale.value(theta) * (-(-u).ln_1p()).powf(1.0 / shape)
                }
                Transform::LogNormal { mu, sigma } => {
                    (mu.value(theta) + sigma.value(theta) * std_normal_quantile(u)).exp()
                }
                Transform::Monomial {
                    param,
                    exponent,
                    weight,
                } => weight * theta[*param].powf(*exponent),
            },
            Family::Deterministic { values } => values[n.min(values.len() - 1)],
            Family::Atomic {
                atom_prob,
                atom_value,
                otherwise,
            } => {
                let cut = 1.0 - atom_prob;
                if u > cut {
                    *atom_value
                } else {
                    otherwise.value(theta, u / cut, n)
                }
            }
        }
    }

    /// Adds ∂τ/∂θ at fixed u to `out`.
    pub fn add_gradient(&self, theta: &[f64], u: f64, out: &mut [f64]) {
        match self {
            Family::LocationScale {
                base,
                scale,
                location,
            } => {
                scale.add_derivative(base.quantile(u), out);
                location.add_derivative(1.0, out);
            }
            Family::InverseTransform(t) => match t {
                Transform::Weibull { shape, scale } => {
                    scale.add_derivative((-(-u).ln_1p()).powf(1.0 / shape), out);
                }
                Transform::LogNormal { mu, sigma } => {
                    let z = std_normal_quantile(u);
                    let tau = (mu.value(theta) + sigma.value(theta) * z).exp();
                    mu.add_derivative(tau, out);
                    sigma.add_derivative(tau * z, out);
                }
                Transform::Monomial {
                    param,
                    exponent,
                    weight,
                } => {
                    out[*param] += weight * exponent * theta[*param].powf(exponent - 1.0);
                }
            },
            Family::Deterministic { .. } => {}
            Family::Atomic {
                atom_prob,
                otherwise,
                ..
            } => {
                let cut = 1.0 - atom_prob;
                if u <= cut {
                    otherwise.add_gradient(theta, u / cut, out);
                }
            }
        }
    }

    /// `n` is the draw index; no family's derivative depends on it.
    pub fn gradient(&self, theta: &[f64], u: f64, _n: usize) -> Vec<f64> {
        let mut g = vec![0.0; theta.len()];
        self.add_gradient(theta, u, &mut g);
        g
    }

    /// Whether the distribution has no atoms for every θ in the box.
    pub fn is_continuous(&self, theta: &ThetaBox) -> bool {
        match self {
            Family::LocationScale { scale, .. } => scale.range(theta).0 > 0.0,
            Family::InverseTransform(Transform::Weibull { scale, .. }) => scale.range(theta).0 > 0.0,
            Family::InverseTransform(Transform::LogNormal { sigma, .. }) => {
                let (lo, hi) = sigma.range(theta);
                lo > 0.0 || hi < 0.0
            }
            Family::InverseTransform(Transform::Monomial { .. }) => false,
            Family::Deterministic { .. } => false,
            Family::Atomic { .. } => false,
        }
    }

    /// Reason the distribution is not continuous, if any.
    pub fn discontinuity(&self, theta: &ThetaBox) -> Option<String> {
        if self.is_continuous(theta) {
            return None;
        }
        Some(match self {
            Family::Atomic {
                atom_prob,
                atom_value,
                ..
            } => format!("atom of mass {atom_prob} at {atom_value}"),
            Family::Deterministic { .. } => "deterministic values".to_string(),
            Family::InverseTransform(Transform::Monomial { .. }) => {
                "point mass depending on θ only".to_string()
            }
            _ => "scale parameter can reach zero on the parameter box".to_string(),
        })
    }

    /// Differentiable in θ at every fixed u, over the whole box.
    pub fn is_differentiable(&self, theta: &ThetaBox) -> bool {
        match self {
            Family::InverseTransform(Transform::Monomial {
                param, exponent, ..
            }) => {
                theta.lower[*param] > 0.0
                    || (*exponent >= 1.0 && exponent.fract() == 0.0)
            }
            Family::Atomic { otherwise, .. } => otherwise.is_differentiable(theta),
            _ => true,
        }
    }

    pub fn lipschitz(&self, theta: &ThetaBox) -> LipschitzBound {
        match self {
            Family::LocationScale {
                base,
                scale,
                location,
            } => {
                let ws = if scale.param.is_some() { scale.weight.abs() } else { 0.0 };
                let wl = if location.param.is_some() { location.weight.abs() } else { 0.0 };
                LipschitzBound {
                    description: format!("{ws}·|ξ| + {wl}, ξ {}", base.name()),
                    mean_bound: Some(ws * base.mean_abs_bound() + wl),
                }
            }
            Family::InverseTransform(Transform::Weibull { shape, scale }) => {
                let w = if scale.param.is_some() { scale.weight.abs() } else { 0.0 };
                LipschitzBound {
                    description: format!("{w}·E^(1/{shape}), E standard exponential"),
                    mean_bound: Some(w * gamma(1.0 + 1.0 / shape)),
                }
            }
            Family::InverseTransform(Transform::LogNormal { mu, sigma }) => {
                let m = mu.range(theta).1;
                let s = {
                    let (lo, hi) = sigma.range(theta);
                    lo.abs().max(hi.abs())
                };
                let wm = if mu.param.is_some() { mu.weight.abs() } else { 0.0 };
                let ws = if sigma.param.is_some() { sigma.weight.abs() } else { 0.0 };
                // E e^{s|Z|} = 2e^{s²/2}Φ(s); E|Z|e^{s|Z|} = 2φ(0) + 2s e^{s²/2}Φ(s)
                let e0 = 2.0 * (s * s / 2.0).exp() * std_normal_cdf(s);
                let e1 = 2.0 / (2.0 * std::f64::consts::PI).sqrt() + s * e0;
                LipschitzBound {
                    description: format!("e^({m} + {s}|Z|)·({wm} + {ws}|Z|)"),
                    mean_bound: Some(m.exp() * (wm * e0 + ws * e1)),
                }
            }
            Family::InverseTransform(Transform::Monomial {
                param,
                exponent,
                weight,
            }) => {
                let (a, b) = (theta.lower[*param], theta.upper[*param]);
                let slope = |x: f64| (weight * exponent * x.powf(exponent - 1.0)).abs();
                let bound = if a <= 0.0 && *exponent < 1.0 {
                    None
                } else {
                    let m = slope(a).max(slope(b));
                    m.is_finite().then_some(m)
                };
                LipschitzBound {
                    description: "deterministic slope bound".to_string(),
                    mean_bound: bound,
                }
            }
            Family::Deterministic { .. } => LipschitzBound {
                description: "constant".to_string(),
                mean_bound: Some(0.0),
            },
            Family::Atomic { otherwise, .. } => otherwise.lipschitz(theta),
        }
    }

    /// Infimum of the support over all θ in the box.
    pub fn support_lower(&self, theta: &ThetaBox) -> f64 {
        match self {
            Family::LocationScale {
                base,
                scale,
                location,
            } => {
                let xi = base.lower();
                let (s_lo, s_hi) = scale.range(theta);
                let (l_lo, _) = location.range(theta);
                if xi == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                // Affine in each coefficient; the extremes sit at the corners.
                let s_part = (s_lo * xi).min(s_hi * xi);
                if let Some(p) = scale.param.filter(|_| scale.param == location.param) {
                    let at = |x: f64| {
                        let mut t = vec![0.0; theta.dim()];
                        t[p] = x;
                        scale.value(&t) * xi + location.value(&t)
                    };
                    at(theta.lower[p]).min(at(theta.upper[p]))
                } else {
                    s_part + l_lo
                }
            }
            Family::InverseTransform(Transform::Weibull { .. })
            | Family::InverseTransform(Transform::LogNormal { .. }) => 0.0,
            Family::InverseTransform(Transform::Monomial {
                param,
                exponent,
                weight,
            }) => {
                let f = |x: f64| weight * x.powf(*exponent);
                f(theta.lower[*param]).min(f(theta.upper[*param]))
            }
            Family::Deterministic { values } => values.iter().copied().fold(f64::INFINITY, f64::min),
            Family::Atomic {
                atom_value,
                otherwise,
                ..
            } => atom_value.min(otherwise.support_lower(theta)),
        }
    }

    /// Coefficients that must stay strictly positive on the box.
    pub(crate) fn scale_range(&self, theta: &ThetaBox) -> Option<(f64, f64)> {
        match self {
            Family::LocationScale { scale, .. }
            | Family::InverseTransform(Transform::Weibull { scale, .. }) => Some(scale.range(theta)),
            Family::InverseTransform(Transform::LogNormal { sigma, .. }) => Some(sigma.range(theta)),
            Family::Atomic { otherwise, .. } => otherwise.scale_range(theta),
            _ => None,
        }
    }
}
