//! JSON model files.
//!
//! ```json
//! {
//!   "version": 1,
//!   "parameters": { "names": ["a"], "lower": [0.1], "upper": [10], "initial": [1] },
//!   "variates": [
//!     { "id": "x", "family": { "kind": "location_scale", "base": "exponential",
//!                              "scale": { "param": "a" } } }
//!   ],
//!   "network": { "kind": "activity", "nodes": ["x"], "arcs": [] }
//! }
//! ```
//!
//! Unknown fields are rejected. Every diagnostic names the offending field
//! path, e.g. `network.routing.table[0][3]`. Node numbers inside files are
//! 1-based; array positions in paths are 0-based.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use crate::algebra::{parse_sexpr, AlgebraError};
use crate::model::{expression_var, ExpressionNetwork, Measure, Model, Network, Oracle};
use crate::networks::{
    Dag, DagKind, DagNetwork, QueueingNetwork, Routing, RoutingTable, DEFAULT_EVENT_CAP,
};
use crate::variates::{Base, Coef, Family, ThetaBox, Transform, VariateSpec};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    parameters: ParametersDef,
    variates: Vec<VariateDef>,
    network: NetworkDef,
    #[serde(default)]
    assume_quotient_moments: bool,
    oracle: Option<OracleDef>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParametersDef {
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    initial: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariateDef {
    id: String,
    family: FamilyDef,
    stream: Option<String>,
    #[serde(default = "yes")]
    independent: bool,
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum FamilyDef {
    LocationScale {
        base: BaseDef,
        #[serde(default = "coef_one")]
        scale: CoefDef,
        #[serde(default = "coef_zero")]
        location: CoefDef,
    },
    Weibull {
        shape: f64,
        scale: CoefDef,
    },
    Lognormal {
        mu: CoefDef,
        sigma: CoefDef,
    },
    Monomial {
        param: String,
        exponent: f64,
        #[serde(default = "one")]
        weight: f64,
    },
    Deterministic {
        values: Vec<f64>,
    },
    Atomic {
        probability: f64,
        value: f64,
        otherwise: Box<FamilyDef>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum BaseDef {
    Exponential,
    Uniform,
    Normal,
    TruncatedNormal { lo: f64, hi: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CoefDef {
    Number(f64),
    Param(ParamCoef),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamCoef {
    param: String,
    #[serde(default = "one")]
    weight: f64,
    #[serde(default)]
    offset: f64,
}

fn coef_one() -> CoefDef {
    CoefDef::Number(1.0)
}

fn coef_zero() -> CoefDef {
    CoefDef::Number(0.0)
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum NetworkDef {
    Activity {
        nodes: Vec<String>,
        #[serde(default)]
        arcs: Vec<[usize; 2]>,
    },
    Reliability {
        nodes: Vec<String>,
        #[serde(default)]
        arcs: Vec<[usize; 2]>,
    },
    Queueing {
        nodes: Vec<QueueNodeDef>,
        routing: RoutingDef,
        target: TargetDef,
        event_cap: Option<u64>,
    },
    Expression {
        expr: String,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueueNodeDef {
    service: String,
    #[serde(default)]
    initial: usize,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum RoutingDef {
    Table(Vec<Vec<usize>>),
    Probabilities(Vec<Vec<f64>>),
    Mixture(Vec<MixtureDef>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureDef {
    probability: f64,
    table: Vec<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetDef {
    node: usize,
    completion: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleDef {
    theta: Vec<f64>,
    gradient: Vec<f64>,
    #[serde(default = "default_measure")]
    measure: String,
}

fn default_measure() -> String {
    "t".into()
}

fn err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses and validates a model from JSON text.
pub fn parse_model(text: &str) -> Result<Model> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ModelFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let at = format!("line {}, column {}", inner.line(), inner.column());
        let path = if path == "." { at.clone() } else { path };
        err(path, format!("{inner}").replace(&format!(" at {at}"), ""))
    })?;
    build(file)
}

/// Reads and validates a model file.
pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| err(path.display().to_string(), e.to_string()))?;
    parse_model(&text)
}

fn build(file: ModelFile) -> Result<Model> {
    if file.version != SCHEMA_VERSION {
        return Err(err(
            "version",
            format!("unsupported schema version {} (expected {SCHEMA_VERSION})", file.version),
        ));
    }
    let theta = build_parameters(&file.parameters)?;
    let initial = match &file.parameters.initial {
        Some(v) => {
            if v.len() != theta.dim() {
                return Err(err(
                    "parameters.initial",
                    format!("{} values for {} parameters", v.len(), theta.dim()),
                ));
            }
            theta
                .check(v)
                .map_err(|e| err("parameters.initial", e.to_string()))?;
            v.clone()
        }
        None => (0..theta.dim())
            .map(|k| 0.5 * (theta.lower[k] + theta.upper[k]))
            .collect(),
    };

    let params: HashMap<&str, usize> = theta
        .names
        .iter()
        .enumerate()
        .map(|(k, n)| (n.as_str(), k))
        .collect();
    let mut streams: HashMap<String, u64> = HashMap::new();
    let mut variates = Vec::with_capacity(file.variates.len());
    let mut ids: HashMap<&str, usize> = HashMap::new();
    for (k, v) in file.variates.iter().enumerate() {
        let path = format!("variates[{k}]");
        if v.id.is_empty() {
            return Err(err(format!("{path}.id"), "empty id"));
        }
        if ids.insert(&v.id, k).is_some() {
            return Err(err(format!("{path}.id"), format!("duplicate variate id '{}'", v.id)));
        }
        let family = build_family(&v.family, &params, &format!("{path}.family"))?;
        let name = v.stream.clone().unwrap_or_else(|| v.id.clone());
        let next = streams.len() as u64;
        let stream = *streams.entry(name).or_insert(next);
        variates.push(VariateSpec {
            id: v.id.clone(),
            family,
            stream,
            independent: v.independent,
        });
    }

    let lookup = |name: &str, path: String| -> Result<usize> {
        ids.get(name)
            .copied()
            .ok_or_else(|| err(path, format!("unknown variate '{name}'")))
    };

    let network = match &file.network {
        NetworkDef::Activity { nodes, arcs } => {
            Network::Activity(build_dag(DagKind::Activity, nodes, arcs, &lookup)?)
        }
        NetworkDef::Reliability { nodes, arcs } => {
            Network::Reliability(build_dag(DagKind::Reliability, nodes, arcs, &lookup)?)
        }
        NetworkDef::Queueing {
            nodes,
            routing,
            target,
            event_cap,
        } => Network::Queueing(build_queueing(nodes, routing, target, *event_cap, &lookup)?),
        NetworkDef::Expression { expr } => {
            let e = parse_sexpr(expr, |name| expression_var(&variates, name)).map_err(|e| match e {
                AlgebraError::UnknownSymbol { name, offset } => err(
                    "network.expr",
                    format!("unknown variate '{name}' at byte {offset}"),
                ),
                other => err("network.expr", other.to_string()),
            })?;
            Network::Expression(ExpressionNetwork { expr: e })
        }
    };

    let oracle = match &file.oracle {
        Some(o) => {
            let measure: Measure = o.measure.parse().map_err(|e: Error| err("oracle.measure", e.to_string()))?;
            if o.theta.len() != theta.dim() {
                return Err(err("oracle.theta", format!("{} values for {} parameters", o.theta.len(), theta.dim())));
            }
            if o.gradient.len() != theta.dim() {
                return Err(err(
                    "oracle.gradient",
                    format!("{} values for {} parameters", o.gradient.len(), theta.dim()),
                ));
            }
            Some(Oracle {
                theta: o.theta.clone(),
                gradient: o.gradient.clone(),
                measure,
            })
        }
        None => None,
    };

    let model = Model {
        theta,
        initial,
        variates,
        network,
        assume_quotient_moments: file.assume_quotient_moments,
        oracle,
        seed: file.seed,
    };
    if let Some(o) = &model.oracle {
        model
            .check_measure(o.measure)
            .map_err(|e| err("oracle.measure", e.to_string()))?;
    }
    Ok(model)
}

fn build_parameters(p: &ParametersDef) -> Result<ThetaBox> {
    let n = p.names.len();
    if p.lower.len() != n {
        return Err(err("parameters.lower", format!("{} bounds for {n} parameters", p.lower.len())));
    }
    if p.upper.len() != n {
        return Err(err("parameters.upper", format!("{} bounds for {n} parameters", p.upper.len())));
    }
    for (k, name) in p.names.iter().enumerate() {
        if p.names[..k].contains(name) {
            return Err(err(format!("parameters.names[{k}]"), format!("duplicate parameter '{name}'")));
        }
        if !(p.lower[k].is_finite() && p.upper[k].is_finite() && p.lower[k] <= p.upper[k]) {
            return Err(err(
                format!("parameters.lower[{k}]"),
                format!("bounds [{}, {}] do not form an interval", p.lower[k], p.upper[k]),
            ));
        }
    }
    Ok(ThetaBox {
        names: p.names.clone(),
        lower: p.lower.clone(),
        upper: p.upper.clone(),
    })
}

fn build_coef(c: &CoefDef, params: &HashMap<&str, usize>, path: &str) -> Result<Coef> {
    match c {
        CoefDef::Number(x) => Ok(Coef::fixed(*x)),
        CoefDef::Param(p) => {
            let k = params
                .get(p.param.as_str())
                .ok_or_else(|| err(format!("{path}.param"), format!("unknown parameter '{}'", p.param)))?;
            Ok(Coef {
                param: Some(*k),
                weight: p.weight,
                offset: p.offset,
            })
        }
    }
}

fn build_family(f: &FamilyDef, params: &HashMap<&str, usize>, path: &str) -> Result<Family> {
    Ok(match f {
        FamilyDef::LocationScale {
            base,
            scale,
            location,
        } => {
            let base = match base {
                BaseDef::Exponential => Base::Exponential,
                BaseDef::Uniform => Base::Uniform,
                BaseDef::Normal => Base::Normal,
                BaseDef::TruncatedNormal { lo, hi } => {
                    if !(lo < hi) {
                        return Err(err(format!("{path}.base"), format!("empty truncation interval [{lo}, {hi}]")));
                    }
                    Base::TruncatedNormal { lo: *lo, hi: *hi }
                }
            };
            Family::LocationScale {
                base,
                scale: build_coef(scale, params, &format!("{path}.scale"))?,
                location: build_coef(location, params, &format!("{path}.location"))?,
            }
        }
        FamilyDef::Weibull { shape, scale } => {
            if !(*shape > 0.0) {
                return Err(err(format!("{path}.shape"), "shape must be positive"));
            }
            Family::InverseTransform(Transform::Weibull {
                shape: *shape,
                scale: build_coef(scale, params, &format!("{path}.scale"))?,
            })
        }
        FamilyDef::Lognormal { mu, sigma } => Family::InverseTransform(Transform::LogNormal {
            mu: build_coef(mu, params, &format!("{path}.mu"))?,
            sigma: build_coef(sigma, params, &format!("{path}.sigma"))?,
        }),
        FamilyDef::Monomial {
            param,
            exponent,
            weight,
        } => {
            let k = params
                .get(param.as_str())
                .ok_or_else(|| err(format!("{path}.param"), format!("unknown parameter '{param}'")))?;
            Family::InverseTransform(Transform::Monomial {
                param: *k,
                exponent: *exponent,
                weight: *weight,
            })
        }
        FamilyDef::Deterministic { values } => {
            if values.is_empty() {
                return Err(err(format!("{path}.values"), "at least one value is required"));
            }
            Family::Deterministic {
                values: values.clone(),
            }
        }
        FamilyDef::Atomic {
            probability,
            value,
            otherwise,
        } => {
            if !(*probability >= 0.0 && *probability < 1.0) {
                return Err(err(format!("{path}.probability"), "atom probability must lie in [0, 1)"));
            }
            Family::Atomic {
                atom_prob: *probability,
                atom_value: *value,
                otherwise: Box::new(build_family(otherwise, params, &format!("{path}.otherwise"))?),
            }
        }
    })
}

fn build_dag(
    kind: DagKind,
    nodes: &[String],
    arcs: &[[usize; 2]],
    lookup: &dyn Fn(&str, String) -> Result<usize>,
) -> Result<DagNetwork> {
    let n = nodes.len();
    if n == 0 {
        return Err(err("network.nodes", "network has no nodes"));
    }
    let variates = nodes
        .iter()
        .enumerate()
        .map(|(k, id)| lookup(id, format!("network.nodes[{k}]")))
        .collect::<Result<Vec<_>>>()?;
    for (k, id) in nodes.iter().enumerate() {
        if nodes[..k].contains(id) {
            return Err(err(format!("network.nodes[{k}]"), format!("variate '{id}' used by two nodes")));
        }
    }
    let mut edges = Vec::with_capacity(arcs.len());
    for (k, [a, b]) in arcs.iter().enumerate() {
        for (end, x) in [(0, a), (1, b)] {
            if *x < 1 || *x > n {
                return Err(err(
                    format!("network.arcs[{k}][{end}]"),
                    format!("node {x} out of range 1..={n}"),
                ));
            }
        }
        edges.push((a - 1, b - 1));
    }
    let dag = Dag::new(n, &edges).map_err(|e| err("network.arcs", strip(e)))?;
    DagNetwork::new(kind, dag, variates).map_err(|e| err("network", strip(e)))
}

fn strip(e: Error) -> String {
    match e {
        Error::InvalidNetwork(m) => m,
        other => other.to_string(),
    }
}

fn build_table(rows: &[Vec<usize>], l: usize, path: &str) -> Result<RoutingTable> {
    if rows.len() != l {
        return Err(err(path, format!("{} rows for {l} nodes", rows.len())));
    }
    let mut out = Vec::with_capacity(l);
    for (i, row) in rows.iter().enumerate() {
        if row.is_empty() {
            return Err(err(format!("{path}[{i}]"), "empty routing row"));
        }
        let mut r = Vec::with_capacity(row.len());
        for (j, &d) in row.iter().enumerate() {
            if d < 1 || d > l {
                return Err(err(
                    format!("{path}[{i}][{j}]"),
                    format!("destination {d} out of range 1..={l}"),
                ));
            }
            r.push(d - 1);
        }
        out.push(r);
    }
    Ok(RoutingTable::new(out))
}

fn build_queueing(
    nodes: &[QueueNodeDef],
    routing: &RoutingDef,
    target: &TargetDef,
    event_cap: Option<u64>,
    lookup: &dyn Fn(&str, String) -> Result<usize>,
) -> Result<QueueingNetwork> {
    let l = nodes.len();
    if l == 0 {
        return Err(err("network.nodes", "network has no nodes"));
    }
    let services = nodes
        .iter()
        .enumerate()
        .map(|(k, n)| lookup(&n.service, format!("network.nodes[{k}].service")))
        .collect::<Result<Vec<_>>>()?;
    for (k, s) in services.iter().enumerate() {
        if services[..k].contains(s) {
            return Err(err(
                format!("network.nodes[{k}].service"),
                format!("variate '{}' serves two nodes", nodes[k].service),
            ));
        }
    }
    let initial: Vec<usize> = nodes.iter().map(|n| n.initial).collect();
    if initial.iter().sum::<usize>() == 0 {
        return Err(err("network.nodes", "no initial customers in the network"));
    }
    let routing = match routing {
        RoutingDef::Table(rows) => Routing::Deterministic(build_table(rows, l, "network.routing.table")?),
        RoutingDef::Probabilities(p) => {
            if p.len() != l {
                return Err(err("network.routing.probabilities", format!("{} rows for {l} nodes", p.len())));
            }
            for (i, row) in p.iter().enumerate() {
                let path = format!("network.routing.probabilities[{i}]");
                if row.len() != l {
                    return Err(err(path, format!("{} entries for {l} nodes", row.len())));
                }
                if row.iter().any(|x| !(*x >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(err(path, "not a probability distribution"));
                }
            }
            Routing::Stochastic(p.clone())
        }
        RoutingDef::Mixture(m) => {
            if m.is_empty() {
                return Err(err("network.routing.mixture", "empty mixture"));
            }
            let mut tables = Vec::with_capacity(m.len());
            for (k, entry) in m.iter().enumerate() {
                let path = format!("network.routing.mixture[{k}]");
                if !(entry.probability >= 0.0) {
                    return Err(err(format!("{path}.probability"), "negative probability"));
                }
                tables.push((entry.probability, build_table(&entry.table, l, &format!("{path}.table"))?));
            }
            let total: f64 = tables.iter().map(|t| t.0).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(err("network.routing.mixture", format!("probabilities sum to {total}, not 1")));
            }
            Routing::Mixture(tables)
        }
    };
    if target.node < 1 || target.node > l {
        return Err(err("network.target.node", format!("node {} out of range 1..={l}", target.node)));
    }
    if target.completion < 1 {
        return Err(err("network.target.completion", "completion must be at least 1"));
    }
    let mut net = QueueingNetwork::new(services, initial, routing, target.node - 1, target.completion)
        .map_err(|e| err("network", strip(e)))?;
    net.event_cap = event_cap.unwrap_or(DEFAULT_EVENT_CAP);
    if net.event_cap == 0 {
        return Err(err("network.event_cap", "event cap must be positive"));
    }
    Ok(net)
}
