//! Command-line front end. Exit codes: 0 success, 2 usage or validation
//! error, 3 runtime error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::to_sexpr;
use crate::config::load_model;
use crate::estimators::{
    estimate, mse_study, unbiasedness_test, write_estimates_csv, write_mse_csv, DeltaSchedule,
    IpaOptions, Method, UnbiasednessOptions, DEFAULT_STARVATION_THRESHOLD, ESTIMATE_SCHEMA_VERSION,
};
use crate::model::{Measure, Model, ModelMeasure, Network};
use crate::networks::{stochastic_measure_value, unroll_queueing_at, DEFAULT_NODE_BUDGET};
use crate::optimize::{robbins_monro, write_history_csv, CostAugmented, GainSchedule, StopRule, Validation};
use crate::variates::{derive_seed, Replication};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Largest expression (in leaves) `unroll` prints.
const PRINT_LEAF_CAP: u64 = 1 << 22;

#[derive(Debug, Parser)]
#[command(name = "stochnet", version, about = "Simulation and IPA gradient estimation for stochastic networks")]
pub struct Cli {
    /// Worker threads for parallel replications (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-replication and aggregate performance values.
    Simulate(SimulateArgs),
    /// Gradient estimate by IPA or a finite-difference method.
    Gradient(GradientArgs),
    /// Print the sample performance as a max/min/+ expression.
    Unroll(UnrollArgs),
    /// Empirical MSE of all estimators against the model's oracle gradient.
    Compare(CompareArgs),
    /// Projected Robbins-Monro minimization with IPA gradients.
    Optimize(OptimizeArgs),
    /// Check the unbiasedness conditions for IPA.
    Check(CheckArgs),
    /// Statistical comparison of IPA against symmetric differences.
    Unbiased(UnbiasedArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Model file (JSON).
    pub model: PathBuf,
    /// Parameter point, comma separated (default: the model's initial point).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    /// Master seed (default: the model's seed, else 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Performance measure: t, w, u, c, q or delta.
    #[arg(long, default_value = "t")]
    pub measure: String,
    /// Output file (default: stdout).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, short = 'n', default_value_t = 1)]
    pub replications: u64,
}

#[derive(Debug, Args)]
pub struct GradientArgs {
    #[command(flatten)]
    pub common: Common,
    /// ipa, crn, cmc or sd-crn.
    #[arg(long, default_value = "ipa")]
    pub method: String,
    #[arg(long, short = 'n', default_value_t = 10_000)]
    pub replications: u64,
    /// Difference step for finite-difference methods.
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
    /// Run IPA on a model without a certificate; the result is flagged.
    #[arg(long)]
    pub allow_uncertified: bool,
    #[arg(long, default_value_t = DEFAULT_STARVATION_THRESHOLD)]
    pub starvation_threshold: f64,
    /// Emit a JSON summary instead of CSV.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct UnrollArgs {
    pub model: PathBuf,
    /// Target node (1-based, queueing models; default from the model).
    #[arg(long)]
    pub node: Option<usize>,
    /// Target completion (queueing models; default from the model).
    #[arg(long)]
    pub completion: Option<usize>,
    /// Maximum number of operator nodes built.
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    pub budget: usize,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    pub grid: Vec<u64>,
    #[arg(long, default_value_t = 200)]
    pub macro_reps: u64,
    #[arg(long, value_delimiter = ',', default_value = "ipa,crn,cmc,sd-crn")]
    pub methods: Vec<String>,
    /// Step constant c in Δ = c·N^(-1/6) for CMC.
    #[arg(long, default_value_t = 1.0)]
    pub c_cmc: f64,
    /// Step constant c in Δ = c·N^(-1/4) for CRN.
    #[arg(long, default_value_t = 1.0)]
    pub c_crn: f64,
    /// Step constant c in Δ = c·N^(-1/4) for SD-CRN.
    #[arg(long, default_value_t = 1.0)]
    pub c_sd: f64,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Gain numerator a in a/(n+s).
    #[arg(long, default_value_t = 1.0)]
    pub gain_a: f64,
    /// Gain shift s in a/(n+s).
    #[arg(long, default_value_t = 10.0)]
    pub gain_s: f64,
    #[arg(long, default_value_t = 10_000)]
    pub iterations: u64,
    /// IPA replications per iteration.
    #[arg(long, default_value_t = 10)]
    pub inner_n: u64,
    /// Stop when a step moves θ by less than this.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Cost weights w_k added as Σ w_k/θ_k.
    #[arg(long, value_delimiter = ',')]
    pub cost: Option<Vec<f64>>,
    /// Replications of the objective estimate at validated iterates.
    #[arg(long)]
    pub validate: Option<u64>,
    /// Validate every this many iterations (plus the last iterate).
    #[arg(long, default_value_t = 1000)]
    pub validate_every: u64,
    #[arg(long)]
    pub allow_uncertified: bool,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub model: PathBuf,
    #[arg(long, default_value = "t")]
    pub measure: String,
}

#[derive(Debug, Args)]
pub struct UnbiasedArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, short = 'n', default_value_t = 100_000)]
    pub replications: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
    #[arg(long, default_value_t = 4.0)]
    pub threshold: f64,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let result = match cli.workers {
        Some(0) => Err(Error::InvalidArgument("--workers must be positive".into())),
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w).build() {
            Ok(pool) => pool.install(|| execute(&cli.command)),
            Err(e) => Err(Error::InvalidArgument(e.to_string())),
        },
        None => execute(&cli.command),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Gradient(a) => gradient(a),
        Command::Unroll(a) => unroll(a),
        Command::Compare(a) => compare(a),
        Command::Optimize(a) => optimize(a),
        Command::Check(a) => check(a),
        Command::Unbiased(a) => unbiased(a),
    }
}

struct Loaded {
    model: Model,
    theta: Vec<f64>,
    seed: u64,
    measure: Measure,
}

fn load(c: &Common) -> Result<Loaded> {
    let model = load_model(&c.model)?;
    let measure: Measure = c.measure.parse()?;
    model.check_measure(measure)?;
    let theta = c.theta.clone().unwrap_or_else(|| model.initial.clone());
    model.theta.check(&theta)?;
    let seed = c.seed.or(model.seed).unwrap_or(0);
    Ok(Loaded {
        model,
        theta,
        seed,
        measure,
    })
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let l = load(&a.common)?;
    if a.replications == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    let columns: Vec<Measure> = match l.model.network {
        Network::Queueing(_) => Measure::QUEUEING.to_vec(),
        _ => vec![Measure::T],
    };
    let rows = (0..a.replications)
        .into_par_iter()
        .map(|i| {
            let mut rep = Replication::new(l.seed, i);
            Ok(match &l.model.network {
                Network::Queueing(q) => stochastic_measure_value(q, &l.model.variates, &l.theta, &mut rep)
                    .map(|m| vec![m.t, m.w, m.u, m.c, m.q, m.delta]),
                _ => l.model.value(Measure::T, &l.theta, &mut rep)?.map(|v| vec![v]),
            })
        })
        .collect::<Result<Vec<Option<Vec<f64>>>>>()?;

    let mut sums = vec![crate::estimators::Moments::default(); columns.len()];
    let mut starved = 0u64;
    let bytes = csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        let mut header = vec!["replication".to_string(), "starved".to_string()];
        header.extend(columns.iter().map(|m| m.name().to_string()));
        w.write_record(&header)?;
        for (i, row) in rows.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            match row {
                Some(v) => {
                    rec.push("false".into());
                    for (s, x) in sums.iter_mut().zip(v) {
                        s.push(*x);
                    }
                    rec.extend(v.iter().map(f64::to_string));
                }
                None => {
                    starved += 1;
                    rec.push("true".into());
                    rec.extend(std::iter::repeat_n(String::new(), columns.len()));
                }
            }
            w.write_record(&rec)?;
        }
        let mut mean = vec!["mean".to_string(), starved.to_string()];
        mean.extend(sums.iter().map(|s| s.mean.to_string()));
        w.write_record(&mean)?;
        let mut se = vec!["std_error".to_string(), starved.to_string()];
        se.extend(sums.iter().map(|s| if s.count >= 2 { s.std_error().to_string() } else { String::new() }));
        w.write_record(&se)?;
        w.flush()?;
        Ok(())
    })?;
    emit(a.common.out.as_deref(), &bytes)?;
    eprintln!("{} replications, {starved} starved", a.replications);
    Ok(())
}

#[derive(Serialize)]
struct GradientSummary<'a> {
    schema_version: u32,
    measure: &'a str,
    theta: &'a [f64],
    certified: bool,
    violations: Vec<String>,
    estimate: &'a crate::estimators::Estimate,
}

fn gradient(a: &GradientArgs) -> Result<()> {
    let l = load(&a.common)?;
    let method: Method = a.method.parse()?;
    let perf = ModelMeasure::new(&l.model, l.measure)?;
    let options = IpaOptions {
        allow_uncertified: a.allow_uncertified,
        starvation_threshold: a.starvation_threshold,
    };
    let e = estimate(&perf, method, &l.theta, a.delta, a.replications, l.seed, options)?;
    let bytes = if a.json {
        let (certified, violations) = match l.model.certify(l.measure) {
            Ok(_) => (true, vec![]),
            Err(v) => (false, v.iter().map(ToString::to_string).collect()),
        };
        let s = GradientSummary {
            schema_version: ESTIMATE_SCHEMA_VERSION,
            measure: l.measure.name(),
            theta: &l.theta,
            certified,
            violations,
            estimate: &e,
        };
        let mut v = serde_json::to_vec_pretty(&s).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        v.push(b'\n');
        v
    } else {
        csv_bytes(|buf| write_estimates_csv(buf, std::slice::from_ref(&e)))?
    };
    emit(a.common.out.as_deref(), &bytes)
}

fn unroll(a: &UnrollArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (expr, symbols) = match (&model.network, a.node, a.completion) {
        (Network::Queueing(q), node, completion) => {
            let k = node.unwrap_or(q.target_node + 1);
            let m = completion.unwrap_or(q.target_completion);
            if k == 0 || k > q.services.len() || m == 0 {
                return Err(Error::InvalidArgument(format!(
                    "target ({k}, {m}) must have node in 1..={} and completion >= 1",
                    q.services.len()
                )));
            }
            let u = unroll_queueing_at(q, k - 1, m, a.budget)?;
            (u.expr, u.symbols)
        }
        (_, None, None) => model.unroll(a.budget)?,
        _ => return Err(Error::InvalidArgument("--node/--completion apply to queueing models only".into())),
    };
    let text = to_sexpr(&expr, |v| symbols.name(v).unwrap_or("?").to_string(), PRINT_LEAF_CAP)?;
    emit(a.out.as_deref(), format!("{text}\n").as_bytes())
}

fn compare(a: &CompareArgs) -> Result<()> {
    let l = load(&a.common)?;
    let oracle = l
        .model
        .oracle
        .as_ref()
        .filter(|o| o.measure == l.measure)
        .ok_or_else(|| Error::InvalidArgument(format!("model has no oracle gradient for measure {}", l.measure)))?;
    let theta = match &a.common.theta {
        Some(t) if t != &oracle.theta => {
            return Err(Error::InvalidArgument("--theta differs from the oracle's parameter point".into()))
        }
        _ => oracle.theta.clone(),
    };
    let methods = a.methods.iter().map(|m| m.parse()).collect::<Result<Vec<Method>>>()?;
    if a.grid.is_empty() || a.grid.contains(&0) {
        return Err(Error::InvalidArgument("grid sizes must be positive".into()));
    }
    let schedule = DeltaSchedule {
        cmc: a.c_cmc,
        crn: a.c_crn,
        sd_crn: a.c_sd,
    };
    let perf = ModelMeasure::new(&l.model, l.measure)?;
    let study = mse_study(&perf, &theta, &methods, &a.grid, a.macro_reps, &oracle.gradient, schedule, l.seed)?;
    let bytes = csv_bytes(|buf| write_mse_csv(buf, &study))?;
    emit(a.common.out.as_deref(), &bytes)?;
    for (m, s) in &study.slopes {
        match s {
            Some(s) => eprintln!("{m}: log-log MSE slope {s:.3}"),
            None => eprintln!("{m}: log-log MSE slope undefined"),
        }
    }
    Ok(())
}

fn optimize(a: &OptimizeArgs) -> Result<()> {
    let l = load(&a.common)?;
    let perf = ModelMeasure::new(&l.model, l.measure)?;
    let schedule = GainSchedule {
        a: a.gain_a,
        s: a.gain_s,
    };
    let stop = StopRule {
        max_iterations: a.iterations,
        tolerance: a.tolerance,
    };
    let options = IpaOptions {
        allow_uncertified: a.allow_uncertified,
        ..IpaOptions::default()
    };
    let validation = a.validate.map(|r| Validation {
        every: a.validate_every,
        replications: r,
        seed: derive_seed(l.seed, u64::MAX),
    });
    let run = match &a.cost {
        Some(w) => {
            let c = CostAugmented::new(&perf, w.clone())?;
            robbins_monro(&c, &l.theta, schedule, a.inner_n, stop, l.seed, options, validation)?
        }
        None => robbins_monro(&perf, &l.theta, schedule, a.inner_n, stop, l.seed, options, validation)?,
    };
    let bytes = csv_bytes(|buf| write_history_csv(buf, &run))?;
    emit(a.common.out.as_deref(), &bytes)?;
    let theta: Vec<String> = run.theta.iter().map(|t| format!("{t:.6}")).collect();
    eprintln!("final theta [{}] after {} iterations", theta.join(", "), run.history.len());
    Ok(())
}

fn check(a: &CheckArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let measure: Measure = a.measure.parse()?;
    model.check_measure(measure)?;
    let cert = model.certify(measure).map_err(Error::Uncertified)?;
    println!("certified for measure {measure}");
    for v in &cert.variates {
        println!("  {}: Lipschitz {}", v.id, v.lipschitz.description);
    }
    if let Some(q) = &cert.quotient {
        match q.denominator_lower {
            Some(nu) => println!("  denominator bounded below by {nu}"),
            None => println!("  quotient moment condition asserted by the model file"),
        }
    }
    Ok(())
}

fn unbiased(a: &UnbiasedArgs) -> Result<()> {
    let l = load(&a.common)?;
    let perf = ModelMeasure::new(&l.model, l.measure)?;
    let options = UnbiasednessOptions {
        delta: a.delta,
        threshold: a.threshold,
    };
    let r = unbiasedness_test(&perf, &l.theta, a.replications, l.seed, options)?;
    let mut v = serde_json::to_vec_pretty(&r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    v.push(b'\n');
    emit(a.common.out.as_deref(), &v)?;
    eprintln!(
        "certificate: {}; IPA vs SD-CRN: {}",
        if r.certified { "pass" } else { "fail" },
        if r.pass { "agree" } else { "disagree" }
    );
    Ok(())
}

