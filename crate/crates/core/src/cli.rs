//! Command-line front end: `simulate`, `fit`, `check` and `mc`.
//!
//! Options come from an optional TOML file (`--config`) overlaid by flags.
//! Structured results are JSON with a `schema_version` field; series are one
//! value per line. Exit codes: 0 success, 1 domain failure, 2 usage or parse
//! error. Diagnostics go to stderr only.

use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{GarchError, Result};
use crate::inference::full_inference;
use crate::innovations::InnovationDist;
use crate::likelihood::ScoreFamily;
use crate::mc::{per_rep_csv, run_mc, McConfig, DEFAULT_REFERENCE_LEN};
use crate::model::{GarchOrder, GarchParams, ParamSpace, TimeSeries};
use crate::optimize::{fit, FitOptions};
use crate::simulate::{simulate, SimConfig, DEFAULT_BURN_IN};
use crate::stationarity::{garch11_criterion, lyapunov_exponent, LyapunovEstimate, Verdict};

pub const SCHEMA_VERSION: u32 = 1;

const DEFAULT_FIT_PRODUCTS: usize = 100_000;
const DEFAULT_CHECK_PRODUCTS: usize = 200_000;

/// One real per line; blank lines and lines starting with `#` are skipped.
pub fn parse_series<R: Read>(reader: R) -> Result<TimeSeries> {
    let mut values = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| GarchError::Parse { line: i + 1, msg: e.to_string() })?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let v: f64 = text
            .parse()
            .map_err(|_| GarchError::Parse { line: i + 1, msg: format!("not a number: '{text}'") })?;
        values.push(v);
    }
    if values.len() < 2 {
        return Err(GarchError::SeriesTooShort { needed: 2, got: values.len() });
    }
    Ok(TimeSeries::new(values))
}

/// Full-precision, round-trip safe rendering of a series.
pub fn format_series(series: &TimeSeries) -> String {
    let mut out = String::with_capacity(series.len() * 22);
    for v in series.values() {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessOpts {
    #[arg(long)]
    pub omega: Option<f64>,
    /// Comma-separated alpha_1..alpha_p.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub alpha: Option<Vec<f64>>,
    /// Comma-separated beta_1..beta_q.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InnovationOpts {
    /// normal, laplace or polytail.
    #[arg(long)]
    pub dist: Option<String>,
    /// Tail index of the polytail law.
    #[arg(long = "dist-theta", id = "dist_theta")]
    pub theta: Option<f64>,
    /// Divisor applied to the base law.
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationOpts {
    /// gaussian, laplace or polytail.
    #[arg(long)]
    pub family: Option<String>,
    /// Tail index of the polytail family.
    #[arg(long = "family-theta", id = "family_theta")]
    pub theta: Option<f64>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long = "u-low")]
    pub u_low: Option<f64>,
    #[arg(long = "u-high")]
    pub u_high: Option<f64>,
    #[arg(long)]
    pub rho0: Option<f64>,
    #[arg(long = "n-starts")]
    pub n_starts: Option<usize>,
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    /// Report estimates even when the fitted process looks nonstationary.
    #[arg(long = "allow-nonstationary", num_args = 0..=1, default_missing_value = "true")]
    pub allow_nonstationary: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationOpts {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "burn-in")]
    pub burn_in: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McOpts {
    /// Comma-separated score families, one arm each.
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<String>>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Length of the path behind the reference information matrix.
    #[arg(long = "reference-len")]
    pub reference_len: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckOpts {
    /// Random matrix products in the Lyapunov estimate.
    #[arg(long = "n-products")]
    pub n_products: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoOpts {
    /// Input series (default: stdin).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output document (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Per-replication CSV written by `mc`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Contents of a `--config` file. Every section and key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub process: ProcessOpts,
    pub innovations: InnovationOpts,
    pub estimation: EstimationOpts,
    pub simulation: SimulationOpts,
    pub mc: McOpts,
    pub check: CheckOpts,
    pub io: IoOpts,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0);
            GarchError::Parse { line, msg: e.message().to_string() }
        })
    }
}

macro_rules! overlay {
    ($flags:expr, $file:expr; $($f:ident),+) => {{
        let mut out = $file.clone();
        $( if $flags.$f.is_some() { out.$f = $flags.$f.clone(); } )+
        out
    }};
}

impl ProcessOpts {
    fn over(&self, file: &Self) -> Self {
        overlay!(self, file; omega, alpha, beta)
    }
}
impl InnovationOpts {
    fn over(&self, file: &Self) -> Self {
        overlay!(self, file; dist, theta, scale)
    }
}
impl EstimationOpts {
    fn over(&self, file: &Self) -> Self {
        overlay!(self, file; family, theta, p, q, u_low, u_high, rho0, n_starts, max_iters, allow_nonstationary)
    }
}
impl SimulationOpts {
    fn over(&self, file: &Self) -> Self {
        overlay!(self, file; n, burn_in)
    }
}
impl McOpts {
    fn over(&self, file: &Self) -> Self {
        overlay!(self, file; families, reps, reference_len)
    }
}
impl CheckOpts {
    fn over(&self, file: &Self) -> Self {
        overlay!(self, file; n_products)
    }
}
impl IoOpts {
    fn over(&self, file: &Self) -> Self {
        overlay!(self, file; input, output, csv)
    }
}

#[derive(Debug, Parser)]
#[command(name = "garch-qle", version, about = "Quasi-likelihood estimation for GARCH(p, q)")]
struct Cli {
    /// TOML file with defaults; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a path and print one value per line.
    Simulate {
        #[command(flatten)]
        process: ProcessOpts,
        #[command(flatten)]
        innovations: InnovationOpts,
        #[command(flatten)]
        simulation: SimulationOpts,
        #[command(flatten)]
        io: IoOpts,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a series and report estimates with standard errors.
    Fit {
        #[command(flatten)]
        estimation: EstimationOpts,
        #[command(flatten)]
        check: CheckOpts,
        #[command(flatten)]
        io: IoOpts,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Strict-stationarity diagnostics for given parameters.
    Check {
        #[command(flatten)]
        process: ProcessOpts,
        #[command(flatten)]
        innovations: InnovationOpts,
        #[command(flatten)]
        check: CheckOpts,
        #[command(flatten)]
        io: IoOpts,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Monte Carlo study over replicated simulate-then-fit runs.
    Mc {
        #[command(flatten)]
        process: ProcessOpts,
        #[command(flatten)]
        innovations: InnovationOpts,
        #[command(flatten)]
        estimation: EstimationOpts,
        #[command(flatten)]
        simulation: SimulationOpts,
        #[command(flatten)]
        mc: McOpts,
        #[command(flatten)]
        io: IoOpts,
        #[arg(long)]
        seed: Option<u64>,
    },
}

struct Failure {
    code: i32,
    msg: String,
}

fn usage<E: std::fmt::Display>(e: E) -> Failure {
    Failure { code: 2, msg: e.to_string() }
}

fn domain<E: std::fmt::Display>(e: E) -> Failure {
    Failure { code: 1, msg: e.to_string() }
}

type Outcome = std::result::Result<(), Failure>;

struct Streams<'a> {
    stdin: &'a mut dyn Read,
    stdout: &'a mut dyn Write,
}

impl Streams<'_> {
    fn read_series(&mut self, input: Option<&Path>) -> std::result::Result<TimeSeries, Failure> {
        match input {
            Some(path) => {
                let file = fs::File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                parse_series(file).map_err(usage)
            }
            None => parse_series(&mut *self.stdin).map_err(usage),
        }
    }

    fn emit(&mut self, output: Option<&Path>, text: &str) -> Outcome {
        match output {
            Some(path) => fs::write(path, text).map_err(|e| domain(format!("{}: {e}", path.display()))),
            None => self.stdout.write_all(text.as_bytes()).map_err(domain),
        }
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run_cli<I, T>(args: I, stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    let mut streams = Streams { stdin, stdout };
    match dispatch(cli, &mut streams) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.msg);
            f.code
        }
    }
}

fn dispatch(cli: Cli, streams: &mut Streams<'_>) -> Outcome {
    let file = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            RunConfig::from_toml(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Simulate { process, innovations, simulation, io, seed } => cmd_simulate(
            &process.over(&file.process),
            &innovations.over(&file.innovations),
            &simulation.over(&file.simulation),
            &io.over(&file.io),
            seed.or(file.seed).unwrap_or(0),
            streams,
        ),
        Command::Fit { estimation, check, io, seed } => cmd_fit(
            &estimation.over(&file.estimation),
            &check.over(&file.check),
            &io.over(&file.io),
            seed.or(file.seed).unwrap_or(0),
            streams,
        ),
        Command::Check { process, innovations, check, io, seed } => cmd_check(
            &process.over(&file.process),
            &innovations.over(&file.innovations),
            &check.over(&file.check),
            &io.over(&file.io),
            seed.or(file.seed).unwrap_or(0),
            streams,
        ),
        Command::Mc { process, innovations, estimation, simulation, mc, io, seed } => cmd_mc(
            &McInputs {
                process: process.over(&file.process),
                innovations: innovations.over(&file.innovations),
                estimation: estimation.over(&file.estimation),
                simulation: simulation.over(&file.simulation),
                mc: mc.over(&file.mc),
            },
            &io.over(&file.io),
            seed.or(file.seed).unwrap_or(0),
            streams,
        ),
    }
}

fn build_params(opts: &ProcessOpts) -> std::result::Result<GarchParams, Failure> {
    let omega = opts.omega.ok_or_else(|| usage("--omega is required"))?;
    let alpha = opts.alpha.as_ref().ok_or_else(|| usage("--alpha is required"))?;
    let beta = opts.beta.as_ref().ok_or_else(|| usage("--beta is required"))?;
    GarchParams::new(omega, alpha, beta).map_err(usage)
}

fn build_dist(opts: &InnovationOpts) -> std::result::Result<InnovationDist, Failure> {
    let base = match opts.dist.as_deref().unwrap_or("normal") {
        "normal" | "gaussian" => InnovationDist::standard_normal(),
        "laplace" => InnovationDist::laplace(),
        "polytail" => {
            let theta = opts.theta.ok_or_else(|| usage("polytail innovations need --dist-theta"))?;
            InnovationDist::poly_tail(theta).map_err(usage)?
        }
        other => return Err(usage(format!("unknown distribution '{other}'"))),
    };
    base.with_divisor(opts.scale.unwrap_or(1.0)).map_err(usage)
}

fn build_family(name: &str, theta: Option<f64>) -> std::result::Result<ScoreFamily, Failure> {
    ScoreFamily::from_name(name, theta).map_err(usage)
}

fn build_space(opts: &EstimationOpts, order: GarchOrder) -> std::result::Result<ParamSpace, Failure> {
    let d = ParamSpace::default_for(order);
    ParamSpace::new(
        order,
        opts.u_low.unwrap_or(d.u_low()),
        opts.u_high.unwrap_or(d.u_high()),
        opts.rho0.unwrap_or(d.rho0()),
    )
    .map_err(usage)
}

fn fit_options(opts: &EstimationOpts, seed: u64) -> FitOptions {
    let d = FitOptions::default();
    FitOptions {
        max_iters: opts.max_iters.unwrap_or(d.max_iters),
        n_starts: opts.n_starts.unwrap_or(d.n_starts),
        seed,
        ..d
    }
}

fn coord_names(order: GarchOrder) -> Vec<String> {
    let mut names = vec!["omega".to_string()];
    names.extend((1..=order.p()).map(|i| format!("alpha{i}")));
    names.extend((1..=order.q()).map(|j| format!("beta{j}")));
    names
}

fn named(names: &[String], values: &[f64]) -> Value {
    let mut map = serde_json::Map::new();
    for (n, v) in names.iter().zip(values) {
        map.insert(n.clone(), num(*v));
    }
    Value::Object(map)
}

/// Non-finite values become the strings `"inf"`, `"-inf"` or `"nan"`.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn matrix(m: &nalgebra::DMatrix<f64>) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| num(m[(i, j)])).collect())).collect())
}

fn lyapunov_json(est: &LyapunovEstimate) -> Value {
    json!({
        "gamma": num(est.gamma),
        "std_error": num(est.std_error),
        "n_products": est.n_products,
        "verdict": est.verdict,
    })
}

fn document(body: Value) -> String {
    let mut doc = serde_json::Map::new();
    doc.insert("schema_version".into(), json!(SCHEMA_VERSION));
    if let Value::Object(map) = body {
        doc.extend(map);
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(doc)).expect("json values serialize");
    text.push('\n');
    text
}

fn cmd_simulate(
    process: &ProcessOpts,
    innovations: &InnovationOpts,
    simulation: &SimulationOpts,
    io: &IoOpts,
    seed: u64,
    streams: &mut Streams<'_>,
) -> Outcome {
    let params = build_params(process)?;
    let dist = build_dist(innovations)?;
    let config = SimConfig::new(params, dist, simulation.n.unwrap_or(1000), seed)
        .with_burn_in(simulation.burn_in.unwrap_or(DEFAULT_BURN_IN));
    let out = simulate(&config).map_err(domain)?;
    streams.emit(io.output.as_deref(), &format_series(&out.series))
}

fn cmd_fit(estimation: &EstimationOpts, check: &CheckOpts, io: &IoOpts, seed: u64, streams: &mut Streams<'_>) -> Outcome {
    let family_name = estimation.family.as_deref().unwrap_or("gaussian");
    let family = build_family(family_name, estimation.theta)?;
    let order = GarchOrder::new(estimation.p.unwrap_or(1), estimation.q.unwrap_or(1)).map_err(usage)?;
    let space = build_space(estimation, order)?;
    let series = streams.read_series(io.input.as_deref())?;

    let res = fit(&series, &space, &family, &fit_options(estimation, seed)).map_err(domain)?;
    let inf = full_inference(&series, &res.theta_hat, &family).map_err(domain)?;
    let table = InnovationDist::table(inf.residuals.clone()).map_err(domain)?;
    let lyap = lyapunov_exponent(&res.theta_hat, &table, check.n_products.unwrap_or(DEFAULT_FIT_PRODUCTS), seed)
        .map_err(domain)?;
    if lyap.verdict == Verdict::Nonstationary && !estimation.allow_nonstationary.unwrap_or(false) {
        return Err(domain(format!(
            "fitted process is nonstationary (Lyapunov exponent {:.6} +/- {:.6}); rerun with --allow-nonstationary to report it anyway",
            lyap.gamma, lyap.std_error
        )));
    }

    let names = coord_names(order);
    let r = &inf.residuals;
    let m = r.len() as f64;
    let mean = r.iter().sum::<f64>() / m;
    let sd = (r.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    let body = json!({
        "p": order.p(),
        "q": order.q(),
        "family": family.name(),
        "n": series.len(),
        "theta_hat": named(&names, res.theta_hat.as_slice()),
        "objective": num(res.objective_value),
        "converged": res.converged,
        "at_boundary": res.at_boundary,
        "n_iters": res.n_iters,
        "grad_norm": num(res.grad_norm),
        "a_hat": matrix(&inf.a_hat),
        "tau_sq_hat": num(inf.tau_sq_hat),
        "covariance": matrix(&inf.covariance),
        "std_errors": named(&names, &inf.std_errors),
        "d_hat": num(inf.d_hat),
        "residuals": {
            "count": r.len(),
            "mean": num(mean),
            "sd": num(sd),
            "min": num(r.iter().copied().fold(f64::INFINITY, f64::min)),
            "max": num(r.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        },
        "stationarity": lyapunov_json(&lyap),
    });
    streams.emit(io.output.as_deref(), &document(body))
}

fn cmd_check(
    process: &ProcessOpts,
    innovations: &InnovationOpts,
    check: &CheckOpts,
    io: &IoOpts,
    seed: u64,
    streams: &mut Streams<'_>,
) -> Outcome {
    let params = build_params(process)?;
    let dist = build_dist(innovations)?;
    let n_products = check.n_products.unwrap_or(DEFAULT_CHECK_PRODUCTS);
    let lyap = lyapunov_exponent(&params, &dist, n_products, seed).map_err(usage)?;
    let order = params.order();
    let mut body = json!({
        "p": order.p(),
        "q": order.q(),
        "params": named(&coord_names(order), params.as_slice()),
        "dist": dist.to_string(),
        "lyapunov": lyapunov_json(&lyap),
        "verdict": lyap.verdict,
    });
    if order.p() == 1 && order.q() == 1 {
        let g11 = garch11_criterion(&params, &dist, n_products.max(10_000), seed).map_err(usage)?;
        body["garch11_criterion"] = lyapunov_json(&g11);
    }
    streams.emit(io.output.as_deref(), &document(body))
}

struct McInputs {
    process: ProcessOpts,
    innovations: InnovationOpts,
    estimation: EstimationOpts,
    simulation: SimulationOpts,
    mc: McOpts,
}

fn cmd_mc(inputs: &McInputs, io: &IoOpts, seed: u64, streams: &mut Streams<'_>) -> Outcome {
    let params = build_params(&inputs.process)?;
    let dist = build_dist(&inputs.innovations)?;
    let names = inputs.mc.families.clone().unwrap_or_else(|| vec!["gaussian".into()]);
    let families = names
        .iter()
        .map(|n| build_family(n, inputs.estimation.theta))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut config = McConfig::new(
        params.clone(),
        dist,
        families,
        inputs.simulation.n.unwrap_or(1000),
        inputs.mc.reps.unwrap_or(100),
        seed,
    );
    config.space = build_space(&inputs.estimation, params.order())?;
    config.burn_in = inputs.simulation.burn_in.unwrap_or(DEFAULT_BURN_IN);
    config.reference_len = inputs.mc.reference_len.unwrap_or(DEFAULT_REFERENCE_LEN);
    config.fit = fit_options(&inputs.estimation, seed);
    let summary = run_mc(&config).map_err(|e| match e {
        GarchError::InsufficientReplications { .. } | GarchError::InvalidParameter(_) => usage(e),
        other => domain(other),
    })?;
    let body = serde_json::to_value(&summary).map_err(domain)?;
    streams.emit(io.output.as_deref(), &document(body))?;
    if let Some(path) = io.csv.as_deref() {
        fs::write(path, per_rep_csv(&summary)).map_err(|e| domain(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
