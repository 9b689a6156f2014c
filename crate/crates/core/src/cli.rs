//! Command-line front end: argument parsing, orchestration and output.

use std::fmt::Write as _;

use clap::{Parser, Subcommand, ValueEnum};
use log::warn;
use serde::Serialize;
use serde_json::{json, Value};

use crate::geometry::{self, Direction};
use crate::model::{self, BlockSet, ModelError, Stability, Verdict};
use crate::oracle::{self, BetaClass, OracleError};
use crate::tail::{self, Regime};

/// Environment variable holding the log filter.
pub const LOG_ENV: &str = "QBD_TAIL_LOG";

/// Relative tolerance on the decay rate accepted by `verify`.
pub const XI_TOL: f64 = 0.02;
/// Largest accepted spread of `nu_{kc+x} / nu_{kc}`.
pub const HOMOGENEITY_TOL: f64 = 0.10;
/// Identity residuals must stay below this multiple of their tail bound.
pub const IDENTITY_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Validation = 1,
    Parse = 2,
    Unstable = 3,
    InsufficientData = 4,
    Mismatch = 5,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Parser, Debug)]
#[command(name = "qbd-tail", version, about = "Tail asymptotics of 2d-QBD stationary distributions")]
pub struct Cli {
    /// Output format for reports.
    #[arg(long, value_enum, default_value = "json", global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a model file: stochasticity, support and irreducibility.
    Validate { file: String },
    /// Drifts, curve geometry and the decay of the stationary tail along a direction.
    Analyze {
        file: String,
        /// Direction as C1,C2 with positive integers.
        #[arg(long)]
        c: Direction,
        /// Also estimate the prefactor vector (direction 1,1 in the strict tangency regime).
        #[arg(long)]
        with_prefactor: bool,
        /// Truncation used for the boundary data of the prefactor.
        #[arg(long = "N", default_value_t = 200)]
        n: usize,
    },
    /// Compare the predicted decay with a truncated-chain solution.
    Verify {
        file: String,
        #[arg(long)]
        c: Direction,
        #[arg(long = "N")]
        n: usize,
        /// Seed of the simulation cross-check.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Accepted relative error of the fitted decay rate.
        #[arg(long, default_value_t = XI_TOL)]
        xi_tol: f64,
        /// Relative perturbation applied to the predicted rate before comparison.
        #[arg(long, default_value_t = 0.0, hide = true)]
        perturb_xi: f64,
    },
    /// Sample the spectral curve as CSV.
    Geometry {
        file: String,
        /// Spacing of the theta1 grid.
        #[arg(long, default_value_t = 0.01)]
        grid: f64,
    },
}

/// Result of one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn new(code: Exit, stdout: String) -> Self {
        Self { code: code as i32, stdout, stderr: String::new() }
    }

    fn error(code: Exit, msg: impl std::fmt::Display) -> Self {
        Self { code: code as i32, stdout: String::new(), stderr: format!("error: {msg}\n") }
    }
}

pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Exit::Parse as i32 } else { 0 };
            return Outcome { code, stdout: String::new(), stderr: e.render().to_string() };
        }
    };
    let fmt = cli.format;
    match cli.command {
        Command::Validate { file } => cmd_validate(&file, fmt),
        Command::Analyze { file, c, with_prefactor, n } => cmd_analyze(&file, c, with_prefactor, n, fmt),
        Command::Verify { file, c, n, seed, xi_tol, perturb_xi } => {
            cmd_verify(&file, &VerifyOptions { c, n, seed, xi_tol, perturb_xi }, fmt)
        }
        Command::Geometry { file, grid } => cmd_geometry(&file, grid),
    }
}

fn read(path: &str) -> Result<String, Outcome> {
    std::fs::read_to_string(path).map_err(|e| Outcome::error(Exit::Parse, format!("{path}: {e}")))
}

fn load(path: &str) -> Result<BlockSet, Outcome> {
    match BlockSet::load_json(&read(path)?) {
        Ok(b) => Ok(b),
        Err(ModelError::Parse(m)) => Err(Outcome::error(Exit::Parse, m)),
        Err(ModelError::Invalid(report)) => {
            let mut o = Outcome::error(Exit::Validation, "model failed validation");
            o.stdout = render(&json!({ "validation": to_value(&*report) }), Format::Json);
            Err(o)
        }
        Err(e) => Err(Outcome::error(Exit::Validation, e)),
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

pub fn cmd_validate(path: &str, fmt: Format) -> Outcome {
    let text = match read(path) {
        Ok(t) => t,
        Err(o) => return o,
    };
    let blocks = match BlockSet::parse_json(&text) {
        Ok(b) => b,
        Err(e) => return Outcome::error(Exit::Parse, e),
    };
    let report = model::validate(&blocks);
    let ok = report.violations.is_empty() && report.irreducibility != Verdict::Fail;
    let out = render(&json!({ "ok": ok, "validation": to_value(&report) }), fmt);
    Outcome::new(if ok { Exit::Ok } else { Exit::Validation }, out)
}

fn stable_or_exit(blocks: &BlockSet) -> Result<model::DriftReport, Outcome> {
    let drift = model::mean_drifts(blocks).map_err(|e| Outcome::error(Exit::Validation, e))?;
    if drift.stability != Stability::PositiveRecurrent {
        let mut o = Outcome::error(Exit::Unstable, format!("stability verdict {:?}", drift.stability));
        o.stdout = render(&json!({ "drift": to_value(&drift) }), Format::Json);
        return Err(o);
    }
    Ok(drift)
}

pub fn cmd_analyze(path: &str, c: Direction, with_prefactor: bool, n: usize, fmt: Format) -> Outcome {
    let blocks = match load(path) {
        Ok(b) => b,
        Err(o) => return o,
    };
    let drift = match stable_or_exit(&blocks) {
        Ok(d) => d,
        Err(o) => return o,
    };
    let result = (|| -> Result<Value, String> {
        let geo = geometry::gamma_geometry(&blocks).map_err(|e| e.to_string())?;
        let tp = geometry::theta_c_max(&blocks, c).map_err(|e| e.to_string())?;
        let mut tail = tail::decay_function(&blocks, &geo, c).map_err(|e| e.to_string())?;
        let mut extra = Value::Null;
        if with_prefactor {
            if c == (Direction { c1: 1, c2: 1 }) && tail.regime == Regime::TangencyInterior {
                let ts = oracle::solve_truncated(&blocks, n).map_err(|e| e.to_string())?;
                let bv = oracle::eval_boundary_gf(&ts, tp.eta.0.exp(), tp.eta.1.exp()).map_err(|e| e.to_string())?;
                let hat = tail::hat_tangency(&blocks).map_err(|e| e.to_string())?;
                let pf = tail::prefactor_vector(&blocks, &tail, &hat, tp.eta, &bv).map_err(|e| e.to_string())?;
                tail.prefactor = Some(pf.vector.clone());
                extra = to_value(&pf);
            } else {
                warn!("prefactor is only available for c = 1,1 in the strict tangency regime");
            }
        }
        Ok(json!({
            "drift": to_value(&drift),
            "geometry": to_value(&geo),
            "tangency_point": to_value(&tp),
            "tail": to_value(&tail),
            "prefactor": extra,
        }))
    })();
    match result {
        Ok(v) => Outcome::new(Exit::Ok, render(&v, fmt)),
        Err(e) => Outcome::error(Exit::Validation, e),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub c: Direction,
    pub n: usize,
    pub seed: u64,
    pub xi_tol: f64,
    pub perturb_xi: f64,
}

/// Points of the form `(a theta1^*, b theta2^*)` used to probe the stationary identity.
const IDENTITY_PROBES: [(f64, f64); 6] = [(0.2, 0.2), (0.4, 0.1), (0.1, 0.4), (0.4, 0.4), (0.6, 0.0), (0.0, 0.6)];

pub fn cmd_verify(path: &str, opt: &VerifyOptions, fmt: Format) -> Outcome {
    let blocks = match load(path) {
        Ok(b) => b,
        Err(o) => return o,
    };
    if let Err(o) = stable_or_exit(&blocks) {
        return o;
    }
    let c = opt.c;
    let window = oracle::default_window(opt.n, c);
    if opt.n < oracle::truncated::MIN_TRUNCATION {
        return Outcome::error(Exit::InsufficientData, OracleError::TruncationTooSmall(opt.n));
    }
    if let Err(e) = oracle::fit::check_window(opt.n, c, window) {
        warn!("{e}");
        return Outcome::error(Exit::InsufficientData, e);
    }
    let result = (|| -> Result<(Value, bool), String> {
        let geo = geometry::gamma_geometry(&blocks).map_err(|e| e.to_string())?;
        let pred = tail::decay_function(&blocks, &geo, c).map_err(|e| e.to_string())?;
        let ts = oracle::solve_truncated(&blocks, opt.n).map_err(|e| e.to_string())?;
        let fit = oracle::fit_decay(&ts, c, window).map_err(|e| e.to_string())?;
        let xi_pred = pred.xi_c * (1.0 + opt.perturb_xi);
        let dxi = (fit.xi_hat - xi_pred).abs() / xi_pred;
        let beta_match = fit.beta_class == BetaClass::expected(pred.power_exponent);

        let mut identity = Vec::new();
        let mut identity_ok = true;
        for &(a, b) in &IDENTITY_PROBES {
            let theta = (a * geo.theta1_star, b * geo.theta2_star);
            if !oracle::in_domain(&blocks, &geo, theta) {
                continue;
            }
            let chk = oracle::stationary_identity_residual(&blocks, &ts, theta.0.exp(), theta.1.exp())
                .map_err(|e| e.to_string())?;
            let ok = chk.residual <= IDENTITY_FACTOR * chk.tail_bound;
            identity_ok &= ok;
            identity.push(json!({ "theta": [theta.0, theta.1], "residual": chk.residual, "tail_bound": chk.tail_bound, "ok": ok }));
        }

        let mut homogeneity = Vec::new();
        let mut homogeneity_ok = true;
        for x in [(1usize, 0usize), (0, 1), (1, 1)] {
            let spread = oracle::homogeneity_check(&ts, c, x, window).map_err(|e| e.to_string())?;
            let ok = spread <= HOMOGENEITY_TOL;
            homogeneity_ok &= ok;
            homogeneity.push(json!({ "x": [x.0, x.1], "spread": spread, "ok": ok }));
        }

        let sim_window = 10.min(opt.n);
        let sim = oracle::simulate(&blocks, 1_000_000, opt.seed, sim_window);
        let exact: f64 = (0..=sim_window)
            .flat_map(|a| (0..=sim_window).map(move |b| (a, b)))
            .map(|(a, b)| ts.at(a, b).iter().sum::<f64>())
            .sum();

        let pass = dxi <= opt.xi_tol && beta_match && identity_ok && homogeneity_ok;
        let report = json!({
            "predicted": to_value(&pred),
            "predicted_xi_compared": xi_pred,
            "fit": to_value(&fit),
            "delta_xi_relative": dxi,
            "xi_ok": dxi <= opt.xi_tol,
            "beta_class_match": beta_match,
            "identity": identity,
            "homogeneity": homogeneity,
            "truncation": { "N": ts.n, "residual": ts.residual, "tail_mass_bound": ts.tail_mass_bound },
            "simulation": {
                "seed": sim.seed,
                "steps": sim.steps,
                "window": sim.window,
                "window_mass": sim.window_mass(),
                "window_mass_se": sim.window_mass_se,
                "solver_window_mass": exact,
                "mean_jump": [sim.mean_jump.0, sim.mean_jump.1],
            },
            "pass": pass,
        });
        Ok((report, pass))
    })();
    match result {
        Ok((v, pass)) => Outcome::new(if pass { Exit::Ok } else { Exit::Mismatch }, render(&v, fmt)),
        Err(e) => Outcome::error(Exit::InsufficientData, e),
    }
}

pub fn cmd_geometry(path: &str, grid: f64) -> Outcome {
    if !(grid > 0.0 && grid.is_finite()) {
        return Outcome::error(Exit::Parse, "grid step must be positive");
    }
    let blocks = match load(path) {
        Ok(b) => b,
        Err(o) => return o,
    };
    match geometry::curve_samples(&blocks, grid) {
        Ok(rows) => {
            let mut s = String::from("theta1,eta2_under,eta2_bar\n");
            for r in rows {
                let _ = writeln!(s, "{:.16e},{:.16e},{:.16e}", r.theta1, r.eta2_under, r.eta2_bar);
            }
            Outcome::new(Exit::Ok, s)
        }
        Err(e) => Outcome::error(Exit::Validation, e),
    }
}

/// Render a report; JSON keys come out sorted and floats with 17 significant digits.
pub fn render(v: &Value, fmt: Format) -> String {
    let mut s = String::new();
    match fmt {
        Format::Json => {
            write_json(v, 0, &mut s);
            s.push('\n');
        }
        Format::Table => write_table(v, "", &mut s),
    }
    s
}

fn write_number(n: &serde_json::Number, out: &mut String) {
    if let Some(i) = n.as_i64() {
        let _ = write!(out, "{i}");
    } else if let Some(u) = n.as_u64() {
        let _ = write!(out, "{u}");
    } else {
        let _ = write!(out, "{:.16e}", n.as_f64().unwrap_or(f64::NAN));
    }
}

fn write_json(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(n, out),
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_json(x, indent + 1, out);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_json(&m[*k], indent + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

fn write_table(v: &Value, prefix: &str, out: &mut String) {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            for k in keys {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                write_table(&m[k], &p, out);
            }
        }
        Value::Array(a) if a.iter().any(|x| x.is_object() || x.is_array()) => {
            for (i, x) in a.iter().enumerate() {
                write_table(x, &format!("{prefix}[{i}]"), out);
            }
        }
        Value::Array(a) => {
            let items: Vec<String> = a
                .iter()
                .map(|x| {
                    let mut s = String::new();
                    write_json(x, 0, &mut s);
                    s
                })
                .collect();
            let _ = writeln!(out, "{prefix:<40} [{}]", items.join(", "));
        }
        other => {
            let mut s = String::new();
            write_json(other, 0, &mut s);
            let _ = writeln!(out, "{prefix:<40} {s}");
        }
    }
}
