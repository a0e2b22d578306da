//! `sja`: command-line front end for price solving, certification,
//! revenue evaluation, deficiency scans and single-item duality.
//!
//! Exit codes: 0 success, 1 usage error, 2 verification failure,
//! 3 internal error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sja_core::distributions::{myerson_dual, nonregular_demo, Density1D};
use sja_core::dual_cert::{build_certificate, CertGrid, CertifyOptions, DEFAULT_REVENUE_SAMPLES};
use sja_core::geometry::{deficiency_search, SearchMode, SimBody, VoxelBody, Voxelization};
use sja_core::mechanism::{
    expected_revenue, optimal_grand_bundle_price, Mechanism, Method as RevenueMethod,
};
use sja_core::pricing::{normalize, solve_prices, verify_slice_conditions, DEFAULT_TOL};
use sja_core::SjaError;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

/// Largest margin by which a non-regular demo value counts as separated.
const NONREGULAR_MARGIN: f64 = 1e-6;
/// Tolerance on the ironed-interval integral of the non-regular demo.
const IRONED_TOL: f64 = 1e-8;

#[derive(Parser, Debug)]
#[command(name = "sja", version, about = "Straight-Jacket Auction prices and certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve and verify the bundle prices for m items.
    Prices(PricesArgs),
    /// Build and check a discretized dual certificate on an N-grid.
    Certify(CertifyArgs),
    /// Expected revenue of the priced mechanism.
    Revenue(RevenueArgs),
    /// Maximize the deficiency over sub-bodies of the voxelized SIM-body.
    DeficiencyScan(ScanArgs),
    /// Single-item dual of a regular distribution.
    Myerson(MyersonArgs),
    /// The non-regular single-item example and its dual curves.
    Nonregular(Common),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Exact,
    Mc,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exhaustive,
    Local,
}

#[derive(Args, Debug)]
struct Common {
    /// Seed of every random stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the primary output to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PricesArgs {
    /// Number of items.
    #[arg(long)]
    items: usize,
    /// Bisection tolerance.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Monte-Carlo samples per slice condition.
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[arg(long)]
    items: usize,
    /// Cells per axis, a multiple of items + 1.
    #[arg(long)]
    grid: usize,
    /// Monte-Carlo samples for the primal revenue beyond exact integration.
    #[arg(long, default_value_t = DEFAULT_REVENUE_SAMPLES)]
    samples: u64,
    /// Allow certification of more than three items.
    #[arg(long)]
    force_large: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct RevenueArgs {
    #[arg(long)]
    items: usize,
    #[arg(long, value_enum, default_value_t = Method::Exact)]
    method: Method,
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[arg(long)]
    items: usize,
    /// Cells per axis of the voxelization.
    #[arg(long)]
    grid: usize,
    /// Deficiency parameter.
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[arg(long, value_enum, default_value_t = Mode::Exhaustive)]
    mode: Mode,
    /// File receiving the run-length encoded witness body.
    #[arg(long)]
    witness: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct MyersonArgs {
    /// Distribution name, or `uniform:LO:HI`.
    #[arg(long, default_value = "uniform[0,1]")]
    dist: String,
    #[command(flatten)]
    common: Common,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<SjaError> for Failure {
    fn from(e: SjaError) -> Self {
        let code = match e {
            SjaError::GridMisaligned { .. }
            | SjaError::InvalidParameter(_)
            | SjaError::ExactUnsupported { .. }
            | SjaError::SearchSpaceTooLarge(_)
            | SjaError::DimensionMismatch { .. }
            | SjaError::DomainViolation(_)
            | SjaError::RecursionDepthUnsupported { .. }
            | SjaError::UnsupportedOrder { .. } => EXIT_USAGE,
            SjaError::HallViolation { .. }
            | SjaError::CertificateViolation { .. }
            | SjaError::ToleranceNotMet { .. }
            | SjaError::NonRegular => EXIT_VERIFY,
            _ => EXIT_INTERNAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: EXIT_INTERNAL,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

/// Result of a command: its report and whether verification passed.
struct Report {
    value: Value,
    pass: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VERIFY),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(s) = std::env::var("SJA_THREADS") {
        let n: usize = s
            .parse()
            .map_err(|_| usage(format!("SJA_THREADS must be a positive integer, got {s:?}")))?;
        if n == 0 {
            return Err(usage("SJA_THREADS must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure {
                code: EXIT_INTERNAL,
                message: e.to_string(),
            })?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, Failure> {
    configure_threads()?;
    match cli.command {
        Command::Prices(a) => prices(a),
        Command::Certify(a) => certify(a),
        Command::Revenue(a) => revenue(a),
        Command::DeficiencyScan(a) => scan(a),
        Command::Myerson(a) => myerson(a),
        Command::Nonregular(c) => nonregular(c),
    }
}

fn check_items(items: usize) -> Result<(), Failure> {
    if items == 0 || items > sja_core::mechanism::MAX_ITEMS {
        return Err(usage(format!(
            "--items must lie in 1..={}",
            sja_core::mechanism::MAX_ITEMS
        )));
    }
    Ok(())
}

fn reject_csv(format: Format, command: &str) -> Result<(), Failure> {
    if format == Format::Csv {
        return Err(usage(format!("{command} supports --format json or text")));
    }
    Ok(())
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(common: &Common, report: Report) -> Result<bool, Failure> {
    let mut w = open_out(&common.out)?;
    match common.format {
        Format::Json => {
            let s = serde_json::to_string_pretty(&report.value).map_err(|e| Failure {
                code: EXIT_INTERNAL,
                message: e.to_string(),
            })?;
            writeln!(w, "{s}")?;
        }
        Format::Text | Format::Csv => {
            let mut lines = Vec::new();
            flatten("", &report.value, &mut lines);
            for (k, v) in lines {
                writeln!(w, "{k} = {v}")?;
            }
        }
    }
    w.flush()?;
    Ok(report.pass)
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                flatten(&key(k), x, out);
            }
        }
        Value::Array(items) if items.iter().any(|x| x.is_object()) => {
            for (i, x) in items.iter().enumerate() {
                flatten(&key(&i.to_string()), x, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn to_value<T: serde::Serialize>(x: &T) -> Result<Value, Failure> {
    serde_json::to_value(x).map_err(|e| Failure {
        code: EXIT_INTERNAL,
        message: e.to_string(),
    })
}

fn prices(a: PricesArgs) -> Result<bool, Failure> {
    check_items(a.items)?;
    reject_csv(a.common.format, "prices")?;
    if !(a.tol > 0.0) {
        return Err(usage("--tol must be positive"));
    }
    if a.samples == 0 {
        return Err(usage("--samples must be positive"));
    }
    let solved = solve_prices(a.items, a.tol)?;
    let profile = normalize(&solved);
    let check = verify_slice_conditions(&solved, a.samples, a.common.seed)?;
    let value = json!({
        "m": profile.m,
        "p": profile.p,
        "mu": profile.mu,
        "lambda": profile.lambda,
        "solved_p": profile.solved_p,
        "solved_mu": profile.solved_mu(),
        "conjectural": profile.conjectural,
        "notes": profile.notes(),
        "slice_check": to_value(&check)?,
    });
    emit(
        &a.common,
        Report {
            value,
            pass: check.pass,
        },
    )
}

fn certify(a: CertifyArgs) -> Result<bool, Failure> {
    check_items(a.items)?;
    let grid = CertGrid::new(a.items, a.grid)?;
    if a.common.format == Format::Text {
        return Err(usage("certify supports --format json or csv"));
    }
    if a.samples == 0 {
        return Err(usage("--samples must be positive"));
    }
    if a.items > sja_core::dual_cert::CERTIFY_ITEMS_LIMIT && !a.force_large {
        return Err(usage(format!(
            "certification of {} items needs --force-large",
            a.items
        )));
    }
    let mech = Mechanism::sja(a.items)?;
    let opts = CertifyOptions {
        force_large: a.force_large,
        revenue_samples: a.samples,
        seed: a.common.seed,
    };
    let cert = build_certificate(&mech, &grid, opts)?;
    let mut w = open_out(&a.common.out)?;
    match a.common.format {
        Format::Csv => cert.coloring.write_csv(&mut w)?,
        _ => writeln!(w, "{}", cert.to_json()?)?,
    }
    w.flush()?;
    if let Err(e) = cert.verify() {
        eprintln!("verification failed: {e}");
    }
    Ok(cert.pass)
}

fn revenue(a: RevenueArgs) -> Result<bool, Failure> {
    check_items(a.items)?;
    reject_csv(a.common.format, "revenue")?;
    if a.samples == 0 {
        return Err(usage("--samples must be positive"));
    }
    if a.method == Method::Exact && a.items > sja_core::mechanism::EXACT_ITEMS_LIMIT {
        return Err(SjaError::ExactUnsupported {
            m: a.items,
            limit: sja_core::mechanism::EXACT_ITEMS_LIMIT,
        }
        .into());
    }
    let method = match a.method {
        Method::Exact => RevenueMethod::Exact,
        Method::Mc => RevenueMethod::MonteCarlo {
            samples: a.samples,
            seed: a.common.seed,
        },
    };
    let mech = Mechanism::sja(a.items)?;
    let est = expected_revenue(&mech, method)?;
    let (bundle_price, bundle_revenue) = optimal_grand_bundle_price(a.items);
    let value = json!({
        "m": a.items,
        "method": match a.method { Method::Exact => "exact", Method::Mc => "mc" },
        "prices": mech.prices(),
        "revenue": est.value,
        "stderr": est.stderr,
        "grand_bundle": { "price": bundle_price, "revenue": bundle_revenue },
        "separate_sale_revenue": a.items as f64 / 4.0,
    });
    emit(&a.common, Report { value, pass: true })
}

fn scan(a: ScanArgs) -> Result<bool, Failure> {
    check_items(a.items)?;
    reject_csv(a.common.format, "deficiency-scan")?;
    if a.grid == 0 {
        return Err(usage("--grid must be positive"));
    }
    if !(a.k > 0.0) {
        return Err(usage("--k must be positive"));
    }
    let mode = match a.mode {
        Mode::Exhaustive => SearchMode::Exhaustive,
        Mode::Local => SearchMode::Local,
    };
    if mode == SearchMode::Exhaustive {
        let limit = sja_core::geometry::EXHAUSTIVE_GRID_LIMIT
            .get(a.items)
            .copied()
            .unwrap_or(0);
        if a.grid > limit {
            return Err(usage(format!(
                "exhaustive scan supports --grid <= {limit} for {} items",
                a.items
            )));
        }
    }
    let lambda = solve_prices(a.items, DEFAULT_TOL)?.lambda;
    let body = SimBody::new(lambda.clone())?;
    let container = VoxelBody::from_sim(&body, a.grid, Voxelization::Inner)?;
    let res = deficiency_search(&container, a.k, mode)?;
    if let Some(path) = &a.witness {
        write_witness(path, res.witness.as_ref())?;
    }
    let pass = res.best <= res.slack_bound;
    let value = json!({
        "m": a.items,
        "lambda": lambda,
        "grid": a.grid,
        "k": res.k,
        "mode": match mode { SearchMode::Exhaustive => "exhaustive", SearchMode::Local => "local" },
        "family": res.family,
        "evaluated": res.evaluated,
        "best": if res.best.is_finite() { json!(res.best) } else { Value::Null },
        "slack_bound": res.slack_bound,
        "witness_cells": res.witness.as_ref().map(|w| w.count()),
        "pass": pass,
    });
    emit(&a.common, Report { value, pass })
}

fn write_witness(path: &Path, witness: Option<&VoxelBody>) -> Result<(), Failure> {
    let mut f = BufWriter::new(File::create(path)?);
    if let Some(w) = witness {
        f.write_all(w.to_rle().as_bytes())?;
    }
    f.flush()?;
    Ok(())
}

fn parse_dist(name: &str) -> Result<Density1D, Failure> {
    if let Some(rest) = name.strip_prefix("uniform:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let bounds: Option<Vec<f64>> = parts.iter().map(|s| s.parse().ok()).collect();
        return match bounds.as_deref() {
            Some([lo, hi]) => Ok(Density1D::uniform_on(*lo, *hi)?),
            _ => Err(usage(format!("cannot parse distribution {name:?}"))),
        };
    }
    let registry = Density1D::registry();
    let names: Vec<String> = registry.iter().map(|d| d.name().to_string()).collect();
    registry
        .into_iter()
        .find(|d| d.name() == name)
        .ok_or_else(|| {
            usage(format!(
                "unknown distribution {name:?}; known: {}, uniform:LO:HI",
                names.join(", ")
            ))
        })
}

fn myerson(a: MyersonArgs) -> Result<bool, Failure> {
    reject_csv(a.common.format, "myerson")?;
    let dist = parse_dist(&a.dist)?;
    let dual = myerson_dual(&dist)?;
    let mut value = to_value(&dual)?;
    value["distribution"] = json!(dist.name());
    emit(&a.common, Report { value, pass: true })
}

fn nonregular(c: Common) -> Result<bool, Failure> {
    let report = nonregular_demo()?;
    let pass = report.margin() > NONREGULAR_MARGIN
        && report.ironed_integral.abs() < IRONED_TOL
        && !report.regularity.monotone;
    if c.format == Format::Csv {
        let mut w = open_out(&c.out)?;
        report.write_csv(&mut w)?;
        w.flush()?;
        return Ok(pass);
    }
    let mut value = to_value(&report)?;
    value["margin"] = json!(report.margin());
    emit(&c, Report { value, pass })
}
