//! Argument parsing, input loading and output rendering for the
//! `greyalloc` binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::api::{self, ApiError};
use greyalloc::allocation::Direction;
use greyalloc::io::{self, ProjectConfig};
use greyalloc::{Error, Execution, PerturbationSpec, TimeSeries};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "greyalloc", version, about = "Saturation forecasting and weighted allocation")]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a saturation model to a series.
    Forecast(ForecastArgs),
    /// Weight criteria and score entities.
    Allocate(AllocateArgs),
    /// One-at-a-time perturbations of a forecast or an allocation.
    Sensitivity(SensitivityArgs),
    /// Multi-period allocation with inflow feedback.
    Simulate(SimulateArgs),
    /// Run the JSON HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Verhulst,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Ahp,
    Factor,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModelArg::Verhulst)]
    pub model: ModelArg,
    /// Relative step below which the curve counts as saturated.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Periods to project past the last observation.
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TableInputs {
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long)]
    pub indicators: Option<PathBuf>,
    /// `criterion=benefit|cost`; repeatable.
    #[arg(long = "direction", value_name = "CRITERION=DIR")]
    pub directions: Vec<String>,
    /// Score indicator values as given, without normalising.
    #[arg(long)]
    pub prenormalized: bool,
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub inputs: TableInputs,
    #[arg(long, value_enum, default_value_t = MethodArg::Ahp)]
    pub method: MethodArg,
    /// Comma-separated intercept and per-criterion coefficients.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub betas: Option<Vec<f64>>,
    /// `entity=share`; repeatable.
    #[arg(long = "max-share", value_name = "ENTITY=SHARE")]
    pub max_share: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Perturb a forecast of this series instead of an allocation.
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[command(flatten)]
    pub inputs: TableInputs,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Drop period K (1-based); repeatable.
    #[arg(long = "remove-point", value_name = "K")]
    pub remove_point: Vec<usize>,
    /// Overwrite period K with V; repeatable.
    #[arg(long = "set-point", value_name = "K=V")]
    pub set_point: Vec<String>,
    /// Multiply matrix entry (I, J) by F; repeatable.
    #[arg(long = "scale-matrix-entry", value_name = "I,J=F")]
    pub scale_matrix_entry: Vec<String>,
    /// Multiply one indicator cell by F; repeatable.
    #[arg(long = "scale-indicator", value_name = "ENTITY,CRITERION=F")]
    pub scale_indicator: Vec<String>,
    /// Sweep every cell (or every period) over these factors.
    #[arg(long, value_delimiter = ',', value_name = "F1,F2,...")]
    pub oat: Vec<f64>,
    /// Spread the perturbations over all cores.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Per-period inflows, overriding `simulate.inflows`.
    #[arg(long, value_delimiter = ',')]
    pub inflows: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "GREYALLOC_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    /// Directory of static UI assets served at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

/// A failed invocation: either the arguments or inputs were unusable
/// (exit 2) or a model rejected them (exit 1).
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Domain(ApiError),
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        Failure::Domain(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io { .. } | Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Domain(other.into()),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

type CliResult<T> = std::result::Result<T, Failure>;

// ---------------------------------------------------------------------------
// input assembly

fn load_config(path: Option<&Path>) -> CliResult<ProjectConfig> {
    match path {
        None => Ok(ProjectConfig::default()),
        Some(p) => {
            if !p.is_file() {
                return Err(usage(format!("config file not found: {}", p.display())));
            }
            ProjectConfig::load(p).map_err(|e| usage(e.to_string()))
        }
    }
}

/// Flag value if given, otherwise the config entry resolved against the
/// config directory.
fn pick_path(flag: Option<&PathBuf>, cfg: &ProjectConfig, entry: Option<&String>, what: &str) -> CliResult<PathBuf> {
    let path = match (flag, entry) {
        (Some(p), _) => p.clone(),
        (None, Some(rel)) => cfg.resolve(rel),
        (None, None) => return Err(usage(format!("missing --{what} (or '{what}' in the config)"))),
    };
    if !path.is_file() {
        return Err(usage(format!("{what} file not found: {}", path.display())));
    }
    Ok(path)
}

fn split_pair<'a>(raw: &'a str, what: &str) -> CliResult<(&'a str, &'a str)> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| usage(format!("{what}: expected KEY=VALUE, got '{raw}'")))
}

fn number(raw: &str, what: &str) -> CliResult<f64> {
    io::parse_number(raw).ok_or_else(|| usage(format!("{what}: '{raw}' is not a number")))
}

fn merged_directions(cfg: &ProjectConfig, flags: &[String]) -> CliResult<BTreeMap<String, Direction>> {
    let mut out = cfg.directions.clone();
    for raw in flags {
        let (c, d) = split_pair(raw, "--direction")?;
        let d: Direction = d.parse().map_err(|e: Error| usage(e.to_string()))?;
        out.insert(c.to_string(), d);
    }
    Ok(out)
}

fn load_series(path: &Path) -> CliResult<TimeSeries> {
    Ok(io::load_series(path)?)
}

fn load_matrix(path: &Path) -> CliResult<greyalloc::PairwiseMatrix> {
    let loaded = io::load_matrix(path)?;
    for r in &loaded.repairs {
        log::warn!(
            "{}: entry ({}, {}) repaired from {} to {}",
            path.display(),
            r.row,
            r.col,
            r.from,
            r.to
        );
    }
    Ok(loaded.matrix)
}

fn load_indicators(path: &Path, overrides: &BTreeMap<String, Direction>) -> CliResult<api::IndicatorsInput> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let criteria = io::indicator_criteria(&text)?;
    let directions = io::resolve_directions(&criteria, overrides)?;
    let table = io::parse_indicators(&text, &directions)?;
    Ok(api::IndicatorsInput::from_table(&table))
}

struct TableSubject {
    matrix: greyalloc::PairwiseMatrix,
    indicators: api::IndicatorsInput,
    directions: BTreeMap<String, Direction>,
    prenormalized: bool,
}

fn table_subject(inputs: &TableInputs, cfg: &ProjectConfig) -> CliResult<TableSubject> {
    let matrix_path = pick_path(inputs.matrix.as_ref(), cfg, cfg.matrix.as_ref(), "matrix")?;
    let indicators_path = pick_path(inputs.indicators.as_ref(), cfg, cfg.indicators.as_ref(), "indicators")?;
    let directions = merged_directions(cfg, &inputs.directions)?;
    let indicators = load_indicators(&indicators_path, &directions)?;
    Ok(TableSubject {
        matrix: load_matrix(&matrix_path)?,
        indicators,
        directions,
        prenormalized: inputs.prenormalized || cfg.prenormalized,
    })
}

pub fn forecast_request(args: &ForecastArgs) -> CliResult<api::ForecastRequest> {
    let cfg = load_config(args.config.as_deref())?;
    let path = pick_path(args.series.as_ref(), &cfg, cfg.series.as_ref(), "series")?;
    Ok(api::ForecastRequest {
        series: load_series(&path)?,
        model: match args.model {
            ModelArg::Verhulst => api::Model::Verhulst,
            ModelArg::Logistic => api::Model::Logistic,
        },
        eps: args.eps.or(cfg.forecast_eps),
        horizon: args.horizon.or(cfg.forecast_horizon),
    })
}

pub fn allocate_request(args: &AllocateArgs) -> CliResult<api::AllocateRequest> {
    if args.method == MethodArg::Factor && args.betas.is_none() {
        return Err(usage("--method factor requires --betas"));
    }
    let cfg = load_config(args.config.as_deref())?;
    let mut max_share = cfg.max_share.clone();
    for raw in &args.max_share {
        let (e, v) = split_pair(raw, "--max-share")?;
        max_share.insert(e.to_string(), number(v, "--max-share")?);
    }
    let (matrix, indicators, directions, prenormalized) = match args.method {
        MethodArg::Ahp => {
            let s = table_subject(&args.inputs, &cfg)?;
            (Some(s.matrix), s.indicators, s.directions, s.prenormalized)
        }
        MethodArg::Factor => {
            let path = pick_path(args.inputs.indicators.as_ref(), &cfg, cfg.indicators.as_ref(), "indicators")?;
            let directions = merged_directions(&cfg, &args.inputs.directions)?;
            let indicators = load_indicators(&path, &directions)?;
            (None, indicators, directions, args.inputs.prenormalized || cfg.prenormalized)
        }
    };
    Ok(api::AllocateRequest {
        matrix,
        indicators,
        directions,
        method: match args.method {
            MethodArg::Ahp => api::Method::Ahp,
            MethodArg::Factor => api::Method::Factor,
        },
        betas: args.betas.clone(),
        prenormalized,
        max_share,
        tol: cfg.ahp_tol,
        max_iter: cfg.ahp_max_iter,
    })
}

fn parse_specs(args: &SensitivityArgs) -> CliResult<Vec<PerturbationSpec>> {
    let mut specs: Vec<PerturbationSpec> = args
        .remove_point
        .iter()
        .map(|&k| PerturbationSpec::RemovePoint { k })
        .collect();
    for raw in &args.set_point {
        let (k, v) = split_pair(raw, "--set-point")?;
        specs.push(PerturbationSpec::SetPoint {
            k: k.parse().map_err(|_| usage(format!("--set-point: '{k}' is not a period")))?,
            value: number(v, "--set-point")?,
        });
    }
    for raw in &args.scale_matrix_entry {
        let (pos, f) = split_pair(raw, "--scale-matrix-entry")?;
        let (i, j) = pos
            .split_once(',')
            .and_then(|(i, j)| Some((i.trim().parse().ok()?, j.trim().parse().ok()?)))
            .ok_or_else(|| usage(format!("--scale-matrix-entry: expected I,J=F, got '{raw}'")))?;
        specs.push(PerturbationSpec::ScaleMatrixEntry {
            row: i,
            col: j,
            factor: number(f, "--scale-matrix-entry")?,
        });
    }
    for raw in &args.scale_indicator {
        let (pos, f) = split_pair(raw, "--scale-indicator")?;
        let (e, c) = pos
            .split_once(',')
            .ok_or_else(|| usage(format!("--scale-indicator: expected ENTITY,CRITERION=F, got '{raw}'")))?;
        specs.push(PerturbationSpec::ScaleIndicator {
            entity: e.trim().to_string(),
            criterion: c.trim().to_string(),
            factor: number(f, "--scale-indicator")?,
        });
    }
    Ok(specs)
}

pub fn sensitivity_request(args: &SensitivityArgs) -> CliResult<api::SensitivityRequest> {
    let cfg = load_config(args.config.as_deref())?;
    let mut specs = parse_specs(args)?;
    let use_series = args.series.is_some()
        || (args.inputs.matrix.is_none() && args.inputs.indicators.is_none() && cfg.series.is_some() && cfg.matrix.is_none());
    let subject = if use_series {
        let path = pick_path(args.series.as_ref(), &cfg, cfg.series.as_ref(), "series")?;
        let series = load_series(&path)?;
        if !args.oat.is_empty() {
            for k in 1..=series.len() {
                specs.push(PerturbationSpec::RemovePoint { k });
                for &f in &args.oat {
                    specs.push(PerturbationSpec::SetPoint {
                        k,
                        value: series.values[k - 1] * f,
                    });
                }
            }
        }
        api::SubjectInput::Forecast {
            series,
            eps: args.eps.or(cfg.forecast_eps),
        }
    } else {
        let s = table_subject(&args.inputs, &cfg)?;
        if !args.oat.is_empty() {
            let table = s.indicators.to_table(&s.directions)?;
            specs.extend(greyalloc::sensitivity::indicator_grid(&table, &args.oat));
            specs.extend(greyalloc::sensitivity::matrix_grid(&s.matrix, &args.oat));
        }
        api::SubjectInput::Allocation {
            matrix: s.matrix,
            indicators: s.indicators,
            directions: s.directions,
            prenormalized: s.prenormalized,
        }
    };
    if specs.is_empty() {
        return Err(usage(
            "no perturbation given (use --remove-point, --set-point, --scale-matrix-entry, --scale-indicator or --oat)",
        ));
    }
    Ok(api::SensitivityRequest { subject, specs })
}

pub fn simulate_request(args: &SimulateArgs) -> CliResult<api::SimulateRequest> {
    let cfg = load_config(Some(&args.config))?;
    let s = table_subject(
        &TableInputs {
            matrix: None,
            indicators: None,
            directions: Vec::new(),
            prenormalized: false,
        },
        &cfg,
    )?;
    let inflows = args.inflows.clone().unwrap_or_else(|| cfg.inflows.clone());
    if inflows.is_empty() {
        return Err(usage("no inflows (set simulate.inflows in the config or pass --inflows)"));
    }
    Ok(api::SimulateRequest {
        matrix: s.matrix,
        indicators: s.indicators,
        directions: s.directions,
        gamma: cfg.gamma.clone(),
        inflows,
        max_share: cfg.max_share.clone(),
    })
}

// ---------------------------------------------------------------------------
// rendering

/// Left-aligned first column, right-aligned numbers.
fn grid(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{cell:<w$}");
            } else {
                let _ = write!(s, "  {cell:>w$}");
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let mut out = line(headers.to_vec());
    out += &line(rule.iter().map(String::as_str).collect());
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

fn weights_table(w: &api::AhpResponse) -> String {
    let rows: Vec<Vec<String>> = w
        .weights
        .labels
        .iter()
        .zip(&w.weights.weights)
        .map(|(l, v)| vec![l.clone(), f(*v)])
        .collect();
    let mut out = grid(&["criterion", "weight"], &rows);
    let _ = writeln!(
        out,
        "lambda_max {:.6}  ci {:.6}  ri {:.2}  cr {:.6}  {}",
        w.weights.lambda_max,
        w.weights.ci,
        w.weights.ri,
        w.weights.cr,
        if w.weights.consistent { "consistent" } else { "INCONSISTENT" }
    );
    out
}

fn ranking_table(ranking: &[greyalloc::allocation::RankedEntity]) -> String {
    let rows: Vec<Vec<String>> = ranking
        .iter()
        .map(|r| vec![r.entity.clone(), r.rank.to_string(), format!("{:.9}", r.score), format!("{:.9}", r.proportion)])
        .collect();
    grid(&["entity", "rank", "index", "ratio"], &rows)
}

fn warnings(out: &mut String, ws: &[String]) {
    for w in ws {
        let _ = writeln!(out, "warning: {w}");
    }
}

pub fn render_forecast(r: &api::ForecastResponse) -> String {
    let mut out = String::new();
    match &r.params {
        api::Params::Verhulst(m) => {
            let _ = writeln!(out, "grey verhulst  a = {}  b = {}  x0 = {}", m.a, m.b, m.x0);
        }
        api::Params::Logistic(p) => {
            let _ = writeln!(out, "logistic  capacity = {}  b = {}  k = {}", p.l, p.b, p.k);
        }
    }
    out.push('\n');
    let rows: Vec<Vec<String>> = r
        .points
        .iter()
        .map(|p| vec![p.period.clone(), format!("{:.3}", p.observed), format!("{:.3}", p.fitted)])
        .collect();
    out += &grid(&["period", "observed", "fitted"], &rows);
    if !r.projection.is_empty() {
        out.push('\n');
        let rows: Vec<Vec<String>> = r
            .projection
            .iter()
            .map(|p| vec![p.period.clone(), format!("{:.3}", p.value)])
            .collect();
        out += &grid(&["period", "projected"], &rows);
    }
    out.push('\n');
    if let Some(a) = &r.accuracy {
        let _ = writeln!(out, "Q = {:.6}  C = {:.6}  p = {:.6}  grade {}", a.q, a.c, a.p, a.grade);
    }
    if let Some(q) = &r.fit_quality {
        let _ = writeln!(out, "r2 = {:.6}  rss = {:.6}  iterations {}", q.r2, q.rss, q.iterations);
    }
    if let Some(s) = &r.saturation {
        let _ = writeln!(out, "saturates near {:.3} at period index {}", s.value, s.time);
    }
    warnings(&mut out, &r.warnings);
    out
}

pub fn render_allocate(r: &api::AllocateResponse) -> String {
    let mut out = String::new();
    if let Some(w) = &r.weights {
        out += &weights_table(w);
        out.push('\n');
    }
    out += &ranking_table(&r.ranking);
    warnings(&mut out, &r.warnings);
    out
}

pub fn render_sensitivity(r: &api::SensitivityResponse) -> String {
    let mut out = String::new();
    for report in &r.reports {
        let _ = writeln!(out, "== {}", report.spec);
        let rows: Vec<Vec<String>> = report
            .deltas
            .iter()
            .map(|(k, d)| {
                vec![
                    k.clone(),
                    f(report.baseline[k]),
                    f(report.perturbed[k]),
                    format!("{:+.6}", d),
                ]
            })
            .collect();
        out += &grid(&["output", "baseline", "perturbed", "delta"], &rows);
        let moved: Vec<String> = report
            .rank_shifts
            .iter()
            .filter(|s| s.old_rank != s.new_rank)
            .map(|s| {
                let arrow = if s.new_rank < s.old_rank { "up" } else { "down" };
                format!("{} {} -> {} ({arrow})", s.entity, s.old_rank, s.new_rank)
            })
            .collect();
        if !moved.is_empty() {
            let _ = writeln!(out, "rank shifts: {}", moved.join(", "));
        }
        if let (Some(b), Some(p)) = (report.baseline_consistent, report.perturbed_consistent) {
            if b != p {
                let _ = writeln!(out, "consistency changed: {b} -> {p}");
            }
        }
        warnings(&mut out, &report.notes);
        out.push('\n');
    }
    for fail in &r.failures {
        let _ = writeln!(out, "failed: {}: {} ({})", fail.spec, fail.message, fail.code);
    }
    out
}

pub fn render_simulate(r: &api::SimulateResponse) -> String {
    let mut out = weights_table(&r.weights);
    out.push('\n');
    let periods: Vec<String> = r.periods.iter().map(|p| format!("t{}", p.period)).collect();
    let mut headers = vec!["entity"];
    headers.extend(periods.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = r
        .trajectory
        .iter()
        .map(|(e, shares)| {
            let mut row = vec![e.clone()];
            row.extend(shares.iter().map(|s| format!("{s:.6}")));
            row
        })
        .collect();
    out += &grid(&headers, &rows);
    warnings(&mut out, &r.warnings);
    out
}

// ---------------------------------------------------------------------------
// dispatch

pub fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("payloads serialize")
}

fn emit<T: Serialize>(format: Format, v: &T, table: fn(&T) -> String) -> String {
    match format {
        Format::Json => to_json(v) + "\n",
        Format::Table => table(v),
    }
}

/// Run a non-serve subcommand, returning stdout text or a failure.
pub fn execute(format: Format, command: &Command) -> CliResult<String> {
    match command {
        Command::Forecast(a) => {
            let r = api::forecast(&forecast_request(a)?)?;
            Ok(emit(format, &r, render_forecast))
        }
        Command::Allocate(a) => {
            let r = api::allocate(&allocate_request(a)?)?;
            Ok(emit(format, &r, render_allocate))
        }
        Command::Sensitivity(a) => {
            let exec = if a.parallel {
                Execution::Parallel
            } else {
                Execution::Sequential
            };
            let r = api::sensitivity(&sensitivity_request(a)?, exec)?;
            Ok(emit(format, &r, render_sensitivity))
        }
        Command::Simulate(a) => {
            let r = api::simulate(&simulate_request(a)?)?;
            Ok(emit(format, &r, render_simulate))
        }
        Command::Serve(_) => Err(usage("serve is not a batch command")),
    }
}

/// Parse, run, print; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Command::Serve(a) = &cli.command {
        let addr = SocketAddr::new(a.host, a.port);
        let rt = match tokio::runtime::Runtime::new() {
            Ok(rt) => rt,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_DOMAIN;
            }
        };
        return match rt.block_on(crate::server::serve(addr, a.static_dir.clone())) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: cannot serve on {addr}: {e}");
                EXIT_USAGE
            }
        };
    }
    match execute(cli.format, &cli.command) {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Domain(e)) => {
            if cli.format == Format::Json {
                println!("{}", to_json(&e.body()));
            }
            eprintln!("error: {e}");
            EXIT_DOMAIN
        }
    }
}
