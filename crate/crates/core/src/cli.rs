//! The `coreflow` command line: argument definitions, the six subcommands and
//! the run report they emit.
//!
//! A report is line-oriented text: `[section]` headers followed by
//! `key = value` lines, and `[table name]` headers followed by CSV rows. The
//! same tables are written as standalone CSV files next to the report when
//! `--out` is given. Reports carry no timestamps or host details, so a
//! rerun with the same flags, seed and input reproduces them byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::bootstrap::{self, accuracy_grid, envelopes, parametric_bootstrap, BootstrapError};
use crate::estimation::{
    self, fit_gev_pwm, fit_gpd, fit_normal, select_threshold, EstimationError, GpdFit, Method,
    ThresholdReport,
};
use crate::gof::{self, ad_pvalue_bootstrap, supnorm_gap, GofError};
use crate::ingest::{
    self, block_maxima, ecdf, excesses_over, ArrivalSeries, ExcessSample, Format, IngestError,
};
use crate::risk::{
    exceedance_prob, over_capacity_prob, triage_flag, Provenance, RiskError, TailModel,
};
use crate::rng::RNG_NAME;

pub const DEFAULT_SEED: u64 = 12345;
pub const DEFAULT_BLOCK_LEN: usize = 3;
pub const DEFAULT_GRID_POINTS: usize = 200;
/// Default accuracy-table levels, as quantiles of the original fit above the threshold.
const DEFAULT_LEVEL_QUANTILES: [f64; 7] = [0.0, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99];

#[derive(Debug, Parser)]
#[command(
    name = "coreflow",
    version,
    about = "Peaks-over-threshold analysis of arrival streams"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a GPD to the excesses over a threshold.
    Fit(FitArgs),
    /// Compare GPD, block-maxima GEV and Normal fits against the ECDF.
    Compare(CompareArgs),
    /// Anderson-Darling statistic and bootstrap p-value of the GPD fit.
    Gof(GofArgs),
    /// Parametric bootstrap envelopes and the accuracy table.
    Bootstrap(BootstrapArgs),
    /// Exceedance and over-capacity probabilities.
    Predict(PredictArgs),
    /// Shape-stability threshold selection table.
    SelectThreshold(SelectThresholdArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Arrival data file.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// `plain` (whitespace-separated numbers) or `csv` (`date,count`).
    #[arg(long, default_value = "plain")]
    pub format: Format,
    /// Report destination; tables go to `<stem>.<table>.csv` beside it.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Free-text provenance label copied into the report.
    #[arg(long)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Candidate threshold quantiles, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = estimation::DEFAULT_QUANTILE_GRID.to_vec())]
    pub grid: Vec<f64>,
    /// Minimum exceedances a candidate must leave.
    #[arg(long, default_value_t = estimation::DEFAULT_N_MIN)]
    pub n_min: usize,
    /// Largest shape change tolerated above the selected threshold.
    #[arg(long, default_value_t = estimation::DEFAULT_STABILITY_TOL)]
    pub stability_tol: f64,
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("threshold_choice").required(true).args(["threshold", "auto_threshold"])))]
pub struct ModelArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Fixed threshold u.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Select u by shape stability over the quantile grid.
    #[arg(long)]
    pub auto_threshold: bool,
    #[command(flatten)]
    pub selection: GridArgs,
    /// GPD estimator.
    #[arg(long, default_value = "pwm")]
    pub method: Method,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Block length for the GEV block-maxima arm.
    #[arg(long, default_value_t = DEFAULT_BLOCK_LEN)]
    pub block_len: usize,
    /// Points in the curve table.
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub grid_points: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GofArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = gof::DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = bootstrap::DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Arrival levels for the accuracy table, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Shop capacity per observation unit.
    #[arg(long)]
    pub capacity: Option<f64>,
    /// Arrival level to query; repeatable.
    #[arg(long = "level")]
    pub levels: Vec<f64>,
    /// Observed arrival to triage against the capacity; repeatable.
    #[arg(long = "arrival", requires = "capacity")]
    pub arrivals: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SelectThresholdArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub selection: GridArgs,
}

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Success,
    Internal,
    Usage,
    Statistical,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            ExitKind::Success => 0,
            ExitKind::Internal => 1,
            ExitKind::Usage => 2,
            ExitKind::Statistical => 3,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage}: {message}")]
pub struct CliError {
    pub stage: &'static str,
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    fn new(stage: &'static str, kind: ExitKind, message: impl Into<String>) -> Self {
        Self {
            stage,
            kind,
            message: message.into(),
        }
    }

    fn usage(stage: &'static str, message: impl Into<String>) -> Self {
        Self::new(stage, ExitKind::Usage, message)
    }
}

fn ingest_err(stage: &'static str) -> impl Fn(IngestError) -> CliError {
    move |e| CliError::usage(stage, e.to_string())
}

fn estimation_err(stage: &'static str) -> impl Fn(EstimationError) -> CliError {
    move |e| {
        let kind = match &e {
            EstimationError::InvalidArgument(_) | EstimationError::Ingest(_) => ExitKind::Usage,
            _ => ExitKind::Statistical,
        };
        CliError::new(stage, kind, e.to_string())
    }
}

fn gof_err(e: GofError) -> CliError {
    let kind = match e {
        GofError::InvalidArgument(_) => ExitKind::Usage,
        GofError::UnstableNull { .. } => ExitKind::Statistical,
    };
    CliError::new("gof", kind, e.to_string())
}

fn bootstrap_err(e: BootstrapError) -> CliError {
    let kind = match e {
        BootstrapError::InvalidArgument(_) => ExitKind::Usage,
        BootstrapError::Unstable { .. } => ExitKind::Statistical,
    };
    CliError::new("bootstrap", kind, e.to_string())
}

fn risk_err(e: RiskError) -> CliError {
    match e {
        RiskError::Estimation(inner) => estimation_err("predict")(inner),
        other => CliError::usage("predict", other.to_string()),
    }
}

/// Formats with at least 10 significant digits; scientific outside `[1e-4, 1e9)`.
pub fn fmt_num(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    let a = x.abs();
    if x == 0.0 || (1e-4..1e9).contains(&a) {
        let magnitude = if x == 0.0 {
            0
        } else {
            a.log10().floor() as i32
        };
        let decimals = (9 - magnitude).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.9e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_else(|| "NA".into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Everything one invocation produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub sections: Vec<(String, Vec<(String, String)>)>,
    pub tables: Vec<Table>,
    pub exit: ExitKind,
}

impl RunReport {
    fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            sections: Vec::new(),
            tables: Vec::new(),
            exit: ExitKind::Success,
        }
    }

    fn section(&mut self, name: &str) -> &mut Vec<(String, String)> {
        self.sections.push((name.into(), Vec::new()));
        &mut self.sections.last_mut().expect("just pushed").1
    }

    /// Looks up `key` in section `name`.
    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .iter()
            .filter(|(name, _)| name == section)
            .flat_map(|(_, entries)| entries)
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# coreflow run report");
        let _ = writeln!(s, "tool = coreflow {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "command = {}", self.command);
        for (name, entries) in &self.sections {
            let _ = writeln!(s, "\n[{name}]");
            for (k, v) in entries {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        for table in &self.tables {
            let _ = write!(s, "\n[table {}]\n{}", table.name, table.to_csv());
        }
        s
    }
}

fn kv(entries: &mut Vec<(String, String)>, key: &str, value: impl ToString) {
    entries.push((key.into(), value.to_string()));
}

struct LoadedInput {
    series: ArrivalSeries,
    digest: String,
}

fn load_input(args: &InputArgs) -> Result<LoadedInput, CliError> {
    let bytes = fs::read(&args.input).map_err(|source| {
        CliError::usage(
            "ingest",
            IngestError::Io {
                path: args.input.display().to_string(),
                source,
            }
            .to_string(),
        )
    })?;
    let digest: String = Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let text = std::str::from_utf8(&bytes).map_err(|e| {
        CliError::usage(
            "ingest",
            format!("{} is not UTF-8: {e}", args.input.display()),
        )
    })?;
    let series = ingest::parse_series(text, args.format).map_err(ingest_err("ingest"))?;
    Ok(LoadedInput {
        series,
        digest: format!("sha256:{digest}"),
    })
}

fn input_section(report: &mut RunReport, args: &InputArgs, loaded: &LoadedInput) {
    let s = report.section("input");
    kv(s, "path", args.input.display());
    kv(s, "format", args.format);
    kv(s, "digest", &loaded.digest);
    kv(s, "observations", loaded.series.len());
    kv(
        s,
        "dated",
        if loaded.series.labels().is_some() {
            "yes"
        } else {
            "no"
        },
    );
    if let Some(note) = &args.note {
        kv(report.section("provenance"), "note", note);
    }
}

fn grid_params(entries: &mut Vec<(String, String)>, g: &GridArgs) {
    let grid: Vec<String> = g.grid.iter().map(|p| fmt_num(*p)).collect();
    kv(entries, "quantile_grid", grid.join(";"));
    kv(entries, "n_min", g.n_min);
    kv(entries, "stability_tol", fmt_num(g.stability_tol));
}

fn model_params(report: &mut RunReport, m: &ModelArgs) -> usize {
    let s = report.section("parameters");
    match m.threshold {
        Some(u) => kv(s, "threshold", fmt_num(u)),
        None => {
            kv(s, "threshold", "auto");
            grid_params(s, &m.selection);
        }
    }
    kv(s, "method", m.method);
    report.sections.len() - 1
}

fn param_entry(report: &mut RunReport, idx: usize, key: &str, value: impl ToString) {
    kv(&mut report.sections[idx].1, key, value);
}

/// Series, excesses and fit shared by every model-based subcommand.
struct Fitted {
    loaded: LoadedInput,
    sample: ExcessSample,
    fit: GpdFit,
}

fn resolve_threshold(m: &ModelArgs, series: &ArrivalSeries) -> Result<f64, CliError> {
    if let Some(u) = m.threshold {
        return Ok(u);
    }
    let g = &m.selection;
    let report = select_threshold(series, &g.grid, g.n_min, g.stability_tol)
        .map_err(estimation_err("threshold"))?;
    Ok(report.selected().expect("selection succeeded").threshold)
}

fn fit_model(m: &ModelArgs) -> Result<Fitted, CliError> {
    let loaded = load_input(&m.input)?;
    let u = resolve_threshold(m, &loaded.series)?;
    let sample = excesses_over(&loaded.series, u).map_err(ingest_err("excesses"))?;
    let fit = fit_gpd(&sample, m.method).map_err(estimation_err("fit"))?;
    Ok(Fitted {
        loaded,
        sample,
        fit,
    })
}

fn fit_section(report: &mut RunReport, fit: &GpdFit, source: &str) {
    let s = report.section("fit");
    kv(s, "threshold", fmt_num(fit.threshold));
    kv(s, "threshold_source", source);
    kv(s, "method", fit.method);
    kv(s, "shape", fmt_num(fit.params.shape()));
    kv(s, "scale", fmt_num(fit.params.scale()));
    kv(s, "exceedance_fraction", fmt_num(fit.exceedance_fraction));
    kv(s, "n_exceed", fit.n_exceed);
    kv(s, "n_total", fit.n_total);
    kv(s, "fitted_mean_excess", fmt_opt(fit.params.mean().ok()));
    if let Some(ll) = fit.log_likelihood {
        kv(s, "log_likelihood", fmt_num(ll));
    }
}

fn threshold_source(m: &ModelArgs) -> &'static str {
    if m.threshold.is_some() {
        "fixed"
    } else {
        "auto"
    }
}

pub fn cmd_fit(args: &FitArgs) -> Result<RunReport, CliError> {
    let m = &args.model;
    let fitted = fit_model(m)?;
    let mut report = RunReport::new("fit");
    model_params(&mut report, m);
    input_section(&mut report, &m.input, &fitted.loaded);
    fit_section(&mut report, &fitted.fit, threshold_source(m));
    Ok(report)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + i as f64 * step })
        .collect()
}

/// One comparison arm: a conditional CDF over the exceedance region, or the reason it failed.
type Arm = Result<Box<dyn Fn(f64) -> f64>, String>;

/// `P(X <= x | X > u)` from an unconditional survival function.
fn conditional_on_threshold(sf: impl Fn(f64) -> f64 + 'static, u: f64) -> Arm {
    let tail = sf(u);
    if !(tail > 0.0) {
        return Err(format!(
            "model gives zero probability above the threshold {}",
            fmt_num(u)
        ));
    }
    Ok(Box::new(
        move |x| if x <= u { 0.0 } else { 1.0 - sf(x) / tail },
    ))
}

pub fn cmd_compare(args: &CompareArgs) -> Result<RunReport, CliError> {
    let m = &args.model;
    if args.grid_points < 2 {
        return Err(CliError::usage(
            "compare",
            "--grid-points must be at least 2",
        ));
    }
    let loaded = load_input(&m.input)?;
    let series = &loaded.series;
    let u = resolve_threshold(m, series)?;
    let sample = excesses_over(series, u).map_err(ingest_err("excesses"))?;
    let pot: Vec<f64> = sample.excesses().iter().map(|y| y + u).collect();

    let mut report = RunReport::new("compare");
    let p = model_params(&mut report, m);
    param_entry(&mut report, p, "block_len", args.block_len);
    param_entry(&mut report, p, "grid_points", args.grid_points);
    input_section(&mut report, &m.input, &loaded);
    let s = report.section("comparison");
    kv(
        s,
        "region",
        "exceedances x > threshold; every model conditioned on X > threshold",
    );
    kv(s, "threshold", fmt_num(u));
    kv(s, "n_exceed", sample.n_exceed());

    let gpd_fit = fit_gpd(&sample, m.method).map_err(|e| e.to_string());
    let gpd: Arm = gpd_fit
        .as_ref()
        .map(|f| {
            let params = f.params;
            Box::new(move |x: f64| params.cdf(x - u)) as Box<dyn Fn(f64) -> f64>
        })
        .map_err(Clone::clone);
    let gev_fit = block_maxima(series, args.block_len)
        .map_err(|e| e.to_string())
        .and_then(|maxima| fit_gev_pwm(&maxima, args.block_len).map_err(|e| e.to_string()));
    let gev: Arm = gev_fit.as_ref().map_err(Clone::clone).and_then(|f| {
        let params = f.params;
        conditional_on_threshold(move |x| params.sf(x), u)
    });
    let normal_fit = fit_normal(series.values()).map_err(|e| e.to_string());
    let normal: Arm = normal_fit
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|params| {
            let params = *params;
            conditional_on_threshold(move |x| params.sf(x), u)
        });

    let s = report.section("arm gpd");
    match &gpd_fit {
        Ok(f) => {
            kv(s, "status", "ok");
            kv(s, "method", f.method);
            kv(s, "shape", fmt_num(f.params.shape()));
            kv(s, "scale", fmt_num(f.params.scale()));
        }
        Err(e) => kv(s, "status", format!("failed: {e}")),
    }
    let s = report.section("arm gev");
    kv(s, "block_len", args.block_len);
    match (&gev_fit, &gev) {
        (Ok(f), arm) => {
            kv(
                s,
                "status",
                arm.as_ref()
                    .map(|_| "ok".to_string())
                    .unwrap_or_else(|e| format!("failed: {e}")),
            );
            kv(s, "n_blocks", f.n_blocks);
            kv(s, "location", fmt_num(f.params.location()));
            kv(s, "scale", fmt_num(f.params.scale()));
            kv(s, "shape", fmt_num(f.params.shape()));
        }
        (Err(e), _) => kv(s, "status", format!("failed: {e}")),
    }
    let s = report.section("arm normal");
    match (&normal_fit, &normal) {
        (Ok(p), arm) => {
            kv(
                s,
                "status",
                arm.as_ref()
                    .map(|_| "ok".to_string())
                    .unwrap_or_else(|e| format!("failed: {e}")),
            );
            kv(s, "mean", fmt_num(p.mean()));
            kv(s, "sd", fmt_num(p.sd()));
        }
        (Err(e), _) => kv(s, "status", format!("failed: {e}")),
    }

    let arms = [("gpd", &gpd), ("gev", &gev), ("normal", &normal)];
    if arms.iter().all(|(_, a)| a.is_err()) {
        return Err(CliError::new(
            "compare",
            ExitKind::Statistical,
            "every model arm failed",
        ));
    }

    let s = report.section("gaps");
    for (name, arm) in &arms {
        let gap = arm
            .as_ref()
            .ok()
            .map(|f| supnorm_gap(f, &pot).expect("nonempty exceedances"));
        kv(s, name, fmt_opt(gap));
    }

    let lo = pot.iter().copied().fold(f64::INFINITY, f64::min);
    let pot_max = pot.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hi = match &gpd_fit {
        Ok(f) => u + f.params.quantile(0.999).expect("0.999 lies in [0, 1)"),
        Err(_) => pot_max,
    };
    let hi = if hi > lo { hi } else { pot_max.max(lo + 1.0) };
    let empirical = ecdf(&pot).expect("nonempty exceedances");
    let mut table = Table::new("curves", &["x", "ecdf", "gpd", "gev", "normal"]);
    for x in linspace(lo, hi, args.grid_points) {
        let mut row = vec![fmt_num(x), fmt_num(empirical.eval(x))];
        row.extend(
            arms.iter()
                .map(|(_, arm)| fmt_opt(arm.as_ref().ok().map(|f| f(x)))),
        );
        table.push(row);
    }
    report.tables.push(table);
    Ok(report)
}

pub fn cmd_gof(args: &GofArgs) -> Result<RunReport, CliError> {
    let m = &args.model;
    let fitted = fit_model(m)?;
    let result = ad_pvalue_bootstrap(&fitted.fit, &fitted.sample, args.replicates, args.seed)
        .map_err(gof_err)?;

    let mut report = RunReport::new("gof");
    let p = model_params(&mut report, m);
    param_entry(&mut report, p, "replicates", args.replicates);
    param_entry(&mut report, p, "seed", args.seed);
    param_entry(&mut report, p, "rng", RNG_NAME);
    input_section(&mut report, &m.input, &fitted.loaded);
    fit_section(&mut report, &fitted.fit, threshold_source(m));
    let s = report.section("gof");
    kv(s, "model", &result.model);
    kv(s, "ad_statistic", fmt_num(result.ad_statistic));
    kv(s, "p_value", fmt_num(result.p_value));
    kv(s, "supnorm_gap", fmt_num(result.supnorm_gap));
    kv(s, "replicates_used", result.b_used);
    kv(s, "failed_replicates", result.failed_replicates);
    kv(s, "seed", result.seed);
    Ok(report)
}

pub fn cmd_bootstrap(args: &BootstrapArgs) -> Result<RunReport, CliError> {
    let m = &args.model;
    let fitted = fit_model(m)?;
    let fit = &fitted.fit;
    let result = parametric_bootstrap(fit, args.replicates, args.seed).map_err(bootstrap_err)?;
    let env = envelopes(&result).map_err(bootstrap_err)?;
    let u = fit.threshold;
    let levels: Vec<f64> = if args.levels.is_empty() {
        let mut levels: Vec<f64> = DEFAULT_LEVEL_QUANTILES
            .iter()
            .map(|&q| {
                u + fit
                    .params
                    .quantile(q)
                    .expect("default quantiles lie in [0, 1)")
            })
            .collect();
        levels.dedup();
        levels
    } else {
        args.levels.clone()
    };
    let grid = accuracy_grid(fit, &env, &fitted.sample, &levels).map_err(bootstrap_err)?;

    let mut report = RunReport::new("bootstrap");
    let p = model_params(&mut report, m);
    param_entry(&mut report, p, "replicates", args.replicates);
    param_entry(&mut report, p, "seed", args.seed);
    param_entry(&mut report, p, "rng", RNG_NAME);
    let levels_text: Vec<String> = levels.iter().map(|l| fmt_num(*l)).collect();
    param_entry(&mut report, p, "levels", levels_text.join(";"));
    input_section(&mut report, &m.input, &fitted.loaded);
    fit_section(&mut report, fit, threshold_source(m));
    let s = report.section("bootstrap");
    kv(s, "replicates", result.replicates.len());
    kv(s, "redraws", result.redraws);
    kv(s, "exhausted", result.exhausted);
    kv(s, "grid_points", result.grid.len());
    kv(s, "conservative_replicate", env.conservative_index);
    kv(
        s,
        "conservative_shape",
        fmt_num(env.conservative_params.shape()),
    );
    kv(
        s,
        "conservative_scale",
        fmt_num(env.conservative_params.scale()),
    );
    kv(
        s,
        "conservative_deviation",
        fmt_num(env.conservative_deviation),
    );
    kv(s, "nonconservative_replicate", env.non_conservative_index);
    kv(
        s,
        "nonconservative_shape",
        fmt_num(env.non_conservative_params.shape()),
    );
    kv(
        s,
        "nonconservative_scale",
        fmt_num(env.non_conservative_params.scale()),
    );
    kv(
        s,
        "nonconservative_deviation",
        fmt_num(env.non_conservative_deviation),
    );
    kv(
        s,
        "original_between_fraction",
        fmt_num(env.fraction_between()),
    );
    kv(s, "degenerate", env.degenerate);

    let mut curves = Table::new(
        "envelopes",
        &["x", "original", "conservative", "nonconservative"],
    );
    for i in 0..env.grid.len() {
        curves.push(vec![
            fmt_num(u + env.grid[i]),
            fmt_num(env.original[i]),
            fmt_num(env.conservative[i]),
            fmt_num(env.non_conservative[i]),
        ]);
    }
    let mut accuracy = Table::new(
        "accuracy",
        &[
            "level",
            "ecdf",
            "gpd",
            "conservative",
            "nonconservative",
            "ecdf_exceed",
            "gpd_exceed",
            "conservative_exceed",
            "nonconservative_exceed",
        ],
    );
    for i in 0..grid.levels.len() {
        let probs = [
            grid.ecdf[i],
            grid.original[i],
            grid.conservative[i],
            grid.non_conservative[i],
        ];
        let mut row = vec![fmt_num(grid.levels[i])];
        row.extend(probs.iter().map(|p| fmt_num(*p)));
        row.extend(probs.iter().map(|p| fmt_num(1.0 - p)));
        accuracy.push(row);
    }
    report.tables.push(curves);
    report.tables.push(accuracy);
    Ok(report)
}

pub fn cmd_predict(args: &PredictArgs) -> Result<RunReport, CliError> {
    if args.capacity.is_none() && args.levels.is_empty() {
        return Err(CliError::usage(
            "predict",
            "give --capacity and/or at least one --level",
        ));
    }
    let m = &args.model;
    let fitted = fit_model(m)?;
    let model = TailModel::new(fitted.fit.clone(), &fitted.loaded.series).map_err(risk_err)?;

    let mut report = RunReport::new("predict");
    let p = model_params(&mut report, m);
    param_entry(&mut report, p, "capacity", fmt_opt(args.capacity));
    let levels: Vec<String> = args.levels.iter().map(|l| fmt_num(*l)).collect();
    param_entry(&mut report, p, "levels", levels.join(";"));
    let arrivals: Vec<String> = args.arrivals.iter().map(|a| fmt_num(*a)).collect();
    param_entry(&mut report, p, "arrivals", arrivals.join(";"));
    input_section(&mut report, &m.input, &fitted.loaded);
    fit_section(&mut report, &fitted.fit, threshold_source(m));
    kv(
        report.section("assumptions"),
        "unit",
        "probabilities refer to one observation of the input series (its own time unit)",
    );

    let mut table = Table::new(
        "predictions",
        &["query", "value", "probability", "provenance"],
    );
    for &level in &args.levels {
        let prob = exceedance_prob(&model, level).map_err(risk_err)?;
        let provenance = if level >= model.threshold() {
            Provenance::TailModel
        } else {
            Provenance::Empirical
        };
        table.push(vec![
            "level".into(),
            fmt_num(level),
            fmt_num(prob),
            provenance.to_string(),
        ]);
    }
    if let Some(capacity) = args.capacity {
        let oc = over_capacity_prob(&model, capacity).map_err(risk_err)?;
        table.push(vec![
            "capacity".into(),
            fmt_num(capacity),
            fmt_num(oc.probability),
            oc.provenance.to_string(),
        ]);
        if !args.arrivals.is_empty() {
            let mut triage = Table::new(
                "triage",
                &[
                    "arrival",
                    "mode",
                    "exceedance_prob",
                    "capacity",
                    "capacity_breach_prob",
                ],
            );
            for &a in &args.arrivals {
                let advice = triage_flag(&model, a, capacity).map_err(risk_err)?;
                triage.push(vec![
                    fmt_num(a),
                    advice.mode.to_string(),
                    fmt_num(advice.exceedance_prob),
                    fmt_num(capacity),
                    fmt_num(advice.capacity_breach_prob),
                ]);
            }
            report.tables.push(table);
            report.tables.push(triage);
            return Ok(report);
        }
    }
    report.tables.push(table);
    Ok(report)
}

fn threshold_tables(report: &mut RunReport, t: &ThresholdReport) {
    let s = report.section("selection");
    match t.selected() {
        Some(c) => {
            kv(s, "status", "ok");
            kv(s, "selected_threshold", fmt_num(c.threshold));
            kv(s, "selected_probability", fmt_num(c.probability));
        }
        None => kv(s, "status", "no stable threshold"),
    }
    kv(s, "candidates", t.candidates.len());
    kv(s, "rejected", t.rejected.len());

    let mut table = Table::new(
        "candidates",
        &[
            "probability",
            "threshold",
            "n_exceed",
            "shape",
            "scale",
            "fitted_mean_excess",
            "empirical_mean_excess",
            "selected",
        ],
    );
    for (i, c) in t.candidates.iter().enumerate() {
        table.push(vec![
            fmt_num(c.probability),
            fmt_num(c.threshold),
            c.fit.n_exceed.to_string(),
            fmt_num(c.fit.params.shape()),
            fmt_num(c.fit.params.scale()),
            fmt_opt(
                c.fitted_mean_excess
                    .is_finite()
                    .then_some(c.fitted_mean_excess),
            ),
            fmt_num(c.empirical_mean_excess),
            if t.selected == Some(i) { "yes" } else { "no" }.into(),
        ]);
    }
    let mut rejected = Table::new("rejected", &["probability", "threshold", "reason"]);
    for r in &t.rejected {
        rejected.push(vec![
            fmt_num(r.probability),
            fmt_num(r.threshold),
            r.reason.replace(',', ";"),
        ]);
    }
    report.tables.push(table);
    report.tables.push(rejected);
}

pub fn cmd_select_threshold(args: &SelectThresholdArgs) -> Result<RunReport, CliError> {
    let loaded = load_input(&args.input)?;
    let g = &args.selection;
    let (selection, exit) =
        match select_threshold(&loaded.series, &g.grid, g.n_min, g.stability_tol) {
            Ok(t) => (t, ExitKind::Success),
            Err(EstimationError::NoStableThreshold(t)) => (*t, ExitKind::Statistical),
            Err(e) => return Err(estimation_err("threshold")(e)),
        };
    let mut report = RunReport::new("select-threshold");
    grid_params(report.section("parameters"), g);
    input_section(&mut report, &args.input, &loaded);
    threshold_tables(&mut report, &selection);
    report.exit = exit;
    Ok(report)
}

pub fn execute(command: &Command) -> Result<RunReport, CliError> {
    match command {
        Command::Fit(a) => cmd_fit(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Gof(a) => cmd_gof(a),
        Command::Bootstrap(a) => cmd_bootstrap(a),
        Command::Predict(a) => cmd_predict(a),
        Command::SelectThreshold(a) => cmd_select_threshold(a),
    }
}

fn out_path(command: &Command) -> Option<&Path> {
    let input = match command {
        Command::Fit(a) => &a.model.input,
        Command::Compare(a) => &a.model.input,
        Command::Gof(a) => &a.model.input,
        Command::Bootstrap(a) => &a.model.input,
        Command::Predict(a) => &a.model.input,
        Command::SelectThreshold(a) => &a.input,
    };
    input.out.as_deref()
}

/// `<dir>/<stem>.<table>.csv` for a report written to `<dir>/<stem>.<ext>`.
pub fn table_path(report_path: &Path, table: &str) -> PathBuf {
    let stem = report_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    report_path.with_file_name(format!("{stem}.{table}.csv"))
}

fn write_outputs(report: &RunReport, out: Option<&Path>) -> Result<(), CliError> {
    let rendered = report.render();
    let Some(path) = out else {
        print!("{rendered}");
        return Ok(());
    };
    let io = |p: &Path, e: std::io::Error| {
        CliError::new(
            "output",
            ExitKind::Internal,
            format!("{}: {e}", p.display()),
        )
    };
    fs::write(path, rendered).map_err(|e| io(path, e))?;
    for table in &report.tables {
        let p = table_path(path, &table.name);
        fs::write(&p, table.to_csv()).map_err(|e| io(&p, e))?;
    }
    Ok(())
}

/// Runs one parsed invocation and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let outcome = execute(&cli.command).and_then(|report| {
        write_outputs(&report, out_path(&cli.command))?;
        Ok(report.exit)
    });
    match outcome {
        Ok(kind) => {
            if kind != ExitKind::Success {
                eprintln!(
                    "coreflow: {}: finished with status {}",
                    cli_name(&cli.command),
                    kind.code()
                );
            }
            kind.code()
        }
        Err(e) => {
            eprintln!("coreflow: {e}");
            e.kind.code()
        }
    }
}

fn cli_name(command: &Command) -> &'static str {
    match command {
        Command::Fit(_) => "fit",
        Command::Compare(_) => "compare",
        Command::Gof(_) => "gof",
        Command::Bootstrap(_) => "bootstrap",
        Command::Predict(_) => "predict",
        Command::SelectThreshold(_) => "select-threshold",
    }
}
