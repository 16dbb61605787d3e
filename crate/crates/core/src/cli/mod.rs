//! `tvme` command line: argument parsing, pipeline wiring and output.

mod output;
mod plot;

pub use output::fmt_sig;
pub use plot::{emit_plot, render_svg};

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::dataio::{
    describe, load_price_panel, load_returns_panel, to_log_returns, Frequency, PanelLayout,
    ReturnsPanel,
};
use crate::efficiency::{
    bootstrap_band, efficiency_degree_with_cap, mc_band, BandOptions, NullMoments, ZetaSeries,
    DEFAULT_CONDITION_CAP,
};
use crate::error::Error;
use crate::tvvar::{default_lambda_grid, fit_tvvar, AnchorMode, Refinement, TvVarEstimate, TvVarOptions};
use crate::unitroot::{adf_gls_test, DetrendModel, UnitRootConfig};
use crate::var::{
    feasible_pmax, fit_var, hansen_lc, newey_west_cov, select_var_lag_bic,
    simulate_lc_critical_value, Bandwidth, LcCriticalMethod, LcSimulation, DEFAULT_PMAX,
};
use output::{csv_text, fmt_opt, to_json, write_file, Sink};

#[derive(Debug, Parser)]
#[command(name = "tvme", version, about = "Time-varying VAR and degree of market efficiency")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mean, sd, min, max and count of each market's returns.
    Describe(DescribeArgs),
    /// ADF-GLS unit-root test per market with MBIC lag choice.
    Unitroot(UnitrootArgs),
    /// Constant-coefficient VAR with Newey-West errors and Hansen's L_C.
    Var(VarArgs),
    /// Time-varying VAR coefficient path.
    Tvvar(TvvarArgs),
    /// Degree of market efficiency with a null confidence band.
    Efficiency(EfficiencyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum InputKind {
    Prices,
    Returns,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// CSV with a `date` column followed by one column per market.
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated market subset, in the order to use.
    #[arg(long, value_delimiter = ',')]
    markets: Vec<String>,
    /// Whether the cells are price levels or returns [default: prices for
    /// describe, returns otherwise].
    #[arg(long, value_enum)]
    kind: Option<InputKind>,
    /// chrono format for the date column (default: YYYY-MM or YYYY-MM-DD).
    #[arg(long)]
    date_format: Option<String>,
    /// Row spacing: monthly, quarterly, annual, weekly, daily, <n>m or <n>d.
    #[arg(long, default_value = "monthly")]
    frequency: String,
    /// Drop rows with missing cells instead of rejecting the file.
    #[arg(long)]
    drop_incomplete_rows: bool,
    /// Output file; `-` or omitted writes to stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Args)]
struct DescribeArgs {
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModelArg {
    Trend,
    Constant,
}

#[derive(Debug, Args)]
struct UnitrootArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "trend")]
    model: ModelArg,
    /// Maximum augmentation lag, or `auto`.
    #[arg(long, default_value = "auto")]
    kmax: Auto<usize>,
    /// Local-to-unity constant (default -13.5 with trend, -7 without).
    #[arg(long, allow_hyphen_values = true)]
    cbar: Option<f64>,
    /// 1% critical value; required for the constant-only model.
    #[arg(long, allow_hyphen_values = true)]
    critical_value: Option<f64>,
}

#[derive(Debug, Args)]
struct LagArgs {
    /// VAR order, or `auto` for BIC.
    #[arg(long = "p", default_value = "auto")]
    p: Auto<usize>,
    /// Largest order considered by `--p auto`.
    #[arg(long, default_value_t = DEFAULT_PMAX)]
    pmax: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum LcMethodArg {
    Asymptotic,
    Parametric,
    None,
}

#[derive(Debug, Args)]
struct VarArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    lag: LagArgs,
    /// Newey-West bandwidth, or `auto`.
    #[arg(long, default_value = "auto")]
    nw_lag: Auto<usize>,
    /// How the L_C critical value is simulated.
    #[arg(long, value_enum, default_value = "asymptotic")]
    lc_method: LcMethodArg,
    #[arg(long, default_value_t = 2000)]
    lc_reps: usize,
    /// Right-tail size of the L_C critical value.
    #[arg(long, default_value_t = 0.01)]
    lc_size: f64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TvArgs {
    #[command(flatten)]
    lag: LagArgs,
    /// Smoothing ratio: a positive number, `fgls` or `grid`.
    #[arg(long, default_value = "1.0")]
    lambda: LambdaArg,
    /// Starting value for `--lambda fgls`.
    #[arg(long, default_value_t = 1.0)]
    lambda_start: f64,
    #[arg(long, default_value = "ols")]
    anchor: AnchorMode,
}

#[derive(Debug, Args)]
struct TvvarArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    tv: TvArgs,
    /// JSON metadata file (default: `<output>.meta.json` when writing a file).
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum BandArg {
    Mc,
    Bootstrap,
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum MomentsArg {
    Sample,
    Identity,
}

#[derive(Debug, Args)]
struct EfficiencyArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    tv: TvArgs,
    #[arg(long, value_enum, default_value = "mc")]
    band: BandArg,
    #[arg(long, default_value_t = 5000)]
    reps: usize,
    #[arg(long, default_value_t = 0.99)]
    level: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Moments of the Monte Carlo null panels.
    #[arg(long, value_enum, default_value = "sample")]
    null_moments: MomentsArg,
    /// Largest accepted condition number of `I - sum A_i`.
    #[arg(long, default_value_t = DEFAULT_CONDITION_CAP)]
    condition_cap: f64,
    /// Write an SVG plot of the series and band.
    #[arg(long)]
    plot: Option<PathBuf>,
}

/// `auto` or an explicit value.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Auto<T> {
    Auto,
    Value(T),
}

impl<T: FromStr> FromStr for Auto<T> {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Auto::Auto);
        }
        s.parse()
            .map(Auto::Value)
            .map_err(|_| format!("expected `auto` or a number, got `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LambdaArg {
    Fixed(f64),
    Fgls,
    Grid,
}

impl FromStr for LambdaArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "fgls" => Ok(LambdaArg::Fgls),
            "grid" => Ok(LambdaArg::Grid),
            other => match other.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(LambdaArg::Fixed(v)),
                _ => Err(format!("expected a positive number, `fgls` or `grid`, got `{s}`")),
            },
        }
    }
}

/// Failure of a run, mapped to the process exit status.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Stage { stage: &'static str, source: Error },
}

type Outcome<T> = std::result::Result<T, Failure>;

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Outcome<T>;
}

impl<T> Stage<T> for crate::Result<T> {
    fn stage(self, stage: &'static str) -> Outcome<T> {
        self.map_err(|source| Failure::Stage { stage, source })
    }
}

fn usage<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(msg.into()))
}

/// Runs `tvme` on `argv` (including the program name) and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return 2;
    }
    let args: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let result = match cli.command {
        Command::Describe(a) => cmd_describe(a, &args),
        Command::Unitroot(a) => cmd_unitroot(a, &args),
        Command::Var(a) => cmd_var(a, &args),
        Command::Tvvar(a) => cmd_tvvar(a, &args),
        Command::Efficiency(a) => cmd_efficiency(a, &args),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(Failure::Stage { stage, source }) => {
            eprintln!("error: {stage}: {source}");
            1
        }
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var("TVME_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("TVME_THREADS must be a positive integer, got `{raw}`"))?;
    // a pool may already exist when `run` is called repeatedly in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn generated_seed() -> u64 {
    use std::time::{SystemTime, UNIX_EPOCH};
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    nanos ^ (u64::from(std::process::id()) << 32)
}

struct Loaded {
    returns: ReturnsPanel,
    kind: InputKind,
    frequency: Frequency,
}

fn load(input: &InputArgs, default_kind: InputKind) -> Outcome<Loaded> {
    let frequency = Frequency::parse(&input.frequency).map_err(|e| Failure::Usage(e.to_string()))?;
    let layout = PanelLayout {
        date_format: input.date_format.clone(),
        frequency,
        drop_incomplete_rows: input.drop_incomplete_rows,
        ..PanelLayout::default()
    };
    let kind = input.kind.unwrap_or(default_kind);
    let returns = match kind {
        InputKind::Prices => {
            let prices = load_price_panel(&input.input, &layout).stage("load input")?;
            to_log_returns(&prices).stage("log returns")?
        }
        InputKind::Returns => load_returns_panel(&input.input, &layout).stage("load input")?,
    };
    if returns.dropped_rows() > 0 {
        eprintln!("dropped {} incomplete row(s)", returns.dropped_rows());
    }
    let returns = if input.markets.is_empty() {
        returns
    } else {
        returns.select_markets(&input.markets).stage("select markets")?
    };
    Ok(Loaded {
        returns,
        kind,
        frequency,
    })
}

fn input_record(input: &InputArgs, loaded: &Loaded) -> Value {
    json!({
        "input": input.input.display().to_string(),
        "kind": loaded.kind,
        "markets": loaded.returns.markets(),
        "date_format": input.date_format,
        "frequency": loaded.frequency,
        "drop_incomplete_rows": input.drop_incomplete_rows,
        "dropped_rows": loaded.returns.dropped_rows(),
        "n_returns": loaded.returns.len(),
    })
}

/// Writes the resolved configuration next to the output, or to stderr.
fn write_run_record(sink: &Sink, command: &str, args: &[String], config: Value) -> Outcome<()> {
    let record = json!({
        "tool": "tvme",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "args": args,
        "output": sink.describe(),
        "config": config,
    });
    match sink.sibling(".run.json") {
        Some(path) => write_file(&path, &to_json(&record)).stage("write run record"),
        None => {
            eprintln!("{}", serde_json::to_string(&record).expect("serialisable record"));
            Ok(())
        }
    }
}

fn cmd_describe(a: DescribeArgs, args: &[String]) -> Outcome<()> {
    let loaded = load(&a.input, InputKind::Prices)?;
    let stats = describe(&loaded.returns).stage("describe")?;
    let format = a.input.format.unwrap_or(Format::Csv);
    let sink = Sink::from_arg(a.input.output.as_deref(), None);
    let text = match format {
        Format::Json => to_json(&stats),
        Format::Csv => csv_text(
            &["market", "mean", "sd", "min", "max", "n"],
            stats.markets.iter().map(|m| {
                vec![
                    m.market.clone(),
                    fmt_sig(m.mean),
                    fmt_sig(m.sd),
                    fmt_sig(m.min),
                    fmt_sig(m.max),
                    m.n.to_string(),
                ]
            }),
        )
        .stage("write output")?,
    };
    sink.write(&text).stage("write output")?;
    write_run_record(
        &sink,
        "describe",
        args,
        json!({ "input": input_record(&a.input, &loaded), "format": format }),
    )
}

fn cmd_unitroot(a: UnitrootArgs, args: &[String]) -> Outcome<()> {
    let loaded = load(&a.input, InputKind::Returns)?;
    let model = match a.model {
        ModelArg::Trend => DetrendModel::ConstantTrend,
        ModelArg::Constant => DetrendModel::Constant,
    };
    if model.builtin_critical_value().is_none() && a.critical_value.is_none() {
        return usage("the constant-only model needs --critical-value");
    }
    let cfg = UnitRootConfig {
        model,
        kmax: match a.kmax {
            Auto::Auto => None,
            Auto::Value(k) => Some(k),
        },
        cbar: a.cbar,
        critical_value: a.critical_value,
    };
    let r = &loaded.returns;
    let mut results = Vec::with_capacity(r.n_markets());
    for j in 0..r.n_markets() {
        results.push(adf_gls_test(&r.series(j), &cfg).stage("unit-root test")?);
    }
    let format = a.input.format.unwrap_or(Format::Csv);
    let sink = Sink::from_arg(a.input.output.as_deref(), None);
    let text = match format {
        Format::Json => {
            let rows: Vec<Value> = r
                .markets()
                .iter()
                .zip(&results)
                .map(|(m, res)| json!({ "market": m, "result": res }))
                .collect();
            to_json(&rows)
        }
        Format::Csv => csv_text(
            &["market", "stat", "lag", "phi0", "phi1", "reject_1pct"],
            r.markets().iter().zip(&results).map(|(m, res)| {
                vec![
                    m.clone(),
                    fmt_sig(res.statistic),
                    res.lag.to_string(),
                    fmt_opt(res.phi_hat.first().copied()),
                    fmt_opt(res.phi_hat.get(1).copied()),
                    res.reject_at_1pct.to_string(),
                ]
            }),
        )
        .stage("write output")?,
    };
    sink.write(&text).stage("write output")?;
    let lags: Vec<usize> = results.iter().map(|r| r.kmax).collect();
    write_run_record(
        &sink,
        "unitroot",
        args,
        json!({
            "input": input_record(&a.input, &loaded),
            "model": model,
            "kmax": lags,
            "cbar": results.first().map(|r| r.cbar),
            "critical_value_1pct": results.first().map(|r| r.critical_value_1pct),
            "format": format,
        }),
    )
}

/// Resolves `--p`; returns the order and how it was chosen.
fn resolve_p(lag: &LagArgs, returns: &ReturnsPanel) -> Outcome<(usize, String)> {
    match lag.p {
        Auto::Value(0) => usage("--p must be at least 1"),
        Auto::Value(p) => Ok((p, "fixed".into())),
        Auto::Auto => {
            if lag.pmax == 0 {
                return usage("--pmax must be at least 1");
            }
            let pmax = feasible_pmax(returns.len(), returns.n_markets(), lag.pmax);
            if pmax == 0 {
                return Err(Failure::Stage {
                    stage: "lag selection",
                    source: Error::InsufficientData {
                        what: "VAR lag selection",
                        needed: returns.n_markets() + 4,
                        got: returns.len(),
                    },
                });
            }
            let p = select_var_lag_bic(returns, pmax).stage("lag selection")?;
            Ok((p, format!("bic (pmax {pmax})")))
        }
    }
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn cmd_var(a: VarArgs, args: &[String]) -> Outcome<()> {
    if !(a.lc_size > 0.0 && a.lc_size < 1.0) {
        return usage("--lc-size must lie in (0, 1)");
    }
    let loaded = load(&a.input, InputKind::Returns)?;
    let returns = &loaded.returns;
    let (p, p_selection) = resolve_p(&a.lag, returns)?;
    let mut est = fit_var(returns, p).stage("VAR estimation")?;
    if let Auto::Value(l) = a.nw_lag {
        est.coef_cov_nw = newey_west_cov(&est, Bandwidth::Fixed(l)).stage("Newey-West")?;
        est.nw_bandwidth = l;
    }
    let seed = a.seed.unwrap_or_else(generated_seed);
    let mut lc = hansen_lc(&est).stage("Hansen L_C")?;
    let method = match a.lc_method {
        LcMethodArg::Asymptotic => Some(LcCriticalMethod::Asymptotic { steps: 1000 }),
        LcMethodArg::Parametric => Some(LcCriticalMethod::Parametric),
        LcMethodArg::None => None,
    };
    if let Some(method) = method {
        let sim = LcSimulation {
            method,
            replications: a.lc_reps,
            size: a.lc_size,
            seed,
        };
        if sim.replications < 100 {
            return usage("--lc-reps must be at least 100");
        }
        let cv = simulate_lc_critical_value(&est, &sim).stage("L_C critical value")?;
        lc = lc.with_critical_value(cv, a.lc_size);
    }
    let se = est.nw_standard_errors();
    let format = a.input.format.unwrap_or(Format::Json);
    let sink = Sink::from_arg(a.input.output.as_deref(), None);
    let text = match format {
        Format::Json => to_json(&json!({
            "markets": est.markets,
            "p": p,
            "p_selection": p_selection,
            "n_obs": est.n_obs(),
            "nu": est.nu.as_slice(),
            "a": est.a.iter().map(matrix_rows).collect::<Vec<_>>(),
            "regressors": est.regressor_names,
            "coef": matrix_rows(&est.coef.transpose()),
            "nw_se": matrix_rows(&se.transpose()),
            "nw_bandwidth": est.nw_bandwidth,
            "adj_r2": est.adj_r2,
            "lc": lc,
        })),
        Format::Csv => {
            let mut rows = Vec::new();
            for (i, m) in est.markets.iter().enumerate() {
                for (r, name) in est.regressor_names.iter().enumerate() {
                    rows.push(vec!["coef".into(), m.clone(), name.clone(), fmt_sig(est.coef[(r, i)])]);
                    rows.push(vec!["nw_se".into(), m.clone(), name.clone(), fmt_sig(se[(r, i)])]);
                }
                rows.push(vec!["adj_r2".into(), m.clone(), String::new(), fmt_sig(est.adj_r2[i])]);
                rows.push(vec!["lc".into(), m.clone(), String::new(), fmt_sig(lc.per_equation[i])]);
            }
            rows.push(vec!["lc".into(), "all".into(), String::new(), fmt_sig(lc.lc)]);
            if let Some(cv) = lc.critical_value {
                rows.push(vec!["lc_critical".into(), "all".into(), String::new(), fmt_sig(cv)]);
            }
            csv_text(&["quantity", "equation", "regressor", "value"], rows).stage("write output")?
        }
    };
    sink.write(&text).stage("write output")?;
    write_run_record(
        &sink,
        "var",
        args,
        json!({
            "input": input_record(&a.input, &loaded),
            "p": p,
            "p_selection": p_selection,
            "pmax": a.lag.pmax,
            "nw_bandwidth": est.nw_bandwidth,
            "lc_method": a.lc_method,
            "lc_reps": a.lc_reps,
            "lc_size": a.lc_size,
            "seed": seed,
            "format": format,
        }),
    )
}

struct TvFit {
    estimate: TvVarEstimate,
    p: usize,
    p_selection: String,
    options: TvVarOptions,
}

fn fit_tv(tv: &TvArgs, returns: &ReturnsPanel) -> Outcome<TvFit> {
    let (p, p_selection) = resolve_p(&tv.lag, returns)?;
    let (lambda, refinement) = match tv.lambda {
        LambdaArg::Fixed(l) => (l, Refinement::None),
        LambdaArg::Fgls => {
            if !(tv.lambda_start > 0.0 && tv.lambda_start.is_finite()) {
                return usage("--lambda-start must be positive");
            }
            (tv.lambda_start, Refinement::FeasibleGls)
        }
        LambdaArg::Grid => (1.0, Refinement::LikelihoodGrid(default_lambda_grid(returns))),
    };
    let options = TvVarOptions {
        lambda,
        anchor: tv.anchor,
        refinement,
    };
    let estimate = fit_tvvar(returns, p, &options).stage("TV-VAR estimation")?;
    Ok(TvFit {
        estimate,
        p,
        p_selection,
        options,
    })
}

fn tv_record(fit: &TvFit) -> Value {
    json!({
        "p": fit.p,
        "p_selection": fit.p_selection,
        "lambda": fit.estimate.lambda,
        "lambda_start": fit.options.lambda,
        "lambda_selection": fit.estimate.meta.lambda_selection,
        "anchor": fit.options.anchor,
    })
}

fn cmd_tvvar(a: TvvarArgs, args: &[String]) -> Outcome<()> {
    let loaded = load(&a.input, InputKind::Returns)?;
    let fit = fit_tv(&a.tv, &loaded.returns)?;
    let est = &fit.estimate;
    let meta = json!({
        "markets": est.markets,
        "p": fit.p,
        "p_selection": fit.p_selection,
        "t_eff": est.t_eff(),
        "lambda": est.lambda,
        "nu": est.nu.as_slice(),
        "sigma_u": est.sigma_u,
        "sigma_v": est.sigma_v,
        "meta": est.meta,
    });
    let format = a.input.format.unwrap_or(Format::Csv);
    let sink = Sink::from_arg(a.input.output.as_deref(), None);
    let mut meta_path = None;
    match format {
        Format::Json => {
            let path: Vec<Value> = est
                .dates
                .iter()
                .zip(&est.a_path)
                .map(|(d, blocks)| json!({ "date": d, "a": blocks.iter().map(matrix_rows).collect::<Vec<_>>() }))
                .collect();
            sink.write(&to_json(&json!({ "metadata": meta, "path": path })))
                .stage("write output")?;
        }
        Format::Csv => {
            let mut rows = Vec::new();
            for (d, blocks) in est.dates.iter().zip(&est.a_path) {
                for (b, m) in blocks.iter().enumerate() {
                    for r in 0..est.k {
                        for c in 0..est.k {
                            rows.push(vec![
                                d.clone(),
                                (b + 1).to_string(),
                                (r + 1).to_string(),
                                (c + 1).to_string(),
                                fmt_sig(m[(r, c)]),
                            ]);
                        }
                    }
                }
            }
            let text = csv_text(&["date", "block", "row", "col", "value"], rows).stage("write output")?;
            sink.write(&text).stage("write output")?;
            meta_path = a.meta.clone().or_else(|| sink.sibling(".meta.json"));
            if let Some(path) = &meta_path {
                write_file(path, &to_json(&meta)).stage("write metadata")?;
            }
        }
    }
    write_run_record(
        &sink,
        "tvvar",
        args,
        json!({
            "input": input_record(&a.input, &loaded),
            "tvvar": tv_record(&fit),
            "metadata": meta_path.map(|p| p.display().to_string()),
            "format": format,
        }),
    )
}

fn cmd_efficiency(a: EfficiencyArgs, args: &[String]) -> Outcome<()> {
    if !(a.level > 0.0 && a.level < 1.0) {
        return usage("--level must lie in (0, 1)");
    }
    if !matches!(a.band, BandArg::None) && a.reps < 100 {
        return usage("--reps must be at least 100");
    }
    if a.plot.is_some() && matches!(a.band, BandArg::None) {
        return usage("--plot needs a confidence band; drop --band none");
    }
    let loaded = load(&a.input, InputKind::Returns)?;
    let returns = &loaded.returns;
    let fit = fit_tv(&a.tv, returns)?;
    let est = &fit.estimate;
    let seed = a.seed.unwrap_or_else(generated_seed);
    let mut series = efficiency_degree_with_cap(est, a.condition_cap);
    for (d, diag) in series.dates.iter().zip(&series.diagnostics) {
        if let Some(msg) = diag {
            eprintln!("zeta undefined at {d}: {msg}");
        }
    }
    let band_opts = BandOptions {
        replications: a.reps,
        level: a.level,
        seed,
        tvvar: fit.options.resolved(est.lambda),
        condition_cap: a.condition_cap,
    };
    let band = match a.band {
        BandArg::None => None,
        BandArg::Mc => {
            let moments = match a.null_moments {
                MomentsArg::Sample => NullMoments::from_returns(returns).stage("null moments")?,
                MomentsArg::Identity => NullMoments::identity(returns.n_markets()),
            };
            Some(mc_band(est.t_eff(), fit.p, &moments, &band_opts).stage("Monte Carlo band")?)
        }
        BandArg::Bootstrap => Some(bootstrap_band(est, &band_opts).stage("bootstrap band")?),
    };
    if let Some(band) = band {
        series = series.with_band(band).stage("efficiency band")?;
    }

    let format = a.input.format.unwrap_or(Format::Csv);
    let sink = Sink::from_arg(a.input.output.as_deref(), Some("zeta.csv"));
    let text = match format {
        Format::Json => to_json(&json!({
            "markets": est.markets,
            "p": fit.p,
            "lambda": est.lambda,
            "series": series,
        })),
        Format::Csv => zeta_csv(&series).stage("write output")?,
    };
    sink.write(&text).stage("write output")?;
    if let Some(path) = &a.plot {
        let title = format!("Degree of market efficiency: {}", est.markets.join(", "));
        emit_plot(&series, path, &title).stage("write plot")?;
    }
    write_run_record(
        &sink,
        "efficiency",
        args,
        json!({
            "input": input_record(&a.input, &loaded),
            "tvvar": tv_record(&fit),
            "band": a.band,
            "reps": a.reps,
            "level": a.level,
            "seed": seed,
            "null_moments": a.null_moments,
            "condition_cap": a.condition_cap,
            "plot": a.plot.as_deref().map(Path::display).map(|d| d.to_string()),
            "band_meta": series.band_meta,
            "format": format,
        }),
    )
}

fn zeta_csv(series: &ZetaSeries) -> crate::Result<String> {
    let n = series.len();
    let band = |b: &Option<Vec<f64>>, t: usize| b.as_ref().map(|v| fmt_sig(v[t])).unwrap_or_default();
    csv_text(
        &["date", "zeta", "band_lo", "band_hi", "inefficient"],
        (0..n).map(|t| {
            vec![
                series.dates[t].clone(),
                fmt_opt(series.zeta[t]),
                band(&series.band_lo, t),
                band(&series.band_hi, t),
                series.inefficient[t].map(|b| b.to_string()).unwrap_or_default(),
            ]
        }),
    )
}
