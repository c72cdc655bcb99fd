//! Command-line front end: `fit`, `simulate`, `lasso`, `transform`, `version`.
//!
//! Exit status is 0 on success, 1 when a computation fails and 2 for usage
//! or configuration errors. Failures are reported on stderr as a single JSON
//! object `{"error": {"kind": ..., "message": ...}}`.
//!
//! The worker pool size comes from `EBVARSEL_THREADS` when set.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ebvarsel::io::{self, FitReport, RunConfig};
use ebvarsel::lasso::lasso_cv_select;
use ebvarsel::preprocess::{self, TransformMode};
use ebvarsel::sim::run_study;
use ebvarsel::{fit_with_restarts, Error, Strategy};
use serde::Serialize;

const THREADS_VAR: &str = "EBVARSEL_THREADS";

#[derive(Parser)]
#[command(name = "ebvarsel", about = "Empirical-Bayes variable selection for p >> n regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the selection model to a CSV file.
    Fit(FitArgs),
    /// Run the correlated-groups simulation study.
    Simulate(SimArgs),
    /// Cross-validated LASSO on a CSV file.
    Lasso(LassoArgs),
    /// Transform the columns of a CSV file.
    Transform(TransformArgs),
    /// Print the version.
    Version,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for result files (default: current directory).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run every stage on one thread.
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Response column (default: the first column).
    #[arg(long)]
    response: Option<String>,
    /// Comma-separated locked-in columns.
    #[arg(long, value_delimiter = ',')]
    locked: Option<Vec<String>>,
    /// Comma-separated putative columns (default: all remaining).
    #[arg(long, value_delimiter = ',')]
    putative: Option<Vec<String>>,
    #[arg(long)]
    no_intercept: bool,
    #[arg(long)]
    min_prevalence: Option<f64>,
    #[arg(long, value_enum)]
    transform: Option<TransformKind>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformKind {
    None,
    Minmax,
    Zscore,
    Logratio,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    PosteriorThreshold,
    Greedy,
    Weighted,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Number of weighted-strategy runs (best by AIC is reported).
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    null_threshold: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Shrink posteriors of columns correlated with active ones.
    #[arg(long)]
    correlation_adjust: bool,
    /// Fit from a file-backed column store written at this path.
    #[arg(long)]
    column_store: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long)]
    null_threshold: Option<f64>,
    /// LASSO cross-validation repeats.
    #[arg(long)]
    cv_repeats: Option<usize>,
}

#[derive(Args)]
struct LassoArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    cv_repeats: Option<usize>,
}

#[derive(Args)]
struct TransformArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    /// Additive log-ratio against a reference column.
    #[arg(long, conflicts_with = "rescale")]
    logratio: bool,
    /// Reference column for `--logratio`: `last`, a column name or a 0-based index.
    #[arg(long, default_value = "last", requires = "logratio")]
    reference: String,
    #[arg(long, default_value_t = 0.5)]
    zero_replacement: f64,
    #[arg(long, value_enum)]
    rescale: Option<RescaleKind>,
    /// Comma-separated columns copied through unchanged.
    #[arg(long, value_delimiter = ',')]
    keep: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RescaleKind {
    Minmax,
    Zscore,
}

/// A failure plus the exit status it maps to.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Schema(_)) { 2 } else { 1 };
        Failure { code, kind: e.kind(), message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, kind: "usage", message: message.into() }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = init_threads().and_then(|()| dispatch(cli.command)) {
        let doc = serde_json::json!({ "error": { "kind": f.kind, "message": f.message } });
        eprintln!("{doc}");
        return ExitCode::from(f.code);
    }
    ExitCode::SUCCESS
}

fn init_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| usage(format!("{THREADS_VAR} must be a non-negative integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure { code: 1, kind: "threads", message: e.to_string() })
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Fit(a) => fit(a),
        Command::Simulate(a) => simulate(a),
        Command::Lasso(a) => lasso(a),
        Command::Transform(a) => transform(a),
        Command::Version => {
            println!("ebvarsel {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn load_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &common.out_dir {
        cfg.output_dir = Some(d.clone());
    }
    if common.serial {
        cfg.set_parallel(false);
    }
    Ok(cfg)
}

fn apply_data_args(cfg: &mut RunConfig, a: &DataArgs) {
    if let Some(p) = &a.data {
        cfg.data = Some(p.clone());
    }
    let layout = &mut cfg.layout;
    if let Some(r) = &a.response {
        layout.response = Some(r.clone());
    }
    if let Some(l) = &a.locked {
        layout.locked = l.clone();
    }
    if let Some(p) = &a.putative {
        layout.putative = Some(p.clone());
    }
    if a.no_intercept {
        layout.intercept = false;
    }
    if let Some(f) = a.min_prevalence {
        layout.min_prevalence = Some(f);
    }
    if let Some(t) = a.transform {
        layout.transform = match t {
            TransformKind::None => TransformMode::None,
            TransformKind::Minmax => TransformMode::MinmaxSymmetric,
            TransformKind::Zscore => TransformMode::Zscore,
            TransformKind::Logratio => TransformMode::Logratio { reference: None, zero_replacement: 0.5 },
        };
    }
}

fn strategy(s: StrategyArg) -> Strategy {
    match s {
        StrategyArg::PosteriorThreshold => Strategy::PosteriorThreshold,
        StrategyArg::Greedy => Strategy::Greedy,
        StrategyArg::Weighted => Strategy::Weighted,
    }
}

/// Read the table and fill in the default response (first column).
fn read_input(cfg: &mut RunConfig) -> CliResult<io::Table> {
    let path = cfg.data.clone().ok_or_else(|| usage("no input data: pass --data or set `data` in the config"))?;
    let table = io::read_table(&path)?;
    if cfg.layout.response.is_none() {
        cfg.layout.response = table.headers.first().cloned();
    }
    Ok(table)
}

fn out_path(cfg: &RunConfig, file: &str) -> CliResult<PathBuf> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir.join(file))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn fit(a: FitArgs) -> CliResult<()> {
    let mut cfg = load_config(&a.common)?;
    apply_data_args(&mut cfg, &a.data);
    if let Some(s) = a.common.seed {
        cfg.em.seed = s;
    }
    if let Some(s) = a.strategy {
        cfg.em.strategy = strategy(s);
    }
    if let Some(r) = a.restarts {
        cfg.restarts = r;
    }
    if let Some(t) = a.null_threshold {
        cfg.em.null_threshold = t;
    }
    if let Some(m) = a.max_iter {
        cfg.em.max_iter = m;
    }
    if let Some(t) = a.tol {
        cfg.em.tol = t;
    }
    if a.correlation_adjust {
        cfg.em.correlation.shrink = true;
    }
    if let Some(p) = a.column_store {
        cfg.column_store = Some(p);
    }
    cfg.validate()?;

    let table = read_input(&mut cfg)?;
    let mut data = io::ingest_table(&table, &cfg.layout)?.dataset;
    if let Some(store) = &cfg.column_store {
        data = io::spill_to_file(&data, store)?;
    }
    let run = fit_with_restarts(&data, &cfg.em, cfg.restarts)?;
    let report = FitReport::new(&cfg.em, &run);
    write_json(&out_path(&cfg, "fit.json")?, &report)?;
    let post = BufWriter::new(File::create(out_path(&cfg, "posteriors.csv")?)?);
    io::write_posteriors_csv(post, data.z_names(), &run.fit.posteriors, &run.fit.gamma)?;
    Ok(())
}

#[derive(Serialize)]
struct SimSummaryDoc<'a> {
    design: &'a ebvarsel::sim::SimDesign,
    summary: &'a ebvarsel::sim::SimSummary,
    failures: &'a [ebvarsel::sim::ReplicateFailure],
}

fn simulate(a: SimArgs) -> CliResult<()> {
    let mut cfg = load_config(&a.common)?;
    if let Some(s) = a.common.seed {
        cfg.simulation.seed = s;
    }
    if let Some(n) = a.n {
        cfg.simulation.n = n;
    }
    if let Some(r) = a.replicates {
        cfg.simulation.replicates = r;
    }
    if let Some(s) = a.strategy {
        cfg.em.strategy = strategy(s);
    }
    if let Some(t) = a.null_threshold {
        cfg.em.null_threshold = t;
    }
    if let Some(r) = a.cv_repeats {
        cfg.lasso.repeats = r;
    }
    cfg.validate()?;
    let report = run_study(&cfg.simulation, &cfg.em, &cfg.lasso)?;
    let rows = BufWriter::new(File::create(out_path(&cfg, "replicates.csv")?)?);
    report.write_csv(rows)?;
    let doc = SimSummaryDoc { design: &report.design, summary: &report.summary, failures: &report.failures };
    write_json(&out_path(&cfg, "summary.json")?, &doc)
}

#[derive(Serialize)]
struct LassoDoc {
    lambda_star: f64,
    lambda_index: usize,
    intercept: f64,
    selected: Vec<NamedCoefficient>,
    median_r2: f64,
    converged: bool,
    lambdas: Vec<f64>,
    cv_mean: Vec<f64>,
    config: ebvarsel::lasso::LassoConfig,
}

#[derive(Serialize)]
struct NamedCoefficient {
    name: String,
    estimate: f64,
}

fn lasso(a: LassoArgs) -> CliResult<()> {
    let mut cfg = load_config(&a.common)?;
    apply_data_args(&mut cfg, &a.data);
    if let Some(s) = a.common.seed {
        cfg.lasso.seed = s;
    }
    if let Some(f) = a.folds {
        cfg.lasso.folds = f;
    }
    if let Some(r) = a.cv_repeats {
        cfg.lasso.repeats = r;
    }
    cfg.validate()?;
    let table = read_input(&mut cfg)?;
    let data = io::ingest_table(&table, &cfg.layout)?.dataset;
    let columns = (0..data.k())
        .map(|k| data.z_column(k).map(|c| c.into_owned()))
        .collect::<ebvarsel::Result<Vec<_>>>()?;
    let cv = lasso_cv_select(data.y().as_slice(), &columns, &cfg.lasso)?;
    let doc = LassoDoc {
        lambda_star: cv.lambda_star,
        lambda_index: cv.lambda_index,
        intercept: cv.intercept,
        selected: cv
            .selected
            .iter()
            .map(|&j| NamedCoefficient { name: data.z_names()[j].clone(), estimate: cv.coefficients[j] })
            .collect(),
        median_r2: cv.median_r2,
        converged: cv.converged,
        lambdas: cv.lambdas,
        cv_mean: cv.cv_mean,
        config: cfg.lasso.clone(),
    };
    write_json(&out_path(&cfg, "lasso.json")?, &doc)
}

fn transform(a: TransformArgs) -> CliResult<()> {
    let table = io::read_table(&a.data)?;
    let keep_cols = a
        .keep
        .iter()
        .map(|k| table.column(k).map(<[f64]>::to_vec))
        .collect::<ebvarsel::Result<Vec<_>>>()?;
    let keep_names = a.keep.clone();
    let (names, cols): (Vec<String>, Vec<Vec<f64>>) = table
        .headers
        .iter()
        .zip(&table.columns)
        .filter(|(h, _)| !a.keep.contains(h))
        .map(|(h, c)| (h.clone(), c.clone()))
        .unzip();

    let mode = if a.logratio {
        let reference = match a.reference.as_str() {
            "last" => names.len().checked_sub(1).ok_or_else(|| usage("no columns to transform"))?,
            r => match names.iter().position(|n| n == r) {
                Some(i) => i,
                None => r
                    .parse::<usize>()
                    .ok()
                    .filter(|&i| i < names.len())
                    .ok_or_else(|| usage(format!("unknown reference column `{r}`")))?,
            },
        };
        TransformMode::Logratio { reference: Some(reference), zero_replacement: a.zero_replacement }
    } else {
        match a.rescale {
            Some(RescaleKind::Minmax) => TransformMode::MinmaxSymmetric,
            Some(RescaleKind::Zscore) => TransformMode::Zscore,
            None => return Err(usage("choose --logratio or --rescale")),
        }
    };
    let (cols, names, _) = preprocess::apply(&mode, cols, names)?;
    let all_names: Vec<String> = keep_names.into_iter().chain(names).collect();
    let all_cols: Vec<Vec<f64>> = keep_cols.into_iter().chain(cols).collect();
    let out = BufWriter::new(File::create(&a.out)?);
    io::write_columns_csv(out, &all_names, &all_cols)?;
    Ok(())
}
