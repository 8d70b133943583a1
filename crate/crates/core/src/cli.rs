//! Command-line front end: `simulate`, `clean`, `train` and `backtest`.
//!
//! Every flag may also come from a `--config FILE` of `key = value` lines
//! (keys are flag names without the dashes, `#` starts a comment). Flags on
//! the command line win over the file, which wins over the defaults.
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical or
//! runtime failure.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use crate::backtest::{
    buy_and_hold, uniform_portfolio, walk_forward, BacktestReport, ReturnMode, WalkForwardConfig,
};
use crate::data::{
    clean_panel, finish_csv, load_exclusions, load_prices, log_returns, write_prices, CleanConfig,
};
use crate::denoiser::{
    build_training_set_rolling, build_training_set_simulation, save_weights, train, DenoiserConfig,
    DenoiserMode,
};
use crate::error::{Error, Result};
use crate::estimators::alca::{correlation_distance, Dendrogram, Linkage};
use crate::estimators::EstimatorId;
use crate::evaluation::run_monte_carlo;
use crate::fsutil::write_atomic_str;
use crate::models::{ModelKind, ModelSpec, REFERENCE_BLOCK_SIZES};
use crate::spectral;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "covden",
    version,
    about = "Covariance estimation, denoising and minimum-variance backtests"
)]
#[command(args_override_self = true)]
struct Cli {
    /// Flat `key = value` file supplying defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Maximum worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo loss table for a covariance model.
    Simulate(SimulateArgs),
    /// Clean a price CSV and write log returns.
    Clean(CleanArgs),
    /// Train a denoising network and save its weights.
    Train(TrainArgs),
    /// Walk-forward backtest on a returns CSV.
    Backtest(BacktestArgs),
}

#[derive(Debug, Clone, Args)]
struct ModelArgs {
    /// Covariance model: block, nested or powerlaw.
    #[arg(long, default_value = "block")]
    model: ModelKind,
    /// Dimension (block model: defaults to the sum of the block sizes).
    #[arg(long)]
    p: Option<usize>,
    /// Block sizes of the block model, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = REFERENCE_BLOCK_SIZES)]
    block_sizes: Vec<usize>,
    /// Correlation scale (default 0.3 for block, 0.1 for nested).
    #[arg(long)]
    gamma: Option<f64>,
    /// Power-law exponent.
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
}

impl ModelArgs {
    fn spec(&self, seed: u64) -> Result<ModelSpec> {
        let spec = match self.model {
            ModelKind::BlockDiagonal => {
                let mut spec =
                    ModelSpec::block(self.block_sizes.clone(), self.gamma.unwrap_or(0.3));
                if let Some(p) = self.p {
                    spec.p = p;
                }
                spec
            }
            ModelKind::NestedHierarchical => {
                ModelSpec::nested(self.p.unwrap_or(100), self.gamma.unwrap_or(0.1))
            }
            ModelKind::PowerLaw => ModelSpec::powerlaw(self.p.unwrap_or(100), self.alpha, seed),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Args)]
struct NetArgs {
    /// Residual blocks.
    #[arg(long, default_value_t = 10)]
    blocks: usize,
    /// Filters per convolution.
    #[arg(long, default_value_t = 64)]
    filters: usize,
    /// Square kernel size.
    #[arg(long, default_value_t = 3)]
    kernel: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Fraction of the training set held out for validation.
    #[arg(long, default_value_t = 0.2)]
    validation_fraction: f64,
}

impl NetArgs {
    fn config(&self, input_size: usize, mode: DenoiserMode, seed: u64) -> Result<DenoiserConfig> {
        let config = DenoiserConfig {
            input_size,
            num_blocks: self.blocks,
            num_filters: self.filters,
            kernel: self.kernel,
            learning_rate: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            validation_fraction: self.validation_fraction,
            seed,
            mode,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Observations per realization.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Realizations.
    #[arg(long, default_value_t = 200)]
    m: usize,
    /// Comma-separated estimators: naive, lp, cnn, hybrid, alca, 2s-lp, 2s-cnn, 2s-hybrid.
    #[arg(long, default_value = "naive,lp,alca,2s-lp")]
    estimators: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    net: NetArgs,
    /// Output directory.
    #[arg(long, default_value = "simulate-out")]
    out_dir: PathBuf,
    /// Also write the population scree data and dendrogram merge lists.
    #[arg(long)]
    diagnostics: bool,
}

#[derive(Debug, Args)]
struct CleanArgs {
    /// Price CSV (`date,SYM1,SYM2,...`).
    #[arg(long)]
    input: PathBuf,
    /// Output directory for `prices_clean.csv` and `returns.csv`.
    #[arg(long, default_value = "clean-out")]
    out_dir: PathBuf,
    /// Drop symbols missing more than this fraction of dates.
    #[arg(long, default_value_t = 0.01)]
    missing_threshold: f64,
    /// Drop this fraction of the most volatile symbols.
    #[arg(long, default_value_t = 0.10)]
    volatility_quantile: f64,
    /// File of symbols to exclude, one per line.
    #[arg(long)]
    exclude_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Target representation: covariance or eigenvectors.
    #[arg(long, default_value = "covariance")]
    mode: DenoiserMode,
    /// Train on rolling windows of this returns CSV instead of simulated data.
    #[arg(long)]
    returns: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// Observations per simulated sample.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Training pairs.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Window length for rolling pairs.
    #[arg(long, default_value_t = 182)]
    window: usize,
    /// Stride between rolling pairs.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    net: NetArgs,
    /// Weights file to write.
    #[arg(long, default_value = "denoiser.cdnw")]
    out: PathBuf,
    /// Loss-curve CSV to write.
    #[arg(long, default_value = "loss.csv")]
    loss_curve: PathBuf,
}

#[derive(Debug, Args)]
struct BacktestArgs {
    /// Log-returns CSV, as written by `clean`.
    #[arg(long)]
    returns: PathBuf,
    /// walk-forward, uniform or buy-and-hold.
    #[arg(long, default_value = "walk-forward")]
    strategy: String,
    /// Symbol for buy-and-hold.
    #[arg(long)]
    symbol: Option<String>,
    #[arg(long, default_value = "naive")]
    estimator: EstimatorId,
    /// First out-of-sample date (YYYY-MM-DD).
    #[arg(long)]
    split_date: NaiveDate,
    #[arg(long, default_value_t = 182)]
    t_in: usize,
    #[arg(long, default_value_t = 182)]
    t_out: usize,
    #[arg(long, default_value_t = 182)]
    delta_t: usize,
    /// simple or log.
    #[arg(long, default_value = "simple")]
    return_mode: ReturnMode,
    /// Training windows per rebalance for learned estimators.
    #[arg(long, default_value_t = 100)]
    train_count: usize,
    #[arg(long, default_value_t = 1)]
    train_stride: usize,
    /// Days of history before each in-sample window used for training.
    #[arg(long, default_value_t = 282)]
    pre_history: usize,
    /// Keep the input asset order instead of seriating each window.
    #[arg(long)]
    no_seriation: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    net: NetArgs,
    #[arg(long, default_value = "backtest-out")]
    out_dir: PathBuf,
}

/// Expands `--config FILE` into flags placed right after the subcommand so
/// that later command-line flags override them.
fn expand_config(args: Vec<String>) -> std::result::Result<Vec<String>, String> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            path = Some(args.get(i + 1).ok_or("--config needs a file")?.clone());
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))?;
    let mut injected = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{path}:{}: expected `key = value`", lineno + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key == "config" || key == "threads" {
            return Err(format!(
                "{path}:{}: `{key}` must be given on the command line",
                lineno + 1
            ));
        }
        match value {
            "true" => injected.push(format!("--{key}")),
            "false" => {}
            v => {
                injected.push(format!("--{key}"));
                injected.push(v.to_string());
            }
        }
    }
    let commands = ["simulate", "clean", "train", "backtest"];
    let pos = args
        .iter()
        .position(|a| commands.contains(&a.as_str()))
        .ok_or("a subcommand is required with --config")?;
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

/// Runs the command line `args` (including the program name) and returns
/// the exit code. Reports go to `out`, errors to `err`.
pub fn run(args: Vec<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return if code == 0 { 0 } else { EXIT_USAGE };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_RUNTIME;
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Clean(a) => cmd_clean(a),
        Command::Train(a) => cmd_train(a),
        Command::Backtest(a) => cmd_backtest(a),
    });
    match result {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_usage() {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn merges_csv(tree: &Dendrogram) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["node", "left", "right", "height", "size"])?;
    for (k, node) in tree.nodes.iter().enumerate() {
        wtr.write_record([
            (tree.leaves + k).to_string(),
            node.left.to_string(),
            node.right.to_string(),
            node.height.to_string(),
            node.members.len().to_string(),
        ])?;
    }
    finish_csv(wtr)
}

fn cmd_simulate(a: SimulateArgs) -> Result<String> {
    let spec = a.model.spec(a.seed)?;
    let estimators = EstimatorId::parse_list(&a.estimators)?;
    let net = if estimators.iter().any(|e| e.needs_training()) {
        Some(a.net.config(spec.p, DenoiserMode::Covariance, a.seed)?)
    } else {
        None
    };
    let report = run_monte_carlo(&spec, a.n, a.m, &estimators, a.seed, net.as_ref())?;
    create_dir(&a.out_dir)?;
    write_atomic_str(&a.out_dir.join("report.csv"), &report.to_csv()?)?;
    write_atomic_str(&a.out_dir.join("report.json"), &report.to_json()?)?;
    if a.diagnostics {
        let sigma = spec.build()?;
        let ev = sigma.spectral()?.eigenvalues;
        let mut scree = String::from("rank,eigenvalue\n");
        for (k, l) in ev.iter().enumerate() {
            scree.push_str(&format!("{},{}\n", k + 1, l));
        }
        write_atomic_str(&a.out_dir.join("scree.csv"), &scree)?;
        let (corr, _) = spectral::cov_to_corr(sigma.values())?;
        let dist = correlation_distance(&corr)?;
        for (name, linkage) in [("average", Linkage::Average), ("single", Linkage::Single)] {
            let tree = Dendrogram::build(&dist, linkage)?;
            write_atomic_str(
                &a.out_dir.join(format!("dendrogram_{name}.csv")),
                &merges_csv(&tree)?,
            )?;
        }
    }
    Ok(report.to_table())
}

fn cmd_clean(a: CleanArgs) -> Result<String> {
    let panel = load_prices(&a.input)?;
    let exclusions = match &a.exclude_file {
        Some(path) => load_exclusions(path)?,
        None => Vec::new(),
    };
    let config = CleanConfig {
        missing_threshold: a.missing_threshold,
        volatility_quantile: a.volatility_quantile,
        exclusions,
    };
    let (clean, report) = clean_panel(&panel, &config)?;
    let returns = log_returns(&clean)?;
    create_dir(&a.out_dir)?;
    write_prices(&clean, &a.out_dir.join("prices_clean.csv"))?;
    returns.write_csv(&a.out_dir.join("returns.csv"))?;
    let mut summary = format!(
        "kept {} of {} symbols over {} dates\n",
        clean.symbols.len(),
        panel.symbols.len(),
        clean.dates.len()
    );
    for (rule, dropped) in [
        ("missing", &report.missing),
        ("leading-gap", &report.leading_gap),
        ("volatility", &report.volatility),
        ("excluded", &report.excluded),
    ] {
        summary.push_str(&format!(
            "{rule:<12} {:>4}  {}\n",
            dropped.len(),
            dropped.join(" ")
        ));
    }
    if !report.unmatched_exclusions.is_empty() {
        summary.push_str(&format!(
            "unmatched exclusions: {}\n",
            report.unmatched_exclusions.join(" ")
        ));
    }
    Ok(summary)
}

fn cmd_train(a: TrainArgs) -> Result<String> {
    let set = match &a.returns {
        Some(path) => {
            let returns = crate::data::ReturnsPanel::load_csv(path)?;
            build_training_set_rolling(&returns, a.window, a.count, a.stride, a.mode)?
        }
        None => {
            build_training_set_simulation(&a.model.spec(a.seed)?, a.n, a.count, a.seed, a.mode)?
        }
    };
    let p = set.inputs[0].nrows();
    let config = a.net.config(p, a.mode, a.seed)?;
    let outcome = train(&config, &set)?;
    save_weights(&outcome.weights, &a.out)?;
    let mut curve = String::from("epoch,train_loss,val_loss\n");
    for (e, (t, v)) in outcome.train_loss.iter().zip(&outcome.val_loss).enumerate() {
        curve.push_str(&format!("{e},{t},{v}\n"));
    }
    write_atomic_str(&a.loss_curve, &curve)?;
    Ok(format!(
        "trained {} parameters on {} pairs; train loss {:.6e} -> {:.6e}\n",
        outcome.weights.param_count(),
        set.count(),
        outcome.train_loss[0],
        outcome.train_loss.last().expect("nonempty curve")
    ))
}

fn cmd_backtest(a: BacktestArgs) -> Result<String> {
    let returns = crate::data::ReturnsPanel::load_csv(&a.returns)?;
    let mut config = WalkForwardConfig::new(a.split_date, a.estimator);
    config.t_in = a.t_in;
    config.t_out = a.t_out;
    config.delta_t = a.delta_t;
    config.return_mode = a.return_mode;
    config.train_window_count = a.train_count;
    config.train_stride = a.train_stride;
    config.pre_history_days = a.pre_history;
    config.seriation_per_window = !a.no_seriation;
    if a.estimator.needs_training() {
        config.denoiser = Some(
            a.net
                .config(returns.p(), DenoiserMode::Covariance, a.seed)?,
        );
    }
    let report: BacktestReport = match a.strategy.as_str() {
        "walk-forward" => walk_forward(&returns, &config)?,
        "uniform" => uniform_portfolio(&returns, &config)?,
        "buy-and-hold" => {
            let symbol = a
                .symbol
                .as_deref()
                .ok_or_else(|| Error::param("buy-and-hold needs --symbol"))?;
            buy_and_hold(&returns, symbol, &config)?
        }
        other => {
            return Err(Error::param(format!(
                "unknown strategy `{other}` (expected walk-forward, uniform or buy-and-hold)"
            )))
        }
    };
    report.write(&a.out_dir)?;
    report.metrics.to_csv(Some(&report.strategy))
}
