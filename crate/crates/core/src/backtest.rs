//! Walk-forward (rolling-window) backtests of long-only minimum-variance
//! allocations, plus the buy-and-hold and uniform benchmarks.
//!
//! The calendar is row-indexed: every panel row is one day. Rebalance `k`
//! happens at row `t_k = split + k·ΔT`, estimates from rows
//! `t_k − T_in .. t_k` and holds through row `t_k + T_out` (or the next
//! rebalance, whichever comes first). Between rebalances the weights drift
//! with prices.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use log::info;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceMatrix, Provenance};
use crate::data::{finish_csv, ReturnsPanel};
use crate::denoiser::{
    build_training_set_rolling, train, DenoiserConfig, DenoiserMode, DenoiserWeights,
};
use crate::error::{Error, Result};
use crate::estimators::{estimate, Denoisers, EstimatorId};
use crate::fsutil;
use crate::portfolio::{
    mvp_plus_weights, portfolio_metrics, turnover, turnover_from_legs, wealth_path,
};
use crate::portfolio::{PerformanceMetrics, WeightVector};
use crate::spectral::{self, Permutation};

pub const PERIODS_PER_YEAR: u32 = 365;

/// How per-period asset returns are derived from the log-return panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnMode {
    /// `exp(r) − 1`: exact compounding.
    Simple,
    /// The log returns themselves, as a first-order approximation.
    Log,
}

impl ReturnMode {
    fn convert(self, r: f64) -> f64 {
        match self {
            ReturnMode::Simple => r.exp_m1(),
            ReturnMode::Log => r,
        }
    }
}

impl fmt::Display for ReturnMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReturnMode::Simple => "simple",
            ReturnMode::Log => "log",
        })
    }
}

impl FromStr for ReturnMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(ReturnMode::Simple),
            "log" => Ok(ReturnMode::Log),
            other => Err(Error::param(format!(
                "unknown return mode `{other}` (expected simple or log)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkForwardConfig {
    pub t_in: usize,
    pub t_out: usize,
    pub delta_t: usize,
    pub split_date: NaiveDate,
    pub estimator: EstimatorId,
    pub return_mode: ReturnMode,
    pub denoiser: Option<DenoiserConfig>,
    pub train_window_count: usize,
    pub train_stride: usize,
    pub pre_history_days: usize,
    pub seriation_per_window: bool,
}

impl WalkForwardConfig {
    /// 182-day windows, 100 training windows at stride 1 reaching back 282
    /// days, simple returns, per-window seriation.
    pub fn new(split_date: NaiveDate, estimator: EstimatorId) -> Self {
        WalkForwardConfig {
            t_in: 182,
            t_out: 182,
            delta_t: 182,
            split_date,
            estimator,
            return_mode: ReturnMode::Simple,
            denoiser: None,
            train_window_count: 100,
            train_stride: 1,
            pre_history_days: 282,
            seriation_per_window: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_in < 2 || self.t_out < 2 || self.delta_t < 2 {
            return Err(Error::param(format!(
                "t_in, t_out and delta_t must be >= 2 (got {}, {}, {})",
                self.t_in, self.t_out, self.delta_t
            )));
        }
        if self.estimator.needs_training() {
            if self.train_window_count < 2 || self.train_stride == 0 {
                return Err(Error::param(
                    "learned estimators need train_window_count >= 2 and train_stride >= 1",
                ));
            }
            if self.denoiser.is_none() {
                return Err(Error::param(format!(
                    "estimator `{}` needs a denoiser configuration",
                    self.estimator
                )));
            }
        }
        Ok(())
    }

    /// Rows needed before each rebalance date.
    pub fn lookback(&self) -> usize {
        if self.estimator.needs_training() {
            self.pre_history_days + self.t_in
        } else {
            self.t_in
        }
    }
}

/// One holding period: rebalance at row `start`, hold rows `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HoldPeriod {
    pub start: usize,
    pub end: usize,
}

/// Rebalance rows for a panel of `rows` rows whose first out-of-sample row
/// is `split`: `floor((rows − split − t_out)/ΔT) + 1` periods.
pub fn rebalance_schedule(
    rows: usize,
    split: usize,
    t_out: usize,
    delta_t: usize,
) -> Result<Vec<HoldPeriod>> {
    let available = rows.saturating_sub(split);
    if available < t_out {
        return Err(Error::InsufficientHistory {
            required: split + t_out,
            available: rows,
        });
    }
    let count = (available - t_out) / delta_t + 1;
    Ok((0..count)
        .map(|k| {
            let start = split + k * delta_t;
            let end = if k + 1 < count {
                (start + t_out).min(start + delta_t)
            } else {
                start + t_out
            };
            HoldPeriod { start, end }
        })
        .collect())
}

fn split_index(returns: &ReturnsPanel, date: NaiveDate) -> Result<usize> {
    returns.index_of_date(date).ok_or_else(|| {
        Error::InvalidInput(format!(
            "split date {date} is after the last date in the panel"
        ))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowDiagnostics {
    pub date: NaiveDate,
    /// `λmax/λmin` of the in-sample sample covariance.
    pub condition_number: f64,
    /// Final training and validation losses per trained network.
    pub training: Vec<(DenoiserMode, f64, f64)>,
    /// Seriation order used for this window, if any.
    pub order: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub strategy: String,
    pub symbols: Vec<String>,
    pub rebalance_dates: Vec<NaiveDate>,
    pub weight_history: Vec<WeightVector>,
    pub dates: Vec<NaiveDate>,
    pub daily_returns: Vec<f64>,
    pub metrics: PerformanceMetrics,
    /// Mean L1 change between consecutive target allocations, ignoring
    /// drift. The headline turnover in `metrics` is measured from the
    /// drifted weights.
    pub target_turnover: f64,
    pub diagnostics: Vec<WindowDiagnostics>,
}

impl BacktestReport {
    pub fn metrics_json(&self) -> Result<String> {
        self.metrics.to_json()
    }

    pub fn weights_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["date".to_string()];
        header.extend(self.symbols.iter().cloned());
        wtr.write_record(&header)?;
        for (date, w) in self.rebalance_dates.iter().zip(&self.weight_history) {
            let mut rec = vec![date.to_string()];
            rec.extend(w.as_slice().iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        finish_csv(wtr)
    }

    pub fn returns_csv(&self) -> Result<String> {
        self.series_csv("return", &self.daily_returns)
    }

    pub fn wealth_csv(&self) -> Result<String> {
        self.series_csv("wealth", &wealth_path(&self.daily_returns))
    }

    fn series_csv(&self, name: &str, values: &[f64]) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["date", name])?;
        for (date, v) in self.dates.iter().zip(values) {
            wtr.write_record([date.to_string(), v.to_string()])?;
        }
        finish_csv(wtr)
    }

    /// Writes `metrics.json`, `weights.csv`, `returns.csv` and `wealth.csv`
    /// into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        fsutil::write_atomic_str(&dir.join("metrics.json"), &self.metrics_json()?)?;
        fsutil::write_atomic_str(&dir.join("weights.csv"), &self.weights_csv()?)?;
        fsutil::write_atomic_str(&dir.join("returns.csv"), &self.returns_csv()?)?;
        fsutil::write_atomic_str(&dir.join("wealth.csv"), &self.wealth_csv()?)
    }
}

/// Holds target weights through the schedule, letting them drift with
/// prices, and assembles the report.
fn simulate_holdings(
    strategy: String,
    returns: &ReturnsPanel,
    schedule: &[HoldPeriod],
    targets: Vec<WeightVector>,
    mode: ReturnMode,
    diagnostics: Vec<WindowDiagnostics>,
) -> Result<BacktestReport> {
    let p = returns.p();
    let mut dates = Vec::new();
    let mut daily = Vec::new();
    let mut drifted_before: Vec<Vec<f64>> = Vec::new();
    let mut held: Vec<f64> = Vec::new();
    for (k, (period, target)) in schedule.iter().zip(&targets).enumerate() {
        if k > 0 {
            drifted_before.push(held.clone());
        }
        held = target.as_slice().to_vec();
        for t in period.start..period.end {
            let asset: Vec<f64> = (0..p)
                .map(|i| mode.convert(returns.returns[(i, t)]))
                .collect();
            let r: f64 = held.iter().zip(&asset).map(|(w, a)| w * a).sum();
            if r > -1.0 {
                for (w, a) in held.iter_mut().zip(&asset) {
                    *w *= (1.0 + a) / (1.0 + r);
                }
            }
            dates.push(returns.dates[t]);
            daily.push(r);
        }
    }
    let legs: Vec<(&[f64], &[f64])> = drifted_before
        .iter()
        .zip(targets.iter().skip(1))
        .map(|(d, t)| (d.as_slice(), t.as_slice()))
        .collect();
    let drift_turnover = turnover_from_legs(&legs);
    let mut metrics = portfolio_metrics(&daily, &targets, PERIODS_PER_YEAR)?;
    metrics.turnover = drift_turnover;
    Ok(BacktestReport {
        strategy,
        symbols: returns.symbols.clone(),
        rebalance_dates: schedule.iter().map(|h| returns.dates[h.start]).collect(),
        target_turnover: turnover(&targets),
        weight_history: targets,
        dates,
        daily_returns: daily,
        metrics,
        diagnostics,
    })
}

fn condition_number(s: &CovarianceMatrix) -> Result<f64> {
    let ev = s.spectral()?.eigenvalues;
    let min = ev[ev.len() - 1];
    Ok(if min > 0.0 {
        ev[0] / min
    } else {
        f64::INFINITY
    })
}

fn permuted_panel(panel: &ReturnsPanel, perm: &Permutation) -> ReturnsPanel {
    ReturnsPanel {
        dates: panel.dates.clone(),
        symbols: perm.apply_vec(&panel.symbols),
        returns: perm.apply_rows(&panel.returns),
    }
}

/// Target weights for the rebalance at row `t`. Only rows before `t` are
/// read.
fn allocate(
    returns: &ReturnsPanel,
    t: usize,
    config: &WalkForwardConfig,
) -> Result<(WeightVector, WindowDiagnostics)> {
    let sample = returns.window_covariance(t - config.t_in, config.t_in)?;
    let condition_number = condition_number(&sample)?;
    let perm = if config.seriation_per_window {
        let (corr, _) = spectral::cov_to_corr(sample.values())?;
        spectral::spectral_seriation(&corr)?
    } else {
        Permutation::identity(returns.p())
    };
    let ordered = CovarianceMatrix::from_psd_construction(
        perm.apply_symmetric(sample.values()),
        Provenance::Sample,
    )?;

    let mut training = Vec::new();
    let mut cov_net: Option<DenoiserWeights> = None;
    let mut eig_net: Option<DenoiserWeights> = None;
    if config.estimator.needs_training() {
        let base = config.denoiser.as_ref().expect("validated");
        let start = t - config.lookback();
        let history = permuted_panel(&returns.slice(start, config.lookback())?, &perm);
        let mut fit = |mode: DenoiserMode| -> Result<DenoiserWeights> {
            let set = build_training_set_rolling(
                &history,
                config.t_in,
                config.train_window_count,
                config.train_stride,
                mode,
            )?;
            let cfg = DenoiserConfig {
                mode,
                input_size: returns.p(),
                ..base.clone()
            };
            let outcome = train(&cfg, &set)?;
            training.push((
                mode,
                *outcome.train_loss.last().expect("nonempty curve"),
                *outcome.val_loss.last().expect("nonempty curve"),
            ));
            Ok(outcome.weights)
        };
        if config.estimator.needs_covariance_net() {
            cov_net = Some(fit(DenoiserMode::Covariance)?);
        }
        if config.estimator.needs_eigenvector_net() {
            eig_net = Some(fit(DenoiserMode::Eigenvectors)?);
        }
    }
    let nets = Denoisers {
        covariance: cov_net.as_ref(),
        eigenvectors: eig_net.as_ref(),
    };
    let est = estimate(config.estimator, &ordered, config.t_in, nets)?;
    let restored = CovarianceMatrix::from_psd_construction(
        perm.inverse().apply_symmetric(est.values()),
        est.provenance(),
    )?;
    let weights = mvp_plus_weights(&restored)?;
    let order = config.seriation_per_window.then(|| perm.order().to_vec());
    Ok((
        weights,
        WindowDiagnostics {
            date: returns.dates[t],
            condition_number,
            training,
            order,
        },
    ))
}

/// Walk-forward backtest of `config.estimator` with long-only minimum
/// variance allocation.
pub fn walk_forward(returns: &ReturnsPanel, config: &WalkForwardConfig) -> Result<BacktestReport> {
    config.validate()?;
    let split = split_index(returns, config.split_date)?;
    if split < config.lookback() {
        return Err(Error::InsufficientHistory {
            required: config.lookback(),
            available: split,
        });
    }
    let schedule = rebalance_schedule(returns.n(), split, config.t_out, config.delta_t)?;
    let mut targets = Vec::with_capacity(schedule.len());
    let mut diagnostics = Vec::with_capacity(schedule.len());
    for (k, period) in schedule.iter().enumerate() {
        info!("rebalance {k} at {}", returns.dates[period.start]);
        let (w, diag) = allocate(returns, period.start, config).map_err(|e| Error::Window {
            window: k,
            source: Box::new(e),
        })?;
        targets.push(w);
        diagnostics.push(diag);
    }
    simulate_holdings(
        config.estimator.name().to_string(),
        returns,
        &schedule,
        targets,
        config.return_mode,
        diagnostics,
    )
}

/// Equal weights, reset at every rebalance of the walk-forward schedule.
pub fn uniform_portfolio(
    returns: &ReturnsPanel,
    config: &WalkForwardConfig,
) -> Result<BacktestReport> {
    if config.t_out < 2 || config.delta_t < 2 {
        return Err(Error::param("t_out and delta_t must be >= 2"));
    }
    let split = split_index(returns, config.split_date)?;
    let schedule = rebalance_schedule(returns.n(), split, config.t_out, config.delta_t)?;
    let targets = vec![WeightVector::uniform(returns.p()); schedule.len()];
    simulate_holdings(
        "uniform".into(),
        returns,
        &schedule,
        targets,
        config.return_mode,
        Vec::new(),
    )
}

/// Everything in `symbol` over the out-of-sample span of the walk-forward
/// schedule, never rebalanced.
pub fn buy_and_hold(
    returns: &ReturnsPanel,
    symbol: &str,
    config: &WalkForwardConfig,
) -> Result<BacktestReport> {
    let idx = returns.symbol_index(symbol)?;
    let split = split_index(returns, config.split_date)?;
    let schedule = rebalance_schedule(returns.n(), split, config.t_out, config.delta_t)?;
    let span = HoldPeriod {
        start: schedule[0].start,
        end: schedule.last().expect("nonempty").end,
    };
    let single = ReturnsPanel {
        dates: returns.dates.clone(),
        symbols: vec![symbol.to_string()],
        returns: DMatrix::from_row_slice(
            1,
            returns.n(),
            returns.returns.row(idx).transpose().as_slice(),
        ),
    };
    let target = WeightVector::new(vec![1.0], true)?;
    simulate_holdings(
        format!("buy-and-hold:{symbol}"),
        &single,
        &[span],
        vec![target],
        config.return_mode,
        Vec::new(),
    )
}
