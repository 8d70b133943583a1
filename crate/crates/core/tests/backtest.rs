use approx::assert_abs_diff_eq;
use chrono::NaiveDate;
use covden::backtest::{
    buy_and_hold, uniform_portfolio, walk_forward, ReturnMode, WalkForwardConfig,
};
use covden::data::ReturnsPanel;
use covden::portfolio::mvp_plus_weights;
use covden::rng::{gaussian_matrix, stream_rng};
use covden::{Error, EstimatorId};
use nalgebra::DMatrix;

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2022, 1, 1).unwrap()
}

fn panel(returns: DMatrix<f64>) -> ReturnsPanel {
    let dates = start().iter_days().take(returns.ncols()).collect();
    let symbols = (0..returns.nrows()).map(|i| format!("A{i}")).collect();
    ReturnsPanel::new(dates, symbols, returns).unwrap()
}

fn random_panel(p: usize, n: usize, seed: u64) -> ReturnsPanel {
    let scales = DMatrix::from_fn(p, 1, |i, _| 0.01 * (1.0 + i as f64 * 0.3));
    let z = gaussian_matrix(p, n, &mut stream_rng(seed, 0));
    panel(DMatrix::from_fn(p, n, |i, t| z[(i, t)] * scales[(i, 0)]))
}

fn short_config(split_row: usize) -> WalkForwardConfig {
    let mut c = WalkForwardConfig::new(
        start() + chrono::Days::new(split_row as u64),
        EstimatorId::Naive,
    );
    c.t_in = 30;
    c.t_out = 30;
    c.delta_t = 30;
    c
}

#[test]
fn schedule_and_no_look_ahead() {
    let data = random_panel(4, 210, 1);
    let config = short_config(30);
    let report = walk_forward(&data, &config).unwrap();
    assert_eq!(report.rebalance_dates.len(), 6);
    assert_eq!(report.daily_returns.len(), 180);
    assert_eq!(report.dates[0], data.dates[30]);
    assert!(report.metrics.turnover > 0.0);

    // Scrambling everything from the fourth rebalance on leaves the first
    // four allocations untouched.
    let mut future = data.clone();
    for t in 120..210 {
        for i in 0..4 {
            future.returns[(i, t)] = 0.05 * ((t * 7 + i) % 5) as f64 - 0.1;
        }
    }
    let other = walk_forward(&future, &config).unwrap();
    assert_eq!(report.weight_history[..4], other.weight_history[..4]);
    assert_ne!(report.weight_history[4], other.weight_history[4]);
}

#[test]
fn naive_weights_are_long_only_mvp_of_window() {
    let data = random_panel(6, 150, 2);
    for seriation in [false, true] {
        let config = WalkForwardConfig {
            seriation_per_window: seriation,
            ..short_config(40)
        };
        let report = walk_forward(&data, &config).unwrap();
        for (k, w) in report.weight_history.iter().enumerate() {
            let t = 40 + 30 * k;
            let expected = mvp_plus_weights(&data.window_covariance(t - 30, 30).unwrap()).unwrap();
            for (a, b) in w.as_slice().iter().zip(expected.as_slice()) {
                assert!(
                    (a - b).abs() < 1e-9,
                    "window {k}, seriation {seriation}: {a} vs {b}"
                );
            }
        }
        assert_eq!(report.diagnostics[0].order.is_some(), seriation);
    }
}

#[test]
fn single_asset_holds_everything() {
    let data = random_panel(1, 120, 3);
    let report = walk_forward(&data, &short_config(30)).unwrap();
    assert!(report.weight_history.iter().all(|w| w.as_slice() == [1.0]));
    assert_eq!(report.metrics.turnover, 0.0);
    for (k, r) in report.daily_returns.iter().enumerate() {
        assert_abs_diff_eq!(*r, data.returns[(0, 30 + k)].exp_m1(), epsilon = 1e-15);
    }
    let bh = buy_and_hold(&data, "A0", &short_config(30)).unwrap();
    assert_eq!(bh.daily_returns, report.daily_returns);
    let uni = uniform_portfolio(&data, &short_config(30)).unwrap();
    assert_eq!(uni.daily_returns, bh.daily_returns);
}

#[test]
fn identical_assets_match_either_one() {
    let row = gaussian_matrix(1, 100, &mut stream_rng(4, 0)) * 0.01;
    let data = panel(DMatrix::from_fn(3, 100, |_, t| row[(0, t)]));
    let uni = uniform_portfolio(&data, &short_config(20)).unwrap();
    let bh = buy_and_hold(&data, "A1", &short_config(20)).unwrap();
    for (a, b) in uni.daily_returns.iter().zip(&bh.daily_returns) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
    }
}

#[test]
fn buy_and_hold_wealth() {
    let flat = panel(DMatrix::zeros(2, 90));
    let bh = buy_and_hold(&flat, "A0", &short_config(30)).unwrap();
    assert_eq!(bh.metrics.cumulative_return, 1.0);
    assert_eq!(bh.weight_history.len(), 1);

    // Log returns summing to ln 1.4 over the held span.
    let step = 1.4f64.ln() / 60.0;
    let rising = panel(DMatrix::from_fn(
        1,
        90,
        |_, t| if t >= 30 { step } else { -0.3 },
    ));
    let bh = buy_and_hold(&rising, "A0", &short_config(30)).unwrap();
    assert_abs_diff_eq!(bh.metrics.cumulative_return, 1.4, epsilon = 1e-12);
    assert!(buy_and_hold(&rising, "ZZZ", &short_config(30)).is_err());
}

#[test]
fn log_mode_uses_raw_returns() {
    let data = random_panel(3, 90, 5);
    let config = WalkForwardConfig {
        return_mode: ReturnMode::Log,
        ..short_config(30)
    };
    let uni = uniform_portfolio(&data, &config).unwrap();
    // First day of a hold: weights are exactly uniform.
    let expected: f64 = (0..3).map(|i| data.returns[(i, 30)]).sum::<f64>() / 3.0;
    assert_abs_diff_eq!(uni.daily_returns[0], expected, epsilon = 1e-15);
    assert_eq!("log".parse::<ReturnMode>().unwrap(), ReturnMode::Log);
    assert!("arith".parse::<ReturnMode>().is_err());
}

#[test]
fn configuration_errors() {
    let data = random_panel(3, 90, 6);
    assert!(matches!(
        walk_forward(&data, &short_config(10)),
        Err(Error::InsufficientHistory { .. })
    ));
    let learned = WalkForwardConfig {
        estimator: EstimatorId::Cnn,
        ..short_config(30)
    };
    assert!(walk_forward(&data, &learned).is_err());
    let late = WalkForwardConfig {
        split_date: start() + chrono::Days::new(500),
        ..short_config(30)
    };
    assert!(walk_forward(&data, &late).is_err());
}

#[test]
fn report_files_are_written() {
    let data = random_panel(3, 90, 7);
    let report = walk_forward(&data, &short_config(30)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    report.write(dir.path()).unwrap();
    for name in ["metrics.json", "weights.csv", "returns.csv", "wealth.csv"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap())
            .unwrap();
    assert!(metrics.get("sharpe").is_some());
    let weights = std::fs::read_to_string(dir.path().join("weights.csv")).unwrap();
    assert_eq!(weights.lines().count(), 1 + report.rebalance_dates.len());
}
