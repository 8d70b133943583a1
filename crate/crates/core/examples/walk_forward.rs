//! Walk-forward backtest on a synthetic factor market, against the
//! equal-weight benchmark.

use chrono::NaiveDate;
use covden::backtest::{uniform_portfolio, walk_forward, WalkForwardConfig};
use covden::data::ReturnsPanel;
use covden::rng::{gaussian_matrix, stream_rng};
use covden::EstimatorId;
use nalgebra::DMatrix;

fn main() -> covden::Result<()> {
    let (p, n) = (12, 700);
    let mut rng = stream_rng(5, 0);
    let market = gaussian_matrix(1, n, &mut rng) * 0.02;
    let idio = gaussian_matrix(p, n, &mut rng);
    let returns = DMatrix::from_fn(p, n, |i, t| {
        (0.5 + 0.1 * i as f64) * market[(0, t)] + 0.01 * (1 + i % 3) as f64 * idio[(i, t)]
    });
    let start = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
    let symbols = (0..p).map(|i| format!("ASSET{i:02}")).collect();
    let panel = ReturnsPanel::new(start.iter_days().take(n).collect(), symbols, returns)?;

    let split = start + chrono::Days::new(200);
    let bench = uniform_portfolio(&panel, &WalkForwardConfig::new(split, EstimatorId::Naive))?;
    print!("{}", bench.metrics.to_csv(Some("uniform"))?);
    for id in [EstimatorId::Naive, EstimatorId::Lp, EstimatorId::TwoStepLp] {
        let report = walk_forward(&panel, &WalkForwardConfig::new(split, id))?;
        let csv = report.metrics.to_csv(Some(id.name()))?;
        println!("{}", csv.lines().nth(1).unwrap_or_default());
    }
    Ok(())
}
