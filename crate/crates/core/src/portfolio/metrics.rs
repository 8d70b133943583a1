use serde::{Deserialize, Serialize};

use super::WeightVector;
use crate::data::{finish_csv, stdev};
use crate::error::{Error, Result};

/// Summary statistics of a daily return series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceMetrics {
    pub cumulative_return: f64,
    pub annual_return: f64,
    pub annual_volatility: f64,
    pub sharpe: f64,
    pub max_drawdown: f64,
    pub turnover: f64,
    /// Set when the series has zero volatility and the Sharpe ratio was
    /// reported as 0.
    #[serde(skip)]
    pub zero_volatility: bool,
}

pub const METRICS_HEADER: [&str; 6] = [
    "cumulative_return",
    "annual_return",
    "annual_volatility",
    "sharpe",
    "max_drawdown",
    "turnover",
];

impl PerformanceMetrics {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn values(&self) -> [f64; 6] {
        [
            self.cumulative_return,
            self.annual_return,
            self.annual_volatility,
            self.sharpe,
            self.max_drawdown,
            self.turnover,
        ]
    }

    /// Header plus one row, optionally prefixed by a label column.
    pub fn to_csv(&self, label: Option<&str>) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = Vec::new();
        if label.is_some() {
            header.push("strategy");
        }
        header.extend(METRICS_HEADER);
        wtr.write_record(&header)?;
        let mut row: Vec<String> = label.map(|l| vec![l.to_string()]).unwrap_or_default();
        row.extend(self.values().iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
        finish_csv(wtr)
    }
}

/// Wealth path `W_t = Π_{s≤t} (1 + R_s)`, starting from 1 (not included).
pub fn wealth_path(returns: &[f64]) -> Vec<f64> {
    returns
        .iter()
        .scan(1.0, |w, r| {
            *w *= 1.0 + r;
            Some(*w)
        })
        .collect()
}

/// Most negative `W_t / max_{s≤t} W_s − 1`, with the initial wealth of 1
/// counted as a peak.
pub fn max_drawdown(returns: &[f64]) -> f64 {
    let mut peak = 1.0f64;
    let mut worst = 0.0f64;
    for w in wealth_path(returns) {
        peak = peak.max(w);
        worst = worst.min(w / peak - 1.0);
    }
    worst
}

/// Mean L1 change between consecutive target weights, excluding the
/// initial allocation.
pub fn turnover(history: &[WeightVector]) -> f64 {
    let legs: Vec<(&[f64], &[f64])> = history
        .windows(2)
        .map(|w| (w[0].as_slice(), w[1].as_slice()))
        .collect();
    turnover_from_legs(&legs)
}

/// Mean of `‖after − before‖₁` over rebalancing legs.
pub fn turnover_from_legs(legs: &[(&[f64], &[f64])]) -> f64 {
    if legs.is_empty() {
        return 0.0;
    }
    let total: f64 = legs
        .iter()
        .map(|(a, b)| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
        })
        .sum();
    total / legs.len() as f64
}

pub fn portfolio_metrics(
    daily_returns: &[f64],
    weight_history: &[WeightVector],
    periods_per_year: u32,
) -> Result<PerformanceMetrics> {
    if daily_returns.is_empty() {
        return Err(Error::param("metrics need a nonempty return series"));
    }
    if weight_history.is_empty() {
        return Err(Error::param("metrics need at least one allocation"));
    }
    if let Some(r) = daily_returns.iter().find(|r| !r.is_finite() || **r < -1.0) {
        return Err(Error::InvalidInput(format!("invalid simple return {r}")));
    }
    let ppy = periods_per_year as f64;
    let final_wealth = *wealth_path(daily_returns).last().expect("nonempty");
    let geometric = final_wealth.powf(1.0 / daily_returns.len() as f64) - 1.0;
    let annual_return = geometric * ppy;
    let annual_volatility = stdev(daily_returns) * ppy.sqrt();
    let zero_volatility = annual_volatility == 0.0;
    let sharpe = if zero_volatility {
        0.0
    } else {
        annual_return / annual_volatility
    };
    Ok(PerformanceMetrics {
        cumulative_return: final_wealth,
        annual_return,
        annual_volatility,
        sharpe,
        max_drawdown: max_drawdown(daily_returns),
        turnover: turnover(weight_history),
        zero_volatility,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wv(w: &[f64]) -> WeightVector {
        WeightVector::new(w.to_vec(), true).unwrap()
    }

    #[test]
    fn flat_series() {
        let m = portfolio_metrics(&[0.0; 5], &[wv(&[0.5, 0.5]), wv(&[0.5, 0.5])], 365).unwrap();
        assert_eq!(m.cumulative_return, 1.0);
        assert_eq!(m.max_drawdown, 0.0);
        assert_eq!(m.turnover, 0.0);
        assert_eq!(m.sharpe, 0.0);
        assert!(m.zero_volatility);
    }

    #[test]
    fn up_then_down() {
        let m = portfolio_metrics(&[0.10, -0.10], &[wv(&[1.0])], 365).unwrap();
        assert!((m.cumulative_return - 0.99).abs() < 1e-15);
        assert!((m.max_drawdown + 0.10).abs() < 1e-15);
        let g = 0.99f64.sqrt() - 1.0;
        assert!((m.annual_return - 365.0 * g).abs() < 1e-12);
        let sd = (0.02f64).sqrt();
        assert!((m.annual_volatility - sd * 365f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn full_switch_has_turnover_two() {
        let t = turnover(&[wv(&[1.0, 0.0]), wv(&[0.0, 1.0]), wv(&[1.0, 0.0])]);
        assert!((t - 2.0).abs() < 1e-15);
    }

    #[test]
    fn json_key_order() {
        let m = portfolio_metrics(&[0.01, 0.02], &[wv(&[1.0])], 365).unwrap();
        let json = m.to_json().unwrap();
        let positions: Vec<usize> = METRICS_HEADER
            .iter()
            .map(|k| json.find(k).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(!json.contains("zero_volatility"));
    }
}
