//! Price CSV ingestion, the cleaning pipeline and log-return panels.
//!
//! CSV layout: header `date,SYM1,SYM2,...`, one row per ISO-8601 date, an
//! empty cell marks a missing price. Returns panels use the same layout.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::covariance::{CovarianceMatrix, Provenance};
use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub dates: Vec<NaiveDate>,
    pub symbols: Vec<String>,
    /// `prices[t][i]` is the price of symbol `i` on date `t`.
    pub prices: Vec<Vec<Option<f64>>>,
}

/// Log returns, one row per symbol and one column per date.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    pub dates: Vec<NaiveDate>,
    pub symbols: Vec<String>,
    pub returns: DMatrix<f64>,
}

impl PricePanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        symbols: Vec<String>,
        prices: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if dates.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a price panel needs at least 2 dates, got {}",
                dates.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "dates must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if prices.len() != dates.len() || prices.iter().any(|row| row.len() != symbols.len()) {
            return Err(Error::InvalidInput(
                "price matrix does not match dates x symbols".into(),
            ));
        }
        Ok(PricePanel {
            dates,
            symbols,
            prices,
        })
    }

    pub fn column(&self, i: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        self.prices.iter().map(move |row| row[i])
    }

    fn keep_symbols(&self, keep: &[usize]) -> PricePanel {
        PricePanel {
            dates: self.dates.clone(),
            symbols: keep.iter().map(|&i| self.symbols[i].clone()).collect(),
            prices: self
                .prices
                .iter()
                .map(|row| keep.iter().map(|&i| row[i]).collect())
                .collect(),
        }
    }
}

fn parse_date(raw: &str, row: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d").map_err(|e| Error::Parse {
        row,
        col: 1,
        msg: format!("malformed date `{raw}`: {e}"),
    })
}

/// Data records tagged with their 1-based line number.
type NumberedRecords = Vec<(usize, csv::StringRecord)>;

fn read_table(reader: impl Read) -> Result<(Vec<String>, NumberedRecords)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::to_ascii_lowercase).as_deref() != Some("date") {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            msg: "first column must be `date`".into(),
        });
    }
    let symbols: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut seen = HashSet::new();
    for (i, s) in symbols.iter().enumerate() {
        if s.is_empty() || !seen.insert(s.as_str()) {
            return Err(Error::Parse {
                row: 1,
                col: i + 2,
                msg: format!("empty or duplicate symbol `{s}`"),
            });
        }
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            col: 0,
            msg: e.to_string(),
        })?;
        if rec.len() != symbols.len() + 1 {
            return Err(Error::Parse {
                row,
                col: rec.len(),
                msg: format!("expected {} fields, found {}", symbols.len() + 1, rec.len()),
            });
        }
        rows.push((row, rec));
    }
    Ok((symbols, rows))
}

fn check_dates(dates: &[(usize, NaiveDate)]) -> Result<()> {
    for w in dates.windows(2) {
        if w[1].1 == w[0].1 {
            return Err(Error::Parse {
                row: w[1].0,
                col: 1,
                msg: format!("duplicate date {}", w[1].1),
            });
        }
        if w[1].1 < w[0].1 {
            return Err(Error::Parse {
                row: w[1].0,
                col: 1,
                msg: format!("date {} out of order", w[1].1),
            });
        }
    }
    Ok(())
}

pub fn read_prices(reader: impl Read) -> Result<PricePanel> {
    let (symbols, rows) = read_table(reader)?;
    let mut dates = Vec::with_capacity(rows.len());
    let mut prices = Vec::with_capacity(rows.len());
    for (row, rec) in &rows {
        dates.push((*row, parse_date(&rec[0], *row)?));
        let mut values = Vec::with_capacity(symbols.len());
        for (i, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() {
                values.push(None);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: *row,
                col: i + 2,
                msg: format!("malformed price `{cell}`"),
            })?;
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Parse {
                    row: *row,
                    col: i + 2,
                    msg: format!("price must be positive, got `{cell}`"),
                });
            }
            values.push(Some(v));
        }
        prices.push(values);
    }
    check_dates(&dates)?;
    PricePanel::new(dates.into_iter().map(|(_, d)| d).collect(), symbols, prices)
}

pub fn load_prices(path: &Path) -> Result<PricePanel> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_prices(file)
}

pub fn prices_to_csv(panel: &PricePanel) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["date".to_string()];
    header.extend(panel.symbols.iter().cloned());
    wtr.write_record(&header)?;
    for (date, row) in panel.dates.iter().zip(&panel.prices) {
        let mut rec = vec![date.to_string()];
        rec.extend(
            row.iter()
                .map(|v| v.map(|x| x.to_string()).unwrap_or_default()),
        );
        wtr.write_record(&rec)?;
    }
    finish_csv(wtr)
}

pub fn write_prices(panel: &PricePanel, path: &Path) -> Result<()> {
    fsutil::write_atomic_str(path, &prices_to_csv(panel)?)
}

pub(crate) fn finish_csv(wtr: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = wtr
        .into_inner()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Parameters of [`clean_panel`].
#[derive(Debug, Clone, PartialEq)]
pub struct CleanConfig {
    pub missing_threshold: f64,
    pub volatility_quantile: f64,
    pub exclusions: Vec<String>,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            missing_threshold: 0.01,
            volatility_quantile: 0.10,
            exclusions: Vec::new(),
        }
    }
}

/// Which symbols each rule removed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CleanReport {
    pub missing: Vec<String>,
    pub leading_gap: Vec<String>,
    pub volatility: Vec<String>,
    pub excluded: Vec<String>,
    /// Exclusion entries that matched no symbol.
    pub unmatched_exclusions: Vec<String>,
}

/// Sample standard deviation (n − 1); zero for fewer than two values.
pub fn stdev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Missing-value filter, forward fill, volatility filter, exclusion list.
pub fn clean_panel(panel: &PricePanel, config: &CleanConfig) -> Result<(PricePanel, CleanReport)> {
    for (name, v) in [
        ("missing threshold", config.missing_threshold),
        ("volatility quantile", config.volatility_quantile),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::param(format!("{name} must lie in [0,1], got {v}")));
        }
    }
    let mut report = CleanReport::default();
    let t = panel.dates.len() as f64;

    let mut keep = Vec::new();
    for (i, sym) in panel.symbols.iter().enumerate() {
        let missing = panel.column(i).filter(Option::is_none).count() as f64;
        if missing / t > config.missing_threshold {
            report.missing.push(sym.clone());
        } else {
            keep.push(i);
        }
    }
    let mut current = panel.keep_symbols(&keep);

    // Forward fill; a symbol without a first observation cannot be filled.
    let mut keep = Vec::new();
    for i in 0..current.symbols.len() {
        let mut last = None;
        let mut leading = false;
        for row in current.prices.iter_mut() {
            match row[i] {
                Some(v) => last = Some(v),
                None => match last {
                    Some(v) => row[i] = Some(v),
                    None => leading = true,
                },
            }
        }
        if leading {
            report.leading_gap.push(current.symbols[i].clone());
        } else {
            keep.push(i);
        }
    }
    current = current.keep_symbols(&keep);

    let count = current.symbols.len();
    let n_drop = ((count as f64 * config.volatility_quantile) - 1e-9)
        .ceil()
        .max(0.0) as usize;
    if n_drop > 0 {
        let mut ranked: Vec<(f64, usize)> = (0..count)
            .map(|i| {
                let prices: Vec<f64> = current.column(i).map(|v| v.expect("filled")).collect();
                let rets: Vec<f64> = prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
                (stdev(&rets), i)
            })
            .collect();
        ranked.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then_with(|| current.symbols[b.1].cmp(&current.symbols[a.1]))
        });
        let dropped: HashSet<usize> = ranked.iter().take(n_drop).map(|&(_, i)| i).collect();
        report.volatility = ranked
            .iter()
            .take(n_drop)
            .map(|&(_, i)| current.symbols[i].clone())
            .collect();
        let keep: Vec<usize> = (0..count).filter(|i| !dropped.contains(i)).collect();
        current = current.keep_symbols(&keep);
    }

    let excluded: HashSet<&str> = config.exclusions.iter().map(String::as_str).collect();
    for name in &config.exclusions {
        if !current.symbols.iter().any(|s| s == name) {
            log::warn!("exclusion `{name}` matches no remaining symbol");
            report.unmatched_exclusions.push(name.clone());
        }
    }
    let keep: Vec<usize> = (0..current.symbols.len())
        .filter(|&i| {
            let hit = excluded.contains(current.symbols[i].as_str());
            if hit {
                report.excluded.push(current.symbols[i].clone());
            }
            !hit
        })
        .collect();
    current = current.keep_symbols(&keep);

    if current.symbols.is_empty() {
        return Err(Error::EmptyPanel);
    }
    Ok((current, report))
}

/// `r_t = ln(s_t / s_{t−1})` for a fully filled panel.
pub fn log_returns(panel: &PricePanel) -> Result<ReturnsPanel> {
    let p = panel.symbols.len();
    let n = panel.dates.len() - 1;
    let mut returns = DMatrix::zeros(p, n);
    for t in 0..n {
        for i in 0..p {
            match (panel.prices[t][i], panel.prices[t + 1][i]) {
                (Some(a), Some(b)) => returns[(i, t)] = (b / a).ln(),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "missing price for `{}` around {}; clean the panel first",
                        panel.symbols[i],
                        panel.dates[t + 1]
                    )))
                }
            }
        }
    }
    ReturnsPanel::new(panel.dates[1..].to_vec(), panel.symbols.clone(), returns)
}

/// Newline-delimited symbols; blank lines and `#` comments are skipped.
pub fn parse_exclusions(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn load_exclusions(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_exclusions(&text))
}

impl ReturnsPanel {
    pub fn new(dates: Vec<NaiveDate>, symbols: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if returns.nrows() != symbols.len() || returns.ncols() != dates.len() {
            return Err(Error::InvalidInput(format!(
                "returns matrix is {}x{} for {} symbols and {} dates",
                returns.nrows(),
                returns.ncols(),
                symbols.len(),
                dates.len()
            )));
        }
        if returns.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("returns must be finite".into()));
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "dates must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(ReturnsPanel {
            dates,
            symbols,
            returns,
        })
    }

    /// Number of symbols.
    pub fn p(&self) -> usize {
        self.returns.nrows()
    }

    /// Number of dates.
    pub fn n(&self) -> usize {
        self.returns.ncols()
    }

    pub fn symbol_index(&self, symbol: &str) -> Result<usize> {
        self.symbols
            .iter()
            .position(|s| s == symbol)
            .ok_or_else(|| Error::UnknownSymbol(symbol.to_string()))
    }

    /// First row whose date is on or after `date`.
    pub fn index_of_date(&self, date: NaiveDate) -> Option<usize> {
        self.dates.iter().position(|d| *d >= date)
    }

    /// Columns `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> Result<ReturnsPanel> {
        if start + len > self.n() {
            return Err(Error::InsufficientHistory {
                required: start + len,
                available: self.n(),
            });
        }
        Ok(ReturnsPanel {
            dates: self.dates[start..start + len].to_vec(),
            symbols: self.symbols.clone(),
            returns: self.returns.columns(start, len).into_owned(),
        })
    }

    /// Demeaned sample covariance of columns `start..start + len`, divided
    /// by `len − 1`.
    pub fn window_covariance(&self, start: usize, len: usize) -> Result<CovarianceMatrix> {
        if len < 2 {
            return Err(Error::param(format!(
                "covariance window needs at least 2 rows, got {len}"
            )));
        }
        if start + len > self.n() {
            return Err(Error::InsufficientHistory {
                required: start + len,
                available: self.n(),
            });
        }
        let mut window = self.returns.columns(start, len).into_owned();
        for mut row in window.row_iter_mut() {
            let mean = row.sum() / len as f64;
            row.add_scalar_mut(-mean);
        }
        let cov = (&window * window.transpose()) / (len - 1) as f64;
        if let Some(i) = cov.diagonal().iter().position(|&v| !(v > 0.0)) {
            return Err(Error::DegenerateVariance(self.symbols[i].clone()));
        }
        CovarianceMatrix::from_psd_construction(cov, Provenance::Sample)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["date".to_string()];
        header.extend(self.symbols.iter().cloned());
        wtr.write_record(&header)?;
        for (t, date) in self.dates.iter().enumerate() {
            let mut rec = vec![date.to_string()];
            rec.extend((0..self.p()).map(|i| self.returns[(i, t)].to_string()));
            wtr.write_record(&rec)?;
        }
        finish_csv(wtr)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic_str(path, &self.to_csv()?)
    }

    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let (symbols, rows) = read_table(reader)?;
        let mut dates = Vec::with_capacity(rows.len());
        let mut returns = DMatrix::zeros(symbols.len(), rows.len());
        for (t, (row, rec)) in rows.iter().enumerate() {
            dates.push((*row, parse_date(&rec[0], *row)?));
            for (i, cell) in rec.iter().skip(1).enumerate() {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row: *row,
                    col: i + 2,
                    msg: format!("malformed return `{cell}`"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row: *row,
                        col: i + 2,
                        msg: "return must be finite".into(),
                    });
                }
                returns[(i, t)] = v;
            }
        }
        check_dates(&dates)?;
        ReturnsPanel::new(
            dates.into_iter().map(|(_, d)| d).collect(),
            symbols,
            returns,
        )
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn parses_small_file() {
        let panel = read_prices("date,BTC\n2024-01-01,100\n2024-01-02,110\n".as_bytes()).unwrap();
        assert_eq!(panel.dates, vec![d("2024-01-01"), d("2024-01-02")]);
        assert_eq!(panel.prices[1][0], Some(110.0));
    }

    #[test]
    fn rejects_bad_cells() {
        let zero = read_prices("date,A\n2024-01-01,1\n2024-01-02,0\n".as_bytes());
        assert!(matches!(zero, Err(Error::Parse { row: 3, col: 2, .. })));
        let nan = read_prices("date,A\n2024-01-01,1\n2024-01-02,NaN\n".as_bytes());
        assert!(matches!(nan, Err(Error::Parse { row: 3, col: 2, .. })));
        let dup = read_prices("date,A\n2024-01-01,1\n2024-01-01,2\n".as_bytes());
        assert!(matches!(dup, Err(Error::Parse { row: 3, col: 1, .. })));
        let date = read_prices("date,A\n2024-13-01,1\n2024-01-02,2\n".as_bytes());
        assert!(matches!(date, Err(Error::Parse { row: 2, col: 1, .. })));
        let dup_sym = read_prices("date,A,A\n2024-01-01,1,1\n2024-01-02,2,2\n".as_bytes());
        assert!(matches!(dup_sym, Err(Error::Parse { row: 1, col: 3, .. })));
    }

    #[test]
    fn returns_by_hand() {
        let panel = read_prices(
            "date,A,B,C\n2024-01-01,100,5,1\n2024-01-02,110,5,2\n2024-01-03,99,5,4\n".as_bytes(),
        )
        .unwrap();
        let r = log_returns(&panel).unwrap();
        assert!((r.returns[(0, 0)] - 1.1f64.ln()).abs() < 1e-15);
        assert!((r.returns[(0, 1)] - 0.9f64.ln()).abs() < 1e-15);
        assert_eq!(r.returns[(1, 0)], 0.0);
        assert!((r.returns[(2, 1)] - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(r.n(), 2);
    }

    #[test]
    fn returns_need_filled_panel() {
        let panel = read_prices("date,A\n2024-01-01,1\n2024-01-02,\n".as_bytes()).unwrap();
        assert!(log_returns(&panel).is_err());
    }

    #[test]
    fn exclusion_file_format() {
        assert_eq!(
            parse_exclusions("USDT\n\n# pegged\nEURS  \n"),
            vec!["USDT", "EURS"]
        );
    }

    #[test]
    fn constant_window_is_degenerate() {
        let r = ReturnsPanel::new(
            (1..=5).map(|k| d(&format!("2024-01-0{k}"))).collect(),
            vec!["A".into()],
            DMatrix::zeros(1, 5),
        )
        .unwrap();
        assert!(matches!(
            r.window_covariance(0, 5),
            Err(Error::DegenerateVariance(_))
        ));
    }
}
