//! Cleans a small price table and converts it to log returns.

use covden::data::{clean_panel, log_returns, read_prices, CleanConfig};

const PRICES: &str = "\
date,BTC,ETH,THIN,USDX
2024-03-01,60000,3400,1.0,1.00
2024-03-02,61500,3450,,1.00
2024-03-03,59800,3390,,1.00
2024-03-04,62300,3520,1.2,1.00
2024-03-05,63100,3610,1.1,1.00
";

fn main() -> covden::Result<()> {
    let panel = read_prices(PRICES.as_bytes())?;
    let config = CleanConfig {
        volatility_quantile: 0.0,
        exclusions: vec!["USDX".into()],
        ..CleanConfig::default()
    };
    let (clean, report) = clean_panel(&panel, &config)?;
    println!(
        "dropped for gaps: {:?}, excluded: {:?}",
        report.missing, report.excluded
    );
    print!("{}", log_returns(&clean)?.to_csv()?);
    Ok(())
}
