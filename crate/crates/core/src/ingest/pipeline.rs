use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::csvio::BidBook;
use super::fundamentals::{load_fundamentals, RawForecast};
use super::merit::{slope_table, BidCurve, Side};
use super::trades::{aggregate_trades, AggregateReport, SpotTable, TimeBasis, Trade};
use super::Market;
use crate::features::calendar::HOURS;
use crate::Result;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub trades: AggregateReport,
    pub slopes_imputed: usize,
    pub n_days: usize,
}

/// Turns raw trades, spot prices, forecasts and auction bids into a market.
pub fn build_market(
    trades: &[Trade],
    spot: &SpotTable,
    forecasts: &[RawForecast],
    bids: &BidBook,
    basis: TimeBasis,
    slope_window: f64,
) -> Result<(Market, IngestReport)> {
    let (grid, trade_report) = aggregate_trades(trades, spot, basis)?;
    let hourly = load_fundamentals(forecasts, basis)?.window(grid.start, grid.n_days)?;
    let mut curves = Vec::with_capacity(grid.n_days);
    for d in 0..grid.n_days {
        let date = grid.start + Duration::days(d as i64);
        let mut day = Vec::with_capacity(HOURS);
        for h in 0..HOURS as u8 {
            let bids = bids.get(&(date, h)).map(Vec::as_slice).unwrap_or(&[]);
            let pick = |side: Side| -> Vec<(f64, f64)> {
                bids.iter()
                    .filter(|b| b.0 == side)
                    .map(|b| (b.1, b.2))
                    .collect()
            };
            day.push((
                BidCurve::from_bids(Side::Supply, &pick(Side::Supply))?,
                BidCurve::from_bids(Side::Demand, &pick(Side::Demand))?,
            ));
        }
        curves.push(day);
    }
    let (table, imputed) = slope_table(&curves, slope_window)?;
    let mo: Vec<f64> = table.iter().flatten().map(|m| m.slope).collect();
    let fundamentals = hourly.with_slopes(&mo)?;
    let n_days = grid.n_days;
    let market = Market::new(grid, fundamentals)?;
    Ok((
        market,
        IngestReport {
            trades: trade_report,
            slopes_imputed: imputed,
            n_days,
        },
    ))
}
