//! Raw-data ingestion: trade aggregation, fundamentals, auction curves, the
//! on-disk store and the synthetic market generator.

pub mod csvio;
mod fundamentals;
mod grid;
pub mod merit;
mod pipeline;
pub mod store;
pub mod synth;
mod trades;

pub use fundamentals::{load_fundamentals, HourlyForecasts, RawForecast};
pub use grid::{FundamentalFrame, Market, TradeGrid, FUNDAMENTAL_NAMES};
pub use merit::{merit_order_slope, BidCurve, MeritOrder, Side};
pub use pipeline::{build_market, IngestReport};
pub use synth::{
    synth_market, truth_model, write_synth, RawMarket, SynthConfig, SynthOutput, SynthTruth,
};
pub use trades::{
    aggregate_trades, place_trade, session_open, AggregateReport, Placement, SpotTable, TimeBasis,
    Trade,
};
