//! CSV readers and writers for raw inputs.
//!
//! * trades: `exec_time,delivery_day,delivery_hour,price,volume`
//! * spot: `delivery_day,delivery_hour,price`
//! * forecasts: `timestamp,wind_on,wind_off,solar,load` (quarter-hourly)
//! * bids: `delivery_day,delivery_hour,side,price,volume` (one row per bid step)

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::fundamentals::RawForecast;
use super::merit::Side;
use super::trades::{SpotTable, Trade};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotRecord {
    pub delivery_day: NaiveDate,
    pub delivery_hour: u8,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidRecord {
    pub delivery_day: NaiveDate,
    pub delivery_hour: u8,
    pub side: Side,
    pub price: f64,
    pub volume: f64,
}

fn read_all<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::schema(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::schema(format!("{}: {e}", path.display())))
}

fn write_all<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::schema(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trades(path: &Path) -> Result<Vec<Trade>> {
    read_all(path)
}

pub fn write_trades(path: &Path, trades: &[Trade]) -> Result<()> {
    write_all(path, trades)
}

pub fn read_spot(path: &Path) -> Result<SpotTable> {
    let rows: Vec<SpotRecord> = read_all(path)?;
    let mut out = SpotTable::new();
    for r in rows {
        if out
            .insert((r.delivery_day, r.delivery_hour), r.price)
            .is_some()
        {
            return Err(Error::data(format!(
                "duplicate spot price for {} hour {}",
                r.delivery_day, r.delivery_hour
            )));
        }
    }
    Ok(out)
}

pub fn write_spot(path: &Path, spot: &SpotTable) -> Result<()> {
    let rows: Vec<SpotRecord> = spot
        .iter()
        .map(|(&(delivery_day, delivery_hour), &price)| SpotRecord {
            delivery_day,
            delivery_hour,
            price,
        })
        .collect();
    write_all(path, &rows)
}

pub fn read_forecasts(path: &Path) -> Result<Vec<RawForecast>> {
    read_all(path)
}

pub fn write_forecasts(path: &Path, rows: &[RawForecast]) -> Result<()> {
    write_all(path, rows)
}

pub type BidBook = BTreeMap<(NaiveDate, u8), Vec<(Side, f64, f64)>>;

pub fn read_bids(path: &Path) -> Result<BidBook> {
    let rows: Vec<BidRecord> = read_all(path)?;
    let mut out = BidBook::new();
    for r in rows {
        out.entry((r.delivery_day, r.delivery_hour))
            .or_default()
            .push((r.side, r.price, r.volume));
    }
    Ok(out)
}

pub fn write_bids(path: &Path, book: &BidBook) -> Result<()> {
    let rows: Vec<BidRecord> = book
        .iter()
        .flat_map(|(&(delivery_day, delivery_hour), bids)| {
            bids.iter().map(move |&(side, price, volume)| BidRecord {
                delivery_day,
                delivery_hour,
                side,
                price,
                volume,
            })
        })
        .collect();
    write_all(path, &rows)
}
