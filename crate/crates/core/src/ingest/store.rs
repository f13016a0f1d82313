//! On-disk market store: a `manifest.json` plus one grid file and one
//! fundamentals file per calendar month, each holding flat column arrays.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{FundamentalFrame, Market, TradeGrid};
use crate::features::calendar::{HOURS, SLOTS_PER_DAY};
use crate::{Error, Result};

pub const STORE_FORMAT: &str = "idsim-market-store";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthEntry {
    pub month: String,
    pub start: NaiveDate,
    pub n_days: usize,
    pub grid: String,
    pub fundamentals: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub format: String,
    pub version: u32,
    pub start: NaiveDate,
    pub n_days: usize,
    pub months: Vec<MonthEntry>,
}

#[derive(Serialize, Deserialize)]
struct GridFile {
    start: NaiveDate,
    n_days: usize,
    spot: Vec<f64>,
    price: Vec<f64>,
    change: Vec<f64>,
    traded: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct FundamentalsFile {
    start: NaiveDate,
    n_days: usize,
    wind_on: Vec<f64>,
    wind_off: Vec<f64>,
    solar: Vec<f64>,
    load: Vec<f64>,
    mo: Vec<f64>,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(format!("{}: {e}", path.display())))
}

/// Writes `market` into `dir`, replacing any previous store there.
pub fn write_store(dir: &Path, market: &Market) -> Result<StoreManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let g = &market.grid;
    let mut months = Vec::new();
    let mut d0 = 0;
    while d0 < g.n_days {
        let first = g.date(d0);
        let mut d1 = d0;
        while d1 < g.n_days
            && g.date(d1).month() == first.month()
            && g.date(d1).year() == first.year()
        {
            d1 += 1;
        }
        let tag = format!("{:04}-{:02}", first.year(), first.month());
        let part = market.slice(d0, d1);
        let gname = format!("grid-{tag}.json");
        let fname = format!("fundamentals-{tag}.json");
        write_json(
            &dir.join(&gname),
            &GridFile {
                start: part.grid.start,
                n_days: part.grid.n_days,
                spot: part.grid.spot.clone(),
                price: part.grid.price.clone(),
                change: part.grid.change.clone(),
                traded: part.grid.traded.iter().map(|&b| u8::from(b)).collect(),
            },
        )?;
        let col = |k: usize| {
            part.fundamentals
                .values
                .iter()
                .map(|r| r[k])
                .collect::<Vec<f64>>()
        };
        write_json(
            &dir.join(&fname),
            &FundamentalsFile {
                start: part.fundamentals.start,
                n_days: part.fundamentals.n_days,
                wind_on: col(0),
                wind_off: col(1),
                solar: col(2),
                load: col(3),
                mo: col(4),
            },
        )?;
        months.push(MonthEntry {
            month: tag,
            start: first,
            n_days: d1 - d0,
            grid: gname,
            fundamentals: fname,
        });
        d0 = d1;
    }
    let manifest = StoreManifest {
        format: STORE_FORMAT.into(),
        version: STORE_VERSION,
        start: g.start,
        n_days: g.n_days,
        months,
    };
    write_json_pretty(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<StoreManifest> {
    let m: StoreManifest = read_json(&dir.join("manifest.json"))?;
    if m.format != STORE_FORMAT || m.version != STORE_VERSION {
        return Err(Error::schema(format!(
            "{} is not a version {STORE_VERSION} market store",
            dir.display()
        )));
    }
    Ok(m)
}

/// Reads the whole store.
pub fn read_store(dir: &Path) -> Result<Market> {
    let m = read_manifest(dir)?;
    read_months(dir, &m, &m.months)
}

/// Reads the months overlapping `[from, to]` and trims to exactly those days.
pub fn read_store_range(dir: &Path, from: NaiveDate, to: NaiveDate) -> Result<Market> {
    let m = read_manifest(dir)?;
    let last = m.start + Duration::days(m.n_days as i64 - 1);
    if from < m.start || to > last || from > to {
        return Err(Error::data(format!(
            "store covers {} to {last}, requested {from} to {to}",
            m.start
        )));
    }
    let months: Vec<MonthEntry> = m
        .months
        .iter()
        .filter(|e| e.start <= to && e.start + Duration::days(e.n_days as i64 - 1) >= from)
        .cloned()
        .collect();
    let market = read_months(dir, &m, &months)?;
    let d0 = (from - market.grid.start).num_days() as usize;
    let d1 = (to - market.grid.start).num_days() as usize + 1;
    Ok(market.slice(d0, d1))
}

fn read_months(dir: &Path, manifest: &StoreManifest, months: &[MonthEntry]) -> Result<Market> {
    let mut spot = Vec::new();
    let mut change = Vec::new();
    let mut price = Vec::new();
    let mut traded = Vec::new();
    let mut fvals = Vec::new();
    let mut start = None;
    let mut expected_next: Option<NaiveDate> = None;
    for e in months {
        if let Some(n) = expected_next {
            if e.start != n {
                return Err(Error::data(format!(
                    "store month {} does not follow the previous month",
                    e.month
                )));
            }
        }
        expected_next = Some(e.start + Duration::days(e.n_days as i64));
        start.get_or_insert(e.start);
        let gp: PathBuf = dir.join(&e.grid);
        let g: GridFile = read_json(&gp)?;
        let f: FundamentalsFile = read_json(&dir.join(&e.fundamentals))?;
        let nb = e.n_days * SLOTS_PER_DAY;
        let nh = e.n_days * HOURS;
        if g.start != e.start
            || g.n_days != e.n_days
            || g.spot.len() != nh
            || g.change.len() != nb
            || g.price.len() != nb
            || g.traded.len() != nb
            || f.n_days != e.n_days
            || [&f.wind_on, &f.wind_off, &f.solar, &f.load, &f.mo]
                .iter()
                .any(|c| c.len() != nh)
        {
            return Err(Error::schema(format!(
                "store month {} has inconsistent column lengths",
                e.month
            )));
        }
        spot.extend(g.spot);
        change.extend(g.change);
        price.extend(g.price);
        traded.extend(g.traded.into_iter().map(|b| b != 0));
        fvals
            .extend((0..nh).map(|i| [f.wind_on[i], f.wind_off[i], f.solar[i], f.load[i], f.mo[i]]));
    }
    let start = start.unwrap_or(manifest.start);
    let grid = TradeGrid::from_changes(start, spot, change, traded)?;
    if grid.price != price {
        return Err(Error::data(
            "stored price levels differ from spot plus accumulated changes",
        ));
    }
    let fundamentals = FundamentalFrame {
        start,
        n_days: grid.n_days,
        values: fvals,
    };
    Market::new(grid, fundamentals)
}
