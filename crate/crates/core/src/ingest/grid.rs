use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::features::calendar::{hour_offset, session_len, HOURS, SLOTS_PER_DAY};
use crate::{Error, Result};

/// Bucketed intraday prices for a run of consecutive delivery days.
///
/// Day-hour quantities are stored at `d * 24 + h`; bucket quantities at
/// `d * 1920 + slot(h, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeGrid {
    pub start: NaiveDate,
    pub n_days: usize,
    pub spot: Vec<f64>,
    pub price: Vec<f64>,
    pub change: Vec<f64>,
    pub traded: Vec<bool>,
}

impl TradeGrid {
    /// Builds a grid from per-bucket changes, accumulating levels from spot.
    pub fn from_changes(
        start: NaiveDate,
        spot: Vec<f64>,
        change: Vec<f64>,
        traded: Vec<bool>,
    ) -> Result<Self> {
        if spot.len() % HOURS != 0 {
            return Err(Error::schema(format!(
                "spot length {} is not a multiple of 24",
                spot.len()
            )));
        }
        let n_days = spot.len() / HOURS;
        if change.len() != n_days * SLOTS_PER_DAY || traded.len() != change.len() {
            return Err(Error::schema(format!(
                "expected {} buckets for {n_days} days, got {} changes and {} indicators",
                n_days * SLOTS_PER_DAY,
                change.len(),
                traded.len()
            )));
        }
        let mut price = vec![0.0; change.len()];
        for d in 0..n_days {
            for h in 0..HOURS {
                let base = d * SLOTS_PER_DAY + hour_offset(h);
                let mut level = spot[d * HOURS + h];
                for t in 0..session_len(h) {
                    level += change[base + t];
                    price[base + t] = level;
                }
            }
        }
        let g = TradeGrid {
            start,
            n_days,
            spot,
            price,
            change,
            traded,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_days;
        if self.spot.len() != n * HOURS
            || self.price.len() != n * SLOTS_PER_DAY
            || self.change.len() != n * SLOTS_PER_DAY
            || self.traded.len() != n * SLOTS_PER_DAY
        {
            return Err(Error::schema(
                "trade grid columns do not match the trapezoid shape",
            ));
        }
        if let Some(i) = self.spot.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "missing spot price for {} hour {}",
                self.date(i / HOURS),
                i % HOURS
            )));
        }
        if let Some(i) = self.change.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "non-finite price change at day {} slot {}",
                i / SLOTS_PER_DAY,
                i % SLOTS_PER_DAY
            )));
        }
        if let Some(i) = (0..self.change.len()).find(|&i| !self.traded[i] && self.change[i] != 0.0)
        {
            return Err(Error::data(format!(
                "bucket without trades carries a price change at day {} slot {}",
                i / SLOTS_PER_DAY,
                i % SLOTS_PER_DAY
            )));
        }
        Ok(())
    }

    pub fn end(&self) -> NaiveDate {
        self.date(self.n_days.saturating_sub(1))
    }

    pub fn date(&self, d: usize) -> NaiveDate {
        self.start + Duration::days(d as i64)
    }

    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        let k = (date - self.start).num_days();
        (k >= 0 && (k as usize) < self.n_days).then_some(k as usize)
    }

    /// 0 = Monday .. 6 = Sunday.
    pub fn weekday(&self, d: usize) -> usize {
        self.date(d).weekday().num_days_from_monday() as usize
    }

    #[inline]
    pub fn spot_at(&self, d: usize, h: usize) -> f64 {
        self.spot[d * HOURS + h]
    }

    #[inline]
    pub fn idx(d: usize, h: usize, t: usize) -> usize {
        d * SLOTS_PER_DAY + hour_offset(h) + t
    }

    pub fn changes(&self, d: usize, h: usize) -> &[f64] {
        let b = Self::idx(d, h, 0);
        &self.change[b..b + session_len(h)]
    }

    pub fn prices(&self, d: usize, h: usize) -> &[f64] {
        let b = Self::idx(d, h, 0);
        &self.price[b..b + session_len(h)]
    }

    pub fn traded_flags(&self, d: usize, h: usize) -> &[bool] {
        let b = Self::idx(d, h, 0);
        &self.traded[b..b + session_len(h)]
    }

    /// Sub-grid of days `d0..d1`.
    pub fn slice(&self, d0: usize, d1: usize) -> TradeGrid {
        assert!(d0 <= d1 && d1 <= self.n_days);
        TradeGrid {
            start: self.date(d0),
            n_days: d1 - d0,
            spot: self.spot[d0 * HOURS..d1 * HOURS].to_vec(),
            price: self.price[d0 * SLOTS_PER_DAY..d1 * SLOTS_PER_DAY].to_vec(),
            change: self.change[d0 * SLOTS_PER_DAY..d1 * SLOTS_PER_DAY].to_vec(),
            traded: self.traded[d0 * SLOTS_PER_DAY..d1 * SLOTS_PER_DAY].to_vec(),
        }
    }
}

pub const FUNDAMENTAL_NAMES: [&str; 5] = ["wind_on", "wind_off", "solar", "load", "mo"];

/// Day-ahead fundamentals per delivery day and hour, in the order of
/// [`FUNDAMENTAL_NAMES`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalFrame {
    pub start: NaiveDate,
    pub n_days: usize,
    pub values: Vec<[f64; 5]>,
}

impl FundamentalFrame {
    #[inline]
    pub fn at(&self, d: usize, h: usize) -> &[f64; 5] {
        &self.values[d * HOURS + h]
    }

    pub fn slice(&self, d0: usize, d1: usize) -> FundamentalFrame {
        FundamentalFrame {
            start: self.start + Duration::days(d0 as i64),
            n_days: d1 - d0,
            values: self.values[d0 * HOURS..d1 * HOURS].to_vec(),
        }
    }
}

/// A trade grid together with aligned fundamentals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Market {
    pub grid: TradeGrid,
    pub fundamentals: FundamentalFrame,
}

impl Market {
    pub fn new(grid: TradeGrid, fundamentals: FundamentalFrame) -> Result<Self> {
        if grid.start != fundamentals.start || grid.n_days != fundamentals.n_days {
            return Err(Error::schema(format!(
                "fundamentals cover {} + {} days but the trade grid covers {} + {} days",
                fundamentals.start, fundamentals.n_days, grid.start, grid.n_days
            )));
        }
        if fundamentals.values.len() != grid.n_days * HOURS {
            return Err(Error::schema(
                "fundamental frame has the wrong number of rows",
            ));
        }
        if let Some(i) = fundamentals
            .values
            .iter()
            .position(|r| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::data(format!(
                "missing fundamental value for {} hour {}",
                grid.date(i / HOURS),
                i % HOURS
            )));
        }
        grid.validate()?;
        Ok(Market { grid, fundamentals })
    }

    pub fn n_days(&self) -> usize {
        self.grid.n_days
    }

    pub fn slice(&self, d0: usize, d1: usize) -> Market {
        Market {
            grid: self.grid.slice(d0, d1),
            fundamentals: self.fundamentals.slice(d0, d1),
        }
    }
}
