use std::collections::BTreeMap;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use super::TradeGrid;
use crate::features::calendar::{hour_offset, session_len, HOURS, SLOTS_PER_DAY};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub exec_time: DateTime<FixedOffset>,
    pub delivery_day: NaiveDate,
    pub delivery_hour: u8,
    pub price: f64,
    pub volume: f64,
}

/// How timestamps are mapped onto the local trading clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeBasis {
    /// Use the wall-clock time as written, with whatever offset each timestamp carries.
    Wall,
    /// Convert every timestamp to this fixed offset first.
    Fixed(FixedOffset),
}

impl TimeBasis {
    pub fn parse(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("wall") || s.eq_ignore_ascii_case("local") {
            return Ok(TimeBasis::Wall);
        }
        if s.eq_ignore_ascii_case("utc") || s == "Z" {
            return Ok(TimeBasis::Fixed(
                FixedOffset::east_opt(0).expect("zero offset"),
            ));
        }
        let probe = format!("2000-01-01T00:00:00{s}");
        DateTime::parse_from_rfc3339(&probe)
            .map(|d| TimeBasis::Fixed(*d.offset()))
            .map_err(|_| {
                Error::config(format!(
                    "unrecognised timezone '{s}' (use 'wall', 'utc' or an offset like +01:00)"
                ))
            })
    }

    pub fn local(&self, ts: &DateTime<FixedOffset>) -> NaiveDateTime {
        match self {
            TimeBasis::Wall => ts.naive_local(),
            TimeBasis::Fixed(off) => ts.with_timezone(off).naive_local(),
        }
    }
}

/// Start of trading for delivery day `d`: `d-1 15:00` local.
pub fn session_open(d: NaiveDate) -> NaiveDateTime {
    (d - Duration::days(1)).and_time(NaiveTime::from_hms_opt(15, 0, 0).expect("valid time"))
}

/// Where a trade lands on the bucket grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Bucket(usize),
    /// Inside the last 30 minutes before delivery; dropped by design.
    FinalPhase,
    /// Before the session opens or after delivery has started.
    OutOfSession,
}

pub fn place_trade(trade: &Trade, basis: TimeBasis) -> Placement {
    let h = trade.delivery_hour as usize;
    if h >= HOURS {
        return Placement::OutOfSession;
    }
    let secs = (basis.local(&trade.exec_time) - session_open(trade.delivery_day)).num_seconds();
    if secs < 0 {
        return Placement::OutOfSession;
    }
    let t = (secs / (15 * 60)) as usize;
    if t < session_len(h) {
        Placement::Bucket(t)
    } else if secs < 60 * 60 * (9 + h as i64) {
        Placement::FinalPhase
    } else {
        Placement::OutOfSession
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub accepted: usize,
    pub final_phase_dropped: usize,
    pub rejected: usize,
}

/// Day-ahead prices keyed by delivery day and hour.
pub type SpotTable = BTreeMap<(NaiveDate, u8), f64>;

/// Buckets trades into volume-weighted price levels on the trapezoid grid.
///
/// The covered days run from the first to the last day in `spot`; every
/// hour of every such day needs a spot price.
pub fn aggregate_trades(
    trades: &[Trade],
    spot: &SpotTable,
    basis: TimeBasis,
) -> Result<(TradeGrid, AggregateReport)> {
    let (first, last) = match (spot.keys().next(), spot.keys().next_back()) {
        (Some(a), Some(b)) => (a.0, b.0),
        _ => return Err(Error::data("no spot prices supplied")),
    };
    let n_days = (last - first).num_days() as usize + 1;
    let mut spot_vec = vec![f64::NAN; n_days * HOURS];
    for (&(d, h), &p) in spot {
        if (h as usize) < HOURS {
            spot_vec[(d - first).num_days() as usize * HOURS + h as usize] = p;
        }
    }
    for d in 0..n_days {
        let missing: Vec<usize> = (0..HOURS)
            .filter(|&h| !spot_vec[d * HOURS + h].is_finite())
            .collect();
        if !missing.is_empty() {
            return Err(Error::data(format!(
                "missing spot price for delivery day {} hours {missing:?}",
                first + Duration::days(d as i64)
            )));
        }
    }

    let mut pv = vec![0.0; n_days * SLOTS_PER_DAY];
    let mut vol = vec![0.0; n_days * SLOTS_PER_DAY];
    let mut report = AggregateReport::default();
    for tr in trades {
        if !(tr.volume > 0.0 && tr.price.is_finite()) {
            report.rejected += 1;
            continue;
        }
        let k = (tr.delivery_day - first).num_days();
        if k < 0 || k as usize >= n_days {
            report.rejected += 1;
            continue;
        }
        match place_trade(tr, basis) {
            Placement::Bucket(t) => {
                let i = TradeGrid::idx(k as usize, tr.delivery_hour as usize, t);
                pv[i] += tr.price * tr.volume;
                vol[i] += tr.volume;
                report.accepted += 1;
            }
            Placement::FinalPhase => report.final_phase_dropped += 1,
            Placement::OutOfSession => report.rejected += 1,
        }
    }

    let mut change = vec![0.0; n_days * SLOTS_PER_DAY];
    let mut traded = vec![false; n_days * SLOTS_PER_DAY];
    for d in 0..n_days {
        for h in 0..HOURS {
            let mut prev = spot_vec[d * HOURS + h];
            let base = d * SLOTS_PER_DAY + hour_offset(h);
            for t in 0..session_len(h) {
                let i = base + t;
                if vol[i] > 0.0 {
                    let level = pv[i] / vol[i];
                    change[i] = level - prev;
                    traded[i] = true;
                    prev = level;
                }
            }
        }
    }
    if report.rejected > 0 || report.final_phase_dropped > 0 {
        log::info!(
            "aggregated {} trades; {} in the final 30 minutes dropped, {} outside their session rejected",
            report.accepted,
            report.final_phase_dropped,
            report.rejected
        );
    }
    Ok((
        TradeGrid::from_changes(first, spot_vec, change, traded)?,
        report,
    ))
}
