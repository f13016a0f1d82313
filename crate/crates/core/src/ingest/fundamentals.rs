use std::collections::BTreeMap;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, Timelike};
use serde::{Deserialize, Serialize};

use super::trades::TimeBasis;
use super::FundamentalFrame;
use crate::features::calendar::HOURS;
use crate::{Error, Result};

/// One quarter-hourly day-ahead forecast record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawForecast {
    pub timestamp: DateTime<FixedOffset>,
    pub wind_on: f64,
    pub wind_off: f64,
    pub solar: f64,
    pub load: f64,
}

/// Hourly wind on/offshore, solar and load per delivery day and hour.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyForecasts {
    pub start: NaiveDate,
    pub n_days: usize,
    pub values: Vec<[f64; 4]>,
}

/// Averages quarter-hourly forecasts to local delivery hours.
///
/// A doubled local hour (end of summer time) averages all of its records;
/// a single missing hour (start of summer time) takes the next hour's value.
pub fn load_fundamentals(raw: &[RawForecast], basis: TimeBasis) -> Result<HourlyForecasts> {
    let mut acc: BTreeMap<(NaiveDate, usize), ([f64; 4], usize)> = BTreeMap::new();
    for r in raw {
        let v = [r.wind_on, r.wind_off, r.solar, r.load];
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::data(format!(
                "non-finite forecast at {}",
                r.timestamp
            )));
        }
        let local = basis.local(&r.timestamp);
        let e = acc
            .entry((local.date(), local.hour() as usize))
            .or_insert(([0.0; 4], 0));
        for k in 0..4 {
            e.0[k] += v[k];
        }
        e.1 += 1;
    }
    let (first, last) = match (acc.keys().next(), acc.keys().next_back()) {
        (Some(a), Some(b)) => (a.0, b.0),
        _ => return Err(Error::data("no forecast records")),
    };
    let n_days = (last - first).num_days() as usize + 1;
    let mut values = Vec::with_capacity(n_days * HOURS);
    for d in 0..n_days {
        let date = first + Duration::days(d as i64);
        let mean = |h: usize| acc.get(&(date, h)).map(|(s, n)| s.map(|x| x / *n as f64));
        let missing: Vec<usize> = (0..HOURS).filter(|&h| mean(h).is_none()).collect();
        let fillable = missing.len() == 1 && missing[0] + 1 < HOURS;
        if !missing.is_empty() && !fillable {
            return Err(Error::data(format!(
                "missing forecasts for delivery day {date} hour {}",
                missing[0]
            )));
        }
        for h in 0..HOURS {
            let row = match mean(h) {
                Some(r) => r,
                None => mean(h + 1).expect("neighbouring hour present"),
            };
            values.push(row);
        }
    }
    Ok(HourlyForecasts {
        start: first,
        n_days,
        values,
    })
}

impl HourlyForecasts {
    /// Combines forecasts with merit-order slopes (`mo[d * 24 + h]`) into a frame.
    pub fn with_slopes(&self, mo: &[f64]) -> Result<FundamentalFrame> {
        if mo.len() != self.values.len() {
            return Err(Error::schema(format!(
                "{} merit-order slopes for {} forecast rows",
                mo.len(),
                self.values.len()
            )));
        }
        Ok(FundamentalFrame {
            start: self.start,
            n_days: self.n_days,
            values: self
                .values
                .iter()
                .zip(mo)
                .map(|(v, &m)| [v[0], v[1], v[2], v[3], m])
                .collect(),
        })
    }

    /// Restricts to `n_days` days starting at `start`.
    pub fn window(&self, start: NaiveDate, n_days: usize) -> Result<HourlyForecasts> {
        let off = (start - self.start).num_days();
        if off < 0 || off as usize + n_days > self.n_days {
            return Err(Error::data(format!(
                "forecasts cover {} + {} days, need {start} + {n_days}",
                self.start, self.n_days
            )));
        }
        let a = off as usize * HOURS;
        Ok(HourlyForecasts {
            start,
            n_days,
            values: self.values[a..a + n_days * HOURS].to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveTime;

    fn rec(date: NaiveDate, h: u32, m: u32, off_h: i32, v: f64) -> RawForecast {
        let off = FixedOffset::east_opt(off_h * 3600).unwrap();
        let local = date.and_time(NaiveTime::from_hms_opt(h, m, 0).unwrap());
        RawForecast {
            timestamp: local.and_local_timezone(off).unwrap(),
            wind_on: v,
            wind_off: v,
            solar: v,
            load: v,
        }
    }

    fn full_day(date: NaiveDate, skip: Option<u32>) -> Vec<RawForecast> {
        let mut out = Vec::new();
        for h in 0..24u32 {
            if Some(h) == skip {
                continue;
            }
            for q in 0..4u32 {
                out.push(rec(date, h, 15 * q, 1, (h * 10 + q) as f64));
            }
        }
        out
    }

    #[test]
    fn quarter_hours_average() {
        let d = NaiveDate::from_ymd_opt(2024, 1, 10).unwrap();
        let raw: Vec<_> = (0..4)
            .map(|q| rec(d, 5, 15 * q, 1, (q + 1) as f64))
            .collect();
        let mut all = full_day(d, Some(5));
        all.extend(raw);
        let f = load_fundamentals(&all, TimeBasis::Wall).unwrap();
        assert_eq!(f.values.len(), 24);
        assert_eq!(f.values[5][0], 2.5);
    }

    #[test]
    fn spring_gap_is_back_filled() {
        let d = NaiveDate::from_ymd_opt(2024, 3, 31).unwrap();
        let f = load_fundamentals(&full_day(d, Some(2)), TimeBasis::Wall).unwrap();
        assert_eq!(f.values.len(), 24);
        assert_eq!(f.values[2], f.values[3]);
    }

    #[test]
    fn autumn_double_hour_is_averaged() {
        let d = NaiveDate::from_ymd_opt(2024, 10, 27).unwrap();
        let mut raw = full_day(d, Some(2));
        for q in 0..4 {
            raw.push(rec(d, 2, 15 * q, 2, 10.0));
            raw.push(rec(d, 2, 15 * q, 1, 20.0));
        }
        let f = load_fundamentals(&raw, TimeBasis::Wall).unwrap();
        assert_eq!(f.values.len(), 24);
        assert_eq!(f.values[2][3], 15.0);
    }

    #[test]
    fn larger_gaps_are_fatal_with_location() {
        let d = NaiveDate::from_ymd_opt(2024, 5, 2).unwrap();
        let raw: Vec<_> = full_day(d, Some(7))
            .into_iter()
            .filter(|r| basis_hour(r) != 8)
            .collect();
        let err = load_fundamentals(&raw, TimeBasis::Wall).unwrap_err();
        assert!(err.to_string().contains("2024-05-02 hour 7"), "{err}");
    }

    fn basis_hour(r: &RawForecast) -> u32 {
        r.timestamp.naive_local().hour()
    }
}
