use serde::{Deserialize, Serialize};

use super::calendar::{session_len, sidc_flags, HOURS, MAX_SESSION, SIDC_NAMES};
use super::layout::{Column, Equation, Group, Registry};
use super::scaler::Standardizer;
use super::spline::ReluSplineSpec;
use crate::ingest::{Market, FUNDAMENTAL_NAMES};
use crate::{Error, Result};

pub const DOW_NAMES: [&str; 6] = ["tue", "wed", "thu", "fri", "sat", "sun"];
pub const LAGS: usize = 3;

/// User-facing feature settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub t_knots: usize,
    pub ttd_knots: usize,
    pub spot_knots: usize,
    /// Candidate knot spacings (in buckets) of the per-hour trading-time spline of the trade model.
    pub pi_step_candidates: Vec<usize>,
    pub standardize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            t_knots: 10,
            ttd_knots: 10,
            spot_knots: 50,
            pi_step_candidates: vec![8, 16, 32],
            standardize: true,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_knots == 0 || self.ttd_knots == 0 || self.spot_knots == 0 {
            return Err(Error::config("spline knot counts must be positive"));
        }
        if self.pi_step_candidates.is_empty()
            || self
                .pi_step_candidates
                .iter()
                .any(|&s| s == 0 || s > MAX_SESSION)
        {
            return Err(Error::config(format!(
                "pi_step_candidates must be nonempty and within 1..={MAX_SESSION}"
            )));
        }
        Ok(())
    }
}

/// Fitted feature transformation: knot grids and standardization constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub config: FeatureConfig,
    pub scaler: Standardizer,
    pub t_spline: ReluSplineSpec,
    pub ttd_spline: ReluSplineSpec,
    pub spot_spline: ReluSplineSpec,
    pub pi_step: usize,
    pub pi_spline: ReluSplineSpec,
}

impl FeatureSpec {
    /// Estimates scaling constants and the spot knot range on `days`.
    pub fn fit(
        config: &FeatureConfig,
        market: &Market,
        days: &[usize],
        pi_step: usize,
    ) -> Result<Self> {
        config.validate()?;
        if days.is_empty() {
            return Err(Error::data(
                "cannot fit features on an empty training window",
            ));
        }
        let scaler = Standardizer::fit(market, days, config.standardize);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &d in days {
            for h in 0..HOURS {
                let z = scaler.apply(5, market.grid.spot_at(d, h));
                lo = lo.min(z);
                hi = hi.max(z);
            }
        }
        if hi <= lo {
            hi = lo + 1.0;
        }
        Self::from_parts(config.clone(), scaler, lo, hi, pi_step)
    }

    pub fn from_parts(
        config: FeatureConfig,
        scaler: Standardizer,
        spot_lo: f64,
        spot_hi: f64,
        pi_step: usize,
    ) -> Result<Self> {
        config.validate()?;
        let t_hi = (MAX_SESSION - 1) as f64;
        Ok(FeatureSpec {
            t_spline: ReluSplineSpec::equidistant(0.0, t_hi, config.t_knots)?,
            ttd_spline: ReluSplineSpec::equidistant(1.0, MAX_SESSION as f64, config.ttd_knots)?,
            spot_spline: ReluSplineSpec::equidistant(spot_lo, spot_hi, config.spot_knots)?,
            pi_spline: ReluSplineSpec::stepped(pi_step as f64, t_hi)?,
            pi_step,
            scaler,
            config,
        })
    }

    pub fn with_pi_step(&self, step: usize) -> Result<Self> {
        let mut s = self.clone();
        s.pi_spline = ReluSplineSpec::stepped(step as f64, (MAX_SESSION - 1) as f64)?;
        s.pi_step = step;
        Ok(s)
    }

    pub fn registry(&self, eq: Equation) -> Registry {
        let mut columns = Vec::new();
        let unpenalized_hours = matches!(eq, Equation::Nu | Equation::Tau);
        for &g in eq.groups() {
            let mut push = |name: String, indicator: bool, penalized: bool, aliased: bool| {
                columns.push(Column {
                    name,
                    group: g,
                    indicator,
                    penalized,
                    aliased,
                })
            };
            match g {
                Group::Intercept => push("intercept".into(), true, false, false),
                Group::Fundamentals => {
                    for n in FUNDAMENTAL_NAMES {
                        push(format!("fund:{n}"), false, true, false);
                    }
                }
                Group::Sidc => {
                    for n in SIDC_NAMES {
                        push(format!("sidc:{n}"), true, true, false);
                    }
                }
                Group::DayOfWeek => {
                    for n in DOW_NAMES {
                        push(format!("dow:{n}"), true, true, false);
                    }
                }
                Group::Hour => {
                    let first = if eq.has_intercept() { 1 } else { 0 };
                    for h in first..HOURS {
                        push(format!("hour:{h:02}"), true, !unpenalized_hours, false);
                    }
                }
                Group::TradingTime => {
                    for j in 0..self.t_spline.len() {
                        push(format!("t:{j:02}"), false, true, false);
                    }
                }
                Group::TimeToDelivery => {
                    for j in 0..self.ttd_spline.len() {
                        push(format!("ttd:{j:02}"), false, true, false);
                    }
                }
                Group::SpotSpline => {
                    for j in 0..self.spot_spline.len() {
                        push(format!("spot:{j:02}"), false, true, false);
                    }
                }
                Group::PriceLags => {
                    for i in 1..=LAGS {
                        push(format!("price_lag:{i}"), false, true, false);
                    }
                }
                Group::AbsLags => {
                    for i in 1..=LAGS {
                        push(format!("abs_lag:{i}"), false, true, false);
                    }
                }
                Group::TradeLags => {
                    for i in 1..=LAGS {
                        push(format!("trade_lag:{i}"), true, true, false);
                    }
                }
                Group::TradingTimeByHour => {
                    for h in 0..HOURS {
                        let last_t = (session_len(h) - 1) as f64;
                        let saturated = self.pi_spline.thresholds.iter().position(|&k| k >= last_t);
                        for j in 0..self.pi_spline.len() {
                            let aliased = saturated.is_some_and(|s| j > s);
                            push(format!("t_x_hour:{h:02}:{j:02}"), false, true, aliased);
                        }
                    }
                }
            }
        }
        Registry {
            equation: eq,
            columns,
        }
    }

    /// Values of the hour/bucket-level columns of `eq` at `(h, t)`, in registry order.
    pub(crate) fn hour_bucket_values(&self, eq: Equation, h: usize, t: usize, out: &mut Vec<f64>) {
        out.clear();
        let session = session_len(h);
        for &g in eq.groups() {
            match g {
                Group::Intercept => out.push(1.0),
                Group::Sidc => {
                    let f = sidc_flags(h, t, session).expect("bucket inside session");
                    out.extend(f.as_array().iter().map(|&b| f64::from(u8::from(b))));
                }
                Group::Hour => {
                    let first = if eq.has_intercept() { 1 } else { 0 };
                    out.extend((first..HOURS).map(|k| f64::from(u8::from(k == h))));
                }
                Group::TradingTime => {
                    out.extend(self.t_spline.thresholds.iter().map(|&k| (t as f64).min(k)));
                }
                Group::TimeToDelivery => {
                    let ttd = (session - t) as f64;
                    out.extend(self.ttd_spline.thresholds.iter().map(|&k| ttd.min(k)));
                }
                Group::TradingTimeByHour => {
                    for hh in 0..HOURS {
                        for &k in &self.pi_spline.thresholds {
                            out.push(if hh == h { (t as f64).min(k) } else { 0.0 });
                        }
                    }
                }
                _ => {}
            }
        }
    }

    /// Values of the day/hour-level columns of `eq`, in registry order.
    pub(crate) fn day_hour_values(
        &self,
        eq: Equation,
        market: &Market,
        d: usize,
        h: usize,
        out: &mut Vec<f64>,
    ) {
        out.clear();
        let z = self.scaler.row(market, d, h);
        let dow = market.grid.weekday(d);
        for &g in eq.groups() {
            match g {
                Group::Fundamentals => out.extend_from_slice(&z[..5]),
                Group::DayOfWeek => out.extend((1..7).map(|k| f64::from(u8::from(k == dow)))),
                Group::SpotSpline => {
                    out.extend(self.spot_spline.thresholds.iter().map(|&k| z[5].min(k)))
                }
                _ => {}
            }
        }
    }
}
