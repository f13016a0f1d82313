//! Synthetic market generator with known ground truth.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use chrono::{Datelike, Duration, FixedOffset, NaiveDate, NaiveTime};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::csvio::{write_bids, write_forecasts, write_spot, write_trades, BidBook};
use super::merit::{slope_table, BidCurve, Side, DEFAULT_SLOPE_WINDOW};
use super::store::{write_json_pretty, write_store};
use super::trades::session_open;
use super::{
    build_market, FundamentalFrame, IngestReport, Market, RawForecast, SpotTable, TimeBasis, Trade,
    TradeGrid,
};
use crate::copula::TruthDependence;
use crate::features::calendar::{session_len, HOURS, SLOTS_PER_DAY};
use crate::features::{Equation, FeatureConfig, FeatureSpec};
use crate::marginal::MarginalFit;
use crate::simulate::simulate_path;
use crate::{seed, Error, Result};

pub type CoefMap = BTreeMap<String, f64>;

/// Generator settings. Coefficients are keyed by column name; columns not
/// listed are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub start: NaiveDate,
    pub n_days: usize,
    /// Offset of the local clock written into every timestamp, in hours.
    pub utc_offset_hours: i32,
    /// Produce tick trades and run them through aggregation.
    pub emit_trades: bool,
    pub max_ticks: usize,
    pub slope_window: f64,
    pub features: FeatureConfig,
    pub pi_step: usize,
    pub dependence: TruthDependence,
    pub pi: CoefMap,
    pub mu: CoefMap,
    pub sigma: CoefMap,
    pub nu: CoefMap,
    pub tau: CoefMap,
}

fn coefs(pairs: &[(&str, f64)]) -> CoefMap {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

impl Default for SynthConfig {
    fn default() -> Self {
        let mut pi = coefs(&[
            ("intercept", 0.2),
            ("fund:wind_on", 0.15),
            ("fund:solar", -0.1),
            ("fund:load", 0.2),
            ("fund:mo", 0.1),
            ("sidc:open", 0.4),
            ("sidc:wave1", 0.3),
            ("sidc:wave2", 0.2),
            ("sidc:close", 0.3),
            ("sidc:local", 0.5),
            ("dow:sat", -0.3),
            ("dow:sun", -0.4),
        ]);
        for h in 0..HOURS {
            pi.insert(format!("t_x_hour:{h:02}:00"), 0.01 + 0.0002 * h as f64);
            pi.insert(format!("t_x_hour:{h:02}:01"), 0.004);
        }
        let mut nu = coefs(&[("fund:load", 0.5)]);
        let mut tau = coefs(&[("dow:sat", 0.1), ("dow:sun", 0.1)]);
        for h in 0..HOURS {
            nu.insert(format!("hour:{h:02}"), -22.0);
            tau.insert(format!("hour:{h:02}"), 1.4 + 0.02 * h as f64);
        }
        SynthConfig {
            start: NaiveDate::from_ymd_opt(2023, 1, 2).expect("valid date"),
            n_days: 548,
            utc_offset_hours: 1,
            emit_trades: true,
            max_ticks: 5,
            slope_window: DEFAULT_SLOPE_WINDOW,
            features: FeatureConfig::default(),
            pi_step: 32,
            dependence: TruthDependence::Constant { rho: 0.6 },
            pi,
            mu: coefs(&[("price_lag:1", -0.1), ("price_lag:2", -0.03)]),
            sigma: coefs(&[
                ("intercept", 10.0),
                ("fund:load", 1.0),
                ("fund:solar", 0.5),
                ("fund:mo", 1.5),
                ("sidc:close", 2.0),
                ("sidc:local", 3.0),
                ("dow:sun", -1.0),
                ("ttd:01", -0.3),
                ("abs_lag:1", 0.5),
                ("trade_lag:1", 1.0),
                ("spot:10", 0.5),
            ]),
            nu,
            tau,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_days == 0 {
            return Err(Error::config("n_days must be positive"));
        }
        if self.max_ticks == 0 {
            return Err(Error::config("max_ticks must be at least 1"));
        }
        if !(self.slope_window > 0.0) {
            return Err(Error::config("slope_window must be positive"));
        }
        if !(-12..=14).contains(&self.utc_offset_hours) {
            return Err(Error::config("utc_offset_hours out of range"));
        }
        self.features.validate()?;
        self.dependence.validate()
    }

    fn offset(&self) -> FixedOffset {
        FixedOffset::east_opt(self.utc_offset_hours * 3600).expect("validated offset")
    }
}

/// Ground truth of a synthetic market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub seed: u64,
    pub config: SynthConfig,
    pub model: MarginalFit,
    pub dependence: TruthDependence,
}

/// Raw inputs in the same shape as real exchange data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawMarket {
    pub trades: Vec<Trade>,
    pub spot: SpotTable,
    pub forecasts: Vec<RawForecast>,
    pub bids: BidBook,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub market: Market,
    pub raw: RawMarket,
    pub truth: SynthTruth,
    pub ingest: Option<IngestReport>,
}

struct Exogenous {
    hourly: Vec<[f64; 4]>,
    spot: Vec<f64>,
    bids: BidBook,
}

fn ar_step(x: f64, phi: f64, sd: f64, rng: &mut ChaCha8Rng) -> f64 {
    phi * x + sd * rng.sample::<f64, _>(StandardNormal)
}

fn round_to(x: f64, q: f64) -> f64 {
    (x / q).round() * q
}

/// Fundamentals, spot prices and auction curves.
fn exogenous(cfg: &SynthConfig, seed_root: u64) -> Exogenous {
    let mut rng = seed::rng(seed_root, &[seed::label("exogenous")]);
    let n = cfg.n_days;
    let mut hourly = Vec::with_capacity(n * HOURS);
    let mut spot = Vec::with_capacity(n * HOURS);
    let mut bids = BidBook::new();
    let (mut w_on, mut w_off, mut load_noise, mut spot_noise) = (0.0, 0.0, 0.0, 0.0);
    for d in 0..n {
        let date = cfg.start + Duration::days(d as i64);
        let season = (2.0 * PI * date.ordinal() as f64 / 365.25).cos();
        let weekend = date.weekday().num_days_from_monday() >= 5;
        let cloud: f64 = rng.random_range(0.3..1.0);
        for h in 0..HOURS {
            w_on = ar_step(w_on, 0.97, 0.08, &mut rng);
            w_off = ar_step(w_off, 0.96, 0.1, &mut rng);
            load_noise = ar_step(load_noise, 0.9, 600.0, &mut rng);
            spot_noise = ar_step(spot_noise, 0.8, 4.0, &mut rng);
            let hf = h as f64;
            let wind_on = round_to(12_000.0 * (w_on + 0.3 * season).exp(), 0.1);
            let wind_off = round_to(3_000.0 * (w_off + 0.2 * season).exp(), 0.1);
            let daylight = (PI * (hf - 5.0) / 14.0).sin().max(0.0);
            let solar = round_to(20_000.0 * (0.6 - 0.4 * season) * daylight * cloud, 0.1);
            let shape = -(2.0 * PI * (hf - 3.0) / 24.0).cos();
            let load = round_to(
                55_000.0 + 9_000.0 * shape + 5_000.0 * season - if weekend { 7_000.0 } else { 0.0 }
                    + load_noise,
                0.1,
            );
            let residual = load - wind_on - wind_off - solar;
            let price = round_to(
                (60.0 + 0.0025 * (residual - 30_000.0) + spot_noise).clamp(-100.0, 500.0),
                0.01,
            );
            hourly.push([wind_on, wind_off, solar, load]);
            spot.push(price);

            // supply ladder whose step at the demand level is priced at spot
            let slope = 0.002
                + 0.004 / (1.0 + (-(residual - 30_000.0) / 8_000.0).exp())
                + rng.random_range(0.0..0.0005);
            let q = 250.0;
            let k_max = 12i32;
            let demand: f64 = round_to(rng.random_range(15_000.0..25_000.0), 1.0);
            let mut book = Vec::new();
            let floor = (price - slope * q * (k_max + 1) as f64).max(-499.0);
            book.push((
                Side::Supply,
                round_to(floor, 0.01),
                demand - (k_max as f64 + 0.5) * q,
            ));
            for k in -k_max..=k_max {
                book.push((
                    Side::Supply,
                    round_to(price + slope * q * k as f64, 0.01),
                    q,
                ));
            }
            book.push((Side::Supply, 2_999.0, 50_000.0));
            let hi1 = round_to((price + 150.0).min(2_990.0), 0.01);
            let hi2 = round_to((price + 300.0).min(2_995.0), 0.01);
            book.push((Side::Demand, 3_000.0, demand - 1_000.0));
            book.push((Side::Demand, hi1, 600.0));
            book.push((Side::Demand, hi2, 400.0));
            bids.insert((date, h as u8), book);
        }
    }
    Exogenous { hourly, spot, bids }
}

fn merit_slopes(cfg: &SynthConfig, bids: &BidBook) -> Result<Vec<f64>> {
    let mut curves = Vec::with_capacity(cfg.n_days);
    for d in 0..cfg.n_days {
        let date = cfg.start + Duration::days(d as i64);
        let mut day = Vec::with_capacity(HOURS);
        for h in 0..HOURS as u8 {
            let b = &bids[&(date, h)];
            let pick = |s: Side| -> Vec<(f64, f64)> {
                b.iter().filter(|x| x.0 == s).map(|x| (x.1, x.2)).collect()
            };
            day.push((
                BidCurve::from_bids(Side::Supply, &pick(Side::Supply))?,
                BidCurve::from_bids(Side::Demand, &pick(Side::Demand))?,
            ));
        }
        curves.push(day);
    }
    let (table, _) = slope_table(&curves, cfg.slope_window)?;
    Ok(table.iter().flatten().map(|m| m.slope).collect())
}

/// Builds the ground-truth marginal model on the exogenous data of `market`.
pub fn truth_model(cfg: &SynthConfig, market: &Market) -> Result<MarginalFit> {
    let days: Vec<usize> = (0..market.n_days()).collect();
    let spec = FeatureSpec::fit(&cfg.features, market, &days, cfg.pi_step)?;
    let pi = spec.registry(Equation::Pi).coefficients_from_map(&cfg.pi)?;
    let pi_reg = spec.registry(Equation::Pi);
    for (c, b) in pi_reg.columns.iter().zip(&pi) {
        if c.aliased && *b != 0.0 {
            return Err(Error::config(format!(
                "coefficient {} never varies and must be zero",
                c.name
            )));
        }
    }
    let maps = [&cfg.mu, &cfg.sigma, &cfg.nu, &cfg.tau];
    let mut distrib: [Vec<f64>; 4] = Default::default();
    for (k, &eq) in Equation::DISTRIB.iter().enumerate() {
        distrib[k] = spec.registry(eq).coefficients_from_map(maps[k])?;
    }
    MarginalFit::from_coefficients(spec, pi, distrib, cfg.start)
}

fn fabricate_trades(cfg: &SynthConfig, grid: &TradeGrid, seed_root: u64) -> Vec<Trade> {
    let off = cfg.offset();
    let per_day: Vec<Vec<Trade>> = (0..grid.n_days)
        .into_par_iter()
        .map(|d| {
            let mut rng = seed::rng(seed_root, &[seed::label("ticks"), d as u64]);
            let date = grid.date(d);
            let open = session_open(date);
            let mut out = Vec::new();
            for h in 0..HOURS {
                for t in 0..session_len(h) {
                    let i = TradeGrid::idx(d, h, t);
                    if !grid.traded[i] {
                        continue;
                    }
                    let level = grid.price[i];
                    let k = rng.random_range(1..=cfg.max_ticks);
                    let mut ticks: Vec<(f64, f64)> = Vec::with_capacity(k);
                    if k % 2 == 1 {
                        ticks.push((level, round_to(rng.random_range(0.1..25.0), 0.1)));
                    }
                    for _ in 0..k / 2 {
                        let delta = round_to(rng.random_range(0.01..2.0), 0.01);
                        let v = round_to(rng.random_range(0.1..25.0), 0.1);
                        ticks.push((level + delta, v));
                        ticks.push((level - delta, v));
                    }
                    let mut secs: Vec<i64> =
                        (0..ticks.len()).map(|_| rng.random_range(0..900)).collect();
                    secs.sort_unstable();
                    for ((p, v), s) in ticks.into_iter().zip(secs) {
                        let local = open + Duration::seconds(15 * 60 * t as i64 + s);
                        out.push(Trade {
                            exec_time: local
                                .and_local_timezone(off)
                                .single()
                                .expect("fixed offset"),
                            delivery_day: date,
                            delivery_hour: h as u8,
                            price: p,
                            volume: v,
                        });
                    }
                }
            }
            out
        })
        .collect();
    let mut trades: Vec<Trade> = per_day.into_iter().flatten().collect();
    trades.sort_by(|a, b| {
        a.exec_time
            .cmp(&b.exec_time)
            .then(a.delivery_hour.cmp(&b.delivery_hour))
    });
    trades
}

fn raw_forecasts(cfg: &SynthConfig, hourly: &[[f64; 4]]) -> Vec<RawForecast> {
    let off = cfg.offset();
    let mut out = Vec::with_capacity(hourly.len() * 4);
    for (i, v) in hourly.iter().enumerate() {
        let date = cfg.start + Duration::days((i / HOURS) as i64);
        let h = (i % HOURS) as u32;
        for q in 0..4 {
            let local = date.and_time(NaiveTime::from_hms_opt(h, 15 * q, 0).expect("valid time"));
            out.push(RawForecast {
                timestamp: local
                    .and_local_timezone(off)
                    .single()
                    .expect("fixed offset"),
                wind_on: v[0],
                wind_off: v[1],
                solar: v[2],
                load: v[3],
            });
        }
    }
    out
}

/// Generates exogenous inputs, then simulates every day from the true
/// mixture and copula. With `emit_trades` the bucketed changes are turned
/// into tick trades and the returned market is the result of ingesting them.
pub fn synth_market(cfg: &SynthConfig, seed_root: u64) -> Result<SynthOutput> {
    cfg.validate()?;
    let ex = exogenous(cfg, seed_root);
    let mo = merit_slopes(cfg, &ex.bids)?;
    let fundamentals = FundamentalFrame {
        start: cfg.start,
        n_days: cfg.n_days,
        values: ex
            .hourly
            .iter()
            .zip(&mo)
            .map(|(v, &m)| [v[0], v[1], v[2], v[3], m])
            .collect(),
    };
    let n = cfg.n_days * SLOTS_PER_DAY;
    let skeleton = Market::new(
        TradeGrid::from_changes(cfg.start, ex.spot.clone(), vec![0.0; n], vec![false; n])?,
        fundamentals.clone(),
    )?;
    let model = truth_model(cfg, &skeleton)?;
    let plan = cfg.dependence.plan()?;
    let days: Vec<_> = (0..cfg.n_days)
        .into_par_iter()
        .map(|d| {
            let template = model.day_template(&skeleton, d)?;
            let mut rng = seed::rng(seed_root, &[seed::label("synth-day"), d as u64]);
            simulate_path(&template, &plan, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut change = Vec::with_capacity(n);
    let mut traded = Vec::with_capacity(n);
    for day in days {
        change.extend(day.change);
        traded.extend(day.traded);
    }
    let grid = TradeGrid::from_changes(cfg.start, ex.spot.clone(), change, traded)?;

    let spot: SpotTable = ex
        .spot
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            (
                (
                    cfg.start + Duration::days((i / HOURS) as i64),
                    (i % HOURS) as u8,
                ),
                p,
            )
        })
        .collect();
    let forecasts = raw_forecasts(cfg, &ex.hourly);
    let truth = SynthTruth {
        seed: seed_root,
        config: cfg.clone(),
        model,
        dependence: cfg.dependence,
    };
    if cfg.emit_trades {
        let trades = fabricate_trades(cfg, &grid, seed_root);
        let (market, report) = build_market(
            &trades,
            &spot,
            &forecasts,
            &ex.bids,
            TimeBasis::Wall,
            cfg.slope_window,
        )?;
        Ok(SynthOutput {
            market,
            raw: RawMarket {
                trades,
                spot,
                forecasts,
                bids: ex.bids,
            },
            truth,
            ingest: Some(report),
        })
    } else {
        Ok(SynthOutput {
            market: Market::new(grid, fundamentals)?,
            raw: RawMarket {
                trades: Vec::new(),
                spot,
                forecasts,
                bids: ex.bids,
            },
            truth,
            ingest: None,
        })
    }
}

/// Writes raw CSV inputs (when trades were emitted), `truth.json` and the
/// market store under `dir/store`.
pub fn write_synth(dir: &Path, out: &SynthOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if !out.raw.trades.is_empty() {
        write_trades(&dir.join("trades.csv"), &out.raw.trades)?;
    }
    write_spot(&dir.join("spot.csv"), &out.raw.spot)?;
    write_forecasts(&dir.join("forecasts.csv"), &out.raw.forecasts)?;
    write_bids(&dir.join("bids.csv"), &out.raw.bids)?;
    write_json_pretty(&dir.join("truth.json"), &out.truth)?;
    write_store(&dir.join("store"), &out.market)?;
    Ok(())
}
