use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const PRICE_FLOOR: f64 = -500.0;
pub const PRICE_CAP: f64 = 3000.0;
/// Default half-width of the finite-difference window, in MW.
pub const DEFAULT_SLOPE_WINDOW: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Supply,
    Demand,
}

/// Stepwise auction curve of `(price, cumulative volume)` points. Supply is
/// ordered by increasing price, demand by decreasing price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidCurve {
    pub side: Side,
    pub points: Vec<(f64, f64)>,
}

impl BidCurve {
    /// Builds a curve from individual `(price, volume)` bids.
    pub fn from_bids(side: Side, bids: &[(f64, f64)]) -> Result<Self> {
        let mut b: Vec<(f64, f64)> = bids.to_vec();
        for &(p, v) in &b {
            if !(PRICE_FLOOR..=PRICE_CAP).contains(&p) || !(v >= 0.0 && v.is_finite()) {
                return Err(Error::data(format!(
                    "invalid {side:?} bid: {v} MW at {p} EUR/MWh"
                )));
            }
        }
        match side {
            Side::Supply => b.sort_by(|x, y| x.0.total_cmp(&y.0)),
            Side::Demand => b.sort_by(|x, y| y.0.total_cmp(&x.0)),
        }
        let mut cum = 0.0;
        let points = b
            .into_iter()
            .map(|(p, v)| {
                cum += v;
                (p, cum)
            })
            .collect();
        Ok(BidCurve { side, points })
    }

    /// Individual step volumes, recovered from the cumulative points.
    pub fn steps(&self) -> Result<Vec<(f64, f64)>> {
        let mut prev = 0.0;
        let mut out = Vec::with_capacity(self.points.len());
        for &(p, c) in &self.points {
            if c < prev || !(PRICE_FLOOR..=PRICE_CAP).contains(&p) {
                return Err(Error::data(format!(
                    "malformed {:?} curve at {p} EUR/MWh",
                    self.side
                )));
            }
            out.push((p, c - prev));
            prev = c;
        }
        Ok(out)
    }

    pub fn total(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.1)
    }
}

fn cents(p: f64) -> i64 {
    (p * 100.0).round() as i64
}

/// Supply curve after moving price-sensitive demand to the sell side, plus
/// the resulting price-independent demand volume.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedCurves {
    /// `(price in cents, step volume)`, sorted by price.
    pub supply: Vec<(i64, f64)>,
    pub inelastic_demand: f64,
}

/// Replaces each demand bid "buy v up to p" by inelastic demand `v` plus a
/// sell offer of `v` at `p + 0.01`.
pub fn transform_curves(supply: &BidCurve, demand: &BidCurve) -> Result<TransformedCurves> {
    let mut steps: Vec<(i64, f64)> = supply
        .steps()?
        .into_iter()
        .map(|(p, v)| (cents(p), v))
        .collect();
    let d = demand.steps()?;
    steps.extend(d.iter().map(|&(p, v)| (cents(p) + 1, v)));
    steps.sort_by_key(|s| s.0);
    Ok(TransformedCurves {
        supply: steps,
        inelastic_demand: d.iter().map(|s| s.1).sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeritOrder {
    pub price: f64,
    pub volume: f64,
    pub slope: f64,
}

impl TransformedCurves {
    fn price_at(&self, volume: f64) -> i64 {
        let mut cum = 0.0;
        for &(p, v) in &self.supply {
            cum += v;
            if cum >= volume - 1e-9 {
                return p;
            }
        }
        self.supply.last().map_or(0, |s| s.0)
    }

    pub fn equilibrium(&self) -> Option<(i64, f64)> {
        let d = self.inelastic_demand;
        let mut cum = 0.0;
        for &(p, v) in &self.supply {
            cum += v;
            if cum >= d - 1e-9 {
                return (p <= cents(PRICE_CAP)).then_some((p, d));
            }
        }
        None
    }
}

/// Equilibrium and finite-difference slope of the transformed supply curve
/// over `volume ± window`.
pub fn merit_order_slope(supply: &BidCurve, demand: &BidCurve, window: f64) -> Result<MeritOrder> {
    if !(window > 0.0) {
        return Err(Error::config(format!(
            "slope window must be positive, got {window}"
        )));
    }
    let tc = transform_curves(supply, demand)?;
    let (p, v) = tc
        .equilibrium()
        .ok_or_else(|| Error::data("supply and demand curves do not intersect"))?;
    let hi = tc.price_at(v + window);
    let lo = tc.price_at(v - window);
    Ok(MeritOrder {
        price: p as f64 / 100.0,
        volume: v,
        slope: (hi - lo) as f64 / 100.0 / (2.0 * window),
    })
}

/// Slopes for a sequence of days (outer) and hours (inner). A failed
/// intersection takes the previous day's value for the same hour.
pub fn slope_table(
    curves: &[Vec<(BidCurve, BidCurve)>],
    window: f64,
) -> Result<(Vec<Vec<MeritOrder>>, usize)> {
    let mut out: Vec<Vec<MeritOrder>> = Vec::with_capacity(curves.len());
    let mut imputed = 0;
    for (d, day) in curves.iter().enumerate() {
        let mut row = Vec::with_capacity(day.len());
        for (h, (s, dem)) in day.iter().enumerate() {
            match merit_order_slope(s, dem, window) {
                Ok(m) => row.push(m),
                Err(Error::Data(msg)) => {
                    let prev = out.last().and_then(|r| r.get(h)).copied().ok_or_else(|| {
                        Error::data(format!(
                            "day {d} hour {h}: {msg}, and no previous day to impute from"
                        ))
                    })?;
                    log::warn!("day {d} hour {h}: {msg}; slope imputed from the previous day");
                    imputed += 1;
                    row.push(prev);
                }
                Err(e) => return Err(e),
            }
        }
        out.push(row);
    }
    Ok((out, imputed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn demand_bid_becomes_inelastic_plus_offer() {
        let s = BidCurve::from_bids(Side::Supply, &[]).unwrap();
        let d = BidCurve::from_bids(Side::Demand, &[(100.0, 50.0)]).unwrap();
        let t = transform_curves(&s, &d).unwrap();
        assert_eq!(t.inelastic_demand, 50.0);
        assert_eq!(t.supply, vec![(10001, 50.0)]);
    }

    #[test]
    fn two_step_supply_slope() {
        let s = BidCurve::from_bids(Side::Supply, &[(20.0, 100.0), (60.0, 100.0)]).unwrap();
        let d = BidCurve::from_bids(Side::Demand, &[(PRICE_CAP, 100.0)]).unwrap();
        let m = merit_order_slope(&s, &d, 10.0).unwrap();
        assert_eq!(m.price, 20.0);
        assert_eq!(m.volume, 100.0);
        assert!((m.slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flat_supply_has_zero_slope() {
        let s = BidCurve::from_bids(Side::Supply, &[(35.0, 1000.0)]).unwrap();
        let d = BidCurve::from_bids(Side::Demand, &[(PRICE_CAP, 400.0)]).unwrap();
        assert_eq!(merit_order_slope(&s, &d, 100.0).unwrap().slope, 0.0);
    }

    #[test]
    fn no_intersection_is_flagged_and_imputed() {
        let s = BidCurve::from_bids(Side::Supply, &[(20.0, 10.0)]).unwrap();
        let d = BidCurve::from_bids(Side::Demand, &[(PRICE_CAP, 100.0)]).unwrap();
        assert!(matches!(
            merit_order_slope(&s, &d, 5.0),
            Err(Error::Data(_))
        ));
        let good = (
            BidCurve::from_bids(Side::Supply, &[(20.0, 100.0), (60.0, 100.0)]).unwrap(),
            BidCurve::from_bids(Side::Demand, &[(PRICE_CAP, 100.0)]).unwrap(),
        );
        let (table, imputed) =
            slope_table(&[vec![good.clone()], vec![(s.clone(), d.clone())]], 10.0).unwrap();
        assert_eq!(imputed, 1);
        assert_eq!(table[1][0], table[0][0]);
        assert!(slope_table(&[vec![(s, d)]], 10.0).is_err());
    }

    fn direct_equilibrium(supply: &[(f64, f64)], demand: &[(f64, f64)]) -> Option<i64> {
        let lo = supply.iter().chain(demand).map(|b| cents(b.0)).min()? - 1;
        let hi = supply.iter().chain(demand).map(|b| cents(b.0)).max()? + 2;
        (lo..=hi).find(|&c| {
            let s: f64 = supply.iter().filter(|b| cents(b.0) <= c).map(|b| b.1).sum();
            let d: f64 = demand.iter().filter(|b| cents(b.0) >= c).map(|b| b.1).sum();
            s >= d - 1e-9
        })
    }

    #[test]
    fn transformation_keeps_equilibrium_price() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let supply: Vec<(f64, f64)> = (0..rng.random_range(1..6))
                .map(|_| {
                    (
                        rng.random_range(-50..200) as f64,
                        rng.random_range(1..50) as f64,
                    )
                })
                .collect();
            let demand: Vec<(f64, f64)> = (0..rng.random_range(1..6))
                .map(|_| {
                    (
                        rng.random_range(-50..200) as f64,
                        rng.random_range(1..50) as f64,
                    )
                })
                .collect();
            let s = BidCurve::from_bids(Side::Supply, &supply).unwrap();
            let d = BidCurve::from_bids(Side::Demand, &demand).unwrap();
            let t = transform_curves(&s, &d).unwrap();
            let via_transform = t.equilibrium().map(|e| e.0);
            let direct = direct_equilibrium(&supply, &demand);
            if let Some(p) = via_transform {
                assert_eq!(Some(p), direct, "{supply:?} {demand:?}");
            }
        }
    }
}
