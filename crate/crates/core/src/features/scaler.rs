use serde::{Deserialize, Serialize};

use crate::features::calendar::HOURS;
use crate::ingest::Market;

/// Column count of the standardized block: five fundamentals then spot.
pub const SCALED_COLUMNS: usize = 6;

/// z-standardization constants estimated on distinct training `(d, h)` rows
/// with the population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub enabled: bool,
    pub mean: [f64; SCALED_COLUMNS],
    pub sd: [f64; SCALED_COLUMNS],
}

impl Standardizer {
    pub fn identity() -> Self {
        Standardizer {
            enabled: false,
            mean: [0.0; SCALED_COLUMNS],
            sd: [1.0; SCALED_COLUMNS],
        }
    }

    pub fn fit(market: &Market, days: &[usize], enabled: bool) -> Self {
        if !enabled || days.is_empty() {
            return Self::identity();
        }
        let n = (days.len() * HOURS) as f64;
        let mut sum = [0.0; SCALED_COLUMNS];
        for &d in days {
            for h in 0..HOURS {
                let r = raw_row(market, d, h);
                for k in 0..SCALED_COLUMNS {
                    sum[k] += r[k];
                }
            }
        }
        let mean = sum.map(|s| s / n);
        let mut ss = [0.0; SCALED_COLUMNS];
        for &d in days {
            for h in 0..HOURS {
                let r = raw_row(market, d, h);
                for k in 0..SCALED_COLUMNS {
                    ss[k] += (r[k] - mean[k]) * (r[k] - mean[k]);
                }
            }
        }
        let sd = ss.map(|s| {
            let v = (s / n).sqrt();
            if v > 0.0 && v.is_finite() {
                v
            } else {
                1.0
            }
        });
        Standardizer {
            enabled: true,
            mean,
            sd,
        }
    }

    #[inline]
    pub fn apply(&self, k: usize, x: f64) -> f64 {
        (x - self.mean[k]) / self.sd[k]
    }

    /// Standardized fundamentals and spot for day `d`, hour `h`.
    pub fn row(&self, market: &Market, d: usize, h: usize) -> [f64; SCALED_COLUMNS] {
        let r = raw_row(market, d, h);
        std::array::from_fn(|k| self.apply(k, r[k]))
    }
}

fn raw_row(market: &Market, d: usize, h: usize) -> [f64; SCALED_COLUMNS] {
    let f = market.fundamentals.at(d, h);
    [f[0], f[1], f[2], f[3], f[4], market.grid.spot_at(d, h)]
}
