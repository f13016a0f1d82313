use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scenario::ScenarioSet;
use crate::features::calendar::{session_len, slot, HOURS, SLOTS_PER_DAY};
use crate::ingest::{Market, TradeGrid};
use crate::{seed, Error, Result};

pub const LOOKBACK_CANDIDATES: [usize; 5] = [30, 60, 90, 180, 365];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    NaiveInd,
    NaiveDep,
    RwEmp,
}

impl BenchmarkKind {
    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::NaiveInd => "naive_ind",
            BenchmarkKind::NaiveDep => "naive_dep",
            BenchmarkKind::RwEmp => "rw_emp",
        }
    }

    /// Seed stream label. Both naive benchmarks share one, so with equal
    /// seeds they resample the same source days.
    pub fn stream(self) -> &'static str {
        match self {
            BenchmarkKind::NaiveInd | BenchmarkKind::NaiveDep => "naive",
            BenchmarkKind::RwEmp => "rw_emp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub kind: BenchmarkKind,
    pub lookback: usize,
}

/// Source days for forecasting day `d`: the `lookback` days ending at
/// `d - 2`, the last day whose sessions are complete at forecast time.
pub fn history_window(d: usize, lookback: usize) -> Result<std::ops::Range<usize>> {
    if lookback == 0 {
        return Err(Error::config("lookback must be at least one day"));
    }
    if d < lookback + 1 {
        return Err(Error::data(format!(
            "day index {d} has only {} complete prior days, lookback {lookback} requested",
            d.saturating_sub(1)
        )));
    }
    Ok(d - 1 - lookback..d - 1)
}

/// Resamples historical trajectories (or centered per-bucket innovations
/// for the random walk) and re-anchors them at day `d`'s spot.
pub fn benchmark_sampler(
    market: &Market,
    cfg: &BenchmarkConfig,
    d: usize,
    n_paths: usize,
    seed_root: u64,
) -> Result<ScenarioSet> {
    let window = history_window(d, cfg.lookback)?;
    let grid = &market.grid;
    let mut changes = vec![0.0; n_paths * SLOTS_PER_DAY];
    match cfg.kind {
        BenchmarkKind::NaiveInd | BenchmarkKind::NaiveDep => {
            // One source day per path; the independent variant permutes the
            // paths separately for every hour.
            let mut rng = seed::rng(seed_root, &[seed::label("naive")]);
            let src: Vec<usize> = (0..n_paths)
                .map(|_| rng.random_range(window.clone()))
                .collect();
            let mut order: Vec<usize> = (0..n_paths).collect();
            for h in 0..HOURS {
                if cfg.kind == BenchmarkKind::NaiveInd {
                    order.sort_unstable();
                    order.shuffle(&mut seed::rng(
                        seed_root,
                        &[seed::label("naive_ind"), h as u64],
                    ));
                }
                let s0 = slot(h, 0);
                let len = session_len(h);
                for (m, &k) in order.iter().enumerate() {
                    let at = m * SLOTS_PER_DAY + s0;
                    changes[at..at + len].copy_from_slice(grid.changes(src[k], h));
                }
            }
        }
        BenchmarkKind::RwEmp => {
            let pools = centered_pools(grid, window);
            let n_src = pools.len() / SLOTS_PER_DAY;
            for m in 0..n_paths {
                let mut rng = seed::rng(seed_root, &[seed::label(cfg.kind.name()), m as u64]);
                let out = &mut changes[m * SLOTS_PER_DAY..(m + 1) * SLOTS_PER_DAY];
                for (s, o) in out.iter_mut().enumerate() {
                    *o = pools[s * n_src + rng.random_range(0..n_src)];
                }
            }
        }
    }
    let spot: Vec<f64> = (0..HOURS).map(|h| grid.spot_at(d, h)).collect();
    Ok(ScenarioSet::from_changes(
        cfg.kind.name(),
        seed_root,
        grid.date(d),
        &spot,
        &changes,
        n_paths,
    ))
}

/// Historical changes per slot minus their slot mean, slot-major.
pub fn centered_pools(grid: &TradeGrid, window: std::ops::Range<usize>) -> Vec<f64> {
    let n = window.len();
    let mut pools = vec![0.0; SLOTS_PER_DAY * n];
    for s in 0..SLOTS_PER_DAY {
        let pool = &mut pools[s * n..(s + 1) * n];
        for (k, d) in window.clone().enumerate() {
            pool[k] = grid.change[d * SLOTS_PER_DAY + s];
        }
        let mean = pool.iter().sum::<f64>() / n as f64;
        pool.iter_mut().for_each(|v| *v -= mean);
    }
    pools
}
