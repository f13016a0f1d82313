use rayon::prelude::*;

use super::calendar::{hour_offset, slot_hour_bucket, HOURS, SLOTS_PER_DAY};
use super::layout::{Equation, Group, Level, Registry};
use super::spec::{FeatureSpec, LAGS};
use crate::ingest::{Market, TradeGrid};

/// Observations addressed as `(position in days, slot)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RowSet {
    pub days: Vec<usize>,
    pub rows: Vec<(u32, u16)>,
}

impl RowSet {
    /// Every bucket of the given market days, ordered by day then slot.
    pub fn all(days: &[usize]) -> Self {
        let rows = (0..days.len() as u32)
            .flat_map(|p| (0..SLOTS_PER_DAY as u16).map(move |s| (p, s)))
            .collect();
        RowSet {
            days: days.to_vec(),
            rows,
        }
    }

    /// Buckets with at least one trade.
    pub fn traded(market: &Market, days: &[usize]) -> Self {
        let mut rows = Vec::new();
        for (p, &d) in days.iter().enumerate() {
            let base = d * SLOTS_PER_DAY;
            for s in 0..SLOTS_PER_DAY {
                if market.grid.traded[base + s] {
                    rows.push((p as u32, s as u16));
                }
            }
        }
        RowSet {
            days: days.to_vec(),
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Flat grid index of row `i`.
    #[inline]
    pub fn grid_index(&self, i: usize) -> usize {
        let (p, s) = self.rows[i];
        self.days[p as usize] * SLOTS_PER_DAY + s as usize
    }

    pub fn subset(&self, idx: &[usize]) -> RowSet {
        RowSet {
            days: self.days.clone(),
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
        }
    }
}

/// Where autoregressive features come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagSource {
    Observed,
    /// All lag columns zero; used for simulation templates.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    cols: Vec<usize>,
    data: Vec<f64>,
}

impl Block {
    #[inline]
    fn unit(&self, u: usize) -> &[f64] {
        let w = self.cols.len();
        &self.data[u * w..(u + 1) * w]
    }

    fn unit_dots(&self, beta: &[f64]) -> Vec<f64> {
        let w = self.cols.len();
        if w == 0 {
            return vec![0.0; self.data.len().max(1)];
        }
        let b: Vec<f64> = self.cols.iter().map(|&j| beta[j]).collect();
        self.data
            .chunks_exact(w)
            .map(|r| r.iter().zip(&b).map(|(x, c)| x * c).sum())
            .collect()
    }
}

/// Block-factored design matrix: columns varying only with `(d, h)` or only
/// with `(h, t)` are stored once per unit and shared by all rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub registry: Registry,
    n_rows: usize,
    row_dh: Vec<u32>,
    row_slot: Vec<u16>,
    day_hour: Block,
    hour_bucket: Block,
    observation: Block,
}

impl DesignMatrix {
    pub fn build(
        spec: &FeatureSpec,
        eq: Equation,
        market: &Market,
        rows: &RowSet,
        lags: LagSource,
    ) -> DesignMatrix {
        let registry = spec.registry(eq);
        let cols_at = |lv: Level| -> Vec<usize> {
            (0..registry.len())
                .filter(|&j| registry.columns[j].group.level() == lv)
                .collect()
        };
        let dh_cols = cols_at(Level::DayHour);
        let hb_cols = cols_at(Level::HourBucket);
        let ob_cols = cols_at(Level::Observation);

        let mut dh_data = Vec::with_capacity(rows.days.len() * HOURS * dh_cols.len());
        let mut buf = Vec::new();
        if !dh_cols.is_empty() {
            for &d in &rows.days {
                for h in 0..HOURS {
                    spec.day_hour_values(eq, market, d, h, &mut buf);
                    debug_assert_eq!(buf.len(), dh_cols.len());
                    dh_data.extend_from_slice(&buf);
                }
            }
        }
        let mut hb_data = Vec::with_capacity(SLOTS_PER_DAY * hb_cols.len());
        if !hb_cols.is_empty() {
            for s in 0..SLOTS_PER_DAY {
                let (h, t) = slot_hour_bucket(s);
                spec.hour_bucket_values(eq, h, t, &mut buf);
                debug_assert_eq!(buf.len(), hb_cols.len());
                hb_data.extend_from_slice(&buf);
            }
        }

        let ob_groups: Vec<Group> = ob_cols.iter().map(|&j| registry.columns[j].group).collect();
        let mut ob_data = vec![0.0; rows.len() * ob_cols.len()];
        if !ob_cols.is_empty() && lags == LagSource::Observed {
            let grid = &market.grid;
            ob_data
                .par_chunks_mut(ob_cols.len())
                .enumerate()
                .for_each(|(i, out)| {
                    let (p, s) = rows.rows[i];
                    let (h, t) = slot_hour_bucket(s as usize);
                    let base = TradeGrid::idx(rows.days[p as usize], h, 0);
                    for (k, g) in ob_groups.iter().enumerate() {
                        let lag = k % LAGS + 1;
                        if t < lag {
                            continue;
                        }
                        let idx = base + t - lag;
                        out[k] = match g {
                            Group::PriceLags => grid.change[idx],
                            Group::AbsLags => grid.change[idx].abs(),
                            Group::TradeLags => f64::from(u8::from(grid.traded[idx])),
                            _ => unreachable!(),
                        };
                    }
                });
        }

        DesignMatrix {
            n_rows: rows.len(),
            row_dh: rows
                .rows
                .iter()
                .map(|&(p, s)| p * HOURS as u32 + slot_hour_bucket(s as usize).0 as u32)
                .collect(),
            row_slot: rows.rows.iter().map(|&(_, s)| s).collect(),
            day_hour: Block {
                cols: dh_cols,
                data: dh_data,
            },
            hour_bucket: Block {
                cols: hb_cols,
                data: hb_data,
            },
            observation: Block {
                cols: ob_cols,
                data: ob_data,
            },
            registry,
        }
    }

    /// Wraps a dense row-major matrix; every column is treated as observation level.
    pub fn from_dense(registry: Registry, n_rows: usize, data: Vec<f64>) -> DesignMatrix {
        let p = registry.len();
        assert_eq!(data.len(), n_rows * p);
        DesignMatrix {
            n_rows,
            row_dh: vec![0; n_rows],
            row_slot: vec![0; n_rows],
            day_hour: Block {
                cols: vec![],
                data: vec![],
            },
            hour_bucket: Block {
                cols: vec![],
                data: vec![],
            },
            observation: Block {
                cols: (0..p).collect(),
                data,
            },
            registry,
        }
    }

    pub fn nrows(&self) -> usize {
        self.n_rows
    }

    pub fn ncols(&self) -> usize {
        self.registry.len()
    }

    pub fn slot(&self, i: usize) -> usize {
        self.row_slot[i] as usize
    }

    /// Writes the dense row `i` into `out` (length `ncols`).
    #[inline]
    pub fn row_into(&self, i: usize, out: &mut [f64]) {
        for (blk, u) in self.units(i) {
            for (&j, &x) in blk.cols.iter().zip(blk.unit(u)) {
                out[j] = x;
            }
        }
    }

    #[inline]
    fn units(&self, i: usize) -> [(&Block, usize); 3] {
        [
            (&self.day_hour, self.row_dh[i] as usize),
            (&self.hour_bucket, self.row_slot[i] as usize),
            (&self.observation, i),
        ]
    }

    #[inline]
    pub fn dot_row(&self, i: usize, beta: &[f64]) -> f64 {
        let mut s = 0.0;
        for (blk, u) in self.units(i) {
            if blk.cols.is_empty() {
                continue;
            }
            for (&j, &x) in blk.cols.iter().zip(blk.unit(u)) {
                s += x * beta[j];
            }
        }
        s
    }

    /// Adds `scale * row_i` to `acc`.
    #[inline]
    pub fn add_row_scaled(&self, i: usize, scale: f64, acc: &mut [f64]) {
        for (blk, u) in self.units(i) {
            for (&j, &x) in blk.cols.iter().zip(blk.unit(u)) {
                acc[j] += scale * x;
            }
        }
    }

    /// `X beta` for all rows.
    pub fn matvec(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.ncols());
        let dh = self.day_hour.unit_dots(beta);
        let hb = self.hour_bucket.unit_dots(beta);
        let has_dh = !self.day_hour.cols.is_empty();
        let has_hb = !self.hour_bucket.cols.is_empty();
        let ob = &self.observation;
        let ob_beta: Vec<f64> = ob.cols.iter().map(|&j| beta[j]).collect();
        let w = ob.cols.len();
        (0..self.n_rows)
            .into_par_iter()
            .with_min_len(4096)
            .map(|i| {
                let mut s = 0.0;
                if has_dh {
                    s += dh[self.row_dh[i] as usize];
                }
                if has_hb {
                    s += hb[self.row_slot[i] as usize];
                }
                if w > 0 {
                    s += ob.data[i * w..(i + 1) * w]
                        .iter()
                        .zip(&ob_beta)
                        .map(|(x, c)| x * c)
                        .sum::<f64>();
                }
                s
            })
            .collect()
    }

    /// `X' g`.
    pub fn rmatvec(&self, g: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.n_rows);
        let mut out = vec![0.0; self.ncols()];
        let mut acc_dh = vec![0.0; self.day_hour.data.len() / self.day_hour.cols.len().max(1)];
        let mut acc_hb = vec![0.0; SLOTS_PER_DAY];
        let w = self.observation.cols.len();
        let mut acc_ob = vec![0.0; w];
        for (i, &gi) in g.iter().enumerate() {
            if !acc_dh.is_empty() {
                acc_dh[self.row_dh[i] as usize] += gi;
            }
            acc_hb[self.row_slot[i] as usize] += gi;
            for (a, x) in acc_ob
                .iter_mut()
                .zip(&self.observation.data[i * w..(i + 1) * w])
            {
                *a += gi * x;
            }
        }
        for (blk, acc) in [(&self.day_hour, &acc_dh), (&self.hour_bucket, &acc_hb)] {
            if blk.cols.is_empty() {
                continue;
            }
            for (u, &a) in acc.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (&j, &x) in blk.cols.iter().zip(blk.unit(u)) {
                    out[j] += a * x;
                }
            }
        }
        for (&j, &a) in self.observation.cols.iter().zip(&acc_ob) {
            out[j] += a;
        }
        out
    }

    /// `X' diag(w) X` as a dense row-major `p x p` matrix.
    pub fn weighted_gram(&self, weights: &[f64]) -> Vec<f64> {
        let p = self.ncols();
        let mut gram = vec![0.0; p * p];
        let mut row = vec![0.0; p];
        for (i, &wi) in weights.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            self.row_into(i, &mut row);
            for a in 0..p {
                let xa = row[a] * wi;
                if xa == 0.0 {
                    continue;
                }
                for b in a..p {
                    gram[a * p + b] += xa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                gram[a * p + b] = gram[b * p + a];
            }
        }
        gram
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let p = self.ncols();
        let mut out = vec![0.0; self.n_rows * p];
        for i in 0..self.n_rows {
            self.row_into(i, &mut out[i * p..(i + 1) * p]);
        }
        out
    }

    /// Additive contribution of each feature group to the linear predictor of row `i`.
    pub fn group_contributions(&self, i: usize, beta: &[f64]) -> Vec<(Group, f64)> {
        let mut row = vec![0.0; self.ncols()];
        self.row_into(i, &mut row);
        let mut out: Vec<(Group, f64)> = Vec::new();
        for (j, c) in self.registry.columns.iter().enumerate() {
            let v = row[j] * beta[j];
            match out.iter_mut().find(|(g, _)| *g == c.group) {
                Some((_, s)) => *s += v,
                None => out.push((c.group, v)),
            }
        }
        out
    }

    /// Static linear predictor per slot for a single-day design built with
    /// [`LagSource::Zero`].
    pub fn slot_predictor(&self, beta: &[f64]) -> Vec<f64> {
        let eta = self.matvec(beta);
        let mut out = vec![0.0; SLOTS_PER_DAY];
        for (i, e) in eta.into_iter().enumerate() {
            out[self.row_slot[i] as usize] = e;
        }
        out
    }
}

/// First-slot offsets exposed for callers iterating hour by hour.
pub fn hour_slots(h: usize) -> std::ops::Range<usize> {
    hour_offset(h)..hour_offset(h) + super::calendar::session_len(h)
}
