use rand::Rng;
use rayon::prelude::*;

use crate::dist::{normal, MixtureParams};
use crate::features::calendar::{slot, SLOTS_PER_DAY};
use crate::features::RowSet;
use crate::ingest::Market;
use crate::marginal::MarginalFit;
use crate::{seed, Result};

pub const U_CLAMP: f64 = 1e-12;

/// Checkerboard probability integral transforms of a set of days, laid out
/// as `position * SLOTS_PER_DAY + slot`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoObs {
    pub days: Vec<usize>,
    pub u: Vec<f64>,
    pub z: Vec<f64>,
    /// Whether `u` was jittered inside the no-trade atom.
    pub atom: Vec<bool>,
    pub clamped: usize,
}

impl PseudoObs {
    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    #[inline]
    pub fn z_at(&self, p: usize, h: usize, t: usize) -> f64 {
        self.z[p * SLOTS_PER_DAY + slot(h, t)]
    }
}

/// PIT of one observation. No-trade buckets are spread uniformly over the
/// atom using `jitter` in [0, 1); traded changes (including zero) are
/// treated as continuous. Returns `(u, in_atom)` before clamping.
#[inline]
pub fn checkerboard_pit(m: &MixtureParams, change: f64, traded: bool, jitter: f64) -> (f64, bool) {
    if traded {
        (m.pit_traded(change), false)
    } else {
        let (lo, hi) = m.atom_interval();
        (lo + (hi - lo) * jitter, true)
    }
}

/// Transforms every bucket of `days` to uniform and standard-normal scores
/// under `fit`. The jitter stream of each day is derived from `seed_root`.
pub fn gaussianize(
    market: &Market,
    days: &[usize],
    fit: &MarginalFit,
    seed_root: u64,
) -> Result<PseudoObs> {
    let params = fit.predict_params(market, &RowSet::all(days))?;
    Ok(gaussianize_with(market, days, &params, seed_root))
}

/// As [`gaussianize`] with precomputed mixture parameters in `RowSet::all` order.
pub fn gaussianize_with(
    market: &Market,
    days: &[usize],
    params: &[MixtureParams],
    seed_root: u64,
) -> PseudoObs {
    assert_eq!(params.len(), days.len() * SLOTS_PER_DAY);
    let per_day: Vec<(Vec<f64>, Vec<bool>, usize)> = days
        .par_iter()
        .enumerate()
        .map(|(p, &d)| {
            let mut rng = seed::rng(seed_root, &[seed::label("pit"), d as u64]);
            let mut u = Vec::with_capacity(SLOTS_PER_DAY);
            let mut atom = Vec::with_capacity(SLOTS_PER_DAY);
            let mut clamped = 0;
            for s in 0..SLOTS_PER_DAY {
                let g = d * SLOTS_PER_DAY + s;
                let traded = market.grid.traded[g];
                let jitter = if traded { 0.0 } else { rng.random::<f64>() };
                let (v, a) = checkerboard_pit(
                    &params[p * SLOTS_PER_DAY + s],
                    market.grid.change[g],
                    traded,
                    jitter,
                );
                let c = v.clamp(U_CLAMP, 1.0 - U_CLAMP);
                if c != v {
                    clamped += 1;
                }
                u.push(c);
                atom.push(a);
            }
            (u, atom, clamped)
        })
        .collect();
    let mut out = PseudoObs {
        days: days.to_vec(),
        u: Vec::with_capacity(params.len()),
        z: Vec::new(),
        atom: Vec::with_capacity(params.len()),
        clamped: 0,
    };
    for (u, a, c) in per_day {
        out.u.extend(u);
        out.atom.extend(a);
        out.clamped += c;
    }
    if out.clamped > 0 {
        log::warn!(
            "{} PIT values clamped to [{U_CLAMP}, 1 - {U_CLAMP}]",
            out.clamped
        );
    }
    out.z = out.u.par_iter().map(|&u| normal::quantile(u)).collect();
    out
}
