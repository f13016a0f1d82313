use nalgebra::DMatrix;
use rayon::prelude::*;

use super::matrix::repair_correlation;
use super::pit::PseudoObs;
use crate::features::calendar::{session_len, HOURS};

pub const MIN_PAIRS: usize = 30;

/// Hour pairs `(a, b)` with `a < b`.
pub fn hour_pairs() -> Vec<(usize, usize)> {
    (0..HOURS)
        .flat_map(|a| (a + 1..HOURS).map(move |b| (a, b)))
        .collect()
}

/// Pearson correlation from running sums; `None` when a variance vanishes.
pub(crate) fn corr_from_sums(
    n: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
) -> Option<f64> {
    let vx = sxx - sx * sx / n;
    let vy = syy - sy * sy / n;
    let c = sxy - sx * sy / n;
    if vx <= 0.0 || vy <= 0.0 {
        return None;
    }
    Some((c / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

/// Pooled correlation of one hour pair over all `(d, t)` where both sessions run.
pub fn pair_correlation(p: &PseudoObs, a: usize, b: usize) -> (Option<f64>, usize) {
    let len = session_len(a).min(session_len(b));
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut n = 0usize;
    for day in 0..p.n_days() {
        for t in 0..len {
            let x = p.z_at(day, a, t);
            let y = p.z_at(day, b, t);
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
            n += 1;
        }
    }
    if n < 2 {
        return (None, n);
    }
    (corr_from_sums(n as f64, sx, sy, sxx, syy, sxy), n)
}

/// Constant dependence: raw pairwise estimates, the repaired matrix and the
/// number of pairs behind each entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantEstimate {
    pub raw: DMatrix<f64>,
    pub repaired: DMatrix<f64>,
    pub counts: Vec<usize>,
}

pub fn fit_constant_dependence(p: &PseudoObs) -> ConstantEstimate {
    let pairs = hour_pairs();
    let est: Vec<(Option<f64>, usize)> = pairs
        .par_iter()
        .map(|&(a, b)| pair_correlation(p, a, b))
        .collect();
    let mut raw = DMatrix::identity(HOURS, HOURS);
    let mut counts = vec![0; HOURS * HOURS];
    for (&(a, b), &(r, n)) in pairs.iter().zip(&est) {
        let v = match r {
            Some(r) if n >= MIN_PAIRS => r,
            _ => {
                log::warn!("hours {a} and {b}: only {n} paired observations, correlation set to 0");
                0.0
            }
        };
        raw[(a, b)] = v;
        raw[(b, a)] = v;
        counts[a * HOURS + b] = n;
        counts[b * HOURS + a] = n;
    }
    let repaired = repair_correlation(&raw);
    ConstantEstimate {
        raw,
        repaired,
        counts,
    }
}
