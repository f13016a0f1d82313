use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use super::constant::{corr_from_sums, hour_pairs, pair_correlation};
use super::pit::PseudoObs;
use crate::features::calendar::session_len;
use crate::marginal::optim::{lbfgs, LbfgsOptions};
use crate::marginal::sigmoid;

pub const WIDTH_CANDIDATES: [usize; 6] = [8, 12, 16, 24, 32, 64];
pub const KNOT_HI: f64 = 128.0;
const SHRINK: f64 = 1e-6;
const MIN_DAYS: usize = 3;

/// Beta-regression curve of one hour pair's correlation over trading time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCurve {
    pub a: usize,
    pub b: usize,
    /// Knot spacing; 0 for the constant fallback.
    pub width: usize,
    pub knots: Vec<f64>,
    pub beta: Vec<f64>,
    pub phi: f64,
    pub bic: f64,
    pub n_points: usize,
}

impl PairCurve {
    fn basis(knots: &[f64], t: f64, out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        out.extend(knots.iter().map(|&k| t.min(k) / KNOT_HI));
    }

    /// Fitted correlation at bucket `t`.
    pub fn rho(&self, t: usize) -> f64 {
        let mut x = Vec::with_capacity(self.beta.len());
        Self::basis(&self.knots, t as f64, &mut x);
        let eta: f64 = x.iter().zip(&self.beta).map(|(a, b)| a * b).sum();
        2.0 * sigmoid(eta) - 1.0
    }
}

/// Per-bucket correlations across days for one pair: `(t, rho_t)`.
pub fn bucket_correlations(p: &PseudoObs, a: usize, b: usize) -> Vec<(usize, f64)> {
    let len = session_len(a).min(session_len(b));
    let n = p.n_days();
    if n < MIN_DAYS {
        return Vec::new();
    }
    (0..len)
        .filter_map(|t| {
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for d in 0..n {
                let x = p.z_at(d, a, t);
                let y = p.z_at(d, b, t);
                sx += x;
                sy += y;
                sxx += x * x;
                syy += y * y;
                sxy += x * y;
            }
            corr_from_sums(n as f64, sx, sy, sxx, syy, sxy).map(|r| (t, r))
        })
        .collect()
}

/// Knots at multiples of `width` up to [`KNOT_HI`], dropping those that
/// coincide with the linear term over a session of `len` buckets.
pub fn knots_for(width: usize, len: usize) -> Vec<f64> {
    let last = len.saturating_sub(1) as f64;
    let mut knots: Vec<f64> = (1..)
        .map(|j| (j * width) as f64)
        .take_while(|&k| k < KNOT_HI)
        .chain(std::iter::once(KNOT_HI))
        .collect();
    if let Some(s) = knots.iter().position(|&k| k >= last) {
        knots.truncate(s + 1);
    }
    knots
}

fn beta_nll(ts: &[f64], y: &[f64], knots: &[f64], theta: &[f64], grad: &mut [f64]) -> f64 {
    let p = knots.len() + 1;
    let phi = theta[p].exp();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut x = Vec::with_capacity(p);
    let mut nll = 0.0;
    let (lg_phi, dg_phi) = (ln_gamma(phi), digamma(phi));
    for (&t, &yi) in ts.iter().zip(y) {
        PairCurve::basis(knots, t, &mut x);
        let eta: f64 = x.iter().zip(&theta[..p]).map(|(a, b)| a * b).sum();
        let m = sigmoid(eta).clamp(1e-12, 1.0 - 1e-12);
        let (a, b) = (m * phi, (1.0 - m) * phi);
        let (ly, l1y) = (yi.ln(), (-yi).ln_1p());
        nll -= lg_phi - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * ly + (b - 1.0) * l1y;
        let (dga, dgb) = (digamma(a), digamma(b));
        let dm = phi * (ly - l1y - dga + dgb);
        let deta = -dm * m * (1.0 - m);
        for (g, xi) in grad[..p].iter_mut().zip(&x) {
            *g += deta * xi;
        }
        let dphi = dg_phi - m * dga - (1.0 - m) * dgb + m * ly + (1.0 - m) * l1y;
        grad[p] -= dphi * phi;
    }
    nll
}

fn fit_width(
    ts: &[f64],
    y: &[f64],
    knots: Vec<f64>,
    width: usize,
    a: usize,
    b: usize,
) -> PairCurve {
    let p = knots.len() + 1;
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let phi0 = if var > 0.0 {
        (mean * (1.0 - mean) / var - 1.0).clamp(1.0, 1e6)
    } else {
        1e6
    };
    let mut x0 = vec![0.0; p + 1];
    x0[0] = (mean / (1.0 - mean)).ln();
    x0[p] = phi0.ln();
    let opts = LbfgsOptions {
        max_iter: 1000,
        grad_tol: 1e-8,
        rel_tol: 1e-13,
        ..LbfgsOptions::default()
    };
    let r = lbfgs(
        |th, g| beta_nll(ts, y, &knots, th, g),
        x0,
        &vec![false; p + 1],
        &opts,
    );
    PairCurve {
        a,
        b,
        width,
        bic: 2.0 * r.value + (p + 1) as f64 * n.ln(),
        phi: r.x[p].exp(),
        beta: r.x[..p].to_vec(),
        knots,
        n_points: y.len(),
    }
}

/// Beta regression of the shifted per-bucket correlations on a ReLU basis in
/// `t`, with the knot spacing chosen by BIC.
pub fn fit_pair_curve(p: &PseudoObs, a: usize, b: usize) -> PairCurve {
    let obs = bucket_correlations(p, a, b);
    let len = session_len(a).min(session_len(b));
    if obs.len() < 3 {
        let rho = pair_correlation(p, a, b)
            .0
            .unwrap_or(0.0)
            .clamp(-1.0 + SHRINK, 1.0 - SHRINK);
        let m = (rho + 1.0) / 2.0;
        return PairCurve {
            a,
            b,
            width: 0,
            knots: Vec::new(),
            beta: vec![(m / (1.0 - m)).ln()],
            phi: f64::INFINITY,
            bic: f64::NAN,
            n_points: obs.len(),
        };
    }
    let ts: Vec<f64> = obs.iter().map(|&(t, _)| t as f64).collect();
    let y: Vec<f64> = obs
        .iter()
        .map(|&(_, r)| (r.clamp(-1.0 + SHRINK, 1.0 - SHRINK) + 1.0) / 2.0)
        .collect();
    let mut seen: Vec<Vec<f64>> = Vec::new();
    let mut best: Option<PairCurve> = None;
    for w in WIDTH_CANDIDATES {
        let knots = knots_for(w, len);
        if seen.contains(&knots) {
            continue;
        }
        seen.push(knots.clone());
        let c = fit_width(&ts, &y, knots, w, a, b);
        if best.as_ref().is_none_or(|bst| c.bic < bst.bic) {
            best = Some(c);
        }
    }
    best.expect("at least one width")
}

/// Time-varying dependence: one curve per hour pair plus the empirical
/// standard deviation of each hour's normal scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeVaryingEstimate {
    pub curves: Vec<PairCurve>,
    pub sd: Vec<f64>,
}

pub fn fit_time_varying(p: &PseudoObs) -> TimeVaryingEstimate {
    let curves = hour_pairs()
        .par_iter()
        .map(|&(a, b)| fit_pair_curve(p, a, b))
        .collect();
    let sd = (0..crate::features::calendar::HOURS)
        .map(|h| {
            let len = session_len(h);
            let vals: Vec<f64> = (0..p.n_days())
                .flat_map(|d| (0..len).map(move |t| (d, t)))
                .map(|(d, t)| p.z_at(d, h, t))
                .collect();
            crate::dist::stats::variance(&vals).sqrt()
        })
        .collect();
    TimeVaryingEstimate { curves, sd }
}
