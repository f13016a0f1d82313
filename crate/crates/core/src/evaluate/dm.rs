use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dist::normal::cdf as norm_cdf;
use crate::{Error, Result};

/// Outcome of a Diebold-Mariano comparison of models A and B on the loss
/// differential `Δ_d = ||L_A^d||_p - ||L_B^d||_p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub n: usize,
    pub mean_diff: f64,
    pub statistic: Option<f64>,
    /// p-value against "A is more accurate than B".
    pub p_a_better: Option<f64>,
    /// p-value against "B is more accurate than A".
    pub p_b_better: Option<f64>,
    /// The differential has zero long-run variance.
    pub degenerate: bool,
    pub adf: Option<AdfResult>,
}

/// Bartlett-kernel long-run variance with lag `⌊n^{1/3}⌋`.
pub fn hac_variance(x: &[f64]) -> f64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let lag = (n as f64).cbrt().floor() as usize;
    let gamma = |k: usize| {
        (k..n)
            .map(|i| (x[i] - mean) * (x[i - k] - mean))
            .sum::<f64>()
            / n as f64
    };
    let mut v = gamma(0);
    for k in 1..=lag.min(n - 1) {
        v += 2.0 * (1.0 - k as f64 / (lag as f64 + 1.0)) * gamma(k);
    }
    v
}

/// p-norm of one day's loss vector.
pub fn loss_norm(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
    } else if p == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else {
        v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// DM test from per-day loss vectors of two models.
pub fn dm_test(loss_a: &[Vec<f64>], loss_b: &[Vec<f64>], p: f64) -> Result<DmResult> {
    if loss_a.len() != loss_b.len() {
        return Err(Error::schema("loss series of different length"));
    }
    if !(p >= 1.0) {
        return Err(Error::config(format!(
            "loss norm order must be >= 1, got {p}"
        )));
    }
    let diff: Vec<f64> = loss_a
        .iter()
        .zip(loss_b)
        .map(|(a, b)| loss_norm(a, p) - loss_norm(b, p))
        .collect();
    dm_from_differential(&diff)
}

pub fn dm_from_differential(diff: &[f64]) -> Result<DmResult> {
    let n = diff.len();
    if n < 2 {
        return Err(Error::data(format!(
            "DM test needs at least 2 days, got {n}"
        )));
    }
    if diff.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite loss differential"));
    }
    let mean = diff.iter().sum::<f64>() / n as f64;
    let var = hac_variance(diff);
    let scale = diff
        .iter()
        .map(|v| v.abs())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let adf = adf_test(diff).ok();
    if var <= 1e-24 * scale * scale {
        log::warn!("DM loss differential has zero variance; test is degenerate");
        return Ok(DmResult {
            n,
            mean_diff: mean,
            statistic: None,
            p_a_better: None,
            p_b_better: None,
            degenerate: true,
            adf,
        });
    }
    let stat = mean / (var / n as f64).sqrt();
    Ok(DmResult {
        n,
        mean_diff: mean,
        statistic: Some(stat),
        p_a_better: Some(norm_cdf(stat)),
        p_b_better: Some(1.0 - norm_cdf(stat)),
        degenerate: false,
        adf,
    })
}

/// Augmented Dickey-Fuller test with a constant, lag order chosen by AIC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub p_value: f64,
    pub lags: usize,
    pub n_obs: usize,
}

pub fn adf_max_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

struct Ols {
    beta: DVector<f64>,
    se0: f64,
    rss: f64,
}

fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<Ols> {
    let xtx = x.transpose() * x;
    let inv = xtx.clone().try_inverse()?;
    let beta = &inv * (x.transpose() * y);
    let resid = y - x * &beta;
    let rss = resid.dot(&resid);
    let dof = x.nrows() as f64 - x.ncols() as f64;
    if dof <= 0.0 {
        return None;
    }
    let se0 = (rss / dof * inv[(1, 1)]).sqrt();
    Some(Ols { beta, se0, rss })
}

fn adf_regression(y: &[f64], p: usize, start: usize) -> Option<Ols> {
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    // rows indexed by i over dy, i >= start
    let rows = dy.len() - start;
    let mut x = DMatrix::zeros(rows, 2 + p);
    let mut v = DVector::zeros(rows);
    for (r, i) in (start..dy.len()).enumerate() {
        v[r] = dy[i];
        x[(r, 0)] = 1.0;
        x[(r, 1)] = y[i];
        for j in 1..=p {
            x[(r, 1 + j)] = dy[i - j];
        }
    }
    ols(&x, &v)
}

pub fn adf_test(y: &[f64]) -> Result<AdfResult> {
    let n = y.len();
    let pmax = adf_max_lag(n).min(n.saturating_sub(8) / 2);
    if n < 10 {
        return Err(Error::data(format!(
            "ADF test needs at least 10 observations, got {n}"
        )));
    }
    let mut best: Option<(f64, usize)> = None;
    for p in 0..=pmax {
        if let Some(fit) = adf_regression(y, p, pmax) {
            let m = (n - 1 - pmax) as f64;
            let aic = m * (fit.rss / m).ln() + 2.0 * (p + 2) as f64;
            if best.is_none_or(|(a, _)| aic < a) {
                best = Some((aic, p));
            }
        }
    }
    let (_, p) = best.ok_or_else(|| Error::numerical("ADF regression is singular"))?;
    let fit =
        adf_regression(y, p, p).ok_or_else(|| Error::numerical("ADF regression is singular"))?;
    let statistic = fit.beta[1] / fit.se0;
    if !statistic.is_finite() {
        return Err(Error::numerical("ADF statistic is not finite"));
    }
    Ok(AdfResult {
        statistic,
        p_value: mackinnon_p(statistic),
        lags: p,
        n_obs: n - 1 - p,
    })
}

/// MacKinnon (1994) asymptotic p-value for the constant-only ADF statistic.
pub fn mackinnon_p(stat: f64) -> f64 {
    const TAU_STAR: f64 = -1.61;
    const TAU_MIN: f64 = -18.83;
    const TAU_MAX: f64 = 2.74;
    const SMALL: [f64; 3] = [2.1659, 1.4412, 0.038269];
    const LARGE: [f64; 4] = [1.7339, 0.93202, -0.12745, -0.010368];
    if stat > TAU_MAX {
        return 1.0;
    }
    if stat < TAU_MIN {
        return 0.0;
    }
    let poly = |c: &[f64]| c.iter().rev().fold(0.0, |acc, &a| acc * stat + a);
    norm_cdf(if stat <= TAU_STAR {
        poly(&SMALL)
    } else {
        poly(&LARGE)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn clear_winner_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let diff: Vec<f64> = (0..200)
            .map(|_| 1.0 + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let r = dm_from_differential(&diff).unwrap();
        assert!(r.p_a_better.unwrap() > 0.999_999);
        assert!(r.p_b_better.unwrap() < 1e-6);
    }

    #[test]
    fn null_p_values_roughly_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let reps = 1000;
        let mut rejections = 0;
        for _ in 0..reps {
            let a: Vec<Vec<f64>> = (0..250)
                .map(|_| vec![rng.sample::<f64, _>(StandardNormal).abs()])
                .collect();
            let b: Vec<Vec<f64>> = (0..250)
                .map(|_| vec![rng.sample::<f64, _>(StandardNormal).abs()])
                .collect();
            if dm_test(&a, &b, 1.0).unwrap().p_b_better.unwrap() < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / reps as f64;
        assert!(rate <= 0.07, "{rate}");
    }

    #[test]
    fn swapping_models_swaps_p_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let b: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let ab = dm_test(&a, &b, 2.0).unwrap();
        let ba = dm_test(&b, &a, 2.0).unwrap();
        assert!((ab.p_a_better.unwrap() - ba.p_b_better.unwrap()).abs() < 1e-12);
        assert!((ab.p_a_better.unwrap() + ab.p_b_better.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_models_degenerate() {
        let a = vec![vec![1.0, 2.0]; 20];
        let r = dm_test(&a, &a, 1.0).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_a_better, None);
    }

    #[test]
    fn norm_order_applied() {
        assert_eq!(loss_norm(&[3.0, -4.0], 2.0), 5.0);
        assert_eq!(loss_norm(&[3.0, -4.0], 1.0), 7.0);
        assert_eq!(loss_norm(&[3.0, -4.0], f64::INFINITY), 4.0);
    }

    #[test]
    fn hac_of_white_noise_near_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..20_000)
            .map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        assert!((hac_variance(&x) - 4.0).abs() < 0.2);
    }

    #[test]
    fn mackinnon_reference_points() {
        assert!((mackinnon_p(-2.86) - 0.05).abs() < 0.005);
        assert!((mackinnon_p(-3.43) - 0.01).abs() < 0.002);
        assert!((mackinnon_p(-2.57) - 0.10).abs() < 0.01);
        assert_eq!(mackinnon_p(5.0), 1.0);
    }

    #[test]
    fn adf_separates_noise_from_random_walk() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise: Vec<f64> = (0..300).map(|_| rng.sample(StandardNormal)).collect();
        let r = adf_test(&noise).unwrap();
        assert!(r.p_value < 0.01, "{r:?}");
        let mut walk = vec![0.0];
        for e in &noise {
            walk.push(walk.last().unwrap() + e);
        }
        assert!(adf_test(&walk).unwrap().p_value > 0.05);
    }
}
