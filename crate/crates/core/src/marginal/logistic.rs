use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::optim::{lbfgs, LbfgsOptions};
use crate::features::{DesignMatrix, Equation, FeatureSpec, LagSource, Registry, RowSet};
use crate::ingest::Market;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PiOptions {
    pub l2_grid: Vec<f64>,
    pub validation_fraction: f64,
    pub max_iter: usize,
}

impl Default for PiOptions {
    fn default() -> Self {
        PiOptions {
            l2_grid: (-3..=3).map(|k| 10f64.powi(k)).collect(),
            validation_fraction: 0.25,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiGridPoint {
    pub l2: f64,
    pub step: usize,
    pub accuracy: f64,
    pub log_loss: f64,
    pub bic: f64,
}

/// Penalized logistic regression for the trade probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub registry: Registry,
    pub coefficients: Vec<f64>,
    pub l2: f64,
    pub step: usize,
    pub validation_accuracy: f64,
    pub validation_log_loss: f64,
    pub bic: f64,
    pub n_train: usize,
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub grid: Vec<PiGridPoint>,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Minimizes `sum(log(1 + e^eta) - y eta) + l2/2 * |beta_penalized|^2`.
pub fn fit_logistic(
    x: &DesignMatrix,
    y: &[bool],
    l2: f64,
    warm: Option<&[f64]>,
    max_iter: usize,
) -> Result<Vec<f64>> {
    if x.nrows() == 0 {
        return Err(Error::data("logistic regression on an empty training set"));
    }
    if y.len() != x.nrows() {
        return Err(Error::schema("response length differs from design rows"));
    }
    let cols = &x.registry.columns;
    let fixed: Vec<bool> = cols.iter().map(|c| c.aliased).collect();
    let pen: Vec<bool> = cols.iter().map(|c| c.penalized).collect();
    let n = x.nrows() as f64;
    let yv: Vec<f64> = y.iter().map(|&b| f64::from(u8::from(b))).collect();
    let x0 = match warm {
        Some(w) => w.to_vec(),
        None => vec![0.0; x.ncols()],
    };
    let res = lbfgs(
        |beta, grad| {
            let eta = x.matvec(beta);
            let mut loss = 0.0;
            let resid: Vec<f64> = eta
                .iter()
                .zip(&yv)
                .map(|(&e, &t)| {
                    loss += softplus(e) - t * e;
                    sigmoid(e) - t
                })
                .collect();
            let g = x.rmatvec(&resid);
            for j in 0..beta.len() {
                grad[j] = g[j] / n;
                if pen[j] {
                    loss += 0.5 * l2 * beta[j] * beta[j];
                    grad[j] += l2 * beta[j] / n;
                }
            }
            loss / n
        },
        x0,
        &fixed,
        &LbfgsOptions {
            max_iter,
            grad_tol: 1e-9,
            rel_tol: 1e-14,
            ..Default::default()
        },
    );
    if res.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("logistic regression diverged"));
    }
    if !res.converged {
        log::debug!("logistic fit stopped after {} iterations", res.iterations);
    }
    if res.x.iter().any(|v| v.abs() > 50.0) {
        log::warn!("very large logistic coefficients; the data may be (quasi-)separable and only the penalty keeps them finite");
    }
    Ok(res.x)
}

/// Mean log loss and 0/1 accuracy at threshold 0.5.
pub fn evaluate_logistic(x: &DesignMatrix, y: &[bool], beta: &[f64]) -> (f64, f64) {
    let eta = x.matvec(beta);
    let n = y.len().max(1) as f64;
    let mut ll = 0.0;
    let mut hits = 0usize;
    for (&e, &t) in eta.iter().zip(y) {
        ll += if t { softplus(-e) } else { softplus(e) };
        if (e > 0.0) == t {
            hits += 1;
        }
    }
    (ll / n, hits as f64 / n)
}

/// Chronological train/validation split of a day list.
pub fn split_days(days: &[usize], validation_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    if days.len() < 2 {
        return (days.to_vec(), days.to_vec());
    }
    let n_val =
        ((days.len() as f64 * validation_fraction).round() as usize).clamp(1, days.len() - 1);
    let cut = days.len() - n_val;
    (days[..cut].to_vec(), days[cut..].to_vec())
}

fn targets(market: &Market, rows: &RowSet) -> Vec<bool> {
    (0..rows.len())
        .map(|i| market.grid.traded[rows.grid_index(i)])
        .collect()
}

/// Grid search over L2 strength and trading-time knot spacing by validation
/// accuracy (log loss breaks ties), then a refit on all `days`.
pub fn fit_pi(
    market: &Market,
    days: &[usize],
    spec: &FeatureSpec,
    opts: &PiOptions,
) -> Result<LogisticFit> {
    if days.is_empty() {
        return Err(Error::data("empty training window for the trade model"));
    }
    if opts.l2_grid.is_empty() || opts.l2_grid.iter().any(|&l| !(l >= 0.0)) {
        return Err(Error::config("l2_grid must be nonempty and non-negative"));
    }
    let (train_days, val_days) = split_days(days, opts.validation_fraction);
    let train_rows = RowSet::all(&train_days);
    let val_rows = RowSet::all(&val_days);
    let y_train = targets(market, &train_rows);
    let y_val = targets(market, &val_rows);
    let mut l2_desc = opts.l2_grid.clone();
    l2_desc.sort_by(|a, b| b.total_cmp(a));

    let mut grid = Vec::new();
    for &step in &spec.config.pi_step_candidates {
        let s = spec.with_pi_step(step)?;
        let xt = DesignMatrix::build(&s, Equation::Pi, market, &train_rows, LagSource::Observed);
        let xv = DesignMatrix::build(&s, Equation::Pi, market, &val_rows, LagSource::Observed);
        let mut warm: Option<Vec<f64>> = None;
        for &l2 in &l2_desc {
            let beta = fit_logistic(&xt, &y_train, l2, warm.as_deref(), opts.max_iter)?;
            let (log_loss, accuracy) = evaluate_logistic(&xv, &y_val, &beta);
            let (train_ll, _) = evaluate_logistic(&xt, &y_train, &beta);
            let k = xt.registry.columns.iter().filter(|c| !c.aliased).count() as f64;
            let n = xt.nrows() as f64;
            grid.push(PiGridPoint {
                l2,
                step,
                accuracy,
                log_loss,
                bic: 2.0 * train_ll * n + k * n.ln(),
            });
            warm = Some(beta);
        }
    }
    let best = grid
        .iter()
        .max_by(|a, b| {
            a.accuracy
                .total_cmp(&b.accuracy)
                .then(b.log_loss.total_cmp(&a.log_loss))
        })
        .cloned()
        .expect("nonempty grid");
    log::info!(
        "trade model: step {} and L2 {} selected (validation accuracy {:.4}, log loss {:.4})",
        best.step,
        best.l2,
        best.accuracy,
        best.log_loss
    );

    let s = spec.with_pi_step(best.step)?;
    let all_rows = RowSet::all(days);
    let x = DesignMatrix::build(&s, Equation::Pi, market, &all_rows, LagSource::Observed);
    let y = targets(market, &all_rows);
    let beta = fit_logistic(&x, &y, best.l2, None, opts.max_iter)?;
    let (ll, _) = evaluate_logistic(&x, &y, &beta);
    let k = x.registry.columns.iter().filter(|c| !c.aliased).count() as f64;
    let n = x.nrows() as f64;
    Ok(LogisticFit {
        registry: x.registry.clone(),
        coefficients: beta,
        l2: best.l2,
        step: best.step,
        validation_accuracy: best.accuracy,
        validation_log_loss: best.log_loss,
        bic: 2.0 * ll * n + k * n.ln(),
        n_train: x.nrows(),
        train_start: market.grid.date(days[0]),
        train_end: market.grid.date(*days.last().expect("nonempty")),
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Column, Group, Registry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intercept_only(n: usize) -> DesignMatrix {
        let reg = Registry {
            equation: Equation::Pi,
            columns: vec![Column {
                name: "intercept".into(),
                group: Group::Intercept,
                indicator: true,
                penalized: false,
                aliased: false,
            }],
        };
        DesignMatrix::from_dense(reg, n, vec![1.0; n])
    }

    #[test]
    fn intercept_only_recovers_share() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y: Vec<bool> = (0..20_000).map(|_| rng.random::<f64>() < 0.7).collect();
        let share = y.iter().filter(|&&b| b).count() as f64 / y.len() as f64;
        let beta = fit_logistic(&intercept_only(y.len()), &y, 1e-3, None, 500).unwrap();
        assert!((sigmoid(beta[0]) - share).abs() < 1e-6);
        assert!((sigmoid(beta[0]) - 0.7).abs() < 0.01);
    }

    #[test]
    fn all_traded_pushes_probability_up() {
        let y = vec![true; 5000];
        let beta = fit_logistic(&intercept_only(y.len()), &y, 1e-3, None, 500).unwrap();
        assert!(sigmoid(beta[0]) > 0.95);
    }

    #[test]
    fn split_is_chronological() {
        let (a, b) = split_days(&[3, 4, 5, 6, 7, 8, 9, 10], 0.25);
        assert_eq!(a, vec![3, 4, 5, 6, 7, 8]);
        assert_eq!(b, vec![9, 10]);
    }
}
