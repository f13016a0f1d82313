use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::split_days;
use super::optim::{soft_threshold, Adam};
use crate::dist::{nll_point, LinkSpec};
use crate::features::{DesignMatrix, Equation, FeatureSpec, LagSource, Registry, RowSet};
use crate::ingest::Market;
use crate::{seed, Error, Result};

/// Tuned hyperparameters, one L1 strength per distribution parameter in the
/// order (mu, sigma, nu, tau).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistribHyper {
    pub l1: [f64; 4],
    pub learning_rate: f64,
    pub dropout: f64,
}

impl Default for DistribHyper {
    fn default() -> Self {
        DistribHyper {
            l1: [1e-6; 4],
            learning_rate: 1e-2,
            dropout: 0.0,
        }
    }
}

impl DistribHyper {
    pub fn validate(&self) -> Result<()> {
        if self.l1.iter().any(|&l| !(l >= 0.0 && l.is_finite()))
            || !(self.learning_rate > 0.0 && self.learning_rate.is_finite())
            || !(0.0..1.0).contains(&self.dropout)
        {
            return Err(Error::config(format!(
                "invalid distribution hyperparameters {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistribOptions {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub init_low: f64,
    pub init_high: f64,
    pub clip_norm: f64,
}

impl Default for DistribOptions {
    fn default() -> Self {
        DistribOptions {
            batch_size: 4096,
            max_epochs: 500,
            patience: 25,
            validation_fraction: 0.25,
            init_low: 0.0,
            init_high: 0.1,
            clip_norm: 10.0,
        }
    }
}

pub fn default_links() -> [LinkSpec; 4] {
    [
        LinkSpec::identity(),
        LinkSpec::default_softplus(),
        LinkSpec::default_softplus(),
        LinkSpec::identity(),
    ]
}

/// Fitted regression for the S_U parameters of traded changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistribFit {
    pub registries: Vec<Registry>,
    pub coefficients: Vec<Vec<f64>>,
    pub links: [LinkSpec; 4],
    pub hyper: DistribHyper,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub validation_nll: f64,
    pub train_nll: f64,
    pub n_train: usize,
    pub n_validation: usize,
    pub history: Vec<[f64; 2]>,
}

/// Design matrices and responses shared by all tuning trials.
pub struct DistribData {
    pub train: Vec<DesignMatrix>,
    pub val: Vec<DesignMatrix>,
    pub y_train: Vec<f64>,
    pub y_val: Vec<f64>,
}

impl DistribData {
    pub fn build(
        market: &Market,
        days: &[usize],
        spec: &FeatureSpec,
        validation_fraction: f64,
    ) -> Result<Self> {
        let (train_days, val_days) = split_days(days, validation_fraction);
        let tr = RowSet::traded(market, &train_days);
        let va = RowSet::traded(market, &val_days);
        if tr.is_empty() {
            return Err(Error::data("no traded buckets in the training window"));
        }
        let y = |rows: &RowSet| -> Vec<f64> {
            (0..rows.len())
                .map(|i| market.grid.change[rows.grid_index(i)])
                .collect()
        };
        let build = |rows: &RowSet| -> Vec<DesignMatrix> {
            Equation::DISTRIB
                .iter()
                .map(|&eq| DesignMatrix::build(spec, eq, market, rows, LagSource::Observed))
                .collect()
        };
        Ok(DistribData {
            y_train: y(&tr),
            y_val: y(&va),
            train: build(&tr),
            val: build(&va),
        })
    }
}

/// Mean negative log-likelihood of `y` under the given coefficients.
pub fn mean_nll(x: &[DesignMatrix], y: &[f64], coefs: &[Vec<f64>], links: &[LinkSpec; 4]) -> f64 {
    if y.is_empty() {
        return f64::NAN;
    }
    let etas: Vec<Vec<f64>> = x.iter().zip(coefs).map(|(d, b)| d.matvec(b)).collect();
    let total: f64 = (0..y.len())
        .into_par_iter()
        .with_min_len(4096)
        .map(|i| {
            let th: [f64; 4] = std::array::from_fn(|k| links[k].apply(etas[k][i]));
            nll_point(y[i], th[0], th[1], th[2], th[3]).0
        })
        .sum();
    total / y.len() as f64
}

const CHUNK: usize = 256;

struct Workspace {
    rows: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
    loss: f64,
}

fn batch_gradient(
    x: &[DesignMatrix],
    y: &[f64],
    batch: &[usize],
    coefs: &[Vec<f64>],
    links: &[LinkSpec; 4],
    dropout: f64,
    continuous: &[Vec<usize>],
    stream: u64,
) -> (f64, Vec<Vec<f64>>) {
    let widths: Vec<usize> = x.iter().map(|d| d.ncols()).collect();
    let keep = 1.0 / (1.0 - dropout);
    let parts: Vec<Workspace> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, idx)| {
            let mut rng = seed::rng(stream, &[c as u64]);
            let mut ws = Workspace {
                rows: widths.iter().map(|&w| vec![0.0; w]).collect(),
                grads: widths.iter().map(|&w| vec![0.0; w]).collect(),
                loss: 0.0,
            };
            for &i in idx {
                let mut eta = [0.0; 4];
                for k in 0..4 {
                    let r = &mut ws.rows[k];
                    x[k].row_into(i, r);
                    if dropout > 0.0 {
                        for &j in &continuous[k] {
                            r[j] = if rng.random::<f64>() < dropout {
                                0.0
                            } else {
                                r[j] * keep
                            };
                        }
                    }
                    eta[k] = r.iter().zip(&coefs[k]).map(|(a, b)| a * b).sum();
                }
                let th: [f64; 4] = std::array::from_fn(|k| links[k].apply(eta[k]));
                let (l, g) = nll_point(y[i], th[0], th[1], th[2], th[3]);
                ws.loss += l;
                for k in 0..4 {
                    let ge = g[k] * links[k].derivative(eta[k]);
                    for (acc, &v) in ws.grads[k].iter_mut().zip(&ws.rows[k]) {
                        *acc += ge * v;
                    }
                }
            }
            ws
        })
        .collect();
    let mut grads: Vec<Vec<f64>> = widths.iter().map(|&w| vec![0.0; w]).collect();
    let mut loss = 0.0;
    for p in parts {
        loss += p.loss;
        for k in 0..4 {
            for (a, b) in grads[k].iter_mut().zip(&p.grads[k]) {
                *a += b;
            }
        }
    }
    let n = batch.len() as f64;
    for g in grads.iter_mut() {
        for v in g.iter_mut() {
            *v /= n;
        }
    }
    (loss / n, grads)
}

/// Mini-batch Adam on the mean negative log-likelihood with proximal L1
/// steps, input dropout on continuous columns and early stopping on the
/// validation loss (best weights restored).
pub fn fit_distrib(
    data: &DistribData,
    hyper: &DistribHyper,
    opts: &DistribOptions,
    seed_root: u64,
) -> Result<DistribFit> {
    hyper.validate()?;
    if data.y_train.is_empty() {
        return Err(Error::data("no traded observations to fit"));
    }
    if opts.batch_size == 0 || opts.max_epochs == 0 {
        return Err(Error::config("batch_size and max_epochs must be positive"));
    }
    let links = default_links();
    let regs: Vec<&Registry> = data.train.iter().map(|d| &d.registry).collect();
    let continuous: Vec<Vec<usize>> = regs
        .iter()
        .map(|r| (0..r.len()).filter(|&j| !r.columns[j].indicator).collect())
        .collect();
    let penalized: Vec<Vec<bool>> = regs
        .iter()
        .map(|r| r.columns.iter().map(|c| c.penalized).collect())
        .collect();

    let mut init_rng = seed::rng(seed_root, &[seed::label("init")]);
    let mut coefs: Vec<Vec<f64>> = regs
        .iter()
        .enumerate()
        .map(|(k, r)| {
            if k == 0 {
                vec![0.0; r.len()]
            } else {
                (0..r.len())
                    .map(|_| init_rng.random_range(opts.init_low..=opts.init_high))
                    .collect()
            }
        })
        .collect();
    let mut adams: Vec<Adam> = regs
        .iter()
        .map(|r| Adam::new(r.len(), hyper.learning_rate))
        .collect();

    let has_val = !data.y_val.is_empty();
    let (vx, vy) = if has_val {
        (&data.val, &data.y_val)
    } else {
        (&data.train, &data.y_train)
    };
    let mut best_val = mean_nll(vx, vy, &coefs, &links);
    if !best_val.is_finite() {
        best_val = f64::INFINITY;
    }
    let mut best = coefs.clone();
    let mut best_epoch = 0;
    let mut since = 0;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..data.y_train.len()).collect();
    let mut epochs_run = 0;
    for epoch in 1..=opts.max_epochs {
        epochs_run = epoch;
        let mut rng = seed::rng(seed_root, &[seed::label("shuffle"), epoch as u64]);
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for (b, batch) in order.chunks(opts.batch_size).enumerate() {
            let stream = seed::derive(seed_root, &[seed::label("dropout"), epoch as u64, b as u64]);
            let (loss, mut grads) = batch_gradient(
                &data.train,
                &data.y_train,
                batch,
                &coefs,
                &links,
                hyper.dropout,
                &continuous,
                stream,
            );
            if !loss.is_finite() {
                return Err(Error::numerical(format!(
                    "training loss became {loss} at epoch {epoch}, batch {b} (learning rate {}, dropout {})",
                    hyper.learning_rate, hyper.dropout
                )));
            }
            train_loss += loss * batch.len() as f64;
            let norm = grads.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
            if norm > opts.clip_norm {
                let s = opts.clip_norm / norm;
                grads.iter_mut().flatten().for_each(|v| *v *= s);
            }
            for k in 0..4 {
                adams[k].step(&mut coefs[k], &grads[k]);
                let thr = hyper.learning_rate * hyper.l1[k];
                for (c, &p) in coefs[k].iter_mut().zip(&penalized[k]) {
                    if p {
                        *c = soft_threshold(*c, thr);
                    }
                }
            }
        }
        let val = mean_nll(vx, vy, &coefs, &links);
        history.push([train_loss / data.y_train.len() as f64, val]);
        if val < best_val {
            best_val = val;
            best = coefs.clone();
            best_epoch = epoch;
            since = 0;
        } else {
            since += 1;
            if since >= opts.patience {
                break;
            }
        }
    }
    if !best_val.is_finite() {
        return Err(Error::numerical("validation loss never became finite"));
    }
    let train_nll = mean_nll(&data.train, &data.y_train, &best, &links);
    log::debug!(
        "distribution fit: best epoch {best_epoch} of {epochs_run}, validation NLL {best_val:.5}"
    );
    Ok(DistribFit {
        registries: regs.into_iter().cloned().collect(),
        coefficients: best,
        links,
        hyper: *hyper,
        best_epoch,
        epochs_run,
        validation_nll: best_val,
        train_nll,
        n_train: data.y_train.len(),
        n_validation: data.y_val.len(),
        history,
    })
}
