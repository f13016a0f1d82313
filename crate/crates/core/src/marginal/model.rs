use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::distrib::{default_links, DistribData, DistribFit, DistribHyper, DistribOptions};
use super::logistic::{fit_pi, sigmoid, LogisticFit, PiOptions};
use super::tune::{tune_hyperparams, SearchSpace, Trial};
use crate::dist::{JsuParams, LinkSpec, MixtureParams};
use crate::features::{
    calendar::SLOTS_PER_DAY, DesignMatrix, Equation, FeatureConfig, FeatureSpec, Group, LagSource,
    Registry, RowSet, LAGS,
};
use crate::ingest::Market;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarginalConfig {
    pub features: FeatureConfig,
    pub pi: PiOptions,
    pub distrib: DistribOptions,
    pub search: SearchSpace,
    pub budget: usize,
    /// Fixed hyperparameters; skips tuning when set.
    pub hyper: Option<DistribHyper>,
}

impl Default for MarginalConfig {
    fn default() -> Self {
        MarginalConfig {
            features: FeatureConfig::default(),
            pi: PiOptions::default(),
            distrib: DistribOptions::default(),
            search: SearchSpace::default(),
            budget: 50,
            hyper: None,
        }
    }
}

/// Trade probability model and S_U regression fitted on one training window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalFit {
    pub spec: FeatureSpec,
    pub logistic: LogisticFit,
    pub distrib: DistribFit,
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub seed: u64,
}

/// Outcome of [`MarginalFit::fit`], including the tuning log.
#[derive(Debug, Clone)]
pub struct MarginalOutcome {
    pub fit: MarginalFit,
    pub trials: Vec<Trial>,
}

impl MarginalFit {
    pub fn fit(
        market: &Market,
        days: &[usize],
        config: &MarginalConfig,
        seed: u64,
    ) -> Result<MarginalOutcome> {
        let first = *config
            .features
            .pi_step_candidates
            .first()
            .ok_or_else(|| Error::config("pi_step_candidates must not be empty"))?;
        let spec = FeatureSpec::fit(&config.features, market, days, first)?;
        Self::fit_with_spec(market, days, &spec, config, seed)
    }

    /// Fits both stages using a fixed feature transformation.
    pub fn fit_with_spec(
        market: &Market,
        days: &[usize],
        spec: &FeatureSpec,
        config: &MarginalConfig,
        seed: u64,
    ) -> Result<MarginalOutcome> {
        if days.is_empty() {
            return Err(Error::data("empty training window"));
        }
        let logistic = fit_pi(market, days, spec, &config.pi)?;
        let spec = spec.with_pi_step(logistic.step)?;
        let data = DistribData::build(market, days, &spec, config.distrib.validation_fraction)?;
        let (distrib, trials) = match &config.hyper {
            Some(h) => (
                super::distrib::fit_distrib(&data, h, &config.distrib, seed)?,
                Vec::new(),
            ),
            None => {
                let r =
                    tune_hyperparams(&data, &config.search, &config.distrib, config.budget, seed)?;
                (r.fit, r.trials)
            }
        };
        Ok(MarginalOutcome {
            fit: MarginalFit {
                train_start: market.grid.date(days[0]),
                train_end: market.grid.date(*days.last().expect("nonempty")),
                spec,
                logistic,
                distrib,
                seed,
            },
            trials,
        })
    }

    /// A fit with given coefficients, used for ground-truth generators.
    /// `distrib` holds the (mu, sigma, nu, tau) coefficient vectors.
    pub fn from_coefficients(
        spec: FeatureSpec,
        pi: Vec<f64>,
        distrib: [Vec<f64>; 4],
        date: NaiveDate,
    ) -> Result<Self> {
        let pi_reg = spec.registry(Equation::Pi);
        if pi.len() != pi_reg.len() {
            return Err(Error::schema(format!(
                "trade model expects {} coefficients, got {}",
                pi_reg.len(),
                pi.len()
            )));
        }
        let registries: Vec<Registry> = Equation::DISTRIB
            .iter()
            .map(|&e| spec.registry(e))
            .collect();
        for (r, c) in registries.iter().zip(&distrib) {
            if r.len() != c.len() {
                return Err(Error::schema(format!(
                    "{} model expects {} coefficients, got {}",
                    r.equation.name(),
                    r.len(),
                    c.len()
                )));
            }
        }
        if pi
            .iter()
            .chain(distrib.iter().flatten())
            .any(|b| !b.is_finite())
        {
            return Err(Error::domain("coefficients must be finite"));
        }
        Ok(MarginalFit {
            logistic: LogisticFit {
                registry: pi_reg,
                coefficients: pi,
                l2: 0.0,
                step: spec.pi_step,
                validation_accuracy: f64::NAN,
                validation_log_loss: f64::NAN,
                bic: f64::NAN,
                n_train: 0,
                train_start: date,
                train_end: date,
                grid: Vec::new(),
            },
            distrib: DistribFit {
                registries,
                coefficients: distrib.to_vec(),
                links: default_links(),
                hyper: DistribHyper::default(),
                best_epoch: 0,
                epochs_run: 0,
                validation_nll: f64::NAN,
                train_nll: f64::NAN,
                n_train: 0,
                n_validation: 0,
                history: Vec::new(),
            },
            spec,
            train_start: date,
            train_end: date,
            seed: 0,
        })
    }

    pub fn registry(&self, eq: Equation) -> &Registry {
        match eq {
            Equation::Pi => &self.logistic.registry,
            _ => &self.distrib.registries[eq as usize - 1],
        }
    }

    pub fn coefficients(&self, eq: Equation) -> &[f64] {
        match eq {
            Equation::Pi => &self.logistic.coefficients,
            _ => &self.distrib.coefficients[eq as usize - 1],
        }
    }

    pub fn links(&self) -> &[LinkSpec; 4] {
        &self.distrib.links
    }

    /// Design matrices for all five equations in [`Equation::ALL`] order.
    pub fn designs(&self, market: &Market, rows: &RowSet, lags: LagSource) -> Vec<DesignMatrix> {
        Equation::ALL
            .iter()
            .map(|&e| DesignMatrix::build(&self.spec, e, market, rows, lags))
            .collect()
    }

    /// Linear predictors of all five equations, one vector per equation.
    pub fn predictors(&self, x: &[DesignMatrix]) -> Result<Vec<Vec<f64>>> {
        if x.len() != Equation::ALL.len() {
            return Err(Error::schema(format!(
                "expected {} design matrices, got {}",
                Equation::ALL.len(),
                x.len()
            )));
        }
        for (&e, d) in Equation::ALL.iter().zip(x) {
            self.registry(e).check_matches(&d.registry)?;
        }
        Ok(Equation::ALL
            .iter()
            .zip(x)
            .map(|(&e, d)| d.matvec(self.coefficients(e)))
            .collect())
    }

    pub fn predict_from_designs(&self, x: &[DesignMatrix]) -> Result<Vec<MixtureParams>> {
        let eta = self.predictors(x)?;
        let links = self.links();
        (0..eta[0].len())
            .map(|i| {
                mixture_from_eta(
                    [eta[0][i], eta[1][i], eta[2][i], eta[3][i], eta[4][i]],
                    links,
                )
            })
            .collect()
    }

    /// Mixture parameters for every row, with lags taken from observed data.
    pub fn predict_params(&self, market: &Market, rows: &RowSet) -> Result<Vec<MixtureParams>> {
        self.predict_from_designs(&self.designs(market, rows, LagSource::Observed))
    }

    /// Static per-slot predictors of day `d` plus the autoregressive
    /// coefficients, for recursive simulation. Only day-ahead information
    /// of day `d` is read.
    pub fn day_template(&self, market: &Market, d: usize) -> Result<DayTemplate> {
        let rows = RowSet::all(&[d]);
        let x = self.designs(market, &rows, LagSource::Zero);
        for (&e, m) in Equation::ALL.iter().zip(&x) {
            self.registry(e).check_matches(&m.registry)?;
        }
        let eta: Vec<Vec<f64>> = Equation::ALL
            .iter()
            .zip(&x)
            .map(|(&e, m)| m.slot_predictor(self.coefficients(e)))
            .collect();
        let mut lag = [[[0.0; LAGS]; 3]; 5];
        for (k, &e) in Equation::ALL.iter().enumerate() {
            let reg = self.registry(e);
            let beta = self.coefficients(e);
            for (j, c) in reg.columns.iter().enumerate() {
                let kind = match c.group {
                    Group::PriceLags => 0,
                    Group::AbsLags => 1,
                    Group::TradeLags => 2,
                    _ => continue,
                };
                let l: usize = c
                    .name
                    .rsplit(':')
                    .next()
                    .and_then(|s| s.parse().ok())
                    .filter(|l| (1..=LAGS).contains(l))
                    .ok_or_else(|| Error::schema(format!("malformed lag column {}", c.name)))?;
                lag[k][kind][l - 1] = beta[j];
            }
        }
        Ok(DayTemplate {
            eta: eta.try_into().expect("five equations"),
            lag,
            links: *self.links(),
        })
    }
}

/// Mixture parameters from the five linear predictors (pi, mu, sigma, nu, tau).
pub fn mixture_from_eta(eta: [f64; 5], links: &[LinkSpec; 4]) -> Result<MixtureParams> {
    let th: [f64; 4] = std::array::from_fn(|k| links[k].apply(eta[k + 1]));
    MixtureParams::new(sigmoid(eta[0]), JsuParams::new(th[0], th[1], th[2], th[3])?)
}

/// Recent history of one delivery hour used by the lag features; index 0 is lag 1.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LagState {
    pub change: [f64; LAGS],
    pub traded: [bool; LAGS],
}

impl LagState {
    pub fn push(&mut self, change: f64, traded: bool) {
        self.change.copy_within(0..LAGS - 1, 1);
        self.traded.copy_within(0..LAGS - 1, 1);
        self.change[0] = change;
        self.traded[0] = traded;
    }
}

/// Per-day inputs to the recursive simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct DayTemplate {
    /// Linear predictors per slot with all lag features at zero, in
    /// [`Equation::ALL`] order.
    pub eta: [Vec<f64>; 5],
    /// Lag coefficients per equation: price, absolute price and trade lags.
    pub lag: [[[f64; LAGS]; 3]; 5],
    pub links: [LinkSpec; 4],
}

impl DayTemplate {
    pub fn params(&self, slot: usize, state: &LagState) -> Result<MixtureParams> {
        debug_assert!(slot < SLOTS_PER_DAY);
        let eta = std::array::from_fn(|k| {
            let c = &self.lag[k];
            let mut e = self.eta[k][slot];
            for l in 0..LAGS {
                let y = state.change[l];
                e += c[0][l] * y
                    + c[1][l] * y.abs()
                    + c[2][l] * f64::from(u8::from(state.traded[l]));
            }
            e
        });
        mixture_from_eta(eta, &self.links)
    }
}
