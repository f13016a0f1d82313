mod distrib;
mod logistic;
mod model;
pub mod optim;
mod tune;

pub use distrib::{
    default_links, fit_distrib, mean_nll, DistribData, DistribFit, DistribHyper, DistribOptions,
};
pub use logistic::{
    evaluate_logistic, fit_logistic, fit_pi, sigmoid, split_days, LogisticFit, PiGridPoint,
    PiOptions,
};
pub use model::{
    mixture_from_eta, DayTemplate, LagState, MarginalConfig, MarginalFit, MarginalOutcome,
};
pub use tune::{sample_trials, tune_hyperparams, SearchSpace, Trial, TuneResult};
