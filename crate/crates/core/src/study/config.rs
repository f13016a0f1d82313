use std::path::Path;

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::copula::DependenceKind;
use crate::evaluate::Metric;
use crate::marginal::MarginalConfig;
use crate::simulate::{BenchmarkKind, LOOKBACK_CANDIDATES};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    #[serde(alias = "Naive.Ind")]
    NaiveInd,
    #[serde(alias = "Naive.Dep")]
    NaiveDep,
    #[serde(alias = "RW.Emp")]
    RwEmp,
    #[serde(alias = "Mix.Ind")]
    MixInd,
    #[serde(alias = "Mix.CD")]
    MixCd,
    #[serde(alias = "Mix.TD")]
    MixTd,
}

impl ModelId {
    pub const ALL: [ModelId; 6] = [
        ModelId::NaiveInd,
        ModelId::NaiveDep,
        ModelId::RwEmp,
        ModelId::MixInd,
        ModelId::MixCd,
        ModelId::MixTd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::NaiveInd => "naive_ind",
            ModelId::NaiveDep => "naive_dep",
            ModelId::RwEmp => "rw_emp",
            ModelId::MixInd => "mix_ind",
            ModelId::MixCd => "mix_cd",
            ModelId::MixTd => "mix_td",
        }
    }

    pub fn display(self) -> &'static str {
        match self {
            ModelId::NaiveInd => "Naive.Ind",
            ModelId::NaiveDep => "Naive.Dep",
            ModelId::RwEmp => "RW.Emp",
            ModelId::MixInd => "Mix.Ind",
            ModelId::MixCd => "Mix.CD",
            ModelId::MixTd => "Mix.TD",
        }
    }

    pub fn parse(s: &str) -> Result<ModelId> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.name() == s || m.display() == s)
            .ok_or_else(|| Error::config(format!("unknown model `{s}`")))
    }

    pub fn benchmark(self) -> Option<BenchmarkKind> {
        match self {
            ModelId::NaiveInd => Some(BenchmarkKind::NaiveInd),
            ModelId::NaiveDep => Some(BenchmarkKind::NaiveDep),
            ModelId::RwEmp => Some(BenchmarkKind::RwEmp),
            _ => None,
        }
    }

    pub fn dependence(self) -> Option<DependenceKind> {
        match self {
            ModelId::MixInd => Some(DependenceKind::Independent),
            ModelId::MixCd => Some(DependenceKind::Constant),
            ModelId::MixTd => Some(DependenceKind::TimeVarying),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub seed: u64,
    /// First and last (inclusive) test day.
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    /// Days in each trailing training window.
    pub train_days: usize,
    /// Months between refits.
    pub refit_months: u32,
    pub roster: Vec<ModelId>,
    pub n_paths: usize,
    pub energy_k: usize,
    /// Benchmark lookback candidates, chosen per refit by CRPS.
    pub lookbacks: Vec<usize>,
    pub selection_days: usize,
    pub selection_paths: usize,
    pub dm_norm: f64,
    pub dm_metrics: Vec<Metric>,
    /// Keep the binary scenario files after scoring.
    pub keep_scenarios: bool,
    /// Write the predictor decomposition of the first test day of every refit.
    pub contributions: bool,
    pub marginal: MarginalConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            seed: 0,
            test_start: NaiveDate::from_ymd_opt(2024, 4, 1).expect("date"),
            test_end: NaiveDate::from_ymd_opt(2024, 6, 29).expect("date"),
            train_days: 365,
            refit_months: 1,
            roster: ModelId::ALL.to_vec(),
            n_paths: 500,
            energy_k: crate::evaluate::DEFAULT_K,
            lookbacks: LOOKBACK_CANDIDATES.to_vec(),
            selection_days: 28,
            selection_paths: 100,
            dm_norm: 1.0,
            dm_metrics: vec![Metric::Crps, Metric::Es, Metric::EsDay],
            keep_scenarios: true,
            contributions: true,
            marginal: MarginalConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<StudyConfig> {
        let c: StudyConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<StudyConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.test_end < self.test_start {
            return bad(format!(
                "test_end {} precedes test_start {}",
                self.test_end, self.test_start
            ));
        }
        if self.roster.is_empty() {
            return bad("roster must not be empty".into());
        }
        let mut r = self.roster.clone();
        r.sort();
        r.dedup();
        if r.len() != self.roster.len() {
            return bad("roster lists a model twice".into());
        }
        if self.train_days < 8 {
            return bad(format!(
                "train_days must be at least 8, got {}",
                self.train_days
            ));
        }
        if self.refit_months == 0 {
            return bad("refit_months must be positive".into());
        }
        if self.energy_k < 2 || self.energy_k > self.n_paths {
            return bad(format!(
                "energy_k must satisfy 1 < K <= n_paths, got K={} with {} paths",
                self.energy_k, self.n_paths
            ));
        }
        if self.lookbacks.is_empty() || self.lookbacks.contains(&0) {
            return bad("lookbacks must be nonempty and positive".into());
        }
        if self.selection_days == 0 || self.selection_days > self.train_days {
            return bad(format!("selection_days must be in 1..={}", self.train_days));
        }
        if self.selection_paths < 2 {
            return bad("selection_paths must be at least 2".into());
        }
        if !(self.dm_norm >= 1.0) {
            return bad(format!("dm_norm must be >= 1, got {}", self.dm_norm));
        }
        if let Some(h) = &self.marginal.hyper {
            h.validate()?;
        }
        Ok(())
    }

    /// Refit dates: the test start, then the first of every `refit_months`-th
    /// month after it, up to the test end.
    pub fn refit_dates(&self) -> Vec<NaiveDate> {
        let mut out = vec![self.test_start];
        let first = self.test_start.with_day(1).expect("day 1");
        let mut k = self.refit_months;
        while let Some(d) = first.checked_add_months(Months::new(k)) {
            if d > self.test_end {
                break;
            }
            out.push(d);
            k += self.refit_months;
        }
        out
    }

    /// Stable digest of the configuration, used to refuse resuming a run
    /// with different settings.
    pub fn digest(&self) -> Result<String> {
        let text = serde_json::to_string(self)?;
        Ok(format!("{:016x}", crate::seed::label(&text)))
    }
}
