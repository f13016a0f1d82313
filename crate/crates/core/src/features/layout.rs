use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The five regressions of the marginal model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    Pi,
    Mu,
    Sigma,
    Nu,
    Tau,
}

impl Equation {
    pub const ALL: [Equation; 5] = [
        Equation::Pi,
        Equation::Mu,
        Equation::Sigma,
        Equation::Nu,
        Equation::Tau,
    ];
    pub const DISTRIB: [Equation; 4] = [Equation::Mu, Equation::Sigma, Equation::Nu, Equation::Tau];

    pub fn name(self) -> &'static str {
        match self {
            Equation::Pi => "pi",
            Equation::Mu => "mu",
            Equation::Sigma => "sigma",
            Equation::Nu => "nu",
            Equation::Tau => "tau",
        }
    }

    pub fn groups(self) -> &'static [Group] {
        use Group::*;
        match self {
            Equation::Pi => &[Intercept, Fundamentals, Sidc, DayOfWeek, TradingTimeByHour],
            Equation::Mu => &[PriceLags],
            Equation::Sigma => &[
                Intercept,
                Fundamentals,
                Sidc,
                DayOfWeek,
                Hour,
                TradingTime,
                TimeToDelivery,
                AbsLags,
                TradeLags,
                SpotSpline,
            ],
            Equation::Nu => &[Fundamentals, Sidc, DayOfWeek, AbsLags, TradeLags, Hour],
            Equation::Tau => &[Hour, DayOfWeek],
        }
    }

    pub fn has_intercept(self) -> bool {
        self.groups().contains(&Group::Intercept)
    }
}

/// Feature families; the contribution report aggregates over these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Intercept,
    Fundamentals,
    Sidc,
    DayOfWeek,
    Hour,
    TradingTime,
    TimeToDelivery,
    PriceLags,
    AbsLags,
    TradeLags,
    SpotSpline,
    TradingTimeByHour,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::Intercept => "intercept",
            Group::Fundamentals => "fundamentals",
            Group::Sidc => "sidc",
            Group::DayOfWeek => "day_of_week",
            Group::Hour => "hour",
            Group::TradingTime => "trading_time",
            Group::TimeToDelivery => "time_to_delivery",
            Group::PriceLags => "price_lags",
            Group::AbsLags => "abs_lags",
            Group::TradeLags => "trade_lags",
            Group::SpotSpline => "spot_spline",
            Group::TradingTimeByHour => "trading_time_by_hour",
        }
    }

    pub fn level(self) -> Level {
        match self {
            Group::Fundamentals | Group::DayOfWeek | Group::SpotSpline => Level::DayHour,
            Group::PriceLags | Group::AbsLags | Group::TradeLags => Level::Observation,
            _ => Level::HourBucket,
        }
    }

    pub fn is_lag(self) -> bool {
        self.level() == Level::Observation
    }
}

/// The granularity at which a column varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    DayHour,
    HourBucket,
    Observation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub group: Group,
    /// 0/1 dummy; excluded from input dropout.
    pub indicator: bool,
    /// Subject to the L1/L2 penalty.
    pub penalized: bool,
    /// Structurally identical to an earlier column; its coefficient is pinned to zero.
    pub aliased: bool,
}

/// Ordered column names and metadata of one design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub equation: Equation,
    pub columns: Vec<Column>,
}

impl Registry {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn group_indices(&self, g: Group) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| self.columns[j].group == g)
            .collect()
    }

    /// Converts a name-keyed coefficient map into a dense vector, rejecting
    /// names the registry does not know.
    pub fn coefficients_from_map(
        &self,
        map: &std::collections::BTreeMap<String, f64>,
    ) -> Result<Vec<f64>> {
        let mut beta = vec![0.0; self.len()];
        for (name, &v) in map {
            let j = self.index(name).ok_or_else(|| {
                Error::config(format!(
                    "unknown {} coefficient '{name}'",
                    self.equation.name()
                ))
            })?;
            beta[j] = v;
        }
        Ok(beta)
    }

    /// Ensures `other` has the same column names in the same order.
    pub fn check_matches(&self, other: &Registry) -> Result<()> {
        if self.equation != other.equation
            || self.len() != other.len()
            || self.names().ne(other.names())
        {
            return Err(Error::schema(format!(
                "column registry mismatch for the {} equation ({} vs {} columns)",
                self.equation.name(),
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }
}
