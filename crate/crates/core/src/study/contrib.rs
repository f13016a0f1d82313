use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;

use crate::features::calendar::{session_len, slot, HOURS};
use crate::features::{Equation, Group, LagSource, RowSet};
use crate::ingest::Market;
use crate::marginal::MarginalFit;
use crate::{Error, Result};

/// Additive decomposition of one linear predictor at one bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct Contribution {
    pub equation: Equation,
    pub hour: usize,
    pub t: usize,
    /// Linear predictor before the link.
    pub eta: f64,
    pub groups: Vec<(Group, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContributionReport {
    pub date: NaiveDate,
    pub rows: Vec<Contribution>,
}

/// Contribution of each feature group to every linear predictor for the
/// buckets of `hours` on market day `d`, with lags from observed data.
pub fn coefficient_report(
    fit: &MarginalFit,
    market: &Market,
    d: usize,
    hours: &[usize],
) -> Result<ContributionReport> {
    if d >= market.n_days() {
        return Err(Error::data(format!("day index {d} outside the market")));
    }
    let mut hs = hours.to_vec();
    hs.sort_unstable();
    hs.dedup();
    if let Some(&h) = hs.iter().find(|&&h| h >= HOURS) {
        return Err(Error::domain(format!("hour {h} out of range")));
    }
    let index: Vec<(usize, usize)> = hs
        .iter()
        .flat_map(|&h| (0..session_len(h)).map(move |t| (h, t)))
        .collect();
    let rows = RowSet {
        days: vec![d],
        rows: index.iter().map(|&(h, t)| (0, slot(h, t) as u16)).collect(),
    };
    let x = fit.designs(market, &rows, LagSource::Observed);
    let eta = fit.predictors(&x)?;
    let mut out = Vec::with_capacity(index.len() * Equation::ALL.len());
    for (k, &eq) in Equation::ALL.iter().enumerate() {
        let beta = fit.coefficients(eq);
        for (i, &(h, t)) in index.iter().enumerate() {
            out.push(Contribution {
                equation: eq,
                hour: h,
                t,
                eta: eta[k][i],
                groups: x[k].group_contributions(i, beta),
            });
        }
    }
    Ok(ContributionReport {
        date: market.grid.date(d),
        rows: out,
    })
}

/// Long-format CSV: one line per (equation, hour, t, group), plus the total.
pub fn write_contributions(path: &Path, report: &ContributionReport) -> Result<()> {
    let mut s = String::from("date,equation,hour,t,group,value\n");
    for r in &report.rows {
        let eq = r.equation.name();
        for (g, v) in &r.groups {
            writeln!(
                s,
                "{},{eq},{},{},{},{v}",
                report.date,
                r.hour,
                r.t,
                g.name()
            )
            .unwrap();
        }
        writeln!(s, "{},{eq},{},{},eta,{}", report.date, r.hour, r.t, r.eta).unwrap();
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
