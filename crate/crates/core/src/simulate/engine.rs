use rayon::prelude::*;

use super::scenario::ScenarioSet;
use crate::copula::{SamplingPlan, U_CLAMP};
use crate::dist::normal;
use crate::features::calendar::{active_hours, slot, HOURS, MAX_SESSION, SLOTS_PER_DAY};
use crate::ingest::Market;
use crate::marginal::{DayTemplate, LagState, MarginalFit};
use crate::{seed, Error, Result};

/// One simulated day: changes and trade indicators per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDay {
    pub change: Vec<f64>,
    pub traded: Vec<bool>,
    pub clamped: usize,
}

/// Simulates a single day path by path in trading time: correlated normal
/// scores over the active hours are mapped through the mixture of each
/// hour, whose lag features come from the path's own history.
pub fn simulate_path(
    template: &DayTemplate,
    plan: &SamplingPlan,
    rng: &mut impl rand::Rng,
) -> Result<SimulatedDay> {
    let mut out = SimulatedDay {
        change: vec![0.0; SLOTS_PER_DAY],
        traded: vec![false; SLOTS_PER_DAY],
        clamped: 0,
    };
    let mut state = [LagState::default(); HOURS];
    let mut z = Vec::with_capacity(HOURS);
    for t in 0..MAX_SESSION {
        let hours = active_hours(t);
        z.resize(hours.len(), 0.0);
        plan.draw(t, rng, &mut z);
        for (i, h) in hours.enumerate() {
            let s = slot(h, t);
            let m = template.params(s, &state[h])?;
            let raw = normal::cdf(z[i]);
            let u = raw.clamp(U_CLAMP, 1.0 - U_CLAMP);
            if u != raw {
                out.clamped += 1;
            }
            let d = m.invert(u);
            if !d.change.is_finite() {
                return Err(Error::numerical(format!(
                    "non-finite price change at hour {h}, bucket {t} (tau = {:.3e})",
                    m.jsu.tau
                )));
            }
            out.change[s] = d.change;
            out.traded[s] = d.traded;
            state[h].push(d.change, d.traded);
        }
    }
    Ok(out)
}

/// `n_paths` mixture-model paths for market day `d`, anchored at its spot
/// prices. Path `m` uses its own stream derived from `seed_root`.
pub fn simulate_mixture(
    fit: &MarginalFit,
    plan: &SamplingPlan,
    market: &Market,
    d: usize,
    n_paths: usize,
    model: &str,
    seed_root: u64,
) -> Result<ScenarioSet> {
    let template = fit.day_template(market, d)?;
    let days: Vec<SimulatedDay> = (0..n_paths)
        .into_par_iter()
        .map(|m| {
            let mut rng = seed::rng(seed_root, &[seed::label("path"), m as u64]);
            simulate_path(&template, plan, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut changes = Vec::with_capacity(n_paths * SLOTS_PER_DAY);
    let mut clamped = 0;
    for p in &days {
        changes.extend_from_slice(&p.change);
        clamped += p.clamped;
    }
    let spot: Vec<f64> = (0..HOURS).map(|h| market.grid.spot_at(d, h)).collect();
    let mut set = ScenarioSet::from_changes(
        model,
        seed_root,
        market.grid.date(d),
        &spot,
        &changes,
        n_paths,
    );
    set.clamped = clamped;
    if clamped > 0 {
        log::warn!(
            "{}: {clamped} quantile inversions used the clamped bound",
            set.date
        );
    }
    Ok(set)
}
