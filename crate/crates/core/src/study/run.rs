use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ModelId, StudyConfig};
use super::contrib::{coefficient_report, write_contributions};
use crate::copula::{gaussianize, DependenceKind, DependenceModel, PseudoObs};
use crate::evaluate::{
    mean_crps, observed_day, score_day, write_report, DayScore, ReportOptions, ScoreReport,
};
use crate::features::calendar::HOURS;
use crate::ingest::store::{read_json, write_json_pretty};
use crate::ingest::Market;
use crate::marginal::MarginalFit;
use crate::simulate::{
    benchmark_sampler, simulate_mixture, write_scenario_day, write_scenario_manifest,
    BenchmarkConfig, ScenarioDay, ScenarioSet,
};
use crate::{seed, Error, Result};

pub const STUDY_FORMAT: &str = "idsim-study";
pub const STUDY_VERSION: u32 = 1;

/// One finished (refit, day, model) task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completed {
    pub refit: NaiveDate,
    pub date: NaiveDate,
    pub model: ModelId,
    pub seed: u64,
    /// Last market day whose data entered the forecast.
    pub data_cutoff: NaiveDate,
    pub lookback: Option<usize>,
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub format: String,
    pub version: u32,
    pub config_digest: String,
    pub completed: Vec<Completed>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookbackChoice {
    pub model: ModelId,
    pub chosen: usize,
    /// Mean CRPS over the selection days per candidate.
    pub crps: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub refits: Vec<NaiveDate>,
    pub simulated: usize,
    pub resumed: usize,
    pub reports: Vec<ScoreReport>,
}

/// Refuses any forecast of day `d` that used data from later than `d - 2`.
pub fn check_cutoff(market: &Market, cutoff: usize, d: usize) -> Result<()> {
    if cutoff + 2 > d {
        return Err(Error::data(format!(
            "information leak: forecast for {} uses data from {}",
            market.grid.date(d),
            market.grid.date(cutoff)
        )));
    }
    Ok(())
}

struct Refit {
    date: NaiveDate,
    index: usize,
    train: Vec<usize>,
    test: Vec<usize>,
}

fn plan_refits(cfg: &StudyConfig, market: &Market) -> Result<Vec<Refit>> {
    let g = &market.grid;
    let idx = |date: NaiveDate| {
        g.day_index(date).ok_or_else(|| {
            Error::data(format!(
                "store ({} .. {}) does not cover {date}",
                g.start,
                g.end()
            ))
        })
    };
    let last = idx(cfg.test_end)?;
    let dates = cfg.refit_dates();
    let mut out = Vec::with_capacity(dates.len());
    for (i, &date) in dates.iter().enumerate() {
        let r = idx(date)?;
        if r < cfg.train_days + 1 {
            return Err(Error::data(format!(
                "refit {date} needs {} training days ending two days earlier; the store starts {}",
                cfg.train_days, g.start
            )));
        }
        let end = match dates.get(i + 1) {
            Some(&n) => idx(n)?,
            None => last + 1,
        };
        out.push(Refit {
            date,
            index: r,
            train: (r - 1 - cfg.train_days..r - 1).collect(),
            test: (r..end).collect(),
        });
    }
    Ok(out)
}

fn feasible_lookbacks(cfg: &StudyConfig, first_refit: usize) -> Vec<usize> {
    // earliest selection day is first_refit - 1 - selection_days; it needs L + 1 prior days
    let limit = (first_refit - 1 - cfg.selection_days).saturating_sub(1);
    let mut l: Vec<usize> = cfg
        .lookbacks
        .iter()
        .copied()
        .filter(|&l| l <= limit)
        .collect();
    l.sort_unstable();
    l.dedup();
    l
}

fn write_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write_json_pretty(&tmp, value)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

struct Layout {
    root: PathBuf,
}

impl Layout {
    fn manifest(&self) -> PathBuf {
        self.root.join("study_manifest.json")
    }
    fn fits(&self, r: NaiveDate) -> PathBuf {
        self.root.join("fits").join(r.to_string())
    }
    fn scores(&self, m: ModelId) -> PathBuf {
        self.root.join("scores").join(m.name())
    }
    fn score_file(&self, m: ModelId, d: NaiveDate) -> PathBuf {
        self.scores(m).join(format!("{d}.json"))
    }
    fn scenarios(&self, m: ModelId) -> PathBuf {
        self.root.join("scenarios").join(m.name())
    }
}

/// Benchmark lookback with the lowest mean CRPS over `days`.
pub fn select_lookback(
    market: &Market,
    model: ModelId,
    candidates: &[usize],
    days: &[usize],
    n_paths: usize,
    seed_root: u64,
) -> Result<LookbackChoice> {
    let kind = model
        .benchmark()
        .ok_or_else(|| Error::config(format!("{} has no lookback", model.display())))?;
    if candidates.is_empty() {
        return Err(Error::config("no feasible lookback candidate"));
    }
    let crps = candidates
        .iter()
        .map(|&l| {
            let cfg = BenchmarkConfig { kind, lookback: l };
            let per_day = days
                .par_iter()
                .map(|&v| {
                    let s =
                        seed::derive(seed_root, &[seed::label(&market.grid.date(v).to_string())]);
                    let set = benchmark_sampler(market, &cfg, v, n_paths, s)?;
                    mean_crps(&set, observed_day(market, v))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((l, per_day.iter().sum::<f64>() / per_day.len() as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let chosen = crps
        .iter()
        .fold(None::<(usize, f64)>, |best, &(l, c)| match best {
            Some((_, b)) if b <= c => best,
            _ => Some((l, c)),
        })
        .expect("nonempty")
        .0;
    Ok(LookbackChoice {
        model,
        chosen,
        crps,
    })
}

fn load_or<T, F>(path: &Path, make: F) -> Result<T>
where
    T: Serialize + serde::de::DeserializeOwned,
    F: FnOnce() -> Result<T>,
{
    if path.exists() {
        return read_json(path);
    }
    let v = make()?;
    write_atomic(path, &v)?;
    Ok(v)
}

/// Runs (or resumes) the rolling-window study, writing everything under `out`.
pub fn run_study(cfg: &StudyConfig, market: &Market, out: &Path) -> Result<StudyOutcome> {
    cfg.validate()?;
    let refits = plan_refits(cfg, market)?;
    let has_bench = cfg.roster.iter().any(|m| m.benchmark().is_some());
    let lookbacks = feasible_lookbacks(cfg, refits[0].index);
    if has_bench && lookbacks.is_empty() {
        return Err(Error::config(format!(
            "no lookback in {:?} fits the history before {}",
            cfg.lookbacks, refits[0].date
        )));
    }
    let layout = Layout {
        root: out.to_path_buf(),
    };
    mkdir(out)?;
    let digest = cfg.digest()?;
    let mut manifest = if layout.manifest().exists() {
        let m: StudyManifest = read_json(&layout.manifest())?;
        if m.format != STUDY_FORMAT || m.config_digest != digest {
            return Err(Error::config(format!(
                "{} holds a study run with different settings",
                out.display()
            )));
        }
        m
    } else {
        StudyManifest {
            format: STUDY_FORMAT.into(),
            version: STUDY_VERSION,
            config_digest: digest,
            completed: Vec::new(),
        }
    };
    // drop entries whose score file went missing
    manifest
        .completed
        .retain(|c| layout.score_file(c.model, c.date).exists());
    let resumed = manifest.completed.len();
    write_json_pretty(&out.join("config.json"), cfg)?;
    for &m in &cfg.roster {
        mkdir(&layout.scores(m))?;
        if cfg.keep_scenarios {
            mkdir(&layout.scenarios(m))?;
        }
    }

    let mut simulated = 0;
    for refit in &refits {
        let done: BTreeSet<(ModelId, NaiveDate)> = manifest
            .completed
            .iter()
            .map(|c| (c.model, c.date))
            .collect();
        let pending: Vec<(ModelId, Vec<usize>)> = cfg
            .roster
            .iter()
            .map(|&m| {
                let days: Vec<usize> = refit
                    .test
                    .iter()
                    .copied()
                    .filter(|&d| !done.contains(&(m, market.grid.date(d))))
                    .collect();
                (m, days)
            })
            .filter(|(_, d)| !d.is_empty())
            .collect();
        if pending.is_empty() && !cfg.contributions {
            continue;
        }
        let fit_dir = layout.fits(refit.date);
        mkdir(&fit_dir)?;
        let train_cutoff = *refit.train.last().expect("nonempty training window");
        check_cutoff(market, train_cutoff, refit.test[0])?;
        log::info!(
            "refit {}: training {} .. {}, {} test days",
            refit.date,
            market.grid.date(refit.train[0]),
            market.grid.date(train_cutoff),
            refit.test.len()
        );

        let needs_mix = cfg.roster.iter().any(|m| m.dependence().is_some())
            && (pending.iter().any(|(m, _)| m.dependence().is_some())
                || (cfg.contributions && !fit_dir.join("contributions.csv").exists()));
        let marginal = if needs_mix {
            let fit_seed = seed::derive(
                cfg.seed,
                &[seed::label("fit"), seed::label(&refit.date.to_string())],
            );
            Some(load_or(&fit_dir.join("marginal.json"), || {
                let o = MarginalFit::fit(market, &refit.train, &cfg.marginal, fit_seed)?;
                write_json_pretty(&fit_dir.join("trials.json"), &o.trials)?;
                Ok(o.fit)
            })?)
        } else {
            None
        };
        if let (Some(fit), true) = (&marginal, cfg.contributions) {
            let p = fit_dir.join("contributions.csv");
            if !p.exists() {
                let hours: Vec<usize> = (0..HOURS).collect();
                write_contributions(&p, &coefficient_report(fit, market, refit.index, &hours)?)?;
            }
        }

        let mut pseudo: Option<PseudoObs> = None;
        for (model, days) in &pending {
            let model = *model;
            let tasks: Vec<Result<(Completed, DayScore, Option<ScenarioDay>)>>;
            if let Some(kind) = model.benchmark() {
                let choice = load_or(
                    &fit_dir.join(format!("lookback_{}.json", model.name())),
                    || {
                        let sel: Vec<usize> =
                            (refit.index - 1 - cfg.selection_days..refit.index - 1).collect();
                        let s = seed::derive(
                            cfg.seed,
                            &[seed::label("select"), seed::label(kind.stream())],
                        );
                        select_lookback(market, model, &lookbacks, &sel, cfg.selection_paths, s)
                    },
                )?;
                log::info!(
                    "{} {}: lookback {} days",
                    refit.date,
                    model.display(),
                    choice.chosen
                );
                let bc = BenchmarkConfig {
                    kind,
                    lookback: choice.chosen,
                };
                tasks = days
                    .par_iter()
                    .map(|&d| {
                        let date = market.grid.date(d);
                        let s = seed::derive(
                            cfg.seed,
                            &[seed::label(kind.stream()), seed::label(&date.to_string())],
                        );
                        check_cutoff(market, d - 2, d)?;
                        let set = benchmark_sampler(market, &bc, d, cfg.n_paths, s)?;
                        finish(
                            cfg,
                            &layout,
                            market,
                            refit,
                            model,
                            d,
                            d - 2,
                            Some(choice.chosen),
                            set,
                        )
                    })
                    .collect();
            } else {
                let kind = model.dependence().expect("mixture model");
                let fit = marginal.as_ref().expect("marginal fitted");
                let dep = load_or(
                    &fit_dir.join(format!("dependence_{}.json", model.name())),
                    || {
                        if kind == DependenceKind::Independent {
                            return Ok(DependenceModel::Independent);
                        }
                        if pseudo.is_none() {
                            let s = seed::derive(
                                cfg.seed,
                                &[seed::label("pit"), seed::label(&refit.date.to_string())],
                            );
                            pseudo = Some(gaussianize(market, &refit.train, fit, s)?);
                        }
                        Ok(DependenceModel::fit(
                            kind,
                            pseudo.as_ref().expect("set above"),
                        ))
                    },
                )?;
                let plan = dep.plan()?;
                tasks = days
                    .par_iter()
                    .map(|&d| {
                        let date = market.grid.date(d);
                        // common random numbers across the mixture family
                        let s = seed::derive(
                            cfg.seed,
                            &[seed::label("mix"), seed::label(&date.to_string())],
                        );
                        check_cutoff(market, train_cutoff, d)?;
                        let set =
                            simulate_mixture(fit, &plan, market, d, cfg.n_paths, model.name(), s)?;
                        finish(
                            cfg,
                            &layout,
                            market,
                            refit,
                            model,
                            d,
                            train_cutoff,
                            None,
                            set,
                        )
                    })
                    .collect();
            }
            for t in tasks {
                let (c, _, _) = t?;
                manifest.completed.push(c);
                simulated += 1;
            }
            manifest
                .completed
                .sort_by(|a, b| (a.model, a.date).cmp(&(b.model, b.date)));
            write_atomic(&layout.manifest(), &manifest)?;
            log::info!(
                "{} {}: {} days simulated and scored",
                refit.date,
                model.display(),
                days.len()
            );
        }
    }

    let mut reports = Vec::with_capacity(cfg.roster.len());
    for &m in &cfg.roster {
        let entries: Vec<&Completed> = manifest.completed.iter().filter(|c| c.model == m).collect();
        let days = entries
            .iter()
            .map(|c| read_json::<DayScore>(&layout.score_file(m, c.date)))
            .collect::<Result<Vec<_>>>()?;
        if cfg.keep_scenarios {
            let sdays = entries
                .iter()
                .map(|c| ScenarioDay {
                    date: c.date,
                    file: format!("{}.scn", c.date),
                    seed: c.seed,
                    clamped: c.clamped,
                })
                .collect();
            write_scenario_manifest(&layout.scenarios(m), m.name(), cfg.seed, cfg.n_paths, sdays)?;
        }
        reports.push(ScoreReport {
            model: m.name().to_string(),
            dates: entries.iter().map(|c| c.date).collect(),
            days,
        });
    }
    let report_dir = out.join("report");
    write_report(
        &report_dir,
        &reports,
        &ReportOptions {
            k: cfg.energy_k,
            norm: cfg.dm_norm,
            dm_metrics: cfg.dm_metrics.clone(),
        },
    )?;
    write_refit_table(
        &report_dir.join("refits.csv"),
        cfg,
        market,
        &refits,
        &layout,
    )?;
    Ok(StudyOutcome {
        refits: refits.iter().map(|r| r.date).collect(),
        simulated,
        resumed,
        reports,
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    cfg: &StudyConfig,
    layout: &Layout,
    market: &Market,
    refit: &Refit,
    model: ModelId,
    d: usize,
    cutoff: usize,
    lookback: Option<usize>,
    set: ScenarioSet,
) -> Result<(Completed, DayScore, Option<ScenarioDay>)> {
    let score = score_day(&set, observed_day(market, d), cfg.energy_k)?;
    let sday = if cfg.keep_scenarios {
        Some(write_scenario_day(&layout.scenarios(model), &set)?)
    } else {
        None
    };
    write_atomic(&layout.score_file(model, set.date), &score)?;
    Ok((
        Completed {
            refit: refit.date,
            date: set.date,
            model,
            seed: set.seed,
            data_cutoff: market.grid.date(cutoff),
            lookback,
            clamped: set.clamped,
        },
        score,
        sday,
    ))
}

fn write_refit_table(
    path: &Path,
    cfg: &StudyConfig,
    market: &Market,
    refits: &[Refit],
    layout: &Layout,
) -> Result<()> {
    let mut rows: BTreeMap<(NaiveDate, ModelId), String> = BTreeMap::new();
    for r in refits {
        for &m in &cfg.roster {
            let lb = layout
                .fits(r.date)
                .join(format!("lookback_{}.json", m.name()));
            let lookback = if lb.exists() {
                read_json::<LookbackChoice>(&lb)?.chosen.to_string()
            } else {
                String::new()
            };
            rows.insert(
                (r.date, m),
                format!(
                    "{},{},{},{},{},{},{}",
                    r.date,
                    m.name(),
                    market.grid.date(r.train[0]),
                    market.grid.date(*r.train.last().expect("nonempty")),
                    market.grid.date(r.test[0]),
                    market.grid.date(*r.test.last().expect("nonempty")),
                    lookback
                ),
            );
        }
    }
    let mut s = String::from("refit,model,train_start,train_end,test_start,test_end,lookback\n");
    for line in rows.values() {
        s.push_str(line);
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}
