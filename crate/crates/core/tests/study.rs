use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::Duration;
use idsim_core::evaluate::Metric;
use idsim_core::features::calendar::HOURS;
use idsim_core::features::{Equation, Group};
use idsim_core::ingest::{synth_market, SynthConfig, SynthOutput};
use idsim_core::marginal::{DistribHyper, MarginalConfig};
use idsim_core::study::{
    check_cutoff, coefficient_report, run_study, ModelId, StudyConfig, StudyManifest,
};
use idsim_core::Error;

fn world() -> SynthOutput {
    let cfg = SynthConfig {
        n_days: 48,
        emit_trades: false,
        ..SynthConfig::default()
    };
    synth_market(&cfg, 21).unwrap()
}

fn quick_marginal() -> MarginalConfig {
    let mut m = MarginalConfig::default();
    m.features.pi_step_candidates = vec![32];
    m.pi.l2_grid = vec![1e-2];
    m.distrib.max_epochs = 8;
    m.hyper = Some(DistribHyper {
        learning_rate: 0.03,
        ..DistribHyper::default()
    });
    m
}

fn config(w: &SynthOutput, roster: Vec<ModelId>, n_test: i64) -> StudyConfig {
    let start = w.market.grid.start + Duration::days(40);
    StudyConfig {
        seed: 5,
        test_start: start,
        test_end: start + Duration::days(n_test - 1),
        train_days: 30,
        roster,
        n_paths: 20,
        energy_k: 5,
        lookbacks: vec![3, 7],
        selection_days: 4,
        selection_paths: 10,
        dm_metrics: vec![Metric::Crps, Metric::EsDay],
        marginal: quick_marginal(),
        ..StudyConfig::default()
    }
}

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let key = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(key, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn single_benchmark_three_days_gives_three_sets_and_one_report() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&w, vec![ModelId::NaiveInd], 3);
    let out = run_study(&cfg, &w.market, dir.path()).unwrap();
    assert_eq!(out.refits.len(), 1);
    assert_eq!(out.simulated, 3);
    let scn: Vec<_> = fs::read_dir(dir.path().join("scenarios/naive_ind"))
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "scn")
        })
        .collect();
    assert_eq!(scn.len(), 3);
    assert!(dir.path().join("report/summary.csv").exists());
    assert!(dir.path().join("report/plots/hourly_crps.svg").exists());
    let r = &out.reports[0];
    assert_eq!(r.days.len(), 3);
    let mean_crps = r.mean(Metric::Crps);
    let by_hand = r
        .days
        .iter()
        .flat_map(|d| d.hours.iter().map(|h| h.crps))
        .sum::<f64>()
        / (3 * HOURS) as f64;
    assert!((mean_crps - by_hand).abs() < 1e-12);
}

#[test]
fn full_roster_is_deterministic_and_resumable() {
    let w = world();
    let cfg = config(&w, ModelId::ALL.to_vec(), 2);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = run_study(&cfg, &w.market, a.path()).unwrap();
    assert_eq!(oa.simulated, 12);
    run_study(&cfg, &w.market, b.path()).unwrap();
    let fa = files(a.path());
    assert_eq!(fa, files(b.path()));

    for c in &oa.reports {
        assert_eq!(c.days.len(), 2);
    }
    let manifest: StudyManifest = serde_json::from_slice(&fa["study_manifest.json"]).unwrap();
    for c in &manifest.completed {
        assert!(c.data_cutoff + Duration::days(2) <= c.date, "{c:?}");
    }

    // interrupt: forget the last test day of two models
    let last = cfg.test_end;
    let mut m = manifest.clone();
    m.completed
        .retain(|c| !(c.date == last && matches!(c.model, ModelId::MixTd | ModelId::RwEmp)));
    fs::write(
        b.path().join("study_manifest.json"),
        serde_json::to_string_pretty(&m).unwrap() + "\n",
    )
    .unwrap();
    fs::remove_file(b.path().join(format!("scores/mix_td/{last}.json"))).unwrap();
    fs::remove_dir_all(b.path().join("report")).unwrap();
    let ob = run_study(&cfg, &w.market, b.path()).unwrap();
    assert_eq!(ob.simulated, 2);
    assert_eq!(ob.resumed, 10);
    assert_eq!(fa, files(b.path()));

    let changed = StudyConfig { n_paths: 21, ..cfg };
    assert!(matches!(
        run_study(&changed, &w.market, b.path()),
        Err(Error::Config(_))
    ));
}

#[test]
fn uncovered_window_fails_before_any_work() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("study");
    let mut cfg = config(&w, vec![ModelId::MixCd], 3);
    cfg.test_end = w.market.grid.end() + Duration::days(3);
    assert!(matches!(
        run_study(&cfg, &w.market, &out),
        Err(Error::Data(_))
    ));
    assert!(!out.exists());
    let mut cfg = config(&w, vec![ModelId::MixCd], 3);
    cfg.train_days = 45;
    assert!(matches!(
        run_study(&cfg, &w.market, &out),
        Err(Error::Data(_))
    ));
}

#[test]
fn leakage_guard_rejects_recent_data() {
    let w = world();
    assert!(check_cutoff(&w.market, 8, 10).is_ok());
    assert!(matches!(
        check_cutoff(&w.market, 9, 10),
        Err(Error::Data(_))
    ));
    assert!(check_cutoff(&w.market, 10, 10).is_err());
}

#[test]
fn contributions_add_up_to_the_predictor() {
    let w = world();
    let fit = &w.truth.model;
    let hours: Vec<usize> = (0..HOURS).collect();
    let rep = coefficient_report(fit, &w.market, 30, &hours).unwrap();
    assert_eq!(rep.rows.len(), 5 * 1920);
    for r in &rep.rows {
        let total: f64 = r.groups.iter().map(|(_, v)| v).sum();
        assert!((total - r.eta).abs() < 1e-10, "{r:?}");
        let part = |g: Group| {
            r.groups
                .iter()
                .find(|(x, _)| *x == g)
                .map_or(0.0, |(_, v)| *v)
        };
        if r.equation == Equation::Mu {
            // the true location model has no fundamental terms
            assert_eq!(part(Group::Fundamentals), 0.0);
        }
    }
    // with every other SIDC coefficient zeroed, the wave-1 dummy acts at t = 12 only
    let mut only_wave1 = fit.clone();
    let reg = only_wave1.logistic.registry.clone();
    for (j, c) in reg.columns.iter().enumerate() {
        if c.group == Group::Sidc && c.name != "sidc:wave1" {
            only_wave1.logistic.coefficients[j] = 0.0;
        }
    }
    let rep = coefficient_report(&only_wave1, &w.market, 30, &hours).unwrap();
    let mut hits = 0;
    for r in rep.rows.iter().filter(|r| r.equation == Equation::Pi) {
        let sidc = r
            .groups
            .iter()
            .find(|(g, _)| *g == Group::Sidc)
            .map_or(0.0, |(_, v)| *v);
        if r.t == 12 {
            assert!(sidc != 0.0);
            hits += 1;
        } else {
            assert_eq!(sidc, 0.0, "hour {} t {}", r.hour, r.t);
        }
    }
    assert_eq!(hits, HOURS);
}
