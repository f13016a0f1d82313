//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the verdict lines always reach the
//! terminal. `ACCEPTANCE_ONLY=1,5` restricts the run to some criteria.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use idsim_core::copula::matrix::{check_correlation, min_eigenvalue};
use idsim_core::copula::{
    fit_constant_dependence, fit_time_varying, gaussianize, hour_pairs, DependenceKind,
    DependenceModel, TruthDependence,
};
use idsim_core::dist::stats::{ks_pvalue, ks_uniform, mean, variance};
use idsim_core::dist::{jsu_cdf, jsu_neg_loglik_and_grad, jsu_pdf, jsu_quantile, JsuParams};
use idsim_core::evaluate::{crps_pinball, dm_test, energy_score_kband, pinball, Metric};
use idsim_core::features::calendar::{session_len, slot, HOURS, MAX_SESSION, SLOTS_PER_DAY};
use idsim_core::features::{DesignMatrix, Equation, FeatureConfig, LagSource, RowSet};
use idsim_core::ingest::{synth_market, SynthConfig, SynthOutput};
use idsim_core::marginal::{
    mean_nll, sigmoid, DistribHyper, MarginalConfig, MarginalFit, PiOptions,
};
use idsim_core::simulate::{
    benchmark_sampler, centered_pools, history_window, BenchmarkConfig, BenchmarkKind,
};
use idsim_core::study::{run_study, ModelId, StudyConfig};

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: String) -> Verdict {
    Verdict { ok, detail }
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn desk_world() -> SynthOutput {
    let text = fs::read_to_string(repo_root().join("configs/synth.toml")).unwrap();
    let cfg: SynthConfig = toml::from_str(&text).unwrap();
    synth_market(&cfg, 1).unwrap()
}

// ---------------------------------------------------------------- 1

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn random_params(rng: &mut ChaCha8Rng) -> JsuParams {
    let tau = rng.random_range(0.3..4.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    JsuParams::new(
        rng.random_range(-10.0..10.0),
        rng.random_range(0.1..20.0),
        rng.random_range(0.05..3.0),
        tau,
    )
    .unwrap()
}

fn criterion_1() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // Quadrature in s = asinh((y - mu) / sigma), where the density is smooth
    // and light tailed for every tau.
    let mut worst_mass = 0.0f64;
    for _ in 0..200 {
        let p = random_params(&mut rng);
        let (lo, hi) = ((-12.0 - p.nu) / p.tau, (12.0 - p.nu) / p.tau);
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let f = |s: f64| jsu_pdf(p.mu + p.sigma * s.sinh(), &p).unwrap() * p.sigma * s.cosh();
        worst_mass = worst_mass.max((simpson(f, lo, hi, 20_000) - 1.0).abs());
    }
    // Plain quadrature in y for parameters with thin enough tails.
    let p = JsuParams::new(1.0, 2.0, 0.5, 3.0).unwrap();
    let direct = simpson(|y| jsu_pdf(y, &p).unwrap(), -200.0, 200.0, 400_000);
    worst_mass = worst_mass.max((direct - 1.0).abs());

    let mut worst_round = 0.0f64;
    for _ in 0..200 {
        let p = random_params(&mut rng);
        for k in 0..=200 {
            let u = 1e-6 + (1.0 - 2e-6) * k as f64 / 200.0;
            let y = jsu_quantile(u, &p).unwrap();
            worst_round = worst_round.max((jsu_cdf(y, &p).unwrap() - u).abs());
        }
    }

    let mut worst_grad = 0.0f64;
    for _ in 0..100 {
        let p = random_params(&mut rng);
        let y = jsu_quantile(rng.random_range(0.001..0.999), &p).unwrap();
        let (_, g) = jsu_neg_loglik_and_grad(&[y], &[p]).unwrap();
        let analytic = [g[0].mu, g[0].sigma, g[0].nu, g[0].tau];
        let theta = [p.mu, p.sigma, p.nu, p.tau];
        for k in 0..4 {
            let h = 1e-5 * theta[k].abs().max(1e-2);
            let at = |v: f64| {
                let mut q = theta;
                q[k] = v;
                let q = JsuParams::new(q[0], q[1], q[2], q[3]).unwrap();
                jsu_neg_loglik_and_grad(&[y], &[q]).unwrap().0
            };
            let fd = (at(theta[k] + h) - at(theta[k] - h)) / (2.0 * h);
            let scale = analytic[k].abs().max(fd.abs()).max(1e-6);
            worst_grad = worst_grad.max((analytic[k] - fd).abs() / scale);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        worst_mass < 1e-5 && worst_round < 1e-8 && worst_grad < 1e-4 && secs < 10.0,
        format!("max |mass - 1| {worst_mass:.2e}, max round-trip {worst_round:.2e}, max gradient rel. error {worst_grad:.2e}, {secs:.1} s"),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Verdict {
    let t0 = Instant::now();
    let cfg = SynthConfig {
        n_days: 73,
        emit_trades: false,
        features: FeatureConfig {
            pi_step_candidates: vec![32],
            ..FeatureConfig::default()
        },
        ..SynthConfig::default()
    };
    let w = synth_market(&cfg, 1).unwrap();
    let truth = &w.truth.model;
    let train: Vec<usize> = (0..53).collect();
    let test: Vec<usize> = (53..73).collect();
    let l2 = 1e-3;
    let mcfg = MarginalConfig {
        pi: PiOptions {
            l2_grid: vec![l2],
            ..PiOptions::default()
        },
        hyper: Some(DistribHyper {
            l1: [0.0; 4],
            learning_rate: 0.01,
            dropout: 0.0,
        }),
        ..MarginalConfig::default()
    };
    let fit = MarginalFit::fit_with_spec(&w.market, &train, &truth.spec, &mcfg, 7)
        .unwrap()
        .fit;

    // Coefficient standard errors from the penalized Fisher information at
    // the true coefficients, on the rows the final trade model was fit to.
    let rows = RowSet::all(&train);
    let x = DesignMatrix::build(
        &fit.spec,
        Equation::Pi,
        &w.market,
        &rows,
        LagSource::Observed,
    );
    let beta_true = truth.coefficients(Equation::Pi);
    let wts: Vec<f64> = x
        .matvec(beta_true)
        .iter()
        .map(|&e| {
            let p = sigmoid(e);
            p * (1.0 - p)
        })
        .collect();
    let p = x.ncols();
    let gram = x.weighted_gram(&wts);
    let cols = &x.registry.columns;
    let keep: Vec<usize> = (0..p)
        .filter(|&j| !cols[j].aliased && gram[j * p + j] > 0.0)
        .collect();
    let info = DMatrix::from_fn(keep.len(), keep.len(), |a, b| {
        let (i, j) = (keep[a], keep[b]);
        gram[i * p + j] + if i == j && cols[i].penalized { l2 } else { 0.0 }
    });
    let cov = info.pseudo_inverse(1e-12).unwrap();

    // The verdict uses the fixed +-0.05 band; the Fisher standard errors
    // show which coefficients that band is tighter than the sampling noise for.
    let mut worst = (0.0f64, String::new());
    let mut noisy = 0;
    let mut outside = Vec::new();
    let mut beyond_4se = 0;
    for (a, &j) in keep.iter().enumerate() {
        let err = (fit.logistic.coefficients[j] - beta_true[j]).abs();
        let se = cov[(a, a)].max(0.0).sqrt();
        if 4.0 * se > 0.05 {
            noisy += 1;
        }
        if err > 0.05 {
            outside.push(format!("{} {err:.3} (SE {se:.3})", cols[j].name));
        }
        if err > 4.0 * se.max(0.0125) {
            beyond_4se += 1;
        }
        if err > worst.0 {
            worst = (err, cols[j].name.clone());
        }
    }
    let n_outside = outside.len();
    outside.truncate(5);

    let rows = RowSet::traded(&w.market, &test);
    let y: Vec<f64> = (0..rows.len())
        .map(|i| w.market.grid.change[rows.grid_index(i)])
        .collect();
    let xs: Vec<DesignMatrix> = Equation::DISTRIB
        .iter()
        .map(|&e| DesignMatrix::build(&truth.spec, e, &w.market, &rows, LagSource::Observed))
        .collect();
    let nll_fit = mean_nll(&xs, &y, &fit.distrib.coefficients, &fit.distrib.links);
    let nll_true = mean_nll(&xs, &y, &truth.distrib.coefficients, &truth.distrib.links);
    let excess = (nll_fit - nll_true) / nll_true.abs();
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        worst.0 <= 0.05 && excess < 0.01 && secs < 600.0,
        format!(
            "{} buckets; {} logistic coefficients, worst error {:.3} ({}), {} outside +-0.05 (first: {}); \
             Fisher SE: {noisy} coefficients have 4 SE above 0.05, {beyond_4se} errors exceed max(0.05, 4 SE); \
             held-out NLL {nll_fit:.5} vs true {nll_true:.5} ({:+.2}%), {secs:.0} s",
            train.len() * SLOTS_PER_DAY,
            keep.len(),
            worst.0,
            worst.1,
            n_outside,
            outside.join(", "),
            100.0 * excess
        ),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Verdict {
    let cfg = SynthConfig {
        n_days: 200,
        emit_trades: false,
        ..SynthConfig::default()
    };
    let w = synth_market(&cfg, 3).unwrap();
    let days: Vec<usize> = (0..cfg.n_days).collect();
    let p = gaussianize(&w.market, &days, &w.truth.model, 33).unwrap();
    let level = 0.01 / HOURS as f64;
    let mut min_p = 1.0f64;
    for h in 0..HOURS {
        let u: Vec<f64> = (0..days.len())
            .flat_map(|d| (0..session_len(h)).map(move |t| d * SLOTS_PER_DAY + slot(h, t)))
            .map(|i| p.u[i])
            .collect();
        min_p = min_p.min(ks_pvalue(ks_uniform(&u), u.len()));
    }
    let pooled = ks_pvalue(ks_uniform(&p.u), p.u.len());
    let (m, v) = (mean(&p.z), variance(&p.z));
    verdict(
        min_p > level && pooled > 0.01 && m.abs() < 0.02 && (v - 1.0).abs() < 0.03,
        format!(
            "{} scores; smallest per-hour KS p {min_p:.3} (Bonferroni level {level:.1e}), pooled KS p {pooled:.3}; z mean {m:+.4}, variance {v:.4}",
            p.u.len()
        ),
    )
}

// ---------------------------------------------------------------- 4

fn dependence_world(dep: TruthDependence) -> SynthOutput {
    let mut cfg = SynthConfig {
        n_days: 300,
        emit_trades: false,
        dependence: dep,
        ..SynthConfig::default()
    };
    // Every bucket trades, so each hour pair contributes one score per
    // shared bucket and day.
    cfg.pi = [("intercept".to_string(), 30.0)].into_iter().collect();
    synth_market(&cfg, 9).unwrap()
}

fn plan_is_valid(model: &DependenceModel) -> (bool, f64) {
    let plan = model.plan().unwrap();
    let mut min_eig = f64::INFINITY;
    let mut ok = true;
    for m in plan.matrices.iter().flatten() {
        ok &= check_correlation(m).is_ok() && (0..m.nrows()).all(|i| m[(i, i)] == 1.0);
        min_eig = min_eig.min(min_eigenvalue(m));
    }
    (
        ok && min_eig >= 0.0 && plan.matrices.iter().flatten().count() == MAX_SESSION,
        min_eig,
    )
}

fn criterion_4() -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for rho in [0.3, 0.8] {
        let w = dependence_world(TruthDependence::Constant { rho });
        let days: Vec<usize> = (0..300).collect();
        let p = gaussianize(&w.market, &days, &w.truth.model, 1).unwrap();
        let est = fit_constant_dependence(&p);
        let pairs = hour_pairs();
        let n_min = est.counts.iter().copied().filter(|&c| c > 0).min().unwrap();
        let mut err_sum = 0.0;
        let mut worst_z = 0.0f64;
        for &(a, b) in &pairs {
            let n = est.counts[a * HOURS + b] as f64;
            let e = est.raw[(a, b)] - rho;
            err_sum += e;
            worst_z = worst_z.max(e.abs() / ((1.0 - rho * rho) / n.sqrt()));
        }
        let mean_err = err_sum / pairs.len() as f64;
        let (psd, eig) = plan_is_valid(&DependenceModel::fit(DependenceKind::Constant, &p));
        ok &= mean_err.abs() < 0.02 && worst_z < 4.0 && psd && n_min >= 10_000;
        notes.push(format!("rho {rho}: mean error {mean_err:+.4}, worst pair {worst_z:.2} SE, >= {n_min} pairs, min eigenvalue {eig:.2e}"));
    }

    let ramp = TruthDependence::Ramp {
        start: 0.2,
        end: 0.8,
    };
    let w = dependence_world(ramp);
    let days: Vec<usize> = (0..300).collect();
    let p = gaussianize(&w.market, &days, &w.truth.model, 1).unwrap();
    let est = fit_time_varying(&p);
    let (mut s0, mut s1, mut q0, mut q1) = (0.0, 0.0, 0.0, 0.0);
    for c in &est.curves {
        let end = session_len(c.a.min(c.b)) - 1;
        let e0 = c.rho(0) - ramp.rho(0);
        let e1 = c.rho(end) - ramp.rho(end);
        s0 += e0;
        s1 += e1;
        q0 += e0 * e0;
        q1 += e1 * e1;
    }
    let n = est.curves.len() as f64;
    let (m0, m1, r0, r1) = (s0 / n, s1 / n, (q0 / n).sqrt(), (q1 / n).sqrt());
    let (psd, eig) = plan_is_valid(&DependenceModel::fit(DependenceKind::TimeVarying, &p));
    ok &= m0.abs() < 0.05 && m1.abs() < 0.05 && r0 < 0.05 && r1 < 0.05 && psd;
    notes.push(format!(
        "ramp 0.2->0.8: start error mean {m0:+.4} rms {r0:.4}, end error mean {m1:+.4} rms {r1:.4}, min eigenvalue {eig:.2e}"
    ));
    verdict(ok, notes.join("; "))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_es = 0.0f64;
    for _ in 0..500 {
        let m = rng.random_range(2..=8);
        let dim = rng.random_range(1..=6);
        let paths: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..dim).map(|_| rng.random_range(-50.0..50.0)).collect())
            .collect();
        let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-50.0..50.0)).collect();
        let refs: Vec<&[f64]> = paths.iter().map(Vec::as_slice).collect();
        let band = energy_score_kband(&refs, &y, m).unwrap();
        let dist = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, z)| (x - z) * (x - z))
                .sum::<f64>()
                .sqrt()
        };
        let first = paths.iter().map(|x| dist(x, &y)).sum::<f64>() / m as f64;
        let mut second = 0.0;
        for i in 0..m {
            for j in 0..m {
                second += dist(&paths[i], &paths[j]);
            }
        }
        let brute = first - second / (2.0 * (m * (m - 1)) as f64);
        worst_es = worst_es.max((band - brute).abs() / brute.abs().max(1.0));
    }

    let sample: Vec<f64> = (0..20_000)
        .map(|_| rng.sample(rand_distr::StandardNormal))
        .collect();
    let mut sorted = sample;
    sorted.sort_by(f64::total_cmp);
    let crps_err = |y: f64| {
        let n = sorted.len() as f64;
        let first = sorted.iter().map(|x| (x - y).abs()).sum::<f64>() / n;
        let spread: f64 = sorted
            .iter()
            .enumerate()
            .map(|(i, x)| x * (2.0 * (i as f64 + 1.0) - n - 1.0))
            .sum::<f64>()
            / (n * n);
        let exact = first - spread;
        (crps_pinball(&sorted, y) - exact) / exact
    };
    let at_zero = crps_err(0.0);
    // Off-centre observations, reported only.
    let elsewhere = [-2.0, -0.5, 0.7, 1.5, 3.0].map(crps_err);

    let hand = [
        (0.5, 10.0, 14.0, 2.0),
        (0.1, 10.0, 14.0, 0.4),
        (0.9, 100.0, 90.0, 1.0),
        (0.25, -3.0, -3.0, 0.0),
    ];
    let hand_ok = hand
        .iter()
        .all(|&(tau, q, y, want)| (pinball(tau, q, y) - want).abs() < 1e-12);
    verdict(
        worst_es < 1e-12 && at_zero.abs() < 0.01 && hand_ok && pinball(0.5, 10.0, 14.0) == 2.0,
        format!("ES K=M vs all pairs max error {worst_es:.1e}; pinball CRPS vs sort formula at y = 0 {:+.3}% (y in -2..3: {:+.3}% to {:+.3}%); hand examples {}", 100.0 * at_zero,
            100.0 * elsewhere.iter().copied().fold(f64::INFINITY, f64::min),
            100.0 * elsewhere.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            if hand_ok { "exact" } else { "wrong" }
        ),
    )
}

// ---------------------------------------------------------------- 6

fn criterion_6(world: &SynthOutput) -> Verdict {
    let t0 = Instant::now();
    let cfg = StudyConfig::load(&repo_root().join("configs/study.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_study(&cfg, &world.market, dir.path()).unwrap();
    let report = |m: ModelId| {
        outcome
            .reports
            .iter()
            .find(|r| r.model == m.name())
            .unwrap()
    };
    let mut ok = true;
    let mut notes = vec![format!(
        "{} test days, M = {}",
        outcome.reports[0].dates.len(),
        cfg.n_paths
    )];
    for (dep, ind) in [
        (ModelId::MixCd, ModelId::MixInd),
        (ModelId::NaiveDep, ModelId::NaiveInd),
    ] {
        let (a, b) = (report(dep), report(ind));
        let dm = dm_test(
            &a.losses(Metric::EsDay),
            &b.losses(Metric::EsDay),
            cfg.dm_norm,
        )
        .unwrap();
        let p = dm.p_a_better.unwrap_or(1.0);
        let (ea, eb) = (a.mean(Metric::EsDay), b.mean(Metric::EsDay));
        ok &= ea < eb && p < 0.05;
        notes.push(format!(
            "ES {} {ea:.2} vs {} {eb:.2}, DM p {p:.2e} (hourly ES {:.3} vs {:.3})",
            dep.display(),
            ind.display(),
            a.mean(Metric::Es),
            b.mean(Metric::Es)
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    notes.push(format!("{:.1} min", secs / 60.0));
    verdict(ok && secs < 7200.0, notes.join("; "))
}

// ---------------------------------------------------------------- 7

fn criterion_7(world: &SynthOutput) -> Verdict {
    let market = &world.market;
    let d = market.grid.n_days - 1;
    let lookback = 90;
    let pools = centered_pools(&market.grid, history_window(d, lookback).unwrap());
    let pool_mean = (0..SLOTS_PER_DAY)
        .map(|s| {
            pools[s * lookback..(s + 1) * lookback]
                .iter()
                .sum::<f64>()
                .abs()
                / lookback as f64
        })
        .fold(0.0, f64::max);

    let m = 10_000;
    let cfg = BenchmarkConfig {
        kind: BenchmarkKind::RwEmp,
        lookback,
    };
    let set = benchmark_sampler(market, &cfg, d, m, 77).unwrap();
    let (mut dev, mut var) = (0.0, 0.0);
    let mut inside = 0;
    for h in 0..HOURS {
        let term = set.at(h, session_len(h) - 1);
        let gap = mean(term) - set.spot[h];
        let se2 = variance(term) / m as f64;
        if gap.abs() < 2.0 * se2.sqrt() {
            inside += 1;
        }
        dev += gap;
        var += se2;
    }
    let z = (dev / HOURS as f64) / (var.sqrt() / HOURS as f64);
    verdict(
        z.abs() < 2.0 && pool_mean < 1e-9,
        format!("mean terminal gap over hours {z:+.2} SE at M = {m}; {inside}/24 hours within 2 SE; max |pool mean| {pool_mean:.1e}"),
    )
}

// ---------------------------------------------------------------- 8

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

const SYNTH_TOML: &str = "n_days = 50\n[dependence]\nkind = \"constant\"\nrho = 0.6\n";

const FIT_TOML: &str =
    "[features]\npi_step_candidates = [32]\n[pi]\nl2_grid = [0.01]\n[distrib]\nmax_epochs = 40\n\
[hyper]\nl1 = [1e-4, 1e-4, 1e-4, 1e-4]\nlearning_rate = 0.03\ndropout = 0.0\n";

const STUDY_TOML: &str = "test_start = \"2023-02-11\"\ntest_end = \"2023-02-13\"\ntrain_days = 30\n\
roster = [\"Naive.Dep\", \"Mix.CD\"]\nn_paths = 20\nenergy_k = 5\nlookbacks = [3, 7]\nselection_days = 4\nselection_paths = 10\n\
[marginal.features]\npi_step_candidates = [32]\n[marginal.pi]\nl2_grid = [0.01]\n[marginal.distrib]\nmax_epochs = 8\n\
[marginal.hyper]\nl1 = [1e-4, 1e-4, 1e-4, 1e-4]\nlearning_rate = 0.03\ndropout = 0.0\n";

/// Builds the CLI with the same profile as this test and returns its path.
fn idsim_binary() -> PathBuf {
    let status = Command::new(env!("CARGO"))
        .args([
            "build",
            "--quiet",
            "--offline",
            "-p",
            "idsim-cli",
            "--bin",
            "idsim",
        ])
        .current_dir(repo_root())
        .status()
        .unwrap();
    assert!(status.success(), "building idsim failed");
    let exe = std::env::current_exe().unwrap();
    exe.parent()
        .and_then(Path::parent)
        .unwrap()
        .join(format!("idsim{}", std::env::consts::EXE_SUFFIX))
}

fn idsim(bin: &Path, args: &[&str]) {
    let out = Command::new(bin)
        .args(["--seed", "11", "--log-level", "warn"])
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "idsim {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Runs every subcommand once under `root`, each writing to its own directory.
fn cli_pipeline(bin: &Path, root: &Path, configs: &Path) -> Vec<(&'static str, PathBuf)> {
    let s = |p: PathBuf| p.display().to_string();
    let (w, ing, fit) = (root.join("synth"), root.join("ingest"), root.join("fit"));
    let (sim_mix, sim_naive) = (root.join("simulate_mix"), root.join("simulate_naive"));
    let (score, study) = (root.join("score"), root.join("study"));
    idsim(
        bin,
        &[
            "synth",
            "--config",
            &s(configs.join("synth.toml")),
            "--out",
            &s(w.clone()),
        ],
    );
    idsim(
        bin,
        &[
            "ingest",
            "--trades",
            &s(w.join("trades.csv")),
            "--spot",
            &s(w.join("spot.csv")),
            "--forecasts",
            &s(w.join("forecasts.csv")),
            "--bids",
            &s(w.join("bids.csv")),
            "--out",
            &s(ing.clone()),
        ],
    );
    let store = s(ing.clone());
    idsim(
        bin,
        &[
            "fit",
            "--store",
            &store,
            "--config",
            &s(configs.join("fit.toml")),
            "--to",
            "2023-02-08",
            "--out",
            &s(fit.clone()),
        ],
    );
    let range = [
        "--from",
        "2023-02-10",
        "--to",
        "2023-02-12",
        "--paths",
        "50",
    ];
    idsim(
        bin,
        &[
            &[
                "simulate",
                "--store",
                &store,
                "--model",
                "mix_cd",
                "--fit",
                &s(fit.clone()),
                "--out",
                &s(sim_mix.clone()),
            ][..],
            &range[..],
        ]
        .concat(),
    );
    idsim(
        bin,
        &[
            &[
                "simulate",
                "--store",
                &store,
                "--model",
                "naive_dep",
                "--lookback",
                "7",
                "--out",
                &s(sim_naive.clone()),
            ][..],
            &range[..],
        ]
        .concat(),
    );
    idsim(
        bin,
        &[
            "score",
            "--store",
            &store,
            "--scenarios",
            &s(sim_mix.clone()),
            "--scenarios",
            &s(sim_naive.clone()),
            "--out",
            &s(score.clone()),
        ],
    );
    idsim(
        bin,
        &[
            "study",
            "--config",
            &s(configs.join("study.toml")),
            "--store",
            &store,
            "--out",
            &s(study.clone()),
        ],
    );
    vec![
        ("synth", w),
        ("ingest", ing),
        ("fit", fit),
        ("simulate mix_cd", sim_mix),
        ("simulate naive_dep", sim_naive),
        ("score", score),
        ("study", study),
    ]
}

fn criterion_8() -> Verdict {
    let configs = tempfile::tempdir().unwrap();
    fs::write(configs.path().join("synth.toml"), SYNTH_TOML).unwrap();
    fs::write(configs.path().join("fit.toml"), FIT_TOML).unwrap();
    fs::write(configs.path().join("study.toml"), STUDY_TOML).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let bin = idsim_binary();
    let first = cli_pipeline(&bin, a.path(), configs.path());
    let second = cli_pipeline(&bin, b.path(), configs.path());
    let mut diffs = Vec::new();
    let mut n_files = 0;
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        let (tx, ty) = (tree(x), tree(y));
        n_files += tx.len();
        if tx.is_empty() || tx != ty {
            let differing: Vec<&String> = tx
                .keys()
                .filter(|k| tx.get(*k) != ty.get(*k))
                .take(3)
                .collect();
            diffs.push(format!("{name}: {differing:?}"));
        }
    }
    verdict(
        diffs.is_empty(),
        format!(
            "{} subcommand runs, {n_files} files compared{}",
            first.len(),
            if diffs.is_empty() {
                String::new()
            } else {
                format!("; differing: {}", diffs.join(", "))
            }
        ),
    )
}

// ----------------------------------------------------------------

fn run(n: u32, name: &str, f: impl FnOnce() -> Verdict) -> bool {
    let t0 = Instant::now();
    let v = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        verdict(false, format!("panicked: {msg}"))
    });
    println!(
        "criterion {n} [{name}]: {} ({:.1} s) {}",
        if v.ok { "PASS" } else { "FAIL" },
        t0.elapsed().as_secs_f64(),
        v.detail
    );
    v.ok
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().map_or(true, |o| o.contains(&n));
    let mut all = true;
    if wanted(1) {
        all &= run(1, "distribution correctness", criterion_1);
    }
    if wanted(5) {
        all &= run(5, "scoring-rule oracles", criterion_5);
    }
    if wanted(3) {
        all &= run(3, "calibration", criterion_3);
    }
    if wanted(4) {
        all &= run(4, "dependence recovery", criterion_4);
    }
    if wanted(2) {
        all &= run(2, "marginal recovery", criterion_2);
    }
    if wanted(8) {
        all &= run(8, "determinism", criterion_8);
    }
    if wanted(6) || wanted(7) {
        let world = desk_world();
        if wanted(7) {
            all &= run(7, "martingale benchmark", || criterion_7(&world));
        }
        if wanted(6) {
            all &= run(6, "correlated-world study", || criterion_6(&world));
        }
    }
    if !all {
        std::process::exit(1);
    }
}
