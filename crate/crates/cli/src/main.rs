use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use idsim_core::copula::{gaussianize, DependenceKind, DependenceModel};
use idsim_core::evaluate::{score_scenarios, write_report, Metric, ReportOptions, DEFAULT_K};
use idsim_core::features::calendar::HOURS;
use idsim_core::ingest::csvio::{read_bids, read_forecasts, read_spot, read_trades};
use idsim_core::ingest::store::{read_store, write_store};
use idsim_core::ingest::{build_market, synth_market, write_synth, Market, SynthConfig, TimeBasis};
use idsim_core::marginal::{MarginalConfig, MarginalFit};
use idsim_core::seed;
use idsim_core::simulate::{
    benchmark_sampler, read_scenarios, simulate_mixture, write_scenarios, BenchmarkConfig,
};
use idsim_core::study::{
    check_cutoff, coefficient_report, run_study, write_contributions, ModelId, StudyConfig,
};
use idsim_core::{Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "idsim",
    version,
    about = "Scenario simulation and evaluation for hourly intraday electricity prices"
)]
struct Cli {
    /// Root seed; overrides any seed in a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "info")]
    log_level: String,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic market with known ground truth.
    Synth(SynthArgs),
    /// Aggregate raw CSV inputs into a market store.
    Ingest(IngestArgs),
    /// Fit the marginal model and the dependence models on a training window.
    Fit(FitArgs),
    /// Generate scenario paths for a range of delivery days.
    Simulate(SimulateArgs),
    /// Score scenario directories against observed prices.
    Score(ScoreArgs),
    /// Run the rolling-window study.
    Study(StudyArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// TOML generator settings; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    trades: PathBuf,
    #[arg(long)]
    spot: PathBuf,
    #[arg(long)]
    forecasts: PathBuf,
    #[arg(long)]
    bids: PathBuf,
    /// `wall`, `utc` or a fixed offset such as `+01:00`.
    #[arg(long, default_value = "wall")]
    time_basis: String,
    /// Volume window of the merit-order slope, MW.
    #[arg(long, default_value_t = 500.0)]
    slope_window: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    store: PathBuf,
    /// TOML marginal-model settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// First training day (default: start of the store).
    #[arg(long)]
    from: Option<NaiveDate>,
    /// Last training day (default: end of the store).
    #[arg(long)]
    to: Option<NaiveDate>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    store: PathBuf,
    /// naive_ind, naive_dep, rw_emp, mix_ind, mix_cd or mix_td.
    #[arg(long)]
    model: String,
    /// Output directory of `fit`; required for mixture models.
    #[arg(long)]
    fit: Option<PathBuf>,
    #[arg(long)]
    from: NaiveDate,
    #[arg(long)]
    to: NaiveDate,
    #[arg(long, default_value_t = 500)]
    paths: usize,
    /// History length of the resampling benchmarks, days.
    #[arg(long, default_value_t = 90)]
    lookback: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    store: PathBuf,
    /// Scenario directory; repeat for several models.
    #[arg(long = "scenarios", required = true)]
    scenarios: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Norm order of the DM loss differential.
    #[arg(long, default_value_t = 1.0)]
    norm: f64,
    /// Comma-separated metrics tested pairwise.
    #[arg(long, default_value = "crps,es,es_day")]
    dm_metrics: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn read_toml<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", p.display())))
        }
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn day_range(market: &Market, from: NaiveDate, to: NaiveDate) -> Result<Vec<usize>> {
    if to < from {
        return Err(Error::config(format!("--to {to} precedes --from {from}")));
    }
    let g = &market.grid;
    let idx = |d: NaiveDate| {
        g.day_index(d).ok_or_else(|| {
            Error::data(format!(
                "store ({} .. {}) does not cover {d}",
                g.start,
                g.end()
            ))
        })
    };
    Ok((idx(from)?..=idx(to)?).collect())
}

fn synth(args: &SynthArgs, seed: u64) -> Result<()> {
    let cfg: SynthConfig = read_toml(args.config.as_deref())?;
    let out = synth_market(&cfg, seed)?;
    write_synth(&args.out, &out)?;
    if let Some(r) = &out.ingest {
        write_json(&args.out.join("ingest_report.json"), r)?;
    }
    log::info!(
        "wrote {} synthetic days to {}",
        out.market.n_days(),
        args.out.display()
    );
    Ok(())
}

fn ingest(args: &IngestArgs) -> Result<()> {
    let basis = TimeBasis::parse(&args.time_basis)?;
    let trades = read_trades(&args.trades)?;
    let spot = read_spot(&args.spot)?;
    let forecasts = read_forecasts(&args.forecasts)?;
    let bids = read_bids(&args.bids)?;
    let (market, report) =
        build_market(&trades, &spot, &forecasts, &bids, basis, args.slope_window)?;
    write_store(&args.out, &market)?;
    write_json(&args.out.join("ingest_report.json"), &report)?;
    log::info!(
        "{} days, {} trades accepted, {} rejected, {} slopes imputed",
        report.n_days,
        report.trades.accepted,
        report.trades.rejected,
        report.slopes_imputed
    );
    Ok(())
}

fn fit(args: &FitArgs, seed: u64) -> Result<()> {
    let config: MarginalConfig = read_toml(args.config.as_deref())?;
    let market = read_store(&args.store)?;
    let g = &market.grid;
    let days = day_range(
        &market,
        args.from.unwrap_or(g.start),
        args.to.unwrap_or(g.end()),
    )?;
    mkdir(&args.out)?;
    let outcome = MarginalFit::fit(
        &market,
        &days,
        &config,
        seed::derive(seed, &[seed::label("fit")]),
    )?;
    write_json(&args.out.join("marginal.json"), &outcome.fit)?;
    write_json(&args.out.join("trials.json"), &outcome.trials)?;
    let pseudo = gaussianize(
        &market,
        &days,
        &outcome.fit,
        seed::derive(seed, &[seed::label("pit")]),
    )?;
    log::info!("{} PIT values clamped", pseudo.clamped);
    for kind in [
        DependenceKind::Independent,
        DependenceKind::Constant,
        DependenceKind::TimeVarying,
    ] {
        let dep = DependenceModel::fit(kind, &pseudo);
        dep.plan()?;
        write_json(
            &args
                .out
                .join(format!("dependence_{}.json", dependence_name(kind))),
            &dep,
        )?;
    }
    let last = *days.last().expect("nonempty");
    let hours: Vec<usize> = (0..HOURS).collect();
    write_contributions(
        &args.out.join("contributions.csv"),
        &coefficient_report(&outcome.fit, &market, last, &hours)?,
    )?;
    Ok(())
}

fn dependence_name(k: DependenceKind) -> &'static str {
    match k {
        DependenceKind::Independent => "independent",
        DependenceKind::Constant => "constant",
        DependenceKind::TimeVarying => "time_varying",
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(format!("{}: {e}", path.display())))
}

fn simulate(args: &SimulateArgs, seed_root: u64) -> Result<()> {
    let model = ModelId::parse(&args.model)?;
    if args.paths == 0 {
        return Err(Error::config("--paths must be positive"));
    }
    let market = read_store(&args.store)?;
    let days = day_range(&market, args.from, args.to)?;
    let day_seed = |tag: &str, d: usize| {
        seed::derive(
            seed_root,
            &[
                seed::label(tag),
                seed::label(&market.grid.date(d).to_string()),
            ],
        )
    };
    let sets = if let Some(kind) = model.benchmark() {
        let cfg = BenchmarkConfig {
            kind,
            lookback: args.lookback,
        };
        days.iter()
            .map(|&d| benchmark_sampler(&market, &cfg, d, args.paths, day_seed(kind.stream(), d)))
            .collect::<Result<Vec<_>>>()?
    } else {
        let dir = args
            .fit
            .as_ref()
            .ok_or_else(|| Error::config(format!("--fit is required for {}", model.display())))?;
        let fit: MarginalFit = read_json(&dir.join("marginal.json"))?;
        let kind = model.dependence().expect("mixture model");
        let dep: DependenceModel =
            read_json(&dir.join(format!("dependence_{}.json", dependence_name(kind))))?;
        let plan = dep.plan()?;
        let cutoff = market
            .grid
            .day_index(fit.train_end)
            .ok_or_else(|| Error::data(format!("fit ends {} outside the store", fit.train_end)))?;
        days.iter()
            .map(|&d| {
                check_cutoff(&market, cutoff, d)?;
                simulate_mixture(
                    &fit,
                    &plan,
                    &market,
                    d,
                    args.paths,
                    model.name(),
                    day_seed("mix", d),
                )
            })
            .collect::<Result<Vec<_>>>()?
    };
    write_scenarios(&args.out, model.name(), seed_root, &sets)?;
    log::info!(
        "wrote {} days of {} paths to {}",
        sets.len(),
        args.paths,
        args.out.display()
    );
    Ok(())
}

fn score(args: &ScoreArgs) -> Result<()> {
    let market = read_store(&args.store)?;
    let dm_metrics = args
        .dm_metrics
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| Metric::parse(s.trim()))
        .collect::<Result<Vec<_>>>()?;
    let reports = args
        .scenarios
        .iter()
        .map(|dir| {
            let (_, sets) = read_scenarios(dir)?;
            score_scenarios(&market, &sets, args.k)
        })
        .collect::<Result<Vec<_>>>()?;
    write_report(
        &args.out,
        &reports,
        &ReportOptions {
            k: args.k,
            norm: args.norm,
            dm_metrics,
        },
    )
}

fn study(args: &StudyArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg = StudyConfig::load(&args.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let market = read_store(&args.store)?;
    let out = run_study(&cfg, &market, &args.out)?;
    log::info!(
        "{} refits, {} tasks run, {} resumed; report in {}",
        out.refits.len(),
        out.simulated,
        out.resumed,
        args.out.join("report").display()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    }
    let seed = cli.seed.unwrap_or(0);
    match &cli.cmd {
        Cmd::Synth(a) => synth(a, seed),
        Cmd::Ingest(a) => ingest(a),
        Cmd::Fit(a) => fit(a, seed),
        Cmd::Simulate(a) => simulate(a, seed),
        Cmd::Score(a) => score(a),
        Cmd::Study(a) => study(a, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("idsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
