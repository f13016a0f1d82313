use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dm::{dm_test, DmResult};
use super::scores::{quantile_levels, score_day, DayScore, HourScore, N_LEVELS};
use crate::features::calendar::{HOURS, SLOTS_PER_DAY};
use crate::ingest::store::write_json_pretty;
use crate::ingest::Market;
use crate::simulate::ScenarioSet;
use crate::{Error, Result};

pub const QUANTILE_METHOD: &str = "linear interpolation between order statistics, h = (M-1)p";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rmse,
    Mae,
    Crps,
    Es,
    Es3h,
    /// Joint energy score over all hours of the day.
    EsDay,
    Es3hDay,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Rmse,
        Metric::Mae,
        Metric::Crps,
        Metric::Es,
        Metric::Es3h,
        Metric::EsDay,
        Metric::Es3hDay,
    ];
    pub const HOURLY: [Metric; 5] = [
        Metric::Rmse,
        Metric::Mae,
        Metric::Crps,
        Metric::Es,
        Metric::Es3h,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Mae => "mae",
            Metric::Crps => "crps",
            Metric::Es => "es",
            Metric::Es3h => "es3h",
            Metric::EsDay => "es_day",
            Metric::Es3hDay => "es3h_day",
        }
    }

    pub fn parse(s: &str) -> Result<Metric> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown metric `{s}`")))
    }

    pub fn is_daily(self) -> bool {
        matches!(self, Metric::EsDay | Metric::Es3hDay)
    }

    fn of_hour(self, h: &HourScore) -> f64 {
        match self {
            Metric::Rmse => h.rmse,
            Metric::Mae => h.mae,
            Metric::Crps => h.crps,
            Metric::Es => h.es,
            Metric::Es3h => h.es3h,
            Metric::EsDay | Metric::Es3hDay => unreachable!("daily metric"),
        }
    }
}

/// Scores of one model over a set of test days.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub model: String,
    pub dates: Vec<NaiveDate>,
    pub days: Vec<DayScore>,
}

/// Observed level path of day `d`, indexed by slot.
pub fn observed_day(market: &Market, d: usize) -> &[f64] {
    &market.grid.price[d * SLOTS_PER_DAY..(d + 1) * SLOTS_PER_DAY]
}

pub fn score_scenarios(market: &Market, sets: &[ScenarioSet], k: usize) -> Result<ScoreReport> {
    let model = match sets.first() {
        Some(s) => s.model.clone(),
        None => return Err(Error::data("no scenario sets to score")),
    };
    if sets.iter().any(|s| s.model != model) {
        return Err(Error::schema(
            "scenario sets from different models in one report",
        ));
    }
    let days = sets
        .par_iter()
        .map(|s| {
            let d = market
                .grid
                .day_index(s.date)
                .ok_or_else(|| Error::data(format!("no observed data for {}", s.date)))?;
            score_day(s, observed_day(market, d), k)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreReport {
        model,
        dates: sets.iter().map(|s| s.date).collect(),
        days,
    })
}

impl ScoreReport {
    /// Loss vector of every day: one entry per hour, or a single entry for daily metrics.
    pub fn losses(&self, metric: Metric) -> Vec<Vec<f64>> {
        self.days
            .iter()
            .map(|d| match metric {
                Metric::EsDay => vec![d.es_day],
                Metric::Es3hDay => vec![d.es3h_day],
                m => d.hours.iter().map(|h| m.of_hour(h)).collect(),
            })
            .collect()
    }

    pub fn mean(&self, metric: Metric) -> f64 {
        let l = self.losses(metric);
        let n: usize = l.iter().map(Vec::len).sum();
        l.iter().flatten().sum::<f64>() / n as f64
    }

    pub fn hourly(&self, metric: Metric) -> [f64; HOURS] {
        let n = self.days.len() as f64;
        std::array::from_fn(|h| {
            self.days
                .iter()
                .map(|d| metric.of_hour(&d.hours[h]))
                .sum::<f64>()
                / n
        })
    }

    /// Mean pinball loss per hour and quantile level.
    pub fn pinball_surface(&self) -> Vec<[f64; N_LEVELS]> {
        let n = self.days.len() as f64;
        (0..HOURS)
            .map(|h| {
                std::array::from_fn(|i| self.days.iter().map(|d| d.pinball[h][i]).sum::<f64>() / n)
            })
            .collect()
    }
}

/// Pairwise DM tests; entry `[a][b]` compares row model `a` with column model `b`.
pub fn dm_matrix(
    reports: &[ScoreReport],
    metric: Metric,
    norm: f64,
) -> Result<Vec<Vec<Option<DmResult>>>> {
    for r in reports {
        if r.dates != reports[0].dates {
            return Err(Error::schema(format!(
                "model {} was scored on different days",
                r.model
            )));
        }
    }
    let losses: Vec<_> = reports.iter().map(|r| r.losses(metric)).collect();
    let mut out = vec![vec![None; reports.len()]; reports.len()];
    for a in 0..reports.len() {
        for b in 0..reports.len() {
            if a != b {
                out[a][b] = Some(dm_test(&losses[a], &losses[b], norm)?);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub k: usize,
    pub norm: f64,
    pub dm_metrics: Vec<Metric>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            k: super::scores::DEFAULT_K,
            norm: 1.0,
            dm_metrics: vec![Metric::Crps, Metric::Es, Metric::EsDay],
        }
    }
}

#[derive(Serialize)]
struct ReportMeta<'a> {
    models: Vec<&'a str>,
    n_days: usize,
    first_day: Option<NaiveDate>,
    last_day: Option<NaiveDate>,
    energy_score_k: usize,
    dm_norm: f64,
    dm_variance: &'static str,
    quantile_method: &'static str,
    quantile_levels: usize,
}

fn f(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes CSV tables, `report.json` and SVG plots into `dir`.
pub fn write_report(dir: &Path, reports: &[ScoreReport], opts: &ReportOptions) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::data("nothing to report"));
    }
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    write_json_pretty(
        &dir.join("report.json"),
        &ReportMeta {
            models: reports.iter().map(|r| r.model.as_str()).collect(),
            n_days: reports[0].dates.len(),
            first_day: reports[0].dates.first().copied(),
            last_day: reports[0].dates.last().copied(),
            energy_score_k: opts.k,
            dm_norm: opts.norm,
            dm_variance: "Bartlett kernel, lag floor(n^(1/3))",
            quantile_method: QUANTILE_METHOD,
            quantile_levels: N_LEVELS,
        },
    )?;

    let mut s = String::from("model");
    Metric::ALL
        .iter()
        .for_each(|m| write!(s, ",{}", m.name()).unwrap());
    s.push('\n');
    for r in reports {
        s.push_str(&r.model);
        Metric::ALL
            .iter()
            .for_each(|&m| write!(s, ",{}", f(r.mean(m))).unwrap());
        s.push('\n');
    }
    write_text(&dir.join("summary.csv"), &s)?;

    let mut hourly = String::from("model,hour");
    Metric::HOURLY
        .iter()
        .for_each(|m| write!(hourly, ",{}", m.name()).unwrap());
    hourly.push('\n');
    for r in reports {
        let cols: Vec<[f64; HOURS]> = Metric::HOURLY.iter().map(|&m| r.hourly(m)).collect();
        for h in 0..HOURS {
            write!(hourly, "{},{h}", r.model).unwrap();
            cols.iter()
                .for_each(|c| write!(hourly, ",{}", f(c[h])).unwrap());
            hourly.push('\n');
        }

        let mut per = String::from("date,hour,rmse,mae,crps,es,es3h\n");
        let mut daily = String::from("date,es_day,es3h_day\n");
        for (date, day) in r.dates.iter().zip(&r.days) {
            for (h, x) in day.hours.iter().enumerate() {
                writeln!(
                    per,
                    "{date},{h},{},{},{},{},{}",
                    f(x.rmse),
                    f(x.mae),
                    f(x.crps),
                    f(x.es),
                    f(x.es3h)
                )
                .unwrap();
            }
            writeln!(daily, "{date},{},{}", f(day.es_day), f(day.es3h_day)).unwrap();
        }
        write_text(&dir.join(format!("scores_{}.csv", r.model)), &per)?;
        write_text(&dir.join(format!("daily_{}.csv", r.model)), &daily)?;

        let surface = r.pinball_surface();
        let mut pb = String::from("hour");
        quantile_levels()
            .iter()
            .for_each(|q| write!(pb, ",q{:.2}", q).unwrap());
        pb.push('\n');
        for (h, row) in surface.iter().enumerate() {
            write!(pb, "{h}").unwrap();
            row.iter().for_each(|v| write!(pb, ",{}", f(*v)).unwrap());
            pb.push('\n');
        }
        write_text(&dir.join(format!("pinball_{}.csv", r.model)), &pb)?;
        write_text(
            &plots.join(format!("pinball_{}.svg", r.model)),
            &svg::pinball_heatmap(&r.model, &surface),
        )?;
    }
    write_text(&dir.join("hourly.csv"), &hourly)?;
    for m in [Metric::Rmse, Metric::Mae, Metric::Crps, Metric::Es] {
        let series: Vec<(&str, [f64; HOURS])> = reports
            .iter()
            .map(|r| (r.model.as_str(), r.hourly(m)))
            .collect();
        write_text(
            &plots.join(format!("hourly_{}.svg", m.name())),
            &svg::hourly_curves(m.name(), &series),
        )?;
    }

    if reports.len() > 1 {
        for &m in &opts.dm_metrics {
            let mat = dm_matrix(reports, m, opts.norm)?;
            let mut s = String::from("model_a,model_b,mean_diff,statistic,p_a_better,p_b_better,degenerate,adf_statistic,adf_p_value,adf_lags\n");
            for (a, row) in mat.iter().enumerate() {
                for (b, cell) in row.iter().enumerate() {
                    if let Some(c) = cell {
                        let adf = c.adf.as_ref();
                        writeln!(
                            s,
                            "{},{},{},{},{},{},{},{},{},{}",
                            reports[a].model,
                            reports[b].model,
                            f(c.mean_diff),
                            opt(c.statistic),
                            opt(c.p_a_better),
                            opt(c.p_b_better),
                            c.degenerate,
                            opt(adf.map(|x| x.statistic)),
                            opt(adf.map(|x| x.p_value)),
                            adf.map(|x| x.lags.to_string()).unwrap_or_default()
                        )
                        .unwrap();
                    }
                }
            }
            write_text(&dir.join(format!("dm_{}.csv", m.name())), &s)?;
            let names: Vec<&str> = reports.iter().map(|r| r.model.as_str()).collect();
            write_text(
                &plots.join(format!("dm_{}.svg", m.name())),
                &svg::dm_heatmap(m.name(), &names, &mat),
            )?;
        }
    }
    Ok(())
}

mod svg {
    use std::fmt::Write as _;

    use super::super::dm::DmResult;
    use super::super::scores::N_LEVELS;
    use crate::features::calendar::HOURS;

    const PALETTE: [&str; 6] = [
        "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
    ];

    fn header(w: f64, h: f64) -> String {
        format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n")
    }

    fn escape(s: &str) -> String {
        s.replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;")
    }

    /// White to dark red.
    fn heat(x: f64) -> String {
        let x = if x.is_finite() {
            x.clamp(0.0, 1.0)
        } else {
            0.0
        };
        let c = |a: f64, b: f64| (a + (b - a) * x).round() as u8;
        format!(
            "#{:02x}{:02x}{:02x}",
            c(255.0, 140.0),
            c(255.0, 10.0),
            c(255.0, 20.0)
        )
    }

    pub fn hourly_curves(metric: &str, series: &[(&str, [f64; HOURS])]) -> String {
        let (w, h, l, r, t, b) = (640.0, 380.0, 60.0, 130.0, 30.0, 40.0);
        let vals = series
            .iter()
            .flat_map(|s| s.1.iter().copied())
            .filter(|v| v.is_finite());
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, z), v| {
            (a.min(v), z.max(v))
        });
        let (lo, hi) = if lo < hi {
            (lo, hi)
        } else {
            (lo - 1.0, lo + 1.0)
        };
        let px = |i: usize| l + (w - l - r) * i as f64 / (HOURS - 1) as f64;
        let py = |v: f64| t + (h - t - b) * (1.0 - (v - lo) / (hi - lo));
        let mut s = header(w, h);
        writeln!(
            s,
            "<text x=\"{l}\" y=\"18\">{} by delivery hour</text>",
            escape(metric)
        )
        .unwrap();
        writeln!(
            s,
            "<rect x=\"{l}\" y=\"{t}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>",
            w - l - r,
            h - t - b
        )
        .unwrap();
        for k in 0..=4 {
            let v = lo + (hi - lo) * k as f64 / 4.0;
            writeln!(
                s,
                "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{v:.3}</text>",
                l - 4.0,
                py(v) + 4.0
            )
            .unwrap();
        }
        for hr in (0..HOURS).step_by(3) {
            writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{hr}</text>",
                px(hr),
                h - b + 15.0
            )
            .unwrap();
        }
        writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">hour</text>",
            (l + w - r) / 2.0,
            h - 6.0
        )
        .unwrap();
        for (i, (name, ys)) in series.iter().enumerate() {
            let col = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = ys
                .iter()
                .enumerate()
                .map(|(k, &v)| format!("{:.1},{:.1}", px(k), py(v)))
                .collect();
            writeln!(
                s,
                "<polyline fill=\"none\" stroke=\"{col}\" stroke-width=\"1.5\" points=\"{}\"/>",
                pts.join(" ")
            )
            .unwrap();
            let y = t + 14.0 * i as f64 + 10.0;
            writeln!(s, "<line x1=\"{}\" x2=\"{}\" y1=\"{y}\" y2=\"{y}\" stroke=\"{col}\" stroke-width=\"2\"/>", w - r + 8.0, w - r + 24.0).unwrap();
            writeln!(
                s,
                "<text x=\"{}\" y=\"{}\">{}</text>",
                w - r + 28.0,
                y + 4.0,
                escape(name)
            )
            .unwrap();
        }
        s.push_str("</svg>\n");
        s
    }

    pub fn pinball_heatmap(model: &str, surface: &[[f64; N_LEVELS]]) -> String {
        let (cw, ch, l, t) = (5.0, 12.0, 40.0, 30.0);
        let (w, h) = (
            l + cw * N_LEVELS as f64 + 20.0,
            t + ch * HOURS as f64 + 40.0,
        );
        let hi = surface
            .iter()
            .flatten()
            .copied()
            .filter(|v| v.is_finite())
            .fold(0.0f64, f64::max);
        let mut s = header(w, h);
        writeln!(
            s,
            "<text x=\"{l}\" y=\"18\">pinball loss, {} (max {hi:.3})</text>",
            escape(model)
        )
        .unwrap();
        for (hr, row) in surface.iter().enumerate() {
            let y = t + ch * hr as f64;
            writeln!(
                s,
                "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{hr}</text>",
                l - 4.0,
                y + ch - 2.0
            )
            .unwrap();
            for (i, v) in row.iter().enumerate() {
                let x = l + cw * i as f64;
                let c = heat(if hi > 0.0 { v / hi } else { 0.0 });
                writeln!(
                    s,
                    "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cw}\" height=\"{ch}\" fill=\"{c}\"/>"
                )
                .unwrap();
            }
        }
        let yb = t + ch * HOURS as f64 + 14.0;
        for q in [1, 25, 50, 75, 99] {
            let x = l + cw * (q as f64 - 0.5);
            writeln!(
                s,
                "<text x=\"{x:.1}\" y=\"{yb}\" text-anchor=\"middle\">{:.2}</text>",
                q as f64 / 100.0
            )
            .unwrap();
        }
        s.push_str("</svg>\n");
        s
    }

    /// Cell `(a, b)` shows the p-value against "column model b beats row model a".
    pub fn dm_heatmap(metric: &str, names: &[&str], mat: &[Vec<Option<DmResult>>]) -> String {
        let n = names.len();
        let (c, l, t) = (48.0, 90.0, 40.0);
        let (w, h) = (l + c * n as f64 + 20.0, t + c * n as f64 + 70.0);
        let mut s = header(w, h);
        writeln!(
            s,
            "<text x=\"10\" y=\"18\">DM p-values ({}): column better than row</text>",
            escape(metric)
        )
        .unwrap();
        for (i, name) in names.iter().enumerate() {
            let y = t + c * i as f64;
            writeln!(
                s,
                "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
                l - 4.0,
                y + c / 2.0 + 4.0,
                escape(name)
            )
            .unwrap();
            let x = l + c * i as f64 + c / 2.0;
            let yb = t + c * n as f64 + 12.0;
            writeln!(s, "<text x=\"{x:.1}\" y=\"{yb}\" text-anchor=\"end\" transform=\"rotate(-45 {x:.1} {yb})\">{}</text>", escape(name)).unwrap();
            for j in 0..n {
                let x = l + c * j as f64;
                let p = mat[i][j].as_ref().and_then(|r| r.p_b_better);
                let fill = match p {
                    Some(p) => heat(1.0 - (p / 0.1).min(1.0)),
                    None => "#dddddd".to_string(),
                };
                writeln!(s, "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{c}\" height=\"{c}\" fill=\"{fill}\" stroke=\"white\"/>").unwrap();
                if let Some(p) = p {
                    writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"9\">{p:.3}</text>", x + c / 2.0, y + c / 2.0 + 3.0).unwrap();
                }
            }
        }
        s.push_str("</svg>\n");
        s
    }
}
