//! Scoring rules, forecast comparison tests and report output.

pub mod dm;
pub mod report;
pub mod scores;

pub use dm::{
    adf_test, dm_from_differential, dm_test, hac_variance, mackinnon_p, AdfResult, DmResult,
};
pub use report::{
    dm_matrix, observed_day, score_scenarios, write_report, Metric, ReportOptions, ScoreReport,
};
pub use scores::{
    crps_pinball, energy_score_kband, mean_crps, pinball, pinball_levels, quantile_levels,
    quantile_sorted, score_day, DayScore, HourScore, DEFAULT_K, N_LEVELS,
};
