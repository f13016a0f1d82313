//! Rolling-window forecasting study: monthly refits, scenario generation
//! for every model and test day, scoring and reports.

mod config;
mod contrib;
mod run;

pub use config::{ModelId, StudyConfig};
pub use contrib::{coefficient_report, write_contributions, Contribution, ContributionReport};
pub use run::{
    check_cutoff, run_study, select_lookback, Completed, LookbackChoice, StudyManifest,
    StudyOutcome, STUDY_FORMAT, STUDY_VERSION,
};
