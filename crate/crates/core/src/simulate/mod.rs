//! Monte-Carlo scenario generation: the mixture/copula engine and the
//! resampling benchmarks.

mod benchmark;
mod engine;
mod scenario;

pub use benchmark::{
    benchmark_sampler, centered_pools, history_window, BenchmarkConfig, BenchmarkKind,
    LOOKBACK_CANDIDATES,
};
pub use engine::{simulate_mixture, simulate_path, SimulatedDay};
pub use scenario::{
    read_scenario_day, read_scenario_manifest, read_scenarios, write_scenario_day,
    write_scenario_manifest, write_scenarios, ScenarioDay, ScenarioManifest, ScenarioSet,
    SCENARIO_FORMAT, SCENARIO_VERSION,
};
