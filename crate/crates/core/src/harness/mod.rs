//! Experiment configs, seeded scenarios, the Push-DIGing stepsize search
//! and CSV/JSON emission.

pub mod config;
pub mod parallel;
pub mod scenarios;
pub mod tune;

pub use config::{
    CostSpec, ExperimentConfig, HybridSpec, InitSpec, NetworkSpec, Output, ResolvedConfig,
    Scenario, StepChoice, StepsizeSpec,
};
pub use scenarios::{run_scenario, ExperimentReport, Instance, ScenarioOutput};
pub use tune::{tune_pd_stepsize, TuneResult, TuneRule, TuneSpec};
