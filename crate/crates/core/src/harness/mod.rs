//! Experiment harness: declarative configs, parameter sweeps and result
//! tables.

mod config;
mod experiments;
mod presets;
mod table;

pub use config::{
    BoundsConfig, ExperimentConfig, ExperimentKind, GridConfig, LearnerSection, ModelConfig, ResolvedModel,
    ScenarioConfig,
};
pub use experiments::{
    bound_check_oracle, obj1_pair, run_bound_check, run_experiment, run_obj1_sweep, run_obj2_train, run_rate_curve,
    run_tradeoff_sweep, ExperimentOutput, TrainingTrace, BOUND_CHECK_MAX_GROUND_SET, EVAL_SEED_OFFSET,
};
pub use presets::{preset, preset_names};
pub use table::{Params, ResultRow, ResultTable, SCHEMA_VERSION};
