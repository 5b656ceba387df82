//! Experiment driver: repetition studies, radius selection, plots and the
//! benchmark reproduction.

pub mod experiment;
pub mod plot;
pub mod radius;
pub mod reproduce;

pub use experiment::{
    run_experiment, BoundStats, ExperimentConfig, ExperimentSummary, PriorSource, RepetitionRow, RowStatus,
    SystemSource,
};
pub use plot::plot_state_space;
pub use radius::find_min_radius;
pub use reproduce::{reproduce_benchmark, Reproduction};
