//! Seeded Monte-Carlo experiments and their CSV output.
//!
//! Every stochastic draw comes from a generator keyed by the base seed and
//! the coordinates it belongs to: the channel by trial, the training by
//! (trial, `N_p`) and the noise by (trial, `N_p`, SNR index). Results are
//! therefore independent of scheduling, and different bit depths and
//! algorithms see the same channel and noise.

mod config;
mod runner;
mod table;

pub use config::{
    Algorithm, AlgorithmConfig, ArrayConfig, ChannelConfig, ExperimentConfig, OutputConfig, RateSettings,
    SweepConfig, TrainingConfig,
};
pub use runner::{
    complex_noise, draw_channel, estimate, noise_variance, run_experiment, stream_rng, Estimate, Measurement,
};
pub use table::{emit_csv, read_csv, summarize, write_csv, write_summary_csv, ResultRow, SummaryRow};
