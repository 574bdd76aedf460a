//! File formats, configuration, the experiment runner and the command-line
//! front end for `latentfm-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod formats;

pub use config::{ExperimentConfig, TopicSides, VariantSpec};
pub use error::{Error, Result};
pub use experiment::{run_experiment, Prepared};
