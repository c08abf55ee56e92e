//! Configuration-driven pipeline from raw readings to ranked reports.

pub mod config;
pub mod plot;
pub mod report;
pub mod run;

pub use config::{InputConfig, PipelineConfig, ProfileRef};
pub use report::{DataSummary, ModelDetails, ModelReport, RunReport, ScenarioReport};
pub use run::{run, RunOptions, ScenarioOutcome};
