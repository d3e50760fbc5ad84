//! Desk-scale sweeps for NN-based FDD downlink extrapolation.
//!
//! A sweep point generates a scenario, splits it into train and test sample
//! sets, runs link simulation and path-gain extraction on every snapshot,
//! trains one network per learned method and evaluates the reconstructed DL
//! channels. Results are written as CSV plus a JSON manifest.

use std::fmt;

pub mod dataset;
pub mod pipeline;
pub mod plan;
pub mod run;
pub mod split;

pub use pipeline::{evaluate_point, PointFeatures, PointResult, SampleSet};
pub use plan::{ExperimentId, ExperimentPlan, LinkSettings, Method};
pub use run::{read_csv, run_experiment, ResultRow, RunSummary, CSV_SCHEMA_VERSION};
pub use split::{split_dataset, split_indices, Split};

/// Pipeline stage a failure is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Plan,
    Generate,
    LinkSim,
    Extraction,
    Training,
    Evaluation,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Plan => "plan",
            Stage::Generate => "generate",
            Stage::LinkSim => "link-sim",
            Stage::Extraction => "extraction",
            Stage::Training => "training",
            Stage::Evaluation => "evaluation",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("[{stage}] {detail}")]
    Stage { stage: Stage, detail: String },
    #[error("{source} (partial results: {partial})")]
    Aborted {
        #[source]
        source: Box<ExperimentError>,
        /// True when rows for earlier sweep points were written before the failure.
        partial: bool,
    },
    #[error("[output] {0}")]
    Io(#[from] std::io::Error),
    #[error("[output] csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("[output] json: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    pub fn stage(stage: Stage, err: impl fmt::Display) -> Self {
        ExperimentError::Stage { stage, detail: err.to_string() }
    }

    /// Stage the failure is attributed to.
    pub fn stage_of(&self) -> Stage {
        match self {
            ExperimentError::Plan(_) => Stage::Plan,
            ExperimentError::Stage { stage, .. } => *stage,
            ExperimentError::Aborted { source, .. } => source.stage_of(),
            _ => Stage::Output,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;
