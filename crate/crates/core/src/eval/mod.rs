//! Batch evaluation of generated STEP files against ground truth: completion
//! rate, renderability through an external mesher, median scaled Chamfer
//! distance and entity-count statistics.

mod batch;
mod checker;
mod stats;

use thiserror::Error;

use crate::geometry::GeometryError;

pub use batch::{
    aggregate, batch_evaluate, batch_evaluate_with_progress, evaluate_pair, pair_directories, Aggregates, BatchConfig,
    EvalReport, FailureReason, PairGeometry, PairPaths, PairRecord, ProgressFn, REPORT_SCHEMA_VERSION,
};
pub use checker::{check_renderability, ExternalCheckerSpec, RenderFailure, RenderOutcome};
pub use stats::{
    completion_rate, entity_stats, entity_stats_with, entity_table, mean, median, EntityStats, Histogram,
    DEFAULT_BIN_WIDTH, DEFAULT_HISTOGRAM_END, ENTITY_TABLE_HEADER,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("no prediction in {pred_dir} has a ground-truth file with the same stem in {gt_dir}")]
    NoPairsFound { pred_dir: String, gt_dir: String },
    #[error("renderability checker unavailable: {0}")]
    CheckerUnavailable(String),
    #[error("invalid checker spec: {0}")]
    InvalidChecker(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
