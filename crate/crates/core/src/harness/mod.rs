//! Training, evaluation, the framework comparison and its reports.

use std::path::{Path, PathBuf};

use thiserror::Error;

mod compare;
mod config;
mod evaluate;
mod optim;
mod report;
mod train;

pub use compare::{compare_frameworks, ResultsTable, SeedResult, VariantResult};
pub use config::{lr_schedule, DataSection, ModelSection, RunConfig, SceneSection, TrainSection};
pub use evaluate::{
    evaluate, evaluate_checkpoint, load_checkpoint, read_metrics_csv, scene_records, write_metrics_csv, Evaluation,
    GroundTruthPredictor, JointPredictor,
};
pub use optim::{clip_global_norm, global_norm, Adam, ADAM_EPS, BETA1, BETA2};
pub use report::{emit_report, read_results_csv, render_plots, trajectory_svg, write_results_csv, ResultLine};
pub use train::{
    checkpoint_meta, prepare_examples, scene_gradient, train, train_on, CheckpointMeta, Example, StepLog, TrainOutcome,
};

use crate::metrics::MetricsError;
use crate::model::ModelError;
use crate::objective::ObjectiveError;
use crate::scene::DatasetError;
use crate::taxonomy::TaxonomyError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize },
    #[error("csv: {0}")]
    Csv(String),
    #[error("checkpoint does not match: {0}")]
    Mismatch(String),
    #[error("nothing to report")]
    Empty,
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Worker count from `JAM_THREADS`, else rayon's default.
pub fn thread_count() -> usize {
    std::env::var("JAM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

pub(crate) fn pool() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .expect("thread pool")
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}
