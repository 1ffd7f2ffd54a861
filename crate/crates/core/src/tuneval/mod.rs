//! Cross-validated grid search, operating thresholds and classification metrics.

mod folds;
mod metrics;
mod search;
mod threshold;

use thiserror::Error;

pub use folds::{stratified_kfold, FoldPlan};
pub use metrics::{auc_labels, auc_rank, split_by_label, ClassificationMetrics, ConfusionMatrix};
pub use search::{cross_val_predict, grid_search_cv, kind_of, CvRow, SearchResult, BOOST_CHECKPOINT};
pub use threshold::{candidate_values, prevalence_threshold, youden_threshold, Threshold, ThresholdPolicy};

use crate::learners::LearnerError;

#[derive(Debug, Error)]
pub enum TunevalError {
    #[error("{0}")]
    Parameter(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),
    #[error("every fold had a single-class training part")]
    AllFoldsSkipped,
    #[error(transparent)]
    Learner(#[from] LearnerError),
}
