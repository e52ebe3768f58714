//! Model parameterization, losses, local SGD training, dataset encoding from
//! query results, and partition-scheme tools for federated experiments.

mod dataset;
mod model;
mod params;
mod partition;
mod train;

pub use dataset::{
    encode_training_data, encode_with, merge_encodings, scan_encoding, Dataset, Encoding,
    FeatureSpec, LabelVocab, Labels,
};
pub use model::{evaluate, gradient, MetricsReport, ModelSpec};
pub use params::{ModelParams, NamedTensor};
pub use partition::{
    classify_partitioning, partition_hfl, skewed_sizes, DatasetSchemaProfile, PartitionClass,
};
pub use train::{sgd_train, TrainBudget, TrainHyper};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("parameter shapes are incompatible: {0}")]
    ShapeMismatch(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{rows} rows cannot be split across {learners} learners")]
    TooFewRows { rows: usize, learners: usize },
    #[error("column '{column}' has a missing or null value at row {row}")]
    ResidualNull { column: String, row: usize },
    #[error("label value '{0}' cannot be encoded")]
    UnknownLabel(String),
    #[error("invalid model or training config: {0}")]
    InvalidSpec(String),
}
