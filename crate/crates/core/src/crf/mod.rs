//! Linear-chain CRF over stacked BILOU labels.

mod dense;
mod features;
mod inference;
mod params;
mod train;

use thiserror::Error;

pub use dense::{
    load_dense_store, read_dense_store, write_dense_store, DenseStore, CNCE_MAGIC, CNCE_VERSION,
};
pub use features::{
    extract_features, feature_strings, sentence_features, short_shape, word_shape, FeatureMap,
    FeatureVector,
};
pub use inference::{
    build_constraint_mask, log_partition, marginals, nll_and_gradient, score_sequence, viterbi,
    LabeledSequence, Marginals, TransitionMask,
};
pub use params::CrfParams;
pub use train::{train, CrfModel, EpochRecord, TrainConfig, TrainReport, CRF_MODEL_KIND};

use crate::model_file::ModelFileError;

#[derive(Debug, Error)]
pub enum CrfError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sequence has no tokens")]
    EmptySequence,
    #[error("constraint mask admits no label sequence")]
    NoFeasiblePath,
    #[error("label id {0} is outside the vocabulary")]
    UnknownLabel(usize),
    #[error("{0} corpus has no usable sentences")]
    EmptyCorpus(String),
    #[error("training diverged in epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("bad embedding file: {0}")]
    Format(String),
    #[error("embedding file is truncated")]
    TruncatedFile,
    #[error("no embeddings for sentence `{0}`")]
    MissingEmbeddings(String),
    #[error(transparent)]
    Model(#[from] ModelFileError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
