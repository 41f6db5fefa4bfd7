//! Evaluation: reconstruction accuracy and geometry, latent clustering,
//! generation quality and the permutation probes.

pub mod cluster;
pub mod generation;
pub mod perm;
pub mod recon;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cluster::{cluster_quality, euclidean, kmeans, silhouette, sse, ClusterBlock, KMeans};
pub use generation::{coverage_mmd, generation_metrics, jsd, occupancy_distribution, uniqueness, GenerationBlock};
pub use perm::{find_pattern, permutation_probe, permute_with_shift, Pattern};
pub use recon::{
    acc_cmd, acc_param, accuracy_counts, corpus_accuracy, invalid_rate, is_valid_matrix, median, median_cd,
    per_length, per_length_csv, AccCounts, CdSummary, LengthRow,
};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("ground truth has {gt} rows but prediction has {pred}")]
    LengthMismatch { gt: usize, pred: usize },
    #[error("no command matched, parameter accuracy is undefined")]
    NoMatchedCommands,
    #[error("no pair could be realized")]
    AllInvalid,
    #[error("k = {k} is not in 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("fewer distinct points than clusters")]
    DuplicatePointsDegenerate,
    #[error("silhouette needs at least two non-empty clusters")]
    SingleCluster,
    #[error("empty sample set")]
    EmptySet,
    #[error("sequence does not contain pattern {0:?}")]
    PatternNotFound(Pattern),
    #[error("unknown pattern {0:?}")]
    UnknownPattern(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc_cmd: f64,
    /// `NaN` (serialized as null) when no command matched.
    pub acc_param: f64,
    pub invalid_rate: f64,
    pub median_cd: f64,
    pub n_cd_invalid: usize,
    pub per_length: Vec<LengthRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub generation: Option<GenerationBlock>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub clustering: Option<ClusterBlock>,
}
