//! Content-based image retrieval over RGB color histograms, with modified
//! k-nearest-neighbor (MKNN) classification for labeling unlabeled images.
//!
//! The pipeline: [`features`] turns images into normalized per-channel
//! histograms, [`store`] keeps them in a text index, [`retrieval`] answers
//! query-by-example searches and labels unlabeled entries through
//! [`mknn`], and [`evalharness`] measures retrieval quality with the
//! [`metrics`] module and benchmarks MKNN against plain KNN.

pub mod cli;
pub mod error;
pub mod evalharness;
pub mod features;
pub mod metrics;
pub mod mknn;
pub mod retrieval;
pub mod store;

pub use error::{Error, Result};
pub use features::{extract_features, split_channels, ExtractionParams, FeatureVector};
pub use metrics::{
    euclidean_distance, fallout, precision, recall, ConfusionCounts, EvaluationReport,
};
pub use mknn::{
    classify_knn, classify_mknn, validate_samples, Classification, ClassifierConfig,
    MknnClassifier, NeighborVote, TrainSample,
};
pub use retrieval::{label_unlabeled, query_by_example, LabelAssignment, RankedResult};
pub use store::{build_index, load_index, save_index, ImageIndex, IndexEntry};
