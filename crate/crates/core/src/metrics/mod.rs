//! Intrinsic bias measures: clustering, recoverability, GIPE, SemBias, and
//! correlation across embeddings.

pub mod biased;
pub mod cluster;
pub mod gipe;
pub mod recover;
pub mod sembias;
pub mod table;

pub use biased::{most_biased_words, LabeledWordSet};
pub use cluster::{clustering_bias, kmeans, v_measure, ClusterOptions, ClusterScore, KMeansOptions, VMeasure};
pub use gipe::{gipe, indirect_bias, GipeConfig, GipeScore, Skip};
pub use recover::{recoverability, Classifier, RecoverOptions, RecoverScore};
pub use sembias::{sembias, SemBiasDataset, SemBiasScore, SemBiasTuple, Tag};
pub use table::{pearson_matrix, CorrelationMatrix, MetricsTable};
