//! Transductive text classification over word-document graphs.
//!
//! The pipeline is: [`corpus`] loads and cleans documents, [`textgraph`]
//! builds the TF-IDF / PPMI heterogeneous graph and its normalized
//! adjacency, [`gcn`] holds the graph network and the SGC baseline,
//! [`encoder`] produces trainable document embeddings, and [`trainer`]
//! runs joint memory-bank training with the interpolated objective.

mod binio;
pub mod corpus;
pub mod dense;
pub mod encoder;
mod error;
pub mod gcn;
pub mod optim;
pub mod sparse;
pub mod textgraph;
pub mod trainer;

pub use corpus::{Corpus, DatasetFormat, PreprocessConfig, RawDocument, Split, Vocabulary};
pub use dense::DenseMatrix;
pub use encoder::{DocFeatureSource, EncoderParams, FeatureKind};
pub use error::{Error, Result};
pub use gcn::{Activation, ForwardMode, GcnModel, NodeFeatures, PredictionSet, SgcModel};
pub use sparse::SparseMatrix;
pub use textgraph::{CooccurrenceCounts, GraphParams, HeteroGraph};
pub use trainer::{EpochReport, MemoryBank, NodeInput, Strategy, TrainConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded generator used everywhere randomness enters the pipeline.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer. Used to derive sub-seeds and to hash token ids.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives an independent seed for a labelled sub-stream.
pub(crate) fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p)))
}
