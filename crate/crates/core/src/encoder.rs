//! Trainable document encoder over fixed per-document features.
//!
//! A feature source supplies one fixed vector per document: either
//! embeddings computed by an external pretrained model and stored in a
//! `DEMB` file, or a seeded hashed bag-of-words. The encoder maps each row
//! through `tanh(f · P + b)`, and the auxiliary classifier reads the
//! resulting embeddings directly as `softmax(x · W)`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binio::{sidecar_path, ByteReader, ByteWriter};
use crate::corpus::Corpus;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::gcn::{glorot_uniform, softmax_rows, PredictionSet};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"DEMB";
pub const EMBEDDING_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureKind {
    External { path: PathBuf },
    HashedBow { n_buckets: usize, seed: u64 },
}

/// Fixed document features, one row per corpus document in corpus order.
#[derive(Clone, Debug, PartialEq)]
pub struct DocFeatureSource {
    pub kind: FeatureKind,
    pub features: DenseMatrix,
}

impl DocFeatureSource {
    pub fn n_doc(&self) -> usize {
        self.features.n_rows()
    }

    pub fn raw_dim(&self) -> usize {
        self.features.n_cols()
    }
}

/// Sidecar of an embedding file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub dataset: String,
    pub model_name: String,
    pub doc_ids: Vec<String>,
}

/// In-memory form of a `DEMB` file plus its sidecar.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingFile {
    pub n_doc: usize,
    pub dim: usize,
    pub data: Vec<f32>,
    pub meta: EmbeddingMeta,
}

impl EmbeddingFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(&EMBEDDING_MAGIC);
        w.u32(EMBEDDING_VERSION);
        w.u64(self.n_doc as u64);
        w.u64(self.dim as u64);
        w.f32s(self.data.iter().copied());
        w.finish()
    }

    /// Parses the binary container; the sidecar is supplied separately.
    pub fn from_bytes(bytes: &[u8], meta: EmbeddingMeta) -> Result<Self> {
        let mut r = ByteReader::new("embedding file", bytes);
        r.magic(EMBEDDING_MAGIC)?;
        r.version(EMBEDDING_VERSION)?;
        let n_doc = r.len()?;
        let dim = r.len()?;
        let count = n_doc
            .checked_mul(dim)
            .ok_or_else(|| Error::Internal("embedding size overflow".into()))?;
        let expected = HEADER_LEN as u64 + count as u64 * 4;
        if bytes.len() as u64 != expected {
            return Err(Error::Truncated {
                what: "embedding file",
                expected,
                found: bytes.len() as u64,
            });
        }
        let data = r.f32s(count)?;
        r.finish()?;
        Ok(Self { n_doc, dim, data, meta })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        fs::write(sidecar_path(path), serde_json::to_vec_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let meta: EmbeddingMeta = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
        Self::from_bytes(&bytes, meta)
    }
}

/// Loads an embedding file and checks it against the corpus document order.
pub fn load_embedding_file(path: &Path, corpus_doc_ids: &[String]) -> Result<DocFeatureSource> {
    let file = EmbeddingFile::read(path)?;
    if file.n_doc != corpus_doc_ids.len() {
        return Err(Error::CountMismatch {
            expected: corpus_doc_ids.len(),
            found: file.n_doc,
        });
    }
    if file.meta.doc_ids.len() != file.n_doc {
        return Err(Error::CountMismatch {
            expected: file.n_doc,
            found: file.meta.doc_ids.len(),
        });
    }
    if let Some(row) = (0..file.n_doc).find(|&i| file.meta.doc_ids[i] != corpus_doc_ids[i]) {
        return Err(Error::IdOrder {
            row,
            expected: corpus_doc_ids[row].clone(),
            found: file.meta.doc_ids[row].clone(),
        });
    }
    if let Some(pos) = file.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: pos / file.dim,
            col: pos % file.dim,
        });
    }
    let features = DenseMatrix::from_vec(file.n_doc, file.dim, file.data.iter().map(|&v| f64::from(v)).collect())?;
    Ok(DocFeatureSource {
        kind: FeatureKind::External {
            path: path.to_path_buf(),
        },
        features,
    })
}

/// Seeded hashed bag-of-words, L2-normalized per document. Empty documents
/// map to the zero vector.
pub fn hashed_bow_features(corpus: &Corpus, n_buckets: usize, seed: u64) -> Result<DocFeatureSource> {
    if n_buckets == 0 {
        return Err(Error::Argument("hashed bag-of-words needs at least one bucket".into()));
    }
    let salt = crate::mix64(seed);
    let mut features = DenseMatrix::zeros(corpus.n_doc(), n_buckets);
    for (d, doc) in corpus.documents.iter().enumerate() {
        let row = features.row_mut(d);
        for &tok in doc {
            row[(crate::mix64(tok as u64 ^ salt) % n_buckets as u64) as usize] += 1.0;
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(DocFeatureSource {
        kind: FeatureKind::HashedBow { n_buckets, seed },
        features,
    })
}

/// Projection `raw_dim -> d` with bias, and the auxiliary classifier `d -> classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub projection: DenseMatrix,
    pub bias: Vec<f64>,
    pub aux_weight: DenseMatrix,
}

impl EncoderParams {
    pub fn init(raw_dim: usize, dim: usize, n_classes: usize, seed: u64) -> Self {
        Self {
            projection: glorot_uniform(raw_dim, dim, &mut crate::seeded_rng(crate::derive_seed(seed, &[0]))),
            bias: vec![0.0; dim],
            aux_weight: glorot_uniform(dim, n_classes, &mut crate::seeded_rng(crate::derive_seed(seed, &[1]))),
        }
    }

    pub fn dim(&self) -> usize {
        self.projection.n_cols()
    }

    pub fn is_finite(&self) -> bool {
        self.projection.is_finite() && self.aux_weight.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }
}

/// What [`encode_batch`] keeps for the backward pass.
#[derive(Clone, Debug)]
pub struct EncodeCache {
    pub rows: Vec<usize>,
    pub outputs: DenseMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderGradients {
    pub projection: DenseMatrix,
    pub bias: Vec<f64>,
}

/// Embeds the listed documents: `tanh(features[r] · P + b)`.
pub fn encode_batch(
    source: &DocFeatureSource,
    params: &EncoderParams,
    rows: &[usize],
) -> Result<(DenseMatrix, EncodeCache)> {
    if let Some(&r) = rows.iter().find(|&&r| r >= source.n_doc()) {
        return Err(Error::Argument(format!(
            "document row {r} out of range (n_doc = {})",
            source.n_doc()
        )));
    }
    if source.raw_dim() != params.projection.n_rows() {
        return Err(Error::Shape(format!(
            "feature width {} vs projection {}x{}",
            source.raw_dim(),
            params.projection.n_rows(),
            params.projection.n_cols()
        )));
    }
    let mut out = source.features.select_rows(rows).matmul(&params.projection)?;
    let d = out.n_cols();
    if d > 0 {
        for row in out.data_mut().chunks_mut(d) {
            for (v, b) in row.iter_mut().zip(&params.bias) {
                *v = (*v + b).tanh();
            }
        }
    }
    let cache = EncodeCache {
        rows: rows.to_vec(),
        outputs: out.clone(),
    };
    Ok((out, cache))
}

/// Pulls `dL/d(embeddings)` for the cached rows back to the projection and bias.
pub fn encode_backward(
    source: &DocFeatureSource,
    cache: &EncodeCache,
    d_out: &DenseMatrix,
) -> Result<EncoderGradients> {
    if d_out.shape() != cache.outputs.shape() {
        return Err(Error::Internal(
            "encoder gradient does not match the cached batch".into(),
        ));
    }
    let data = d_out
        .data()
        .iter()
        .zip(cache.outputs.data())
        .map(|(g, y)| g * (1.0 - y * y))
        .collect();
    let d_pre = DenseMatrix::from_vec(d_out.n_rows(), d_out.n_cols(), data)?;
    Ok(EncoderGradients {
        projection: source.features.select_rows(&cache.rows).t_matmul(&d_pre)?,
        bias: d_pre.col_sums(),
    })
}

/// Auxiliary classifier `softmax(x · W)`, no bias.
pub fn aux_forward(embeddings: &DenseMatrix, params: &EncoderParams) -> Result<PredictionSet> {
    if embeddings.n_cols() != params.aux_weight.n_rows() {
        return Err(Error::Shape(format!(
            "embedding width {} vs auxiliary weight {}x{}",
            embeddings.n_cols(),
            params.aux_weight.n_rows(),
            params.aux_weight.n_cols()
        )));
    }
    Ok(softmax_rows(&embeddings.matmul(&params.aux_weight)?))
}
