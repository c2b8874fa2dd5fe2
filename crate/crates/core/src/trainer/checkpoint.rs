//! "GCNM" model checkpoints.
//!
//! Layout (little-endian): magic, u32 version, u64 layer count, per layer
//! `rows u64, cols u64, f64 data`, then an architecture tag (0 = GCN with
//! u8 activation and f64 dropout, 1 = SGC with u64 k), a u8 encoder flag
//! followed by projection, bias and auxiliary weights when set, and finally
//! the 32-byte sha256 of the resolved config text.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::JointModel;
use crate::binio::{sidecar_path, ByteReader, ByteWriter};
use crate::corpus::hex;
use crate::dense::DenseMatrix;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::gcn::{Activation, GcnModel, GraphModel, SgcModel};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"GCNM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn config_hash(config_text: &str) -> [u8; 32] {
    Sha256::digest(config_text.as_bytes()).into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CheckpointMeta {
    architecture: String,
    layer_shapes: Vec<(usize, usize)>,
    has_encoder: bool,
    config_hash: String,
}

fn write_matrix(w: &mut ByteWriter, m: &DenseMatrix) {
    w.u64(m.n_rows() as u64);
    w.u64(m.n_cols() as u64);
    w.f64s(m.data());
}

fn read_matrix(r: &mut ByteReader<'_>) -> Result<DenseMatrix> {
    let rows = r.len()?;
    let cols = r.len()?;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Internal("checkpoint: matrix size overflow".into()))?;
    DenseMatrix::from_vec(rows, cols, r.f64s(count)?)
}

pub fn checkpoint_to_bytes(model: &JointModel, hash: &[u8; 32]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(&CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    let layers = model.graph.weights();
    w.u64(layers.len() as u64);
    for m in layers {
        write_matrix(&mut w, m);
    }
    match &model.graph {
        GraphModel::Gcn(g) => {
            w.u8(0);
            w.u8(match g.activation {
                Activation::Relu => 0,
                Activation::Identity => 1,
            });
            w.f64s(&[g.dropout]);
        }
        GraphModel::Sgc(s) => {
            w.u8(1);
            w.u64(s.k as u64);
        }
    }
    match &model.encoder {
        Some(e) => {
            w.u8(1);
            write_matrix(&mut w, &e.projection);
            w.u64(e.bias.len() as u64);
            w.f64s(&e.bias);
            write_matrix(&mut w, &e.aux_weight);
        }
        None => w.u8(0),
    }
    w.bytes(hash);
    w.finish()
}

/// Parses a checkpoint and returns the model with its embedded config hash.
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(JointModel, [u8; 32])> {
    let mut r = ByteReader::new("checkpoint", bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    r.version(CHECKPOINT_VERSION)?;
    let n_layers = r.len()?;
    if n_layers == 0 {
        return Err(Error::Internal("checkpoint has no layers".into()));
    }
    let mut layers = Vec::new();
    for _ in 0..n_layers {
        layers.push(read_matrix(&mut r)?);
    }
    for pair in layers.windows(2) {
        if pair[0].n_cols() != pair[1].n_rows() {
            return Err(Error::Internal(format!(
                "checkpoint layers do not chain: {:?} then {:?}",
                pair[0].shape(),
                pair[1].shape()
            )));
        }
    }
    let graph = match r.u8()? {
        0 => {
            let activation = match r.u8()? {
                0 => Activation::Relu,
                1 => Activation::Identity,
                t => return Err(Error::Internal(format!("unknown activation tag {t}"))),
            };
            let dropout = r.f64s(1)?[0];
            GraphModel::Gcn(GcnModel {
                layers,
                activation,
                dropout,
            })
        }
        1 => {
            let k = r.len()?;
            if layers.len() != 1 {
                return Err(Error::Internal("an SGC checkpoint holds exactly one weight".into()));
            }
            GraphModel::Sgc(SgcModel {
                k,
                weight: layers.pop().unwrap(),
            })
        }
        t => return Err(Error::Internal(format!("unknown architecture tag {t}"))),
    };
    let encoder = match r.u8()? {
        0 => None,
        1 => {
            let projection = read_matrix(&mut r)?;
            let n_bias = r.len()?;
            let bias = r.f64s(n_bias)?;
            let aux_weight = read_matrix(&mut r)?;
            if bias.len() != projection.n_cols()
                || aux_weight.n_rows() != projection.n_cols()
                || aux_weight.n_cols() != graph.n_classes()
            {
                return Err(Error::Internal("checkpoint encoder shapes are inconsistent".into()));
            }
            Some(EncoderParams {
                projection,
                bias,
                aux_weight,
            })
        }
        t => return Err(Error::Internal(format!("unknown encoder flag {t}"))),
    };
    let hash: [u8; 32] = r.take(32)?.try_into().unwrap();
    r.finish()?;
    Ok((JointModel { graph, encoder }, hash))
}

/// Writes the checkpoint and a JSON sidecar describing it.
pub fn save_checkpoint(path: &Path, model: &JointModel, config_text: &str) -> Result<()> {
    let hash = config_hash(config_text);
    fs::write(path, checkpoint_to_bytes(model, &hash))?;
    let architecture = match &model.graph {
        GraphModel::Gcn(_) => format!("gcn-{}", model.graph.weights().len()),
        GraphModel::Sgc(s) => format!("sgc-k{}", s.k),
    };
    let meta = CheckpointMeta {
        architecture,
        layer_shapes: model.graph.weights().iter().map(|m| m.shape()).collect(),
        has_encoder: model.encoder.is_some(),
        config_hash: hex(&hash),
    };
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

/// Loads a checkpoint. With `expected_config`, a different embedded hash is
/// an [`Error::ConfigHash`].
pub fn load_checkpoint(path: &Path, expected_config: Option<&str>) -> Result<JointModel> {
    let bytes = fs::read(path)?;
    let (model, hash) = checkpoint_from_bytes(&bytes)?;
    if let Some(text) = expected_config {
        if config_hash(text) != hash {
            return Err(Error::ConfigHash);
        }
    }
    Ok(model)
}
