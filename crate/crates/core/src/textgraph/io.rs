use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HeteroGraph;
use crate::binio::{sidecar_path, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

pub const GRAPH_MAGIC: [u8; 4] = *b"HTGR";
pub const GRAPH_VERSION: u32 = 1;

/// JSON sidecar written next to a graph file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub dataset: String,
    pub window_size: usize,
    pub remove_stopwords: bool,
    pub min_freq: usize,
    pub n_doc: usize,
    pub n_word: usize,
    pub nnz: usize,
    /// [`Corpus::content_hash`](crate::Corpus::content_hash) of the source corpus.
    pub corpus_hash: String,
}

fn write_csr(w: &mut ByteWriter, m: &SparseMatrix) {
    w.usizes(m.row_ptr());
    w.usizes(m.col_idx());
    w.f64s(m.values());
}

fn read_csr(r: &mut ByteReader<'_>, n: usize) -> Result<SparseMatrix> {
    let row_ptr = r.usizes(n + 1)?;
    let nnz = *row_ptr.last().unwrap();
    let col_idx = r.usizes(nnz)?;
    let values = r.f64s(nnz)?;
    SparseMatrix::from_csr(n, n, row_ptr, col_idx, values)
}

/// Serializes a graph to its binary container bytes.
pub fn graph_to_bytes(graph: &HeteroGraph) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(&GRAPH_MAGIC);
    w.u32(GRAPH_VERSION);
    w.u64(graph.n_doc as u64);
    w.u64(graph.n_word as u64);
    write_csr(&mut w, &graph.adjacency);
    write_csr(&mut w, &graph.norm_adjacency);
    w.finish()
}

pub fn graph_from_bytes(bytes: &[u8]) -> Result<HeteroGraph> {
    let mut r = ByteReader::new("graph", bytes);
    r.magic(GRAPH_MAGIC)?;
    r.version(GRAPH_VERSION)?;
    let n_doc = r.len()?;
    let n_word = r.len()?;
    let n = n_doc
        .checked_add(n_word)
        .ok_or_else(|| Error::Internal("graph node count overflow".into()))?;
    let adjacency = read_csr(&mut r, n)?;
    let norm_adjacency = read_csr(&mut r, n)?;
    r.finish()?;
    let graph = HeteroGraph {
        n_doc,
        n_word,
        adjacency,
        norm_adjacency,
    };
    graph.validate()?;
    Ok(graph)
}

/// Writes the graph container and its `.meta.json` sidecar.
pub fn write_graph(path: &Path, graph: &HeteroGraph, meta: &GraphMeta) -> Result<()> {
    fs::write(path, graph_to_bytes(graph))?;
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(meta)?)?;
    Ok(())
}

pub fn read_graph(path: &Path) -> Result<HeteroGraph> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::DatasetNotFound(path.to_path_buf()),
        _ => e.into(),
    })?;
    graph_from_bytes(&bytes)
}

pub fn read_graph_meta(path: &Path) -> Result<GraphMeta> {
    Ok(serde_json::from_slice(&fs::read(sidecar_path(path))?)?)
}
