//! Heterogeneous word-document graph construction.
//!
//! Node indices place documents first (`0..n_doc`) and words after them
//! (`n_doc..n_doc + n_word`). Document-word edges carry TF-IDF weights,
//! word-word edges carry PPMI over sliding co-occurrence windows, and every
//! node has a unit self-loop.

mod io;

pub use io::{
    graph_from_bytes, graph_to_bytes, read_graph, read_graph_meta, write_graph, GraphMeta, GRAPH_MAGIC, GRAPH_VERSION,
};

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Graph construction parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphParams {
    pub window_size: usize,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self { window_size: 20 }
    }
}

/// Sliding-window co-occurrence statistics. A word or pair is counted at
/// most once per window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CooccurrenceCounts {
    pub window_count: u64,
    pub word_window_count: Vec<u64>,
    /// `(i, j, count)` with `i < j`, sorted.
    pub pair_window_count: Vec<(usize, usize, u64)>,
}

impl CooccurrenceCounts {
    pub fn pair(&self, i: usize, j: usize) -> u64 {
        let key = (i.min(j), i.max(j));
        self.pair_window_count
            .binary_search_by_key(&key, |&(a, b, _)| (a, b))
            .map_or(0, |k| self.pair_window_count[k].2)
    }
}

fn pack(i: usize, j: usize) -> u64 {
    ((i as u64) << 32) | j as u64
}

/// Counts windows, per-word window occurrences and per-pair window
/// co-occurrences. Documents no longer than the window form a single window;
/// empty documents contribute nothing.
pub fn count_cooccurrence(corpus: &Corpus, window_size: usize) -> Result<CooccurrenceCounts> {
    if window_size < 2 {
        return Err(Error::Argument(format!("window size {window_size} is below 2")));
    }
    let n_word = corpus.n_word();
    if n_word > u32::MAX as usize {
        return Err(Error::Argument("vocabulary too large for pair keys".into()));
    }

    struct Partial {
        windows: u64,
        words: HashMap<usize, u64>,
        pairs: HashMap<u64, u64>,
    }
    let empty = || Partial {
        windows: 0,
        words: HashMap::new(),
        pairs: HashMap::new(),
    };

    let merged = corpus
        .documents
        .par_iter()
        .fold(empty, |mut acc, doc| {
            if doc.is_empty() {
                return acc;
            }
            let spans: Vec<&[usize]> = if doc.len() <= window_size {
                vec![doc.as_slice()]
            } else {
                doc.windows(window_size).collect()
            };
            let mut uniq = Vec::with_capacity(window_size);
            for span in spans {
                acc.windows += 1;
                uniq.clear();
                uniq.extend_from_slice(span);
                uniq.sort_unstable();
                uniq.dedup();
                for (a, &wi) in uniq.iter().enumerate() {
                    *acc.words.entry(wi).or_default() += 1;
                    for &wj in &uniq[a + 1..] {
                        *acc.pairs.entry(pack(wi, wj)).or_default() += 1;
                    }
                }
            }
            acc
        })
        .reduce(empty, |mut a, b| {
            // Integer sums commute, so the merge order does not matter.
            a.windows += b.windows;
            for (k, v) in b.words {
                *a.words.entry(k).or_default() += v;
            }
            for (k, v) in b.pairs {
                *a.pairs.entry(k).or_default() += v;
            }
            a
        });

    let mut word_window_count = vec![0u64; n_word];
    for (w, c) in merged.words {
        word_window_count[w] = c;
    }
    let mut pair_window_count: Vec<(usize, usize, u64)> = merged
        .pairs
        .into_iter()
        .map(|(k, c)| ((k >> 32) as usize, (k & 0xffff_ffff) as usize, c))
        .collect();
    pair_window_count.sort_unstable();
    Ok(CooccurrenceCounts {
        window_count: merged.windows,
        word_window_count,
        pair_window_count,
    })
}

/// Positive PMI for every co-occurring pair, as `(i, j, ppmi)` with `i < j`.
/// Pairs whose PMI is not strictly positive are omitted.
pub fn compute_ppmi(counts: &CooccurrenceCounts) -> Vec<(usize, usize, f64)> {
    if counts.window_count == 0 {
        return Vec::new();
    }
    let total = counts.window_count as f64;
    counts
        .pair_window_count
        .iter()
        .filter(|&&(_, _, c)| c > 0)
        .filter_map(|&(i, j, c)| {
            let p_ij = c as f64 / total;
            let p_i = counts.word_window_count[i] as f64 / total;
            let p_j = counts.word_window_count[j] as f64 / total;
            let pmi = (p_ij / (p_i * p_j)).ln();
            (pmi > 0.0).then_some((i, j, pmi))
        })
        .collect()
}

/// TF-IDF weights `tf(d, w) * ln(n_doc / df(w))` as sorted `(doc, word, weight)`,
/// zero weights omitted.
pub fn compute_tfidf(corpus: &Corpus) -> Result<Vec<(usize, usize, f64)>> {
    let n_doc = corpus.n_doc();
    if n_doc == 0 {
        return Err(Error::Argument("empty corpus".into()));
    }
    let term_counts: Vec<Vec<(usize, u64)>> = corpus
        .documents
        .par_iter()
        .map(|doc| {
            let mut sorted = doc.clone();
            sorted.sort_unstable();
            let mut out: Vec<(usize, u64)> = Vec::new();
            for w in sorted {
                match out.last_mut() {
                    Some((last, c)) if *last == w => *c += 1,
                    _ => out.push((w, 1)),
                }
            }
            out
        })
        .collect();
    let mut df = vec![0u64; corpus.n_word()];
    for doc in &term_counts {
        for &(w, _) in doc {
            df[w] += 1;
        }
    }
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| if d == 0 { 0.0 } else { (n_doc as f64 / d as f64).ln() })
        .collect();
    let mut out = Vec::new();
    for (d, doc) in term_counts.iter().enumerate() {
        for &(w, tf) in doc {
            let weight = tf as f64 * idf[w];
            if weight != 0.0 {
                out.push((d, w, weight));
            }
        }
    }
    Ok(out)
}

/// Builds the symmetric adjacency with unit self-loops.
pub fn assemble_adjacency(
    ppmi: &[(usize, usize, f64)],
    tfidf: &[(usize, usize, f64)],
    n_doc: usize,
    n_word: usize,
) -> Result<SparseMatrix> {
    let n = n_doc + n_word;
    let mut entries = Vec::with_capacity(n + 2 * (ppmi.len() + tfidf.len()));
    entries.extend((0..n).map(|i| (i, i, 1.0)));
    for &(d, w, v) in tfidf {
        if d >= n_doc || w >= n_word {
            return Err(Error::Internal(format!("tf-idf entry ({d}, {w}) out of range")));
        }
        entries.push((d, n_doc + w, v));
        entries.push((n_doc + w, d, v));
    }
    for &(i, j, v) in ppmi {
        if i == j {
            return Err(Error::Internal(format!("ppmi entry on the diagonal for word {i}")));
        }
        if i >= n_word || j >= n_word {
            return Err(Error::Internal(format!("ppmi entry ({i}, {j}) out of range")));
        }
        entries.push((n_doc + i, n_doc + j, v));
        entries.push((n_doc + j, n_doc + i, v));
    }
    SparseMatrix::from_triplets(n, n, entries)
}

/// Symmetric normalization `D^-1/2 A D^-1/2` with `D` the row sums of `A`.
pub fn normalize_adjacency(adjacency: &SparseMatrix) -> Result<SparseMatrix> {
    let sums = adjacency.row_sums();
    if let Some(r) = sums.iter().position(|&s| s.is_nan() || s <= 0.0) {
        return Err(Error::Normalization(format!(
            "row {r} has non-positive sum {}",
            sums[r]
        )));
    }
    let inv_sqrt: Vec<f64> = sums.iter().map(|s| 1.0 / s.sqrt()).collect();
    // inv_sqrt[r] * inv_sqrt[c] is commutative, which keeps the result exactly symmetric.
    Ok(adjacency.map_values(|r, c, v| v * (inv_sqrt[r] * inv_sqrt[c])))
}

/// The document-word graph together with its normalized adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    pub n_doc: usize,
    pub n_word: usize,
    pub adjacency: SparseMatrix,
    pub norm_adjacency: SparseMatrix,
}

impl HeteroGraph {
    pub fn from_adjacency(n_doc: usize, n_word: usize, adjacency: SparseMatrix) -> Result<Self> {
        let norm_adjacency = normalize_adjacency(&adjacency)?;
        let graph = Self {
            n_doc,
            n_word,
            adjacency,
            norm_adjacency,
        };
        graph.validate()?;
        Ok(graph)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_doc + self.n_word
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        for m in [&self.adjacency, &self.norm_adjacency] {
            if m.n_rows() != n || m.n_cols() != n {
                return Err(Error::Internal(format!(
                    "adjacency is {}x{}, expected {n}x{n}",
                    m.n_rows(),
                    m.n_cols()
                )));
            }
            if !m.is_symmetric() {
                return Err(Error::Internal("adjacency is not symmetric".into()));
            }
        }
        for (r, c, v) in self.adjacency.entries() {
            if r == c && v != 1.0 {
                return Err(Error::Internal(format!("self-loop weight {v} at node {r}")));
            }
            if r != c && r < self.n_doc && c < self.n_doc {
                return Err(Error::Internal(format!("document-document edge ({r}, {c})")));
            }
            if v < 0.0 {
                return Err(Error::Internal(format!("negative edge weight at ({r}, {c})")));
            }
        }
        if (0..n).any(|i| self.adjacency.get(i, i) != 1.0) {
            return Err(Error::Internal("missing self-loop".into()));
        }
        Ok(())
    }
}

/// Runs the full count -> PPMI / TF-IDF -> assemble -> normalize pipeline.
pub fn build_graph(corpus: &Corpus, params: &GraphParams) -> Result<HeteroGraph> {
    let counts = count_cooccurrence(corpus, params.window_size)?;
    let ppmi = compute_ppmi(&counts);
    let tfidf = compute_tfidf(corpus)?;
    let adjacency = assemble_adjacency(&ppmi, &tfidf, corpus.n_doc(), corpus.n_word())?;
    HeteroGraph::from_adjacency(corpus.n_doc(), corpus.n_word(), adjacency)
}
