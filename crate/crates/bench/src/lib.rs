//! Synthetic workloads for the propagation benchmarks.

use textgraph_core::corpus::preprocess;
use textgraph_core::{mix64, Corpus, PreprocessConfig, RawDocument, Split};

/// Documents whose words are drawn mostly from a class-specific band of the
/// vocabulary, so the graph has the block structure of a real corpus.
pub fn synthetic_docs(n_doc: usize, n_vocab: usize, doc_len: usize, n_classes: usize, seed: u64) -> Vec<RawDocument> {
    let band = (n_vocab / n_classes).max(1);
    let mut state = mix64(seed);
    let mut next = move || {
        state = mix64(state);
        state
    };
    (0..n_doc)
        .map(|d| {
            let class = d % n_classes;
            let words: Vec<String> = (0..doc_len)
                .map(|_| {
                    let r = next();
                    let w = if r % 4 == 0 {
                        (r >> 8) as usize % n_vocab
                    } else {
                        class * band + (r >> 8) as usize % band
                    };
                    format!("w{w}")
                })
                .collect();
            RawDocument {
                id: format!("doc-{d}"),
                text: words.join(" "),
                label: format!("c{class}"),
                split: if d % 5 == 4 { Split::Test } else { Split::Train },
            }
        })
        .collect()
}

pub fn synthetic_corpus(n_doc: usize, n_vocab: usize, doc_len: usize, n_classes: usize, seed: u64) -> Corpus {
    preprocess(
        &synthetic_docs(n_doc, n_vocab, doc_len, n_classes, seed),
        &PreprocessConfig::unfiltered(),
    )
    .expect("synthetic corpus has words")
}
