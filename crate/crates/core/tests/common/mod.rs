#![allow(dead_code, clippy::needless_range_loop)]

pub mod fd;
pub mod oracle;
pub mod training;

use rand::Rng;
use textgraph_core::corpus::preprocess;
use textgraph_core::{seeded_rng, Corpus, PreprocessConfig, RawDocument, Split};

pub fn raw_docs(rows: &[(&str, &str, Split)]) -> Vec<RawDocument> {
    rows.iter()
        .enumerate()
        .map(|(i, (label, text, split))| RawDocument {
            id: format!("doc-{i}"),
            text: text.to_string(),
            label: label.to_string(),
            split: *split,
        })
        .collect()
}

pub fn corpus_of(rows: &[(&str, &str, Split)]) -> Corpus {
    preprocess(&raw_docs(rows), &PreprocessConfig::unfiltered()).unwrap()
}

/// Up to `max_docs` documents over at most `max_vocab` word types `w0..`,
/// with random lengths (including empty documents), labels and splits.
/// At least one labeled training document is always present.
pub fn random_corpus(seed: u64, max_docs: usize, max_vocab: usize, n_classes: usize) -> Corpus {
    let mut rng = seeded_rng(seed);
    loop {
        let n_doc = rng.gen_range(1..=max_docs);
        let vocab = rng.gen_range(1..=max_vocab);
        let docs: Vec<RawDocument> = (0..n_doc)
            .map(|d| {
                let len = rng.gen_range(0..=14);
                let words: Vec<String> = (0..len).map(|_| format!("w{}", rng.gen_range(0..vocab))).collect();
                RawDocument {
                    id: format!("doc-{d}"),
                    text: words.join(" "),
                    label: format!("c{}", rng.gen_range(0..n_classes)),
                    split: if d == 0 || rng.gen_bool(0.6) {
                        Split::Train
                    } else {
                        Split::Test
                    },
                }
            })
            .collect();
        if let Ok(c) = preprocess(&docs, &PreprocessConfig::unfiltered()) {
            return c;
        }
    }
}

/// `n_doc` documents in `n_classes` classes; each class draws most of its
/// words from its own band of the vocabulary.
pub fn banded_corpus(seed: u64, n_doc: usize, n_classes: usize, band: usize, len: usize) -> Corpus {
    let mut rng = seeded_rng(seed);
    let docs: Vec<RawDocument> = (0..n_doc)
        .map(|d| {
            let class = d % n_classes;
            let words: Vec<String> = (0..len)
                .map(|_| {
                    let w = if rng.gen_bool(0.8) {
                        class * band + rng.gen_range(0..band)
                    } else {
                        rng.gen_range(0..band * n_classes)
                    };
                    format!("w{w}")
                })
                .collect();
            RawDocument {
                id: format!("doc-{d}"),
                text: words.join(" "),
                label: format!("c{class}"),
                split: if d % 3 == 2 { Split::Test } else { Split::Train },
            }
        })
        .collect();
    preprocess(&docs, &PreprocessConfig::unfiltered()).unwrap()
}

/// Relative error used by the finite-difference checks.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub const SANITY_TRAIN: [(&str, &str); 8] = [
    ("sports", "the striker scored a late goal in the football match"),
    ("sports", "the keeper saved a penalty and the team won the match"),
    ("sports", "fans cheered as the striker scored again in the league match"),
    ("sports", "the coach praised the team after the league football win"),
    ("finance", "the bank raised interest rates as markets fell"),
    ("finance", "investors sold shares when the stock market fell"),
    ("finance", "the central bank kept interest rates and bond markets rose"),
    ("finance", "shares rose after the bank reported strong quarterly profit"),
];

pub const SANITY_TEST: [(&str, &str); 4] = [
    ("sports", "the team won the football match after a late goal"),
    ("sports", "the striker and the keeper trained before the league match"),
    ("finance", "the stock market rose and the bank cut interest rates"),
    ("finance", "investors bought shares and bond markets rose"),
];

/// The 12-document two-topic corpus: 8 training and 4 test documents.
pub fn sanity_corpus() -> Corpus {
    let rows: Vec<(&str, &str, Split)> = SANITY_TRAIN
        .iter()
        .map(|&(l, t)| (l, t, Split::Train))
        .chain(SANITY_TEST.iter().map(|&(l, t)| (l, t, Split::Test)))
        .collect();
    corpus_of(&rows)
}
