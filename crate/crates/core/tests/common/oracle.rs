//! Dense brute-force graph builder and checks against it.

use std::collections::BTreeSet;

use textgraph_core::textgraph::{
    assemble_adjacency, build_graph, compute_ppmi, compute_tfidf, count_cooccurrence, normalize_adjacency,
};
use textgraph_core::{Corpus, DenseMatrix, GraphParams};

pub const TOL: f64 = 1e-12;

pub struct Oracle {
    pub windows: u64,
    pub word: Vec<u64>,
    pub pair: Vec<Vec<u64>>,
    pub ppmi: Vec<Vec<f64>>,
    pub tfidf: Vec<Vec<f64>>,
    pub adjacency: DenseMatrix,
    pub normalized: DenseMatrix,
}

fn windows_of(doc: &[usize], w: usize) -> Vec<&[usize]> {
    if doc.is_empty() {
        Vec::new()
    } else if doc.len() <= w {
        vec![doc]
    } else {
        (0..=doc.len() - w).map(|s| &doc[s..s + w]).collect()
    }
}

pub fn oracle(corpus: &Corpus, window: usize) -> Oracle {
    let n_doc = corpus.n_doc();
    let n_word = corpus.n_word();
    let mut windows = 0u64;
    let mut word = vec![0u64; n_word];
    let mut pair = vec![vec![0u64; n_word]; n_word];
    for doc in &corpus.documents {
        for win in windows_of(doc, window) {
            windows += 1;
            let distinct: BTreeSet<usize> = win.iter().copied().collect();
            for &i in &distinct {
                word[i] += 1;
                for &j in &distinct {
                    if i != j {
                        pair[i][j] += 1;
                    }
                }
            }
        }
    }
    let total = windows as f64;
    let mut ppmi = vec![vec![0.0; n_word]; n_word];
    for i in 0..n_word {
        for j in 0..n_word {
            if i != j && pair[i][j] > 0 {
                let pmi = ((pair[i][j] as f64 / total) / ((word[i] as f64 / total) * (word[j] as f64 / total))).ln();
                ppmi[i][j] = pmi.max(0.0);
            }
        }
    }
    let mut tfidf = vec![vec![0.0; n_word]; n_doc];
    for w in 0..n_word {
        let df = corpus.documents.iter().filter(|d| d.contains(&w)).count();
        for (d, doc) in corpus.documents.iter().enumerate() {
            let tf = doc.iter().filter(|&&t| t == w).count();
            if tf > 0 {
                tfidf[d][w] = tf as f64 * (n_doc as f64 / df as f64).ln();
            }
        }
    }
    let n = n_doc + n_word;
    let mut a = DenseMatrix::identity(n);
    for d in 0..n_doc {
        for w in 0..n_word {
            a.set(d, n_doc + w, tfidf[d][w]);
            a.set(n_doc + w, d, tfidf[d][w]);
        }
    }
    for i in 0..n_word {
        for j in 0..n_word {
            if i != j {
                a.set(n_doc + i, n_doc + j, ppmi[i][j]);
            }
        }
    }
    let degree: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).sum()).collect();
    let normalized = DenseMatrix::from_fn(n, n, |i, j| a.get(i, j) / (degree[i].sqrt() * degree[j].sqrt()));
    Oracle {
        windows,
        word,
        pair,
        ppmi,
        tfidf,
        adjacency: a,
        normalized,
    }
}

/// Cyclic Jacobi eigenvalues of a small symmetric matrix.
pub fn symmetric_eigenvalues(m: &DenseMatrix) -> Vec<f64> {
    let n = m.n_rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

pub fn check_against_oracle(corpus: &Corpus, window: usize) {
    let o = oracle(corpus, window);
    let counts = count_cooccurrence(corpus, window).unwrap();
    assert_eq!(counts.window_count, o.windows);
    assert_eq!(counts.word_window_count, o.word);
    for i in 0..corpus.n_word() {
        for j in i + 1..corpus.n_word() {
            assert_eq!(counts.pair(i, j), o.pair[i][j], "pair ({i}, {j})");
        }
    }

    let n_word = corpus.n_word();
    let mut ppmi = vec![vec![0.0; n_word]; n_word];
    for (i, j, v) in compute_ppmi(&counts) {
        assert!(i < j && v > 0.0);
        ppmi[i][j] = v;
        ppmi[j][i] = v;
    }
    for i in 0..n_word {
        for j in 0..n_word {
            assert!((ppmi[i][j] - o.ppmi[i][j]).abs() <= TOL, "ppmi ({i}, {j})");
        }
    }

    let tfidf_entries = compute_tfidf(corpus).unwrap();
    let mut tfidf = vec![vec![0.0; n_word]; corpus.n_doc()];
    for &(d, w, v) in &tfidf_entries {
        tfidf[d][w] = v;
    }
    for (got, want) in tfidf.iter().flatten().zip(o.tfidf.iter().flatten()) {
        assert!((got - want).abs() <= TOL);
    }

    let adjacency = assemble_adjacency(&compute_ppmi(&counts), &tfidf_entries, corpus.n_doc(), n_word).unwrap();
    assert!(adjacency.to_dense().max_abs_diff(&o.adjacency) <= TOL);
    let normalized = normalize_adjacency(&adjacency).unwrap();
    assert!(normalized.to_dense().max_abs_diff(&o.normalized) <= TOL);
    assert!(normalized.is_symmetric());

    let graph = build_graph(corpus, &GraphParams { window_size: window }).unwrap();
    assert_eq!(graph.adjacency, adjacency);
    assert_eq!(graph.norm_adjacency, normalized);
    graph.validate().unwrap();

    for ev in symmetric_eigenvalues(&o.normalized) {
        assert!(
            (-1.0 - 1e-10..=1.0 + 1e-10).contains(&ev),
            "eigenvalue {ev} outside [-1, 1]"
        );
    }
}
