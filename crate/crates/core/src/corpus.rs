//! Dataset loading, cleaning and vocabulary construction.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const STOPWORDS_EN: &str = include_str!("../data/stopwords_en.txt");

/// The benchmark datasets with their published train/test sizes.
pub const KNOWN_DATASETS: [(&str, usize, usize); 5] = [
    ("20ng", 11_314, 7_532),
    ("r8", 5_485, 2_189),
    ("r52", 6_532, 2_568),
    ("ohsumed", 3_357, 4_043),
    ("mr", 7_108, 3_554),
];

/// Published (train, test) document counts for a benchmark name.
pub fn expected_counts(name: &str) -> Option<(usize, usize)> {
    KNOWN_DATASETS
        .iter()
        .find(|(n, _, _)| n.eq_ignore_ascii_case(name))
        .map(|&(_, tr, te)| (tr, te))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
    pub label: String,
    pub split: Split,
}

/// On-disk dataset layouts understood by [`load_dataset`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DatasetFormat {
    /// `<dir>/train.tsv` and `<dir>/test.tsv`, each line `label<TAB>text`.
    #[default]
    Tsv,
    /// The layout distributed with the original TextGCN code:
    /// `<root>/<name>.txt` holds `doc<TAB>split<TAB>label` lines and
    /// `<root>/corpus/<name>.txt` holds one document per line.
    TextGcn,
}

/// Resolves a dataset name or path to the directory holding its files.
pub fn dataset_dir(root: &Path, name_or_path: &str) -> PathBuf {
    let direct = Path::new(name_or_path);
    if direct.is_dir() {
        direct.to_path_buf()
    } else {
        root.join(name_or_path)
    }
}

/// Short dataset name used for protocol lookups (`r8`, `mr`, ...).
pub fn dataset_name(name_or_path: &str) -> String {
    Path::new(name_or_path)
        .file_name()
        .map(|s| s.to_string_lossy().to_lowercase())
        .unwrap_or_else(|| name_or_path.to_lowercase())
}

/// Loads every document of a dataset, training documents first, each
/// split in file order.
pub fn load_dataset(root: &Path, name_or_path: &str, format: DatasetFormat) -> Result<Vec<RawDocument>> {
    match format {
        DatasetFormat::Tsv => {
            let dir = dataset_dir(root, name_or_path);
            if !dir.is_dir() {
                return Err(Error::DatasetNotFound(dir));
            }
            let mut docs = read_tsv(&dir.join("train.tsv"), Split::Train)?;
            docs.extend(read_tsv(&dir.join("test.tsv"), Split::Test)?);
            Ok(docs)
        }
        DatasetFormat::TextGcn => load_textgcn_layout(root, name_or_path),
    }
}

fn read_tsv(path: &Path, split: Split) -> Result<Vec<RawDocument>> {
    let content = match fs::read_to_string(path) {
        Ok(c) => c,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::DatasetNotFound(path.to_path_buf())),
        Err(e) => return Err(e.into()),
    };
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "test",
    };
    let mut docs = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let (label, text) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: "expected `label<TAB>text`".into(),
        })?;
        let label = label.trim();
        if label.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: "empty label".into(),
            });
        }
        docs.push(RawDocument {
            id: format!("{prefix}-{}", docs.len()),
            text: text.to_string(),
            label: label.to_string(),
            split,
        });
    }
    Ok(docs)
}

fn load_textgcn_layout(root: &Path, name: &str) -> Result<Vec<RawDocument>> {
    let candidates = [name.to_string(), name.to_uppercase(), name.to_lowercase()];
    let meta_path = candidates
        .iter()
        .map(|n| root.join(format!("{n}.txt")))
        .find(|p| p.is_file())
        .ok_or_else(|| Error::DatasetNotFound(root.join(format!("{name}.txt"))))?;
    let stem = meta_path.file_stem().unwrap().to_string_lossy().to_string();
    let corpus_path = root.join("corpus").join(format!("{stem}.txt"));
    if !corpus_path.is_file() {
        return Err(Error::DatasetNotFound(corpus_path));
    }
    let meta = fs::read_to_string(&meta_path)?;
    // Raw corpora from the TextGCN distribution are not always valid UTF-8.
    let texts_raw = fs::read(&corpus_path)?;
    let texts = String::from_utf8_lossy(&texts_raw);
    let texts: Vec<&str> = texts.lines().collect();

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut meta_lines = 0;
    for (lineno, line) in meta.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(Error::Parse {
                path: meta_path.clone(),
                line: lineno + 1,
                message: "expected `doc<TAB>split<TAB>label`".into(),
            });
        }
        let split = if fields[1].contains("test") {
            Split::Test
        } else if fields[1].contains("train") {
            Split::Train
        } else {
            return Err(Error::Parse {
                path: meta_path.clone(),
                line: lineno + 1,
                message: format!("unknown split {:?}", fields[1]),
            });
        };
        let text = texts.get(meta_lines).ok_or_else(|| Error::Parse {
            path: corpus_path.clone(),
            line: meta_lines + 1,
            message: "corpus has fewer lines than the label file".into(),
        })?;
        let doc = RawDocument {
            id: format!("doc-{meta_lines}"),
            text: text.to_string(),
            label: fields[2].trim().to_string(),
            split,
        };
        meta_lines += 1;
        match split {
            Split::Train => train.push(doc),
            Split::Test => test.push(doc),
        }
    }
    train.extend(test);
    Ok(train)
}

/// Checks loader totals against the published sizes of a benchmark.
pub fn verify_split_counts(name: &str, docs: &[RawDocument]) -> Result<()> {
    let Some((train, test)) = expected_counts(name) else {
        return Ok(());
    };
    let n_train = docs.iter().filter(|d| d.split == Split::Train).count();
    let n_test = docs.len() - n_train;
    if (n_train, n_test) != (train, test) {
        return Err(Error::Preprocess(format!(
            "{name}: expected {train} train / {test} test documents, found {n_train} / {n_test}"
        )));
    }
    Ok(())
}

/// Writes the corpus manifest consumed by external embedding exporters.
pub fn write_manifest(path: &Path, dataset: &str, docs: &[RawDocument]) -> Result<()> {
    #[derive(Serialize)]
    struct Manifest<'a> {
        dataset: &'a str,
        doc_ids: Vec<&'a str>,
        texts: Vec<&'a str>,
    }
    let manifest = Manifest {
        dataset,
        doc_ids: docs.iter().map(|d| d.id.as_str()).collect(),
        texts: docs.iter().map(|d| d.text.as_str()).collect(),
    };
    fs::write(path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub remove_stopwords: bool,
    /// Words with fewer corpus occurrences are dropped. 1 disables filtering.
    pub min_freq: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            remove_stopwords: true,
            min_freq: 5,
        }
    }
}

impl PreprocessConfig {
    /// TextGCN protocol: MR sentences are short and left unfiltered.
    pub fn for_dataset(name: &str) -> Self {
        if name.eq_ignore_ascii_case("mr") {
            Self::unfiltered()
        } else {
            Self::default()
        }
    }

    pub fn unfiltered() -> Self {
        Self {
            remove_stopwords: false,
            min_freq: 1,
        }
    }
}

/// The bundled 127-word English stopword list.
pub fn stopwords() -> HashSet<&'static str> {
    STOPWORDS_EN.lines().map(str::trim).filter(|w| !w.is_empty()).collect()
}

/// Lowercases and splits text the way the TextGCN cleaning script does.
///
/// Characters other than ASCII letters, digits and `,.!?'()` become spaces;
/// the punctuation marks become standalone tokens and English contractions
/// are split off (`don't` -> `do n't`).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut cleaned = String::with_capacity(text.len() + 8);
    for c in text.chars().flat_map(char::to_lowercase) {
        match c {
            'a'..='z' | '0'..='9' | '\'' => cleaned.push(c),
            ',' | '.' | '!' | '?' | '(' | ')' => {
                cleaned.push(' ');
                cleaned.push(c);
                cleaned.push(' ');
            }
            _ => cleaned.push(' '),
        }
    }
    for suffix in ["'s", "'ve", "n't", "'re", "'d", "'ll"] {
        if cleaned.contains(suffix) {
            cleaned = cleaned.replace(suffix, &format!(" {suffix}"));
        }
    }
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Bijection between surviving word types and dense ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    fn insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.token_to_id.get(token) {
            return id;
        }
        let id = self.id_to_token.len();
        self.token_to_id.insert(token.to_string(), id);
        self.id_to_token.push(token.to_string());
        id
    }
}

/// An indexed corpus: token ids per document, labels and split masks.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub doc_ids: Vec<String>,
    pub documents: Vec<Vec<usize>>,
    /// Class index per document, -1 when unlabeled.
    pub labels: Vec<i64>,
    pub label_names: Vec<String>,
    pub train_mask: Vec<bool>,
    pub dev_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
    pub vocabulary: Vocabulary,
}

impl Corpus {
    pub fn n_doc(&self) -> usize {
        self.documents.len()
    }

    pub fn n_word(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn indices(mask: &[bool]) -> Vec<usize> {
        mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        Self::indices(&self.train_mask)
    }

    pub fn dev_indices(&self) -> Vec<usize> {
        Self::indices(&self.dev_mask)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        Self::indices(&self.test_mask)
    }

    /// SHA-256 over the vocabulary and token sequences: everything the graph
    /// depends on. Labels and masks are excluded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_word() as u64).to_le_bytes());
        for tok in self.vocabulary.tokens() {
            h.update((tok.len() as u64).to_le_bytes());
            h.update(tok.as_bytes());
        }
        h.update((self.n_doc() as u64).to_le_bytes());
        for doc in &self.documents {
            h.update((doc.len() as u64).to_le_bytes());
            for &t in doc {
                h.update((t as u64).to_le_bytes());
            }
        }
        hex(&h.finalize())
    }

    /// Checks the structural invariants of a corpus.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_doc();
        for (name, len) in [
            ("doc_ids", self.doc_ids.len()),
            ("labels", self.labels.len()),
            ("train_mask", self.train_mask.len()),
            ("dev_mask", self.dev_mask.len()),
            ("test_mask", self.test_mask.len()),
        ] {
            if len != n {
                return Err(Error::Internal(format!("{name} has length {len}, expected {n}")));
            }
        }
        for i in 0..n {
            let flags = [self.train_mask[i], self.dev_mask[i], self.test_mask[i]];
            if flags.iter().filter(|&&f| f).count() > 1 {
                return Err(Error::Internal(format!("document {i} carries two split masks")));
            }
            if self.train_mask[i] && self.labels[i] < 0 {
                return Err(Error::Internal(format!("training document {i} is unlabeled")));
            }
            if self.labels[i] >= self.n_classes() as i64 {
                return Err(Error::Internal(format!("document {i} has label out of range")));
            }
        }
        let n_word = self.n_word();
        if self.documents.iter().flatten().any(|&t| t >= n_word) {
            return Err(Error::Internal("token id out of vocabulary range".into()));
        }
        Ok(())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Cleans, filters and indexes raw documents.
///
/// Documents emptied by filtering are kept with an empty token sequence so
/// document indices stay aligned with the input order.
pub fn preprocess(docs: &[RawDocument], config: &PreprocessConfig) -> Result<Corpus> {
    let tokenized: Vec<Vec<String>> = docs.par_iter().map(|d| tokenize(&d.text)).collect();

    let mut freq: HashMap<&str, usize> = HashMap::new();
    for tok in tokenized.iter().flatten() {
        *freq.entry(tok.as_str()).or_default() += 1;
    }
    let stop = if config.remove_stopwords {
        stopwords()
    } else {
        HashSet::new()
    };
    let keep = |tok: &str| !stop.contains(tok) && freq[tok] >= config.min_freq;

    let mut vocabulary = Vocabulary::default();
    let documents: Vec<Vec<usize>> = tokenized
        .iter()
        .map(|toks| toks.iter().filter(|t| keep(t)).map(|t| vocabulary.insert(t)).collect())
        .collect();
    if vocabulary.is_empty() {
        return Err(Error::Preprocess("vocabulary is empty after filtering".into()));
    }

    let label_names: Vec<String> = docs
        .iter()
        .map(|d| d.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let label_id: HashMap<&str, i64> = label_names
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i as i64))
        .collect();

    let corpus = Corpus {
        doc_ids: docs.iter().map(|d| d.id.clone()).collect(),
        documents,
        labels: docs.iter().map(|d| label_id[d.label.as_str()]).collect(),
        label_names,
        train_mask: docs.iter().map(|d| d.split == Split::Train).collect(),
        dev_mask: vec![false; docs.len()],
        test_mask: docs.iter().map(|d| d.split == Split::Test).collect(),
        vocabulary,
    };
    corpus.validate()?;
    Ok(corpus)
}

/// Moves a seeded random `floor(fraction * n_train)` training documents to
/// the dev split.
pub fn carve_dev_split(corpus: &Corpus, fraction: f64, seed: u64) -> Result<Corpus> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!("dev fraction {fraction} is outside (0, 1)")));
    }
    let mut train = corpus.train_indices();
    if train.is_empty() {
        return Err(Error::Argument(
            "no training documents to carve a dev split from".into(),
        ));
    }
    let n_dev = (fraction * train.len() as f64).floor() as usize;
    train.shuffle(&mut crate::seeded_rng(seed));
    let mut out = corpus.clone();
    for &i in &train[..n_dev] {
        out.train_mask[i] = false;
        out.dev_mask[i] = true;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(texts: &[(&str, &str, Split)]) -> Vec<RawDocument> {
        texts
            .iter()
            .enumerate()
            .map(|(i, (label, text, split))| RawDocument {
                id: format!("d{i}"),
                text: text.to_string(),
                label: label.to_string(),
                split: *split,
            })
            .collect()
    }

    #[test]
    fn stopword_list_has_127_entries() {
        assert_eq!(stopwords().len(), 127);
    }

    #[test]
    fn tokenize_splits_punctuation_and_contractions() {
        assert_eq!(
            tokenize("Don't STOP, it's (fine)!"),
            ["do", "n't", "stop", ",", "it", "'s", "(", "fine", ")", "!"]
        );
        assert_eq!(tokenize("a-b_c\td"), ["a", "b", "c", "d"]);
    }

    #[test]
    fn stopword_only_document_is_kept_empty() {
        let docs = raw(&[("x", "The THE the", Split::Train), ("y", "apple pie", Split::Test)]);
        let cfg = PreprocessConfig {
            remove_stopwords: true,
            min_freq: 1,
        };
        let c = preprocess(&docs, &cfg).unwrap();
        assert_eq!(c.n_doc(), 2);
        assert!(c.documents[0].is_empty());
        assert_eq!(c.n_word(), 2);
    }

    #[test]
    fn min_freq_boundary() {
        let docs = raw(&[
            ("x", "rare rare rare rare common common", Split::Train),
            ("y", "common common common", Split::Test),
        ]);
        let cfg = PreprocessConfig {
            remove_stopwords: false,
            min_freq: 5,
        };
        let c = preprocess(&docs, &cfg).unwrap();
        assert_eq!(c.vocabulary.id("rare"), None);
        assert!(c.vocabulary.id("common").is_some());
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let docs = raw(&[("x", "the a an", Split::Train)]);
        let err = preprocess(&docs, &PreprocessConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Preprocess(_)));
    }

    #[test]
    fn mr_protocol_disables_filters() {
        assert_eq!(PreprocessConfig::for_dataset("MR"), PreprocessConfig::unfiltered());
        assert_eq!(PreprocessConfig::for_dataset("r8"), PreprocessConfig::default());
    }

    fn hundred_train() -> Corpus {
        let texts: Vec<(String, Split)> = (0..120)
            .map(|i| {
                (
                    format!("word{} shared", i % 7),
                    if i < 100 { Split::Train } else { Split::Test },
                )
            })
            .collect();
        let docs: Vec<RawDocument> = texts
            .iter()
            .enumerate()
            .map(|(i, (t, s))| RawDocument {
                id: format!("d{i}"),
                text: t.clone(),
                label: format!("c{}", i % 3),
                split: *s,
            })
            .collect();
        preprocess(&docs, &PreprocessConfig::unfiltered()).unwrap()
    }

    #[test]
    fn dev_split_sizes_and_determinism() {
        let c = hundred_train();
        let a = carve_dev_split(&c, 0.1, 3).unwrap();
        assert_eq!(a.train_indices().len(), 90);
        assert_eq!(a.dev_indices().len(), 10);
        assert_eq!(a.test_indices().len(), 20);
        a.validate().unwrap();
        let b = carve_dev_split(&c, 0.1, 3).unwrap();
        assert_eq!(a.dev_mask, b.dev_mask);
        let other = carve_dev_split(&c, 0.1, 4).unwrap();
        assert_eq!(other.dev_indices().len(), 10);
        assert_ne!(a.dev_mask, other.dev_mask);
    }

    #[test]
    fn dev_fraction_out_of_range() {
        let c = hundred_train();
        for f in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(carve_dev_split(&c, f, 0), Err(Error::Argument(_))));
        }
    }

    #[test]
    fn expected_counts_table() {
        assert_eq!(expected_counts("20ng"), Some((11_314, 7_532)));
        assert_eq!(expected_counts("R8"), Some((5_485, 2_189)));
        let (a, b) = expected_counts("mr").unwrap();
        assert_eq!(a + b, 10_662);
        assert_eq!(expected_counts("custom"), None);
    }
}
