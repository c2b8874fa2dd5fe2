//! Flat `key = value` run configuration.
//!
//! Values come from three layers: built-in defaults (some depend on the
//! mode), an optional config file, and command-line flags. Keys use the flag
//! spelling without the leading dashes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Every key a config file may set, in echo order.
pub const KEYS: &[&str] = &[
    "dataset",
    "data-root",
    "format",
    "remove-stopwords",
    "min-freq",
    "window",
    "graph",
    "out",
    "mode",
    "embeddings",
    "encoder",
    "hash-buckets",
    "embed-dim",
    "layers",
    "hidden",
    "dropout",
    "lambda",
    "lr-gcn",
    "lr-encoder",
    "batch-size",
    "epochs",
    "patience",
    "seed",
    "dev-fraction",
    "finetune-init",
    "small-lr",
    "pretrain-epochs",
    "pretrain-lr",
    "grid",
    "wall-time",
];

/// Keys that locate files rather than describe the experiment; they are
/// left out of the checkpoint config hash.
const LOCATION_KEYS: &[&str] = &["out"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    TextGcn,
    Sgc,
    BertGcn,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::TextGcn => "textgcn",
            Mode::Sgc => "sgc",
            Mode::BertGcn => "bertgcn",
        }
    }
}

impl FromStr for Mode {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "textgcn" => Ok(Mode::TextGcn),
            "sgc" => Ok(Mode::Sgc),
            "bertgcn" => Ok(Mode::BertGcn),
            _ => bail!("unknown mode {s:?} (expected textgcn, sgc or bertgcn)"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderKind {
    External,
    HashedBow,
}

impl FromStr for EncoderKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "external" => Ok(EncoderKind::External),
            "hashed-bow" => Ok(EncoderKind::HashedBow),
            _ => bail!("unknown encoder {s:?} (expected external or hashed-bow)"),
        }
    }
}

/// Raw string settings, later resolved into a [`RunConfig`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KEYS.contains(&key) {
            bail!("unknown config key {key:?}");
        }
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Parses a config file: one `key = value` per line, `#` starts a comment.
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut settings = Settings::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
            settings
                .set(key.trim(), value.trim())
                .with_context(|| format!("line {}", n + 1))?;
        }
        Ok(settings)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("{key} = {v:?}: {e}")))
            .transpose()
    }
}

/// Fully resolved settings for one command.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<String>,
    pub data_root: PathBuf,
    pub format: String,
    pub remove_stopwords: bool,
    pub min_freq: usize,
    pub window: usize,
    pub graph: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub mode: Mode,
    pub embeddings: Option<PathBuf>,
    pub encoder: EncoderKind,
    pub hash_buckets: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub lambda: f64,
    pub lr_gcn: f64,
    pub lr_encoder: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub dev_fraction: f64,
    pub finetune_init: bool,
    pub small_lr: bool,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub grid: Vec<f64>,
    pub wall_time: bool,
}

pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| anyhow!("grid entry {t:?}: {e}")))
        .collect()
}

fn default_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

impl RunConfig {
    pub fn resolve(s: &Settings) -> Result<Self> {
        let mode: Mode = s.parsed("mode")?.unwrap_or(Mode::TextGcn);
        let dataset: Option<String> = s.get("dataset").map(str::to_string);
        let short = dataset
            .as_deref()
            .map(textgraph_core::corpus::dataset_name)
            .unwrap_or_default();
        let pre = textgraph_core::PreprocessConfig::for_dataset(&short);
        let (lr_gcn, dropout, epochs) = match mode {
            Mode::TextGcn => (0.02, 0.5, 200),
            Mode::Sgc => (0.2, 0.0, 200),
            Mode::BertGcn => (1e-3, 0.5, 50),
        };
        let lambda_default = if mode == Mode::BertGcn { 0.7 } else { 1.0 };
        let config = RunConfig {
            dataset,
            data_root: s.parsed("data-root")?.unwrap_or_else(|| PathBuf::from("data")),
            format: s.get("format").unwrap_or("tsv").to_string(),
            remove_stopwords: s.parsed("remove-stopwords")?.unwrap_or(pre.remove_stopwords),
            min_freq: s.parsed("min-freq")?.unwrap_or(pre.min_freq),
            window: s.parsed("window")?.unwrap_or(20),
            graph: s.parsed("graph")?,
            out: s.parsed("out")?,
            mode,
            embeddings: s.parsed("embeddings")?,
            encoder: s.parsed("encoder")?.unwrap_or(EncoderKind::External),
            hash_buckets: s.parsed("hash-buckets")?.unwrap_or(1024),
            embed_dim: s.parsed("embed-dim")?.unwrap_or(128),
            layers: s.parsed("layers")?.unwrap_or(2),
            hidden: s.parsed("hidden")?.unwrap_or(200),
            dropout: s.parsed("dropout")?.unwrap_or(dropout),
            lambda: s.parsed("lambda")?.unwrap_or(lambda_default),
            lr_gcn: s.parsed("lr-gcn")?.unwrap_or(lr_gcn),
            lr_encoder: s.parsed("lr-encoder")?.unwrap_or(1e-5),
            batch_size: s.parsed("batch-size")?.unwrap_or(64),
            epochs: s.parsed("epochs")?.unwrap_or(epochs),
            patience: s.parsed("patience")?.unwrap_or(10),
            seed: s.parsed("seed")?.unwrap_or(0),
            dev_fraction: s.parsed("dev-fraction")?.unwrap_or(0.1),
            finetune_init: s.parsed("finetune-init")?.unwrap_or(true),
            small_lr: s.parsed("small-lr")?.unwrap_or(true),
            pretrain_epochs: s.parsed("pretrain-epochs")?.unwrap_or(20),
            pretrain_lr: s.parsed("pretrain-lr")?.unwrap_or(1e-3),
            grid: match s.get("grid") {
                Some(g) => parse_grid(g)?,
                None => default_grid(),
            },
            wall_time: s.parsed("wall-time")?.unwrap_or(false),
        };
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<()> {
        if !matches!(self.format.as_str(), "tsv" | "textgcn") {
            bail!("unknown format {:?} (expected tsv or textgcn)", self.format);
        }
        if self.mode != Mode::BertGcn && self.lambda != 1.0 {
            bail!(
                "--lambda applies to bertgcn mode only; {} mode always uses lambda = 1",
                self.mode.as_str()
            );
        }
        if self.layers == 0 {
            bail!("--layers must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            bail!("--dropout must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            bail!("--dev-fraction must be in [0, 1)");
        }
        if let Some(bad) = self.grid.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            bail!("grid value {bad} outside [0, 1]");
        }
        if self.grid.windows(2).any(|w| w[0] == w[1]) {
            bail!("grid repeats a value");
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        match key {
            "dataset" => self.dataset.clone().unwrap_or_default(),
            "data-root" => self.data_root.display().to_string(),
            "format" => self.format.clone(),
            "remove-stopwords" => self.remove_stopwords.to_string(),
            "min-freq" => self.min_freq.to_string(),
            "window" => self.window.to_string(),
            "graph" => path(&self.graph),
            "out" => path(&self.out),
            "mode" => self.mode.as_str().to_string(),
            "embeddings" => path(&self.embeddings),
            "encoder" => match self.encoder {
                EncoderKind::External => "external".into(),
                EncoderKind::HashedBow => "hashed-bow".into(),
            },
            "hash-buckets" => self.hash_buckets.to_string(),
            "embed-dim" => self.embed_dim.to_string(),
            "layers" => self.layers.to_string(),
            "hidden" => self.hidden.to_string(),
            "dropout" => self.dropout.to_string(),
            "lambda" => self.lambda.to_string(),
            "lr-gcn" => self.lr_gcn.to_string(),
            "lr-encoder" => self.lr_encoder.to_string(),
            "batch-size" => self.batch_size.to_string(),
            "epochs" => self.epochs.to_string(),
            "patience" => self.patience.to_string(),
            "seed" => self.seed.to_string(),
            "dev-fraction" => self.dev_fraction.to_string(),
            "finetune-init" => self.finetune_init.to_string(),
            "small-lr" => self.small_lr.to_string(),
            "pretrain-epochs" => self.pretrain_epochs.to_string(),
            "pretrain-lr" => self.pretrain_lr.to_string(),
            "grid" => self.grid.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
            "wall-time" => self.wall_time.to_string(),
            _ => unreachable!("key list and echo disagree on {key}"),
        }
    }

    /// The resolved config in config-file syntax; parsing it back gives the
    /// same [`RunConfig`].
    pub fn to_text(&self) -> String {
        self.render(&[])
    }

    /// Text whose hash identifies the experiment in checkpoints.
    pub fn hash_text(&self) -> String {
        self.render(LOCATION_KEYS)
    }

    fn render(&self, skip: &[&str]) -> String {
        let mut out = String::new();
        for key in KEYS.iter().filter(|k| !skip.contains(k)) {
            let value = self.value_of(key);
            if value.is_empty() {
                writeln!(out, "# {key} =").unwrap();
            } else {
                writeln!(out, "{key} = {value}").unwrap();
            }
        }
        out
    }
}
