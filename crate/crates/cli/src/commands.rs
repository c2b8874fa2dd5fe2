use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};

use textgraph_core::corpus::{self, carve_dev_split, load_dataset, preprocess, verify_split_counts};
use textgraph_core::encoder::{hashed_bow_features, load_embedding_file};
use textgraph_core::textgraph::{build_graph as build, read_graph, read_graph_meta, write_graph, GraphMeta};
use textgraph_core::trainer::{
    self, ablation_run, save_checkpoint, sweep_lambda as sweep, write_metrics_csv, write_sweep_csv, Architecture,
    ModelSpec,
};
use textgraph_core::{
    Activation, Corpus, DatasetFormat, GraphParams, HeteroGraph, NodeInput, PreprocessConfig, RawDocument, Strategy,
    TrainConfig,
};

use crate::config::{EncoderKind, Mode, RunConfig};

fn dataset(config: &RunConfig) -> Result<&str> {
    config
        .dataset
        .as_deref()
        .context("no dataset given (use --dataset or set `dataset` in the config file)")
}

fn load_docs(config: &RunConfig) -> Result<Vec<RawDocument>> {
    let name = dataset(config)?;
    let format = match config.format.as_str() {
        "textgcn" => DatasetFormat::TextGcn,
        _ => DatasetFormat::Tsv,
    };
    let docs = load_dataset(&config.data_root, name, format)?;
    if let Err(e) = verify_split_counts(&corpus::dataset_name(name), &docs) {
        warn!("{e}");
    }
    Ok(docs)
}

fn load_corpus(config: &RunConfig) -> Result<Corpus> {
    let docs = load_docs(config)?;
    let pre = PreprocessConfig {
        remove_stopwords: config.remove_stopwords,
        min_freq: config.min_freq,
    };
    let corpus = preprocess(&docs, &pre)?;
    info!(
        "{}: {} documents, {} words, {} classes",
        dataset(config)?,
        corpus.n_doc(),
        corpus.n_word(),
        corpus.n_classes()
    );
    Ok(corpus)
}

fn graph_meta(config: &RunConfig, corpus: &Corpus, graph: &HeteroGraph) -> Result<GraphMeta> {
    Ok(GraphMeta {
        dataset: corpus::dataset_name(dataset(config)?),
        window_size: config.window,
        remove_stopwords: config.remove_stopwords,
        min_freq: config.min_freq,
        n_doc: graph.n_doc,
        n_word: graph.n_word,
        nnz: graph.adjacency.nnz(),
        corpus_hash: corpus.content_hash(),
    })
}

/// Writes the resolved config as `<path>`, creating parent directories.
fn echo_config(path: &Path, config: &RunConfig) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, config.to_text()).with_context(|| format!("writing {}", path.display()))
}

pub fn build_graph(config: &RunConfig) -> Result<()> {
    let corpus = load_corpus(config)?;
    let graph = build(
        &corpus,
        &GraphParams {
            window_size: config.window,
        },
    )?;
    let out = config
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.htgr", corpus::dataset_name(dataset(config).unwrap()))));
    echo_config(&PathBuf::from(format!("{}.config", out.display())), config)?;
    write_graph(&out, &graph, &graph_meta(config, &corpus, &graph)?)
        .with_context(|| format!("writing {}", out.display()))?;
    println!(
        "n_doc={} n_word={} nnz={}",
        graph.n_doc,
        graph.n_word,
        graph.adjacency.nnz()
    );
    Ok(())
}

pub fn export_manifest(config: &RunConfig) -> Result<()> {
    let docs = load_docs(config)?;
    let name = corpus::dataset_name(dataset(config)?);
    let out = config
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{name}.manifest.json")));
    corpus::write_manifest(&out, &name, &docs).with_context(|| format!("writing {}", out.display()))?;
    println!("{} documents -> {}", docs.len(), out.display());
    Ok(())
}

/// Everything a training command needs.
struct Prepared {
    corpus: Corpus,
    graph: HeteroGraph,
    input: NodeInput,
    spec: ModelSpec,
    train: TrainConfig,
    out: PathBuf,
}

fn prepare(config: &RunConfig) -> Result<Prepared> {
    let corpus = load_corpus(config)?;
    let graph = match &config.graph {
        Some(path) => {
            let meta = read_graph_meta(path).with_context(|| format!("reading metadata of {}", path.display()))?;
            if meta.corpus_hash != corpus.content_hash() {
                bail!(
                    "graph {} was built from a different corpus or preprocessing than {}",
                    path.display(),
                    dataset(config)?
                );
            }
            read_graph(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => build(
            &corpus,
            &GraphParams {
                window_size: config.window,
            },
        )?,
    };
    let corpus = if config.dev_fraction > 0.0 {
        carve_dev_split(&corpus, config.dev_fraction, config.seed)?
    } else {
        corpus
    };
    let input = match config.mode {
        Mode::TextGcn | Mode::Sgc => NodeInput::Identity,
        Mode::BertGcn => match config.encoder {
            EncoderKind::HashedBow => {
                NodeInput::Encoded(hashed_bow_features(&corpus, config.hash_buckets, config.seed)?)
            }
            EncoderKind::External => {
                let Some(path) = &config.embeddings else {
                    bail!("bertgcn mode needs --embeddings <file> or --encoder hashed-bow");
                };
                NodeInput::Encoded(
                    load_embedding_file(path, &corpus.doc_ids)
                        .with_context(|| format!("loading embeddings {}", path.display()))?,
                )
            }
        },
    };
    let architecture = match config.mode {
        Mode::Sgc => Architecture::Sgc { k: config.layers },
        _ => Architecture::Gcn {
            hidden: vec![config.hidden; config.layers - 1],
            dropout: config.dropout,
            activation: Activation::Relu,
        },
    };
    let spec = ModelSpec {
        architecture,
        embed_dim: config.embed_dim,
    };
    let train = TrainConfig {
        lambda: config.lambda,
        lr_gcn: config.lr_gcn,
        lr_encoder: config.lr_encoder,
        batch_size: config.batch_size,
        epochs: config.epochs,
        seed: config.seed,
        strategy: Strategy {
            finetune_init: config.finetune_init,
            small_encoder_lr: config.small_lr,
        },
        dev_fraction: config.dev_fraction,
        patience: config.patience,
        pretrain_epochs: config.pretrain_epochs,
        pretrain_lr: config.pretrain_lr,
        record_wall_time: config.wall_time,
    };
    train.validate()?;
    let out = config.out.clone().unwrap_or_else(|| {
        PathBuf::from("runs").join(format!(
            "{}-{}",
            corpus::dataset_name(config.dataset.as_deref().unwrap_or("run")),
            config.mode.as_str()
        ))
    });
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    echo_config(&out.join("config.txt"), config)?;
    Ok(Prepared {
        corpus,
        graph,
        input,
        spec,
        train,
        out,
    })
}

fn fmt_acc(v: f64) -> String {
    if v.is_nan() {
        "n/a".into()
    } else {
        format!("{:.4}", v)
    }
}

pub fn train(config: &RunConfig) -> Result<()> {
    let p = prepare(config)?;
    let outcome = trainer::train(&p.corpus, &p.graph, &p.input, &p.spec, &p.train)?;
    write_metrics_csv(&p.out.join("metrics.csv"), &outcome.reports)?;
    save_checkpoint(&p.out.join("model.gcnm"), &outcome.best_model, &config.hash_text())?;
    let summary = serde_json::json!({
        "dataset": config.dataset,
        "mode": config.mode.as_str(),
        "epochs_run": outcome.reports.len(),
        "best_epoch": outcome.best_epoch,
        "dev_acc": outcome.best_dev_accuracy,
        "test_acc": outcome.test_accuracy,
    });
    fs::write(p.out.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    println!(
        "test accuracy {} (dev {}, best epoch {}) -> {}",
        fmt_acc(outcome.test_accuracy),
        fmt_acc(outcome.best_dev_accuracy),
        outcome.best_epoch,
        p.out.display()
    );
    Ok(())
}

pub fn sweep_lambda(config: &RunConfig) -> Result<()> {
    if config.mode != Mode::BertGcn {
        bail!("sweep-lambda needs --mode bertgcn; other modes have no second prediction to interpolate");
    }
    let p = prepare(config)?;
    let rows = sweep(&p.corpus, &p.graph, &p.input, &p.spec, &p.train, &config.grid)?;
    write_sweep_csv(&p.out.join("sweep.csv"), &rows)?;
    println!("{:>6}  {:>8}  {:>8}", "lambda", "dev_acc", "test_acc");
    for r in &rows {
        println!(
            "{:>6}  {:>8}  {:>8}",
            r.lambda,
            fmt_acc(r.dev_accuracy),
            fmt_acc(r.test_accuracy)
        );
    }
    Ok(())
}

pub fn ablate(config: &RunConfig) -> Result<()> {
    if config.mode != Mode::BertGcn {
        bail!("ablate needs --mode bertgcn; the strategies only concern the encoder");
    }
    let p = prepare(config)?;
    let table = ablation_run(&p.corpus, &p.graph, &p.input, &p.spec, &p.train)?;
    fs::write(p.out.join("ablation.txt"), table.to_text())?;
    fs::write(p.out.join("ablation.csv"), table.to_csv())?;
    print!("{}", table.to_text());
    Ok(())
}
