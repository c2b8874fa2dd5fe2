//! Joint encoder + graph training with a document memory bank.
//!
//! Every epoch starts by re-encoding all documents into the bank. Each step
//! then samples a batch of documents (labeled or not), re-encodes just those
//! rows with the current encoder, runs the graph network over the whole
//! graph and interpolates its predictions with the auxiliary classifier:
//! `Z = λ·Z_gcn + (1-λ)·Z_aux`. The loss is cross-entropy of `Z` on the
//! labeled training documents. Bank rows outside the batch are constants,
//! so encoder gradients only reach the batch rows.

mod checkpoint;
mod experiments;

pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, config_hash, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use experiments::{
    ablation_run, sweep_lambda, write_sweep_csv, AblationCell, AblationTable, SweepRow, ABLATION_LABELS,
};

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::corpus::Corpus;
use crate::dense::DenseMatrix;
use crate::encoder::{aux_forward, encode_backward, encode_batch, DocFeatureSource, EncoderParams};
use crate::error::{Error, Result};
use crate::gcn::{
    cross_entropy_grad, cross_entropy_masked, softmax_backward, softmax_rows, Activation, ForwardMode, GcnModel,
    GraphModel, NodeFeatures, PredictionSet, SgcModel,
};
use crate::optim::{Adam, AdamConfig};
use crate::textgraph::HeteroGraph;

/// The two stabilization strategies for memory-bank training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Strategy {
    /// Pretrain the encoder and auxiliary classifier before joint training.
    pub finetune_init: bool,
    /// Use `lr_encoder` for the encoder; when false it trains at `lr_gcn`.
    pub small_encoder_lr: bool,
}

impl Default for Strategy {
    fn default() -> Self {
        Self {
            finetune_init: true,
            small_encoder_lr: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr_gcn: f64,
    pub lr_encoder: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub dev_fraction: f64,
    /// Stop after this many epochs without a dev-accuracy improvement.
    pub patience: usize,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    /// Record epoch wall-clock time; off keeps metrics byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.7,
            lr_gcn: 1e-3,
            lr_encoder: 1e-5,
            batch_size: 64,
            epochs: 50,
            seed: 0,
            strategy: Strategy::default(),
            dev_fraction: 0.1,
            patience: 10,
            pretrain_epochs: 20,
            pretrain_lr: 1e-3,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        for (name, v) in [
            ("lr_gcn", self.lr_gcn),
            ("lr_encoder", self.lr_encoder),
            ("pretrain_lr", self.pretrain_lr),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be a finite non-negative rate, got {v}"
                )));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate applied to encoder parameters.
    pub fn effective_encoder_lr(&self) -> f64 {
        if self.strategy.small_encoder_lr {
            self.lr_encoder
        } else {
            self.lr_gcn
        }
    }
}

/// Network shape.
#[derive(Clone, Debug, PartialEq)]
pub enum Architecture {
    Gcn {
        /// Widths of the hidden layers; a two-layer GCN has one entry.
        hidden: Vec<usize>,
        dropout: f64,
        activation: Activation,
    },
    Sgc {
        k: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub architecture: Architecture,
    /// Encoder output width, used only with [`NodeInput::Encoded`].
    pub embed_dim: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            architecture: Architecture::Gcn {
                hidden: vec![200],
                dropout: 0.5,
                activation: Activation::Relu,
            },
            embed_dim: 128,
        }
    }
}

/// Where node features come from.
#[derive(Clone, Debug, PartialEq)]
pub enum NodeInput {
    /// Identity features over all nodes.
    Identity,
    /// Fixed dense features over all nodes.
    Fixed(DenseMatrix),
    /// Document rows from the trainable encoder, word rows zero.
    Encoded(DocFeatureSource),
}

impl NodeInput {
    fn width(&self, n_nodes: usize, spec: &ModelSpec) -> usize {
        match self {
            NodeInput::Identity => n_nodes,
            NodeInput::Fixed(x) => x.n_cols(),
            NodeInput::Encoded(_) => spec.embed_dim,
        }
    }

    fn source(&self) -> Option<&DocFeatureSource> {
        match self {
            NodeInput::Encoded(s) => Some(s),
            _ => None,
        }
    }
}

/// Graph network plus the optional encoder / auxiliary classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct JointModel {
    pub graph: GraphModel,
    pub encoder: Option<EncoderParams>,
}

impl JointModel {
    pub fn init(spec: &ModelSpec, input: &NodeInput, n_nodes: usize, n_classes: usize, seed: u64) -> Result<Self> {
        let in_width = input.width(n_nodes, spec);
        let graph = match &spec.architecture {
            Architecture::Gcn {
                hidden,
                dropout,
                activation,
            } => {
                let mut widths = vec![in_width];
                widths.extend(hidden);
                widths.push(n_classes);
                GraphModel::Gcn(GcnModel::init(
                    &widths,
                    crate::derive_seed(seed, &[1]),
                    *activation,
                    *dropout,
                )?)
            }
            Architecture::Sgc { k } => {
                GraphModel::Sgc(SgcModel::init(in_width, n_classes, *k, crate::derive_seed(seed, &[1]))?)
            }
        };
        let encoder = input
            .source()
            .map(|s| EncoderParams::init(s.raw_dim(), spec.embed_dim, n_classes, crate::derive_seed(seed, &[2])));
        Ok(Self { graph, encoder })
    }

    fn tensor_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.graph.weights().iter().map(|w| w.data().len()).collect();
        if let Some(e) = &self.encoder {
            sizes.extend([e.projection.data().len(), e.bias.len(), e.aux_weight.data().len()]);
        }
        sizes
    }
}

/// Document embeddings for every document, refreshed once per epoch and
/// patched row-wise during the epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryBank {
    pub embeddings: DenseMatrix,
    pub epoch_stamp: u64,
}

impl MemoryBank {
    pub fn new(n_doc: usize, dim: usize) -> Self {
        Self {
            embeddings: DenseMatrix::zeros(n_doc, dim),
            epoch_stamp: 0,
        }
    }

    /// Re-encodes every document with the current parameters.
    pub fn refresh(&mut self, source: &DocFeatureSource, params: &EncoderParams) -> Result<()> {
        if self.embeddings.n_cols() != params.dim() || self.embeddings.n_rows() != source.n_doc() {
            return Err(Error::Shape(format!(
                "bank is {:?}, encoder produces {}x{}",
                self.embeddings.shape(),
                source.n_doc(),
                params.dim()
            )));
        }
        let all: Vec<usize> = (0..source.n_doc()).collect();
        self.embeddings = encode_batch(source, params, &all)?.0;
        self.epoch_stamp += 1;
        Ok(())
    }

    fn overwrite(&mut self, rows: &[usize], values: &DenseMatrix) {
        for (k, &r) in rows.iter().enumerate() {
            self.embeddings.row_mut(r).copy_from_slice(values.row(k));
        }
    }
}

/// Gradients for every tensor of a [`JointModel`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGradients {
    pub graph: Vec<DenseMatrix>,
    pub projection: Option<DenseMatrix>,
    pub bias: Option<Vec<f64>>,
    pub aux: Option<DenseMatrix>,
}

/// Loss, gradients and the largest `|Σ_c Z_rc - 1|` of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub loss: f64,
    pub gradients: ModelGradients,
    pub row_sum_error: f64,
}

/// Everything needed to evaluate the objective for one step.
pub struct StepContext<'a> {
    pub graph: &'a HeteroGraph,
    pub input: &'a NodeInput,
    pub corpus: &'a Corpus,
    pub lambda: f64,
}

fn node_features(input: &NodeInput, n_nodes: usize, bank: &MemoryBank) -> NodeFeatures {
    match input {
        NodeInput::Identity => NodeFeatures::Identity(n_nodes),
        NodeInput::Fixed(x) => NodeFeatures::Dense(x.clone()),
        NodeInput::Encoded(_) => {
            let (n_doc, d) = bank.embeddings.shape();
            let mut data = Vec::with_capacity(n_nodes * d);
            data.extend_from_slice(bank.embeddings.data());
            data.resize(n_nodes * d, 0.0);
            let _ = n_doc;
            NodeFeatures::Dense(DenseMatrix::from_vec(n_nodes, d, data).expect("sized above"))
        }
    }
}

/// Predictions of both heads and their interpolation, document rows only.
pub struct Predictions {
    pub gcn: PredictionSet,
    pub aux: Option<PredictionSet>,
    pub combined: PredictionSet,
}

fn check_lambda(model: &JointModel, lambda: f64) -> Result<()> {
    if model.encoder.is_none() && lambda != 1.0 {
        return Err(Error::Config(format!(
            "lambda {lambda} needs an encoder; graph-only models use lambda = 1"
        )));
    }
    Ok(())
}

/// Interpolated loss and its gradients for one batch.
///
/// The batch rows are re-encoded with the current encoder and written into
/// the bank before the forward pass. Bank rows outside the batch are treated
/// as constants.
pub fn step_gradients(
    ctx: &StepContext<'_>,
    model: &JointModel,
    bank: &mut MemoryBank,
    batch: &[usize],
    mode: ForwardMode,
) -> Result<StepOutput> {
    check_lambda(model, ctx.lambda)?;
    if !ctx.corpus.train_mask.iter().any(|&m| m) {
        return Err(Error::Config("no labeled training documents".into()));
    }
    let n_doc = ctx.graph.n_doc;
    let n_nodes = ctx.graph.n_nodes();
    let lambda = ctx.lambda;

    let enc_cache = match (ctx.input.source(), &model.encoder) {
        (Some(source), Some(params)) => {
            let (emb, cache) = encode_batch(source, params, batch)?;
            bank.overwrite(batch, &emb);
            Some(cache)
        }
        (None, None) => None,
        _ => return Err(Error::Internal("encoder parameters do not match the node input".into())),
    };

    let features = node_features(ctx.input, n_nodes, bank);
    let adj = &ctx.graph.norm_adjacency;
    let (logits, graph_cache) = model.graph.forward(adj, &features, mode)?;
    let z_gcn = softmax_rows(&logits.top_rows(n_doc));
    let z_aux = match &model.encoder {
        Some(params) => Some(aux_forward(&bank.embeddings, params)?),
        None => None,
    };
    let z = match &z_aux {
        Some(aux) => PredictionSet::interpolate(lambda, &z_gcn, aux)?,
        None => z_gcn.clone(),
    };
    let loss = cross_entropy_masked(&z, &ctx.corpus.labels, &ctx.corpus.train_mask)?;
    let row_sum_error = z.max_row_sum_error();
    let d_z = cross_entropy_grad(&z, &ctx.corpus.labels, &ctx.corpus.train_mask)?;

    let mut d_z_gcn = d_z.clone();
    d_z_gcn.scale(lambda);
    let d_doc_logits = softmax_backward(&z_gcn, &d_z_gcn)?;
    let mut d_logits = DenseMatrix::zeros(n_nodes, logits.n_cols());
    d_logits.data_mut()[..d_doc_logits.data().len()].copy_from_slice(d_doc_logits.data());
    let input_rows = if model.encoder.is_some() { n_doc } else { 0 };
    let graph_grads = model
        .graph
        .backward(adj, &features, &graph_cache, &d_logits, input_rows)?;

    let mut grads = ModelGradients {
        graph: graph_grads.weights,
        projection: None,
        bias: None,
        aux: None,
    };
    if let (Some(params), Some(z_aux), Some(enc_cache)) = (&model.encoder, &z_aux, &enc_cache) {
        let mut d_z_aux = d_z;
        d_z_aux.scale(1.0 - lambda);
        let d_aux_logits = softmax_backward(z_aux, &d_z_aux)?;
        grads.aux = Some(bank.embeddings.t_matmul(&d_aux_logits)?);
        let mut d_bank = d_aux_logits.matmul_t(&params.aux_weight)?;
        if let Some(d_x) = graph_grads.input {
            d_bank.add_scaled(1.0, &d_x)?;
        }
        let d_batch = d_bank.select_rows(batch);
        let enc = encode_backward(ctx.input.source().unwrap(), enc_cache, &d_batch)?;
        grads.projection = Some(enc.projection);
        grads.bias = Some(enc.bias);
    }
    Ok(StepOutput {
        loss,
        gradients: grads,
        row_sum_error,
    })
}

fn apply_update(
    model: &mut JointModel,
    grads: &ModelGradients,
    optimizer: &mut Adam,
    config: &TrainConfig,
) -> Result<()> {
    let lr_enc = config.effective_encoder_lr();
    let JointModel { graph, encoder } = model;
    let mut params: Vec<&mut [f64]> = graph.weights_mut().into_iter().map(|w| w.data_mut()).collect();
    let mut g: Vec<&[f64]> = grads.graph.iter().map(|w| w.data()).collect();
    let mut lrs = vec![config.lr_gcn; params.len()];
    if let Some(enc) = encoder {
        let (Some(p), Some(b), Some(a)) = (&grads.projection, &grads.bias, &grads.aux) else {
            return Err(Error::Internal("missing encoder gradients".into()));
        };
        params.extend([
            enc.projection.data_mut(),
            enc.bias.as_mut_slice(),
            enc.aux_weight.data_mut(),
        ]);
        g.extend([p.data(), b.as_slice(), a.data()]);
        lrs.extend([lr_enc; 3]);
    }
    optimizer.update(&mut params, &g, &lrs)
}

/// One optimizer step on one batch.
pub fn train_step(
    ctx: &StepContext<'_>,
    model: &mut JointModel,
    bank: &mut MemoryBank,
    batch: &[usize],
    config: &TrainConfig,
    optimizer: &mut Adam,
    dropout_seed: u64,
) -> Result<StepOutput> {
    let out = step_gradients(ctx, model, bank, batch, ForwardMode::Train { seed: dropout_seed })?;
    apply_update(model, &out.gradients, optimizer, config)?;
    Ok(out)
}

/// Seeded shuffled partition of `0..n` into batches.
pub fn batch_partition(n: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::seeded_rng(seed));
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Fresh encodings of every document, or an empty bank without an encoder.
pub fn fresh_bank(model: &JointModel, input: &NodeInput, n_doc: usize) -> Result<MemoryBank> {
    match (input.source(), &model.encoder) {
        (Some(source), Some(params)) => {
            let mut bank = MemoryBank::new(n_doc, params.dim());
            bank.refresh(source, params)?;
            Ok(bank)
        }
        _ => Ok(MemoryBank::new(n_doc, 0)),
    }
}

/// Eval-mode predictions for all documents from a freshly refreshed bank.
pub fn predict(model: &JointModel, input: &NodeInput, graph: &HeteroGraph, lambda: f64) -> Result<Predictions> {
    check_lambda(model, lambda)?;
    let bank = fresh_bank(model, input, graph.n_doc)?;
    let features = node_features(input, graph.n_nodes(), &bank);
    let (logits, _) = model
        .graph
        .forward(&graph.norm_adjacency, &features, ForwardMode::Eval)?;
    let gcn = softmax_rows(&logits.top_rows(graph.n_doc));
    let aux = match &model.encoder {
        Some(params) => Some(aux_forward(&bank.embeddings, params)?),
        None => None,
    };
    let combined = match &aux {
        Some(a) => PredictionSet::interpolate(lambda, &gcn, a)?,
        None => gcn.clone(),
    };
    Ok(Predictions { gcn, aux, combined })
}

/// Fraction of masked documents whose argmax prediction matches the label.
pub fn accuracy(predictions: &PredictionSet, labels: &[i64], mask: &[bool]) -> Result<f64> {
    let rows = Corpus::indices(mask);
    if rows.is_empty() {
        return Err(Error::Argument("cannot evaluate an empty split".into()));
    }
    let predicted = predictions.argmax();
    let mut correct = 0usize;
    for &r in &rows {
        if labels[r] < 0 {
            return Err(Error::Argument(format!(
                "document {r} in the evaluated split has no label"
            )));
        }
        if predicted[r] as i64 == labels[r] {
            correct += 1;
        }
    }
    Ok(correct as f64 / rows.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSplit {
    Train,
    Dev,
    Test,
}

pub fn evaluate(
    model: &JointModel,
    input: &NodeInput,
    graph: &HeteroGraph,
    corpus: &Corpus,
    split: EvalSplit,
    lambda: f64,
) -> Result<f64> {
    let mask = match split {
        EvalSplit::Train => &corpus.train_mask,
        EvalSplit::Dev => &corpus.dev_mask,
        EvalSplit::Test => &corpus.test_mask,
    };
    let preds = predict(model, input, graph, lambda)?;
    accuracy(&preds.combined, &corpus.labels, mask)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    /// NaN when there is no dev split.
    pub dev_accuracy: f64,
    pub test_accuracy: f64,
    pub wall_ms: u64,
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub final_model: JointModel,
    pub best_model: JointModel,
    pub best_epoch: usize,
    pub reports: Vec<EpochReport>,
    /// Dev accuracy of the best model (NaN without a dev split).
    pub best_dev_accuracy: f64,
    pub test_accuracy: f64,
    /// Loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
    /// Largest row-sum deviation of any interpolated prediction produced
    /// during training or evaluation.
    pub max_row_sum_error: f64,
}

/// Trains the encoder and auxiliary classifier alone on labeled documents.
/// Returns `init` unchanged when `finetune_init` is off or there is no encoder.
pub fn pretrain_encoder(
    corpus: &Corpus,
    input: &NodeInput,
    init: &JointModel,
    config: &TrainConfig,
) -> Result<JointModel> {
    let mut model = init.clone();
    let (Some(source), Some(params)) = (input.source(), model.encoder.as_mut()) else {
        return Ok(model);
    };
    if !config.strategy.finetune_init {
        return Ok(model);
    }
    let train = corpus.train_indices();
    if train.is_empty() {
        return Err(Error::Config("no labeled training documents".into()));
    }
    let sizes = [
        params.projection.data().len(),
        params.bias.len(),
        params.aux_weight.data().len(),
    ];
    let mut optimizer = Adam::new(AdamConfig::default(), &sizes);
    for epoch in 0..config.pretrain_epochs {
        let mut order = train.clone();
        order.shuffle(&mut crate::seeded_rng(crate::derive_seed(
            config.seed,
            &[3, epoch as u64],
        )));
        for batch in order.chunks(config.batch_size) {
            let (emb, cache) = encode_batch(source, params, batch)?;
            let probs = aux_forward(&emb, params)?;
            let labels: Vec<i64> = batch.iter().map(|&r| corpus.labels[r]).collect();
            let mask = vec![true; batch.len()];
            let d_probs = cross_entropy_grad(&probs, &labels, &mask)?;
            let d_logits = softmax_backward(&probs, &d_probs)?;
            let d_aux = emb.t_matmul(&d_logits)?;
            let d_emb = d_logits.matmul_t(&params.aux_weight)?;
            let enc = encode_backward(source, &cache, &d_emb)?;
            let lr = config.pretrain_lr;
            optimizer.update(
                &mut [
                    params.projection.data_mut(),
                    params.bias.as_mut_slice(),
                    params.aux_weight.data_mut(),
                ],
                &[enc.projection.data(), &enc.bias, d_aux.data()],
                &[lr; 3],
            )?;
        }
    }
    Ok(model)
}

/// Initializes, optionally pretrains, and trains a model.
pub fn train(
    corpus: &Corpus,
    graph: &HeteroGraph,
    input: &NodeInput,
    spec: &ModelSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let init = JointModel::init(spec, input, graph.n_nodes(), corpus.n_classes(), config.seed)?;
    let start = pretrain_encoder(corpus, input, &init, config)?;
    train_model(corpus, graph, input, start, config)
}

/// The main loop: refresh the bank, step through shuffled batches, evaluate,
/// keep the best-dev model, stop early after `patience` flat epochs.
pub fn train_model(
    corpus: &Corpus,
    graph: &HeteroGraph,
    input: &NodeInput,
    mut model: JointModel,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_lambda(&model, config.lambda)?;
    if corpus.n_doc() != graph.n_doc || corpus.n_word() != graph.n_word {
        return Err(Error::Config(format!(
            "corpus has {} documents / {} words, graph has {} / {}",
            corpus.n_doc(),
            corpus.n_word(),
            graph.n_doc,
            graph.n_word
        )));
    }
    if let Some(s) = input.source() {
        if s.n_doc() != corpus.n_doc() {
            return Err(Error::Config(format!(
                "feature source has {} rows for {} documents",
                s.n_doc(),
                corpus.n_doc()
            )));
        }
    }
    if let NodeInput::Fixed(x) = input {
        if x.n_rows() != graph.n_nodes() {
            return Err(Error::Config("fixed features must cover every node".into()));
        }
    }
    if !corpus.train_mask.iter().any(|&m| m) {
        return Err(Error::Config("no labeled training documents".into()));
    }
    let has_dev = corpus.dev_mask.iter().any(|&m| m);
    let has_test = corpus.test_mask.iter().any(|&m| m);

    let ctx = StepContext {
        graph,
        input,
        corpus,
        lambda: config.lambda,
    };
    let mut optimizer = Adam::new(AdamConfig::default(), &model.tensor_sizes());
    let mut bank = fresh_bank(&model, input, corpus.n_doc())?;
    let mut reports = Vec::new();
    let mut step_losses = Vec::new();
    let mut best: Option<(JointModel, usize, f64, f64)> = None;
    let mut since_best = 0usize;
    let mut max_row_sum_error = 0.0f64;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let batches = match (input.source(), &model.encoder) {
            (Some(source), Some(params)) => {
                bank.refresh(source, params)?;
                batch_partition(
                    corpus.n_doc(),
                    config.batch_size,
                    crate::derive_seed(config.seed, &[4, epoch as u64]),
                )
            }
            // Without an encoder the graph sees the same input every step,
            // so an epoch is one full-batch step.
            _ => vec![Vec::new()],
        };
        let mut total = 0.0;
        for (s, batch) in batches.iter().enumerate() {
            let dropout_seed = crate::derive_seed(config.seed, &[5, epoch as u64, s as u64]);
            let step = train_step(&ctx, &mut model, &mut bank, batch, config, &mut optimizer, dropout_seed)?;
            max_row_sum_error = max_row_sum_error.max(step.row_sum_error);
            step_losses.push(step.loss);
            total += step.loss;
        }
        let train_loss = total / batches.len() as f64;

        let preds = predict(&model, input, graph, config.lambda)?;
        max_row_sum_error = max_row_sum_error.max(preds.combined.max_row_sum_error());
        let dev_accuracy = if has_dev {
            accuracy(&preds.combined, &corpus.labels, &corpus.dev_mask)?
        } else {
            f64::NAN
        };
        let test_accuracy = if has_test {
            accuracy(&preds.combined, &corpus.labels, &corpus.test_mask)?
        } else {
            f64::NAN
        };
        let wall_ms = if config.record_wall_time {
            started.elapsed().as_millis() as u64
        } else {
            0
        };
        log::debug!("epoch {epoch:>4}  loss {train_loss:.5}  dev {dev_accuracy:.4}  test {test_accuracy:.4}");
        reports.push(EpochReport {
            epoch,
            train_loss,
            dev_accuracy,
            test_accuracy,
            wall_ms,
        });

        let improved = match &best {
            None => true,
            Some((_, _, best_dev, _)) => !has_dev || dev_accuracy > *best_dev,
        };
        if improved {
            best = Some((model.clone(), epoch, dev_accuracy, test_accuracy));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                log::info!("early stop after epoch {epoch}");
                break;
            }
        }
    }

    let (best_model, best_epoch, best_dev_accuracy, test_accuracy) = match best {
        Some(b) => b,
        None => (model.clone(), 0, f64::NAN, f64::NAN),
    };
    Ok(TrainOutcome {
        final_model: model,
        best_model,
        best_epoch,
        reports,
        best_dev_accuracy,
        test_accuracy,
        step_losses,
        max_row_sum_error,
    })
}

pub(crate) fn fmt_metric(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Writes `epoch,train_loss,dev_acc,test_acc,wall_ms`, one row per epoch.
pub fn write_metrics_csv(path: &Path, reports: &[EpochReport]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "epoch,train_loss,dev_acc,test_acc,wall_ms")?;
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch,
            fmt_metric(r.train_loss),
            fmt_metric(r.dev_accuracy),
            fmt_metric(r.test_accuracy),
            r.wall_ms
        )?;
    }
    std::fs::write(path, out)?;
    Ok(())
}
