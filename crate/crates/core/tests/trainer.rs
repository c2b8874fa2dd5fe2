mod common;

use common::training::{
    adam_for, bank_equivalence_gap, hashed_setup as setup, lambda_endpoints, quick_config, small_spec as spec,
};
use textgraph_core::corpus::carve_dev_split;
use textgraph_core::textgraph::build_graph;
use textgraph_core::trainer::{
    ablation_run, accuracy, batch_partition, evaluate, fresh_bank, predict, pretrain_encoder, step_gradients,
    sweep_lambda, train, train_model, train_step, EvalSplit, JointModel, ModelSpec, StepContext, ABLATION_LABELS,
};
use textgraph_core::{
    DenseMatrix, Error, ForwardMode, GraphParams, MemoryBank, NodeInput, PredictionSet, Strategy, TrainConfig,
};

#[test]
fn refresh_is_pure_and_tracks_parameter_updates() {
    let corpus = common::sanity_corpus();
    let (graph, input) = setup(&corpus);
    let NodeInput::Encoded(source) = &input else {
        unreachable!()
    };
    let mut model = JointModel::init(&spec(8, 0.0), &input, graph.n_nodes(), 2, 1).unwrap();
    let params = model.encoder.clone().unwrap();
    let mut bank = MemoryBank::new(corpus.n_doc(), 8);
    bank.refresh(source, &params).unwrap();
    let first = bank.embeddings.clone();
    bank.refresh(source, &params).unwrap();
    assert_eq!(bank.embeddings, first);
    assert_eq!(bank.epoch_stamp, 2);

    let ctx = StepContext {
        graph: &graph,
        input: &input,
        corpus: &corpus,
        lambda: 0.7,
    };
    let config = TrainConfig {
        lr_encoder: 0.05,
        ..quick_config()
    };
    let mut adam = adam_for(&model);
    let all: Vec<usize> = (0..corpus.n_doc()).collect();
    train_step(&ctx, &mut model, &mut bank, &all, &config, &mut adam, 0).unwrap();
    bank.refresh(source, model.encoder.as_ref().unwrap()).unwrap();
    for r in 0..corpus.n_doc() {
        assert_ne!(
            bank.embeddings.row(r),
            first.row(r),
            "row {r} unchanged after an update"
        );
    }

    let mut narrow = MemoryBank::new(corpus.n_doc(), 3);
    assert!(matches!(narrow.refresh(source, &params), Err(Error::Shape(_))));
}

/// With a frozen encoder the bank is never stale, so every step's loss must
/// equal the loss computed from a fully refreshed bank, whatever the batch.
#[test]
fn frozen_encoder_bank_matches_full_refresh() {
    let corpus = common::banded_corpus(11, 30, 3, 5, 10);
    for batch_size in [1, 4, corpus.n_doc()] {
        let gap = bank_equivalence_gap(&corpus, batch_size, 5);
        assert!(gap <= 1e-9, "batch {batch_size}: {gap:e}");
    }
}

#[test]
fn lambda_endpoints_freeze_the_other_head() {
    let corpus = carve_dev_split(&common::sanity_corpus(), 0.25, 0).unwrap();
    let check = lambda_endpoints(&corpus);
    assert!(check.graph_unchanged_at_zero);
    assert!(check.encoder_moved_at_zero);
    assert!(check.aux_unchanged_at_one);
    assert!(check.max_row_sum_error <= 1e-9);
}

#[test]
fn training_is_deterministic() {
    let corpus = carve_dev_split(&common::banded_corpus(3, 24, 2, 5, 8), 0.2, 1).unwrap();
    let (graph, input) = setup(&corpus);
    let run = || train(&corpus, &graph, &input, &spec(8, 0.5), &quick_config()).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.reports, b.reports);
    assert_eq!(a.step_losses, b.step_losses);
    assert_eq!(a.best_model, b.best_model);
}

#[test]
fn identity_features_match_materialized_identity_training() {
    let corpus = common::sanity_corpus();
    let graph = build_graph(&corpus, &GraphParams::default()).unwrap();
    let n = graph.n_nodes();
    let config = TrainConfig {
        lambda: 1.0,
        lr_gcn: 0.02,
        epochs: 10,
        ..TrainConfig::default()
    };
    let s = spec(16, 0.0);
    let a = train(&corpus, &graph, &NodeInput::Identity, &s, &config).unwrap();
    let b = train(
        &corpus,
        &graph,
        &NodeInput::Fixed(DenseMatrix::identity(n)),
        &s,
        &config,
    )
    .unwrap();
    for (x, y) in a.step_losses.iter().zip(&b.step_losses) {
        assert!((x - y).abs() <= 1e-12);
    }
}

#[test]
fn sanity_corpus_reaches_full_test_accuracy() {
    let corpus = common::sanity_corpus();
    let (graph, input) = setup(&corpus);
    let config = TrainConfig {
        epochs: 50,
        ..TrainConfig::default()
    };
    let out = train(&corpus, &graph, &input, &ModelSpec::default(), &config).unwrap();
    assert!(out.reports.len() <= 50);
    assert_eq!(out.test_accuracy, 1.0);
}

#[test]
fn pretraining_separates_a_separable_corpus() {
    let corpus = common::sanity_corpus();
    let (graph, input) = setup(&corpus);
    let init = JointModel::init(&spec(8, 0.0), &input, graph.n_nodes(), 2, 0).unwrap();
    let config = TrainConfig {
        pretrain_epochs: 40,
        pretrain_lr: 0.01,
        ..TrainConfig::default()
    };
    let pre = pretrain_encoder(&corpus, &input, &init, &config).unwrap();
    assert_eq!(pre, pretrain_encoder(&corpus, &input, &init, &config).unwrap());
    let preds = predict(&pre, &input, &graph, 0.0).unwrap();
    assert_eq!(
        accuracy(&preds.combined, &corpus.labels, &corpus.train_mask).unwrap(),
        1.0
    );

    let off = TrainConfig {
        strategy: Strategy {
            finetune_init: false,
            small_encoder_lr: true,
        },
        ..config
    };
    assert_eq!(pretrain_encoder(&corpus, &input, &init, &off).unwrap(), init);
}

#[test]
fn accuracy_examples() {
    let labels = vec![0, 1, 1, 0, 0];
    let mask = vec![true; 5];
    let one_hot = DenseMatrix::from_fn(5, 2, |i, j| if labels[i] as usize == j { 1.0 } else { 0.0 });
    assert_eq!(
        accuracy(&PredictionSet { probs: one_hot }, &labels, &mask).unwrap(),
        1.0
    );
    let uniform = PredictionSet {
        probs: DenseMatrix::from_fn(5, 2, |_, _| 0.5),
    };
    assert_eq!(accuracy(&uniform, &labels, &mask).unwrap(), 0.6);
    assert!(matches!(
        accuracy(&uniform, &labels, &[false; 5]),
        Err(Error::Argument(_))
    ));
}

#[test]
fn empty_labeled_set_is_a_config_error() {
    let mut corpus = common::sanity_corpus();
    let (graph, input) = setup(&corpus);
    let model = JointModel::init(&spec(8, 0.0), &input, graph.n_nodes(), 2, 0).unwrap();
    corpus.train_mask = vec![false; corpus.n_doc()];
    let ctx = StepContext {
        graph: &graph,
        input: &input,
        corpus: &corpus,
        lambda: 0.5,
    };
    let mut bank = fresh_bank(&model, &input, corpus.n_doc()).unwrap();
    let err = step_gradients(&ctx, &model, &mut bank, &[0], ForwardMode::Eval).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(matches!(
        train_model(&corpus, &graph, &input, model, &quick_config()),
        Err(Error::Config(_))
    ));
}

#[test]
fn batches_partition_every_document_once() {
    let batches = batch_partition(23, 4, 9);
    assert_eq!(batches.len(), 6);
    let mut all: Vec<usize> = batches.concat();
    all.sort();
    assert_eq!(all, (0..23).collect::<Vec<_>>());
    assert_eq!(batches, batch_partition(23, 4, 9));
    assert_ne!(batches, batch_partition(23, 4, 10));
}

#[test]
fn sweep_shape_and_endpoints() {
    let corpus = carve_dev_split(&common::sanity_corpus(), 0.25, 0).unwrap();
    let (graph, input) = setup(&corpus);
    let config = quick_config();
    let s = spec(8, 0.5);
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let rows = sweep_lambda(&corpus, &graph, &input, &s, &config, &grid).unwrap();
    assert_eq!(rows.len(), 11);
    assert!(rows.windows(2).all(|w| w[0].lambda < w[1].lambda));

    let init = JointModel::init(&s, &input, graph.n_nodes(), corpus.n_classes(), config.seed).unwrap();
    let start = pretrain_encoder(&corpus, &input, &init, &config).unwrap();
    for (row, lambda) in [(&rows[0], 0.0), (&rows[10], 1.0)] {
        let direct = train_model(
            &corpus,
            &graph,
            &input,
            start.clone(),
            &TrainConfig {
                lambda,
                ..config.clone()
            },
        )
        .unwrap();
        assert_eq!(row.test_accuracy, direct.test_accuracy);
        assert_eq!(row.dev_accuracy, direct.best_dev_accuracy);
        let head = predict(&direct.best_model, &input, &graph, lambda).unwrap();
        let endpoint = if lambda == 0.0 { head.aux.unwrap() } else { head.gcn };
        assert_eq!(head.combined, endpoint);
    }
}

#[test]
fn sanity_sweep_has_no_interior_collapse() {
    let corpus = common::sanity_corpus();
    let (graph, input) = setup(&corpus);
    let config = TrainConfig {
        epochs: 50,
        ..TrainConfig::default()
    };
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let rows = sweep_lambda(&corpus, &graph, &input, &ModelSpec::default(), &config, &grid).unwrap();
    let best_endpoint = rows[0].test_accuracy.max(rows[10].test_accuracy);
    for r in &rows {
        assert!(
            r.test_accuracy >= best_endpoint - 0.1,
            "lambda {}: {} vs {best_endpoint}",
            r.lambda,
            r.test_accuracy
        );
    }
}

#[test]
fn ablation_grid() {
    let corpus = carve_dev_split(&common::sanity_corpus(), 0.25, 0).unwrap();
    let (graph, input) = setup(&corpus);
    let config = quick_config();
    let s = spec(8, 0.5);
    let table = ablation_run(&corpus, &graph, &input, &s, &config).unwrap();
    let labels: Vec<&str> = table.cells.iter().map(|c| c.label).collect();
    assert_eq!(labels, ABLATION_LABELS);
    assert!(table.cells.iter().all(|c| (0.0..=1.0).contains(&c.dev_accuracy)));
    let plain = train(&corpus, &graph, &input, &s, &config).unwrap();
    assert_eq!(table.cells[0].dev_accuracy, plain.best_dev_accuracy);
    let no_small = TrainConfig {
        strategy: table.cells[2].strategy,
        ..config
    };
    assert_eq!(no_small.effective_encoder_lr(), no_small.lr_gcn);

    let text = table.to_text();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    for label in ABLATION_LABELS {
        let col = lines[0].find(label).unwrap();
        assert!(lines[1].len() > col);
    }
    assert_eq!(table.to_csv().lines().count(), 5);
}

#[test]
fn evaluate_without_dev_split_errors() {
    let corpus = common::sanity_corpus();
    let (graph, input) = setup(&corpus);
    let model = JointModel::init(&spec(8, 0.0), &input, graph.n_nodes(), 2, 0).unwrap();
    assert!(evaluate(&model, &input, &graph, &corpus, EvalSplit::Dev, 0.7).is_err());
    let acc = evaluate(&model, &input, &graph, &corpus, EvalSplit::Test, 0.7).unwrap();
    assert!((0.0..=1.0).contains(&acc));
}
