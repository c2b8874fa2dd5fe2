//! Training-loop checks shared by the trainer tests and the acceptance run.

use textgraph_core::encoder::hashed_bow_features;
use textgraph_core::optim::{Adam, AdamConfig};
use textgraph_core::textgraph::build_graph;
use textgraph_core::trainer::{
    batch_partition, fresh_bank, pretrain_encoder, step_gradients, train_model, train_step, Architecture, JointModel,
    ModelSpec, StepContext,
};
use textgraph_core::{Activation, Corpus, ForwardMode, GraphParams, HeteroGraph, NodeInput, TrainConfig};

pub fn small_spec(hidden: usize, dropout: f64) -> ModelSpec {
    ModelSpec {
        architecture: Architecture::Gcn {
            hidden: vec![hidden],
            dropout,
            activation: Activation::Relu,
        },
        embed_dim: 8,
    }
}

pub fn hashed_setup(corpus: &Corpus) -> (HeteroGraph, NodeInput) {
    let graph = build_graph(corpus, &GraphParams { window_size: 5 }).unwrap();
    let input = NodeInput::Encoded(hashed_bow_features(corpus, 64, 3).unwrap());
    (graph, input)
}

pub fn quick_config() -> TrainConfig {
    TrainConfig {
        lr_gcn: 0.01,
        lr_encoder: 1e-3,
        batch_size: 4,
        epochs: 8,
        pretrain_epochs: 5,
        pretrain_lr: 0.01,
        ..TrainConfig::default()
    }
}

pub fn adam_for(model: &JointModel) -> Adam {
    let mut sizes: Vec<usize> = model.graph.weights().iter().map(|w| w.data().len()).collect();
    if let Some(e) = &model.encoder {
        sizes.extend([e.projection.data().len(), e.bias.len(), e.aux_weight.data().len()]);
    }
    Adam::new(AdamConfig::default(), &sizes)
}

/// Trains with a frozen encoder (`lr_encoder = 0`) for `epochs` epochs and
/// returns the largest gap between each step's loss and the loss of the
/// same step computed from a bank refreshed for every document.
pub fn bank_equivalence_gap(corpus: &Corpus, batch_size: usize, epochs: u64) -> f64 {
    let (graph, input) = hashed_setup(corpus);
    let NodeInput::Encoded(source) = &input else {
        unreachable!()
    };
    let config = TrainConfig {
        lr_encoder: 0.0,
        lr_gcn: 0.01,
        ..quick_config()
    };
    let ctx = StepContext {
        graph: &graph,
        input: &input,
        corpus,
        lambda: 0.7,
    };
    let mut model = JointModel::init(&small_spec(8, 0.5), &input, graph.n_nodes(), corpus.n_classes(), 5).unwrap();
    let mut adam = adam_for(&model);
    let mut bank = fresh_bank(&model, &input, corpus.n_doc()).unwrap();
    let encoder_before = model.encoder.clone();
    let mut gap = 0.0f64;
    for epoch in 0..epochs {
        bank.refresh(source, model.encoder.as_ref().unwrap()).unwrap();
        for (s, batch) in batch_partition(corpus.n_doc(), batch_size, epoch).iter().enumerate() {
            let seed = epoch * 1000 + s as u64;
            let mut full = fresh_bank(&model, &input, corpus.n_doc()).unwrap();
            let reference = step_gradients(&ctx, &model, &mut full, batch, ForwardMode::Train { seed })
                .unwrap()
                .loss;
            let loss = train_step(&ctx, &mut model, &mut bank, batch, &config, &mut adam, seed)
                .unwrap()
                .loss;
            gap = gap.max((loss - reference).abs());
        }
    }
    assert_eq!(
        model.encoder, encoder_before,
        "a zero encoder rate must leave the encoder untouched"
    );
    gap
}

pub struct EndpointCheck {
    pub graph_unchanged_at_zero: bool,
    pub encoder_moved_at_zero: bool,
    pub aux_unchanged_at_one: bool,
    pub max_row_sum_error: f64,
}

/// Runs the joint loop from one pretrained start at lambda 0 and lambda 1.
pub fn lambda_endpoints(corpus: &Corpus) -> EndpointCheck {
    let (graph, input) = hashed_setup(corpus);
    let init = JointModel::init(&small_spec(8, 0.5), &input, graph.n_nodes(), corpus.n_classes(), 2).unwrap();
    let config = quick_config();
    let start = pretrain_encoder(corpus, &input, &init, &config).unwrap();
    let run = |lambda| {
        train_model(
            corpus,
            &graph,
            &input,
            start.clone(),
            &TrainConfig {
                lambda,
                ..config.clone()
            },
        )
    };
    let zero = run(0.0).unwrap();
    let one = run(1.0).unwrap();
    EndpointCheck {
        graph_unchanged_at_zero: zero.final_model.graph == start.graph,
        encoder_moved_at_zero: zero.final_model.encoder != start.encoder,
        aux_unchanged_at_one: one.final_model.encoder.as_ref().unwrap().aux_weight
            == start.encoder.as_ref().unwrap().aux_weight,
        max_row_sum_error: zero.max_row_sum_error.max(one.max_row_sum_error),
    }
}
