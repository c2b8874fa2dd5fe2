//! Central finite differences against the analytic step gradients.

use rand::Rng;
use textgraph_core::encoder::hashed_bow_features;
use textgraph_core::textgraph::build_graph;
use textgraph_core::trainer::{
    fresh_bank, step_gradients, Architecture, JointModel, MemoryBank, ModelGradients, ModelSpec, StepContext,
};
use textgraph_core::{seeded_rng, Corpus, ForwardMode, GraphParams, HeteroGraph, NodeInput};

pub const EPS: f64 = 1e-5;
pub const MAX_REL_ERR: f64 = 1e-4;

fn tensor_mut(model: &mut JointModel, t: usize) -> &mut [f64] {
    let n_graph = model.graph.weights().len();
    if t < n_graph {
        return model.graph.weights_mut().into_iter().nth(t).unwrap().data_mut();
    }
    let enc = model.encoder.as_mut().unwrap();
    match t - n_graph {
        0 => enc.projection.data_mut(),
        1 => enc.bias.as_mut_slice(),
        _ => enc.aux_weight.data_mut(),
    }
}

fn tensor_grad(grads: &ModelGradients, t: usize) -> Vec<f64> {
    let n_graph = grads.graph.len();
    if t < n_graph {
        return grads.graph[t].data().to_vec();
    }
    match t - n_graph {
        0 => grads.projection.as_ref().unwrap().data().to_vec(),
        1 => grads.bias.clone().unwrap(),
        _ => grads.aux.as_ref().unwrap().data().to_vec(),
    }
}

pub struct Instance {
    pub corpus: Corpus,
    pub graph: HeteroGraph,
    pub input: NodeInput,
    pub model: JointModel,
    pub bank: MemoryBank,
    pub batch: Vec<usize>,
}

/// An 8-document instance whose bank was filled by a different encoder, so
/// rows outside the batch are genuinely stale.
pub fn instance(seed: u64, architecture: Architecture, encoded: bool) -> Instance {
    let corpus = super::random_corpus(seed, 8, 12, 3);
    let corpus = if corpus.n_doc() < 3 {
        super::banded_corpus(seed, 8, 3, 3, 6)
    } else {
        corpus
    };
    let graph = build_graph(&corpus, &GraphParams { window_size: 3 }).unwrap();
    let input = if encoded {
        NodeInput::Encoded(hashed_bow_features(&corpus, 16, seed).unwrap())
    } else {
        NodeInput::Identity
    };
    let spec = ModelSpec {
        architecture,
        embed_dim: 4,
    };
    let n_classes = corpus.n_classes().max(2);
    let mut model = JointModel::init(&spec, &input, graph.n_nodes(), n_classes, seed).unwrap();
    // A zero bias puts empty documents exactly on the ReLU kink, where
    // central differences are meaningless.
    if let Some(enc) = model.encoder.as_mut() {
        let mut rng = seeded_rng(seed + 555);
        enc.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
    }
    let stale = JointModel::init(&spec, &input, graph.n_nodes(), n_classes, seed + 10_000).unwrap();
    let bank = fresh_bank(&stale, &input, corpus.n_doc()).unwrap();
    let batch: Vec<usize> = (0..corpus.n_doc())
        .filter(|d| (d + seed as usize).is_multiple_of(2))
        .collect();
    Instance {
        corpus,
        graph,
        input,
        model,
        bank,
        batch,
    }
}

/// Returns the worst relative error over every parameter entry.
pub fn worst_error(inst: &Instance, lambda: f64, mode: ForwardMode) -> f64 {
    let ctx = StepContext {
        graph: &inst.graph,
        input: &inst.input,
        corpus: &inst.corpus,
        lambda,
    };
    let loss = |model: &JointModel| {
        step_gradients(&ctx, model, &mut inst.bank.clone(), &inst.batch, mode)
            .unwrap()
            .loss
    };
    let analytic = step_gradients(&ctx, &inst.model, &mut inst.bank.clone(), &inst.batch, mode)
        .unwrap()
        .gradients;
    let n_tensors = inst.model.graph.weights().len() + if inst.model.encoder.is_some() { 3 } else { 0 };
    let mut worst = 0.0f64;
    for t in 0..n_tensors {
        let grad = tensor_grad(&analytic, t);
        let mut model = inst.model.clone();
        for k in 0..grad.len() {
            let orig = tensor_mut(&mut model, t)[k];
            tensor_mut(&mut model, t)[k] = orig + EPS;
            let up = loss(&model);
            tensor_mut(&mut model, t)[k] = orig - EPS;
            let down = loss(&model);
            tensor_mut(&mut model, t)[k] = orig;
            let numeric = (up - down) / (2.0 * EPS);
            let e = super::rel_err(grad[k], numeric);
            if e > MAX_REL_ERR && std::env::var("FD_DEBUG").is_ok() {
                eprintln!("tensor {t} entry {k}: analytic {} numeric {numeric}", grad[k]);
            }
            worst = worst.max(e);
        }
    }
    worst
}
