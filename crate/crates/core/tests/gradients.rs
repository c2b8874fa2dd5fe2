//! Central finite differences against the analytic gradients of the
//! interpolated objective.

mod common;

use common::fd::{instance, worst_error, MAX_REL_ERR};
use textgraph_core::trainer::{step_gradients, Architecture, StepContext};
use textgraph_core::{Activation, ForwardMode, NodeInput};

fn gcn(dropout: f64) -> Architecture {
    Architecture::Gcn {
        hidden: vec![5],
        dropout,
        activation: Activation::Relu,
    }
}

#[test]
fn twenty_seeded_instances_under_four_lambdas() {
    for seed in 0..20u64 {
        let inst = instance(seed, gcn(0.5), true);
        for lambda in [0.0, 0.3, 0.7, 1.0] {
            let err = worst_error(&inst, lambda, ForwardMode::Train { seed: seed + 99 });
            assert!(
                err < MAX_REL_ERR,
                "seed {seed}, lambda {lambda}: relative error {err:e}"
            );
        }
    }
}

#[test]
fn deeper_gcn_with_encoder() {
    for seed in 0..4u64 {
        let arch = Architecture::Gcn {
            hidden: vec![6, 4],
            dropout: 0.3,
            activation: Activation::Relu,
        };
        let inst = instance(seed, arch, true);
        let err = worst_error(&inst, 0.7, ForwardMode::Train { seed });
        assert!(err < MAX_REL_ERR, "seed {seed}: {err:e}");
    }
}

#[test]
fn sgc_with_encoder() {
    for seed in 0..5u64 {
        let inst = instance(seed, Architecture::Sgc { k: 2 }, true);
        for lambda in [0.3, 1.0] {
            let err = worst_error(&inst, lambda, ForwardMode::Eval);
            assert!(err < MAX_REL_ERR, "seed {seed}, lambda {lambda}: {err:e}");
        }
    }
}

#[test]
fn identity_features_graph_only() {
    for seed in 0..5u64 {
        let inst = instance(seed, gcn(0.5), false);
        let err = worst_error(&inst, 1.0, ForwardMode::Train { seed });
        assert!(err < MAX_REL_ERR, "seed {seed}: {err:e}");
        let inst = instance(seed, Architecture::Sgc { k: 3 }, false);
        let err = worst_error(&inst, 1.0, ForwardMode::Eval);
        assert!(err < MAX_REL_ERR, "sgc seed {seed}: {err:e}");
    }
}

#[test]
fn lambda_zero_gives_exactly_zero_graph_gradients() {
    let inst = instance(3, gcn(0.5), true);
    let ctx = StepContext {
        graph: &inst.graph,
        input: &inst.input,
        corpus: &inst.corpus,
        lambda: 0.0,
    };
    let out = step_gradients(
        &ctx,
        &inst.model,
        &mut inst.bank.clone(),
        &inst.batch,
        ForwardMode::Train { seed: 1 },
    )
    .unwrap();
    for w in &out.gradients.graph {
        assert!(w.data().iter().all(|&g| g == 0.0));
    }
    let ctx = StepContext { lambda: 1.0, ..ctx };
    let out = step_gradients(
        &ctx,
        &inst.model,
        &mut inst.bank.clone(),
        &inst.batch,
        ForwardMode::Eval,
    )
    .unwrap();
    assert!(out.gradients.aux.unwrap().data().iter().all(|&g| g == 0.0));
}

#[test]
fn encoder_gradient_only_reaches_batch_rows() {
    // Bank rows outside the batch are constants, so moving the raw features
    // of a non-batch document leaves the encoder gradients untouched.
    let inst = instance(5, gcn(0.0), true);
    let ctx = StepContext {
        graph: &inst.graph,
        input: &inst.input,
        corpus: &inst.corpus,
        lambda: 0.7,
    };
    let base = step_gradients(
        &ctx,
        &inst.model,
        &mut inst.bank.clone(),
        &inst.batch,
        ForwardMode::Eval,
    )
    .unwrap()
    .gradients;
    let outside = (0..inst.corpus.n_doc()).find(|d| !inst.batch.contains(d)).unwrap();
    let NodeInput::Encoded(source) = &inst.input else {
        unreachable!()
    };
    let mut moved = source.clone();
    for v in moved.features.row_mut(outside) {
        *v += 0.5;
    }
    let input = NodeInput::Encoded(moved);
    let ctx = StepContext { input: &input, ..ctx };
    let again = step_gradients(
        &ctx,
        &inst.model,
        &mut inst.bank.clone(),
        &inst.batch,
        ForwardMode::Eval,
    )
    .unwrap()
    .gradients;
    assert_eq!(base.projection, again.projection);
    assert_eq!(base.bias, again.bias);
}
