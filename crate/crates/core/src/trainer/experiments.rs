//! λ sweeps and the strategy ablation grid.

use std::fmt::Write as _;
use std::path::Path;

use super::{
    fmt_metric, pretrain_encoder, train, train_model, JointModel, ModelSpec, NodeInput, Strategy, TrainConfig,
};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::textgraph::HeteroGraph;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub dev_accuracy: f64,
    pub test_accuracy: f64,
}

/// One full training per λ, all starting from the same (optionally
/// pretrained) initialization and seed. Rows keep the grid order.
pub fn sweep_lambda(
    corpus: &Corpus,
    graph: &HeteroGraph,
    input: &NodeInput,
    spec: &ModelSpec,
    base: &TrainConfig,
    grid: &[f64],
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::Config("empty lambda grid".into()));
    }
    if let Some(bad) = grid.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Config(format!("lambda {bad} outside [0, 1]")));
    }
    let init = JointModel::init(spec, input, graph.n_nodes(), corpus.n_classes(), base.seed)?;
    let start = pretrain_encoder(corpus, input, &init, base)?;
    grid.iter()
        .map(|&lambda| {
            let config = TrainConfig { lambda, ..base.clone() };
            let outcome = train_model(corpus, graph, input, start.clone(), &config)?;
            log::info!(
                "lambda {lambda}: dev {:.4} test {:.4}",
                outcome.best_dev_accuracy,
                outcome.test_accuracy
            );
            Ok(SweepRow {
                lambda,
                dev_accuracy: outcome.best_dev_accuracy,
                test_accuracy: outcome.test_accuracy,
            })
        })
        .collect()
}

/// Writes `lambda,dev_acc,test_acc`.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = String::from("lambda,dev_acc,test_acc\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{}",
            r.lambda,
            fmt_metric(r.dev_accuracy),
            fmt_metric(r.test_accuracy)
        )
        .unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub const ABLATION_LABELS: [&str; 4] = ["w/ both", "w/o finetune", "w/o small lr.", "w/o both"];

#[derive(Clone, Debug, PartialEq)]
pub struct AblationCell {
    pub label: &'static str,
    pub strategy: Strategy,
    pub dev_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub cells: Vec<AblationCell>,
}

impl AblationTable {
    /// Two aligned rows: strategy names, then dev accuracy in percent.
    pub fn to_text(&self) -> String {
        let mut head = vec!["Strategy".to_string()];
        let mut acc = vec!["Dev acc.".to_string()];
        for c in &self.cells {
            head.push(c.label.to_string());
            acc.push(format!("{:.1}", 100.0 * c.dev_accuracy));
        }
        let widths: Vec<usize> = head.iter().zip(&acc).map(|(h, a)| h.len().max(a.len())).collect();
        let line = |cols: &[String]| {
            cols.iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        format!("{}\n{}\n", line(&head), line(&acc))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy,finetune_init,small_encoder_lr,dev_acc,test_acc\n");
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{}",
                c.label,
                c.strategy.finetune_init,
                c.strategy.small_encoder_lr,
                fmt_metric(c.dev_accuracy),
                fmt_metric(c.test_accuracy)
            )
            .unwrap();
        }
        out
    }
}

/// Trains the four {finetune_init × small_encoder_lr} combinations with the
/// same seed. Each cell is exactly what [`train`] gives for that strategy.
pub fn ablation_run(
    corpus: &Corpus,
    graph: &HeteroGraph,
    input: &NodeInput,
    spec: &ModelSpec,
    base: &TrainConfig,
) -> Result<AblationTable> {
    if !corpus.dev_mask.iter().any(|&m| m) {
        return Err(Error::Config(
            "the ablation grid reports dev accuracy; carve a dev split first".into(),
        ));
    }
    let combos = [(true, true), (false, true), (true, false), (false, false)];
    let mut cells = Vec::with_capacity(4);
    for (label, (finetune_init, small_encoder_lr)) in ABLATION_LABELS.iter().zip(combos) {
        let strategy = Strategy {
            finetune_init,
            small_encoder_lr,
        };
        let config = TrainConfig {
            strategy,
            ..base.clone()
        };
        let outcome = train(corpus, graph, input, spec, &config)?;
        cells.push(AblationCell {
            label,
            strategy,
            dev_accuracy: outcome.best_dev_accuracy,
            test_accuracy: outcome.test_accuracy,
        });
    }
    Ok(AblationTable { cells })
}
