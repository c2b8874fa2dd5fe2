mod commands;
mod config;

use std::ffi::OsString;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::builder::PossibleValuesParser;
use clap::parser::ValueSource;
use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};

use config::{RunConfig, Settings};

fn opt(name: &'static str, value_name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).value_name(value_name).help(help)
}

fn flag(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).action(ArgAction::SetTrue).help(help)
}

fn data_args() -> Vec<Arg> {
    vec![
        opt(
            "config",
            "FILE",
            "Flat key = value config file; flags override its values",
        ),
        opt(
            "dataset",
            "NAME|DIR",
            "Dataset name under the data root, or a dataset directory",
        ),
        opt("data-root", "DIR", "Directory holding datasets [default: data]").env("TEXTGRAPH_DATA"),
        opt("format", "FORMAT", "On-disk dataset layout [default: tsv]")
            .value_parser(PossibleValuesParser::new(["tsv", "textgcn"])),
        opt(
            "min-freq",
            "N",
            "Drop words seen fewer than N times [default: 5, 1 for mr]",
        )
        .value_parser(value_parser!(usize)),
        flag("keep-stopwords", "Keep English stop words [default for mr]"),
    ]
}

fn graph_args() -> Vec<Arg> {
    vec![opt(
        "window",
        "N",
        "Sliding window size for word co-occurrence [default: 20]",
    )
    .value_parser(value_parser!(usize))]
}

fn train_args() -> Vec<Arg> {
    vec![
        opt("graph", "FILE", "Prebuilt graph; built in memory when omitted"),
        opt("out", "DIR", "Output directory [default: runs/<dataset>-<mode>]"),
        opt("mode", "MODE", "Model family [default: textgcn]")
            .value_parser(PossibleValuesParser::new(["textgcn", "sgc", "bertgcn"])),
        opt("embeddings", "FILE", "Document embedding file for the external encoder"),
        opt(
            "encoder",
            "KIND",
            "Document feature source in bertgcn mode [default: external]",
        )
        .value_parser(PossibleValuesParser::new(["external", "hashed-bow"])),
        opt(
            "hash-buckets",
            "N",
            "Buckets of the hashed bag-of-words features [default: 1024]",
        )
        .value_parser(value_parser!(usize)),
        opt("embed-dim", "N", "Encoder output width [default: 128]").value_parser(value_parser!(usize)),
        opt(
            "lambda",
            "X",
            "Weight of the graph prediction in [0, 1] [default: 0.7, 1 outside bertgcn]",
        )
        .value_parser(value_parser!(f64)),
        opt(
            "lr-gcn",
            "X",
            "Graph network learning rate [default: 0.02 textgcn, 0.2 sgc, 1e-3 bertgcn]",
        )
        .value_parser(value_parser!(f64)),
        opt("lr-encoder", "X", "Encoder learning rate [default: 1e-5]").value_parser(value_parser!(f64)),
        opt("batch-size", "N", "Documents per step [default: 64]").value_parser(value_parser!(usize)),
        opt("epochs", "N", "Maximum epochs [default: 200, 50 for bertgcn]").value_parser(value_parser!(usize)),
        opt(
            "patience",
            "N",
            "Stop after N epochs without dev improvement [default: 10]",
        )
        .value_parser(value_parser!(usize)),
        opt("hidden", "N", "Hidden layer width [default: 200]").value_parser(value_parser!(usize)),
        opt("layers", "N", "GCN layers, or propagation steps K for sgc [default: 2]")
            .value_parser(value_parser!(usize)),
        opt("dropout", "X", "Dropout rate at layer inputs [default: 0.5, 0 for sgc]").value_parser(value_parser!(f64)),
        opt("seed", "N", "Seed for every random choice [default: 0]").value_parser(value_parser!(u64)),
        opt(
            "dev-fraction",
            "X",
            "Share of training documents held out for early stopping [default: 0.1]",
        )
        .value_parser(value_parser!(f64)),
        flag("no-finetune-init", "Skip encoder pretraining before joint training"),
        flag("no-small-lr", "Train the encoder at the graph learning rate"),
        opt("pretrain-epochs", "N", "Encoder pretraining epochs [default: 20]").value_parser(value_parser!(usize)),
        opt("pretrain-lr", "X", "Encoder pretraining learning rate [default: 1e-3]").value_parser(value_parser!(f64)),
        flag(
            "wall-time",
            "Record epoch wall time in metrics.csv (breaks byte-identical reruns)",
        ),
    ]
}

fn cli() -> Command {
    Command::new("textgraph")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Word-document graph construction and GCN text classification")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("build-graph")
                .about("Build the word-document graph of a dataset")
                .args(data_args())
                .args(graph_args())
                .arg(opt("out", "FILE", "Graph file to write [default: <dataset>.htgr]")),
        )
        .subcommand(
            Command::new("train")
                .about("Train a model and write metrics, checkpoint and resolved config")
                .args(data_args())
                .args(graph_args())
                .args(train_args()),
        )
        .subcommand(
            Command::new("sweep-lambda")
                .about("Train once per lambda value from a shared initialization")
                .args(data_args())
                .args(graph_args())
                .args(train_args())
                .arg(opt(
                    "grid",
                    "LIST",
                    "Comma-separated lambda values [default: 0,0.1,...,1]",
                )),
        )
        .subcommand(
            Command::new("ablate")
                .about("Dev accuracy with and without encoder pretraining and the small encoder rate")
                .args(data_args())
                .args(graph_args())
                .args(train_args()),
        )
        .subcommand(
            Command::new("export-manifest")
                .about("Write the document id / text manifest used by embedding exporters")
                .args(data_args())
                .arg(opt(
                    "out",
                    "FILE",
                    "Manifest to write [default: <dataset>.manifest.json]",
                )),
        )
}

/// Config-file settings overlaid with every flag given on the command line
/// or through the environment.
fn settings_from(matches: &ArgMatches) -> Result<Settings> {
    let mut settings = match matches.get_one::<String>("config") {
        Some(path) => Settings::parse_file(path.as_ref())?,
        None => Settings::default(),
    };
    for id in matches.ids() {
        let id = id.as_str();
        if id == "config" {
            continue;
        }
        if !matches!(
            matches.value_source(id),
            Some(ValueSource::CommandLine | ValueSource::EnvVariable)
        ) {
            continue;
        }
        match id {
            "no-finetune-init" => settings.set("finetune-init", "false")?,
            "no-small-lr" => settings.set("small-lr", "false")?,
            "keep-stopwords" => settings.set("remove-stopwords", "false")?,
            "wall-time" => settings.set("wall-time", "true")?,
            _ => {
                let raw: Vec<String> = matches
                    .get_raw(id)
                    .into_iter()
                    .flatten()
                    .map(|v| v.to_string_lossy().into_owned())
                    .collect();
                settings.set(id, raw.join(","))?;
            }
        }
    }
    Ok(settings)
}

fn run(args: Vec<OsString>) -> Result<()> {
    let matches = cli().try_get_matches_from(args)?;
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let config = RunConfig::resolve(&settings_from(sub)?).context("invalid configuration")?;
    match name {
        "build-graph" => commands::build_graph(&config),
        "train" => commands::train(&config),
        "sweep-lambda" => commands::sweep_lambda(&config),
        "ablate" => commands::ablate(&config),
        "export-manifest" => commands::export_manifest(&config),
        _ => unreachable!("unknown subcommand {name}"),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<clap::Error>() {
        return match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
            _ => 1,
        };
    }
    let internal = err
        .chain()
        .filter_map(|e| e.downcast_ref::<textgraph_core::Error>())
        .any(textgraph_core::Error::is_internal);
    if internal {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            match err.downcast_ref::<clap::Error>() {
                Some(e) => {
                    let _ = e.print();
                }
                None => eprintln!("error: {err:#}"),
            }
            ExitCode::from(code)
        }
    }
}
