//! `pathgrad` command-line front end: corpus generation, training,
//! attribution runs, method comparisons, step sweeps, and HTML heatmaps.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use pathgrad::attribution::{attribute_traced, AttributionDocument};
use pathgrad::config::RunConfig;
use pathgrad::corpus::{
    generate_corpus, labeled_sequences, read_corpus, seed_embeddings, tokenize, write_corpus,
};
use pathgrad::metrics::{evaluate_method, score_corpus, MaskingProtocol, MetricReport};
use pathgrad::model::{train_reference, training_accuracy, ReferenceModelParams, TargetSelector};
use pathgrad::path::{AnchorStrategy, BaselineKind, PathMethod, PathSpec};
use pathgrad::report::{render_example, MethodScores};
use pathgrad::store::EmbeddingStore;
use pathgrad::{DifferentiableModel, Error, Result, TokenSequence};

#[derive(Parser)]
#[command(name = "pathgrad", version, about = "Path-integral attribution for token-sequence models")]
struct Cli {
    /// JSON run-config file; every field can be overridden by a flag
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    method: Option<PathMethod>,
    #[arg(long, global = true, value_enum)]
    strategy: Option<AnchorStrategy>,
    /// Number of interpolation steps K
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Neighborhood size k for anchor search
    #[arg(long, global = true)]
    knn: Option<usize>,
    /// Up-sampling factor f
    #[arg(long, global = true)]
    factor: Option<usize>,
    #[arg(long, global = true, value_enum)]
    baseline: Option<BaselineKind>,
    #[arg(long, global = true)]
    top_fraction: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    emit_raw: bool,
    #[arg(long, global = true)]
    trace_paths: bool,
    /// Suppress wall-clock fields and timestamps for byte-identical reruns
    #[arg(long, global = true)]
    deterministic: bool,
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic sentiment corpus and seeded embedding file
    GenCorpus {
        #[arg(long)]
        n_examples: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Train the reference classifier and write the parameter file
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        hidden: Option<usize>,
    },
    /// Attribute a single sentence
    Attribute {
        #[arg(long)]
        text: String,
    },
    /// Evaluate one method over a corpus
    Evaluate,
    /// Compare ig/dig/udig across strategies over a corpus
    Compare,
    /// Vary the step count K per method and report timings
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "10,30,60")]
        steps_list: Vec<usize>,
    },
    /// Emit one HTML heatmap per corpus example
    Visualize {
        #[arg(long, default_value_t = 8)]
        limit: usize,
    },
}

fn merge_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    macro_rules! overlay {
        ($($field:ident),*) => {
            $(if let Some(v) = &cli.$field { config.$field = v.clone(); })*
        };
    }
    overlay!(method, strategy, steps, knn, factor, baseline, top_fraction, seed, out);
    if let Some(p) = &cli.embeddings {
        config.embeddings = Some(p.clone());
    }
    if let Some(p) = &cli.model {
        config.model = Some(p.clone());
    }
    if let Some(p) = &cli.corpus {
        config.corpus = Some(p.clone());
    }
    config.emit_raw |= cli.emit_raw;
    config.trace_paths |= cli.trace_paths;
    config.deterministic |= cli.deterministic;
    Ok(config)
}

fn require(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.clone()
        .ok_or_else(|| Error::Contract(format!("no {what} file configured (flag or config)")))
}

fn load_model(config: &RunConfig) -> Result<(ReferenceModelParams, EmbeddingStore)> {
    let params = ReferenceModelParams::load(&require(&config.model, "model")?)?;
    let store = params.to_store()?;
    Ok((params, store))
}

fn load_sequences(config: &RunConfig, store: &EmbeddingStore) -> Result<Vec<TokenSequence>> {
    let examples = read_corpus(&require(&config.corpus, "corpus")?)?;
    Ok(examples.iter().map(|ex| tokenize(store, &ex.text)).collect())
}

fn protocol(config: &RunConfig) -> MaskingProtocol {
    let mut p = MaskingProtocol::classification();
    p.top_fraction = config.top_fraction;
    p.replacement = config.baseline;
    p
}

fn label_name(class: usize) -> &'static str {
    if class == 1 {
        "Positive"
    } else {
        "Negative"
    }
}

#[derive(Serialize)]
struct ComparisonEntry {
    spec: PathSpec,
    report: MetricReport,
}

fn finalize(report: MetricReport, deterministic: bool) -> MetricReport {
    if deterministic {
        report.without_timings()
    } else {
        report
    }
}

fn run(cli: &Cli) -> Result<()> {
    let config = merge_config(cli)?;
    fs::create_dir_all(&config.out)?;

    match &cli.command {
        Command::GenCorpus { n_examples, dim } => {
            let n = n_examples.unwrap_or(config.n_examples);
            let dim = dim.unwrap_or(config.dim);
            let store = seed_embeddings(config.seed, dim);
            let examples = generate_corpus(config.seed, n)?;
            store.save(&config.out.join("embeddings.txt"))?;
            write_corpus(&config.out.join("corpus.jsonl"), &examples)?;
            println!(
                "wrote {} examples, vocabulary {} x {}, to {}",
                examples.len(),
                store.len(),
                store.dim(),
                config.out.display()
            );
        }
        Command::Train { epochs, learning_rate, hidden } => {
            let store = EmbeddingStore::load(&require(&config.embeddings, "embeddings")?)?;
            let examples = read_corpus(&require(&config.corpus, "corpus")?)?;
            let mut hp = config.hyperparams();
            hp.dim = store.dim();
            if let Some(e) = epochs {
                hp.epochs = *e;
            }
            if let Some(lr) = learning_rate {
                hp.learning_rate = *lr;
            }
            if let Some(h) = hidden {
                hp.hidden = *h;
            }
            let labeled = labeled_sequences(&store, &examples);
            let params = train_reference(&store, &labeled, &hp)?;
            let accuracy = training_accuracy(&params, &labeled)?;
            let path = config.out.join("model.json");
            params.save(&path)?;
            println!("trained model -> {} (training accuracy {:.3})", path.display(), accuracy);
        }
        Command::Attribute { text } => {
            let (params, store) = load_model(&config)?;
            let sequence = tokenize(&store, text);
            let rows: Vec<Vec<f64>> =
                sequence.ids.iter().map(|&id| store.row(id).to_vec()).collect();
            let predicted = params.predicted_class(&rows)?;
            let selector = TargetSelector::ClassProbability { class: predicted };
            let spec = config.path_spec();
            let (result, diagnostics) =
                attribute_traced(&params, &store, &sequence, &spec, &selector)?;
            let doc = AttributionDocument::new(&store, &sequence, &result, config.emit_raw);
            fs::write(config.out.join("attribution.json"), serde_json::to_string_pretty(&doc)?)?;
            if config.trace_paths {
                fs::write(
                    config.out.join("trace.json"),
                    serde_json::to_string_pretty(&diagnostics)?,
                )?;
            }
            println!(
                "predicted {} -> {}",
                label_name(predicted),
                config.out.join("attribution.json").display()
            );
        }
        Command::Evaluate => {
            let (params, store) = load_model(&config)?;
            let sequences = load_sequences(&config, &store)?;
            let spec = config.path_spec();
            let report = finalize(
                evaluate_method(&params, &store, &sequences, &spec, &protocol(&config))?,
                config.deterministic,
            );
            fs::write(config.out.join("report.json"), serde_json::to_string_pretty(&report)?)?;
            let csv = format!("{}\n{}\n", MetricReport::CSV_HEADER, report.csv_row(&spec));
            fs::write(config.out.join("report.csv"), csv)?;
            println!("{}", report.csv_row(&spec));
        }
        Command::Compare => {
            let (params, store) = load_model(&config)?;
            let sequences = load_sequences(&config, &store)?;
            let base = config.path_spec();
            let mut specs = vec![PathSpec { method: PathMethod::Ig, ..base }];
            for method in [PathMethod::Dig, PathMethod::Udig] {
                for strategy in [AnchorStrategy::Greedy, AnchorStrategy::MaxCount] {
                    specs.push(PathSpec { method, strategy, ..base });
                }
            }
            let mut csv = format!("{}\n", MetricReport::CSV_HEADER);
            let mut entries = Vec::new();
            for spec in specs {
                let report = finalize(
                    evaluate_method(&params, &store, &sequences, &spec, &protocol(&config))?,
                    config.deterministic,
                );
                csv.push_str(&report.csv_row(&spec));
                csv.push('\n');
                entries.push(ComparisonEntry { spec, report });
            }
            fs::write(config.out.join("compare.csv"), &csv)?;
            fs::write(config.out.join("compare.json"), serde_json::to_string_pretty(&entries)?)?;
            print!("{csv}");
        }
        Command::Sweep { steps_list } => {
            let (params, store) = load_model(&config)?;
            let sequences = load_sequences(&config, &store)?;
            let base = config.path_spec();
            let mut csv = format!("{}\n", MetricReport::CSV_HEADER);
            for &steps in steps_list {
                for method in [PathMethod::Ig, PathMethod::Dig, PathMethod::Udig] {
                    let spec = PathSpec { method, steps, ..base };
                    let report = finalize(
                        evaluate_method(&params, &store, &sequences, &spec, &protocol(&config))?,
                        config.deterministic,
                    );
                    csv.push_str(&report.csv_row(&spec));
                    csv.push('\n');
                }
            }
            fs::write(config.out.join("sweep.csv"), &csv)?;
            print!("{csv}");
        }
        Command::Visualize { limit } => {
            let (params, store) = load_model(&config)?;
            let sequences = load_sequences(&config, &store)?;
            let base = config.path_spec();
            for (i, sequence) in sequences.iter().take(*limit).enumerate() {
                let rows: Vec<Vec<f64>> =
                    sequence.ids.iter().map(|&id| store.row(id).to_vec()).collect();
                let predicted = params.predicted_class(&rows)?;
                let mut per_method = Vec::new();
                for method in [PathMethod::Udig, PathMethod::Dig, PathMethod::Ig] {
                    let spec = PathSpec { method, ..base };
                    let (scored, _) =
                        score_corpus(&params, &store, std::slice::from_ref(sequence), &spec)?;
                    per_method.push((method.name(), scored.into_iter().next().unwrap().scores));
                }
                let methods: Vec<MethodScores> = per_method
                    .iter()
                    .map(|(name, scores)| MethodScores { method: name, scores })
                    .collect();
                let html = render_example(
                    &store,
                    sequence,
                    &methods,
                    label_name(predicted),
                    config.deterministic,
                );
                fs::write(config.out.join(format!("example_{i:03}.html")), html)?;
            }
            println!(
                "wrote {} heatmaps to {}",
                sequences.len().min(*limit),
                config.out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // help/version requests are not usage errors
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
