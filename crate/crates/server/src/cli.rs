use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use triage_core::artifact::{load_model, model_digest, save_model};
use triage_core::corpus::{
    generate_synthetic_corpus, label_corpus, parse_corpus, split_corpus, write_corpus, CorpusSplit, SyntheticSpec,
    TriggerKeyword,
};
use triage_core::encoder::EmbeddingTable;
use triage_core::explain::{render_highlights, ShapMethod};
use triage_core::fusion::{MetricsRow, MetricsTable};
use triage_core::pipeline::{compare_variants, score_predictions, train_model};
use triage_core::{FeatureKind, LabeledReview, Review, TriageModel, Variant};

use crate::config::{open, ServiceConfig};
use crate::state::AppState;

#[derive(Parser, Debug)]
#[command(name = "triage", version, about = "Explainable triage of influential negative reviews")]
pub struct Cli {
    /// TOML configuration file; TRIAGE_* variables override it.
    #[arg(long, global = true, env = "TRIAGE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for splitting, training and synthesis.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a JSONL corpus and write the accepted records.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        vote_threshold: Option<u32>,
    },
    /// Generate a corpus with planted ground truth.
    Synth {
        /// JSON or TOML spec; a built-in planted spec when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        reviews: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Train a model and write its artifact.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        embedding_lr_scale: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Score a model (or an external predictions file) on a split.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
        /// `id<TAB>0|1` predictions from another method, scored alongside.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Explain one review; writes features.json, words.json and highlights.html.
    Explain {
        #[arg(long)]
        model: PathBuf,
        /// One review record (JSON).
        #[arg(long)]
        review: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Train the reviewer, review and all variants and tabulate them.
    CompareVariants {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        epochs: Option<usize>,
        /// Extra rows, `NAME=predictions.tsv`.
        #[arg(long = "baseline")]
        baselines: Vec<String>,
        #[arg(long)]
        json: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        reference_corpus: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct DataArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub sentiment_lexicon: Option<PathBuf>,
    #[arg(long)]
    pub competitor_lexicon: Option<PathBuf>,
    /// External text embeddings instead of the hashed encoder.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub vote_threshold: Option<u32>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum SplitName {
    Train,
    Validation,
    Test,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum MethodArg {
    Exact,
    Kernel,
}

/// Built-in planted spec used by `synth` without `--spec`.
pub fn default_spec() -> SyntheticSpec {
    use FeatureKind::*;
    SyntheticSpec {
        n_reviews: 10_000,
        feature_weights: [
            (Length, 9.0),
            (NegValence, 7.5),
            (Image, 6.0),
            (Engagement, 4.5),
            (Emoji, 3.0),
            (Rating, -3.0),
            (Competitor, 1.5),
            (Identity, 3.5),
            (Membership, 2.5),
        ]
        .into_iter()
        .collect(),
        trigger_keywords: vec![TriggerKeyword { word: "waiter".into(), weight: 3.0 }],
        intercept: -6.0,
        label_noise_rate: 0.0,
        seed: 42,
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn report(value: serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

struct Data {
    split: CorpusSplit,
    lexicons: triage_core::features::Lexicons,
    table: Option<EmbeddingTable>,
    rejected: usize,
}

fn load_data(args: &DataArgs, cfg: &mut ServiceConfig) -> Result<Data> {
    if let Some(p) = &args.sentiment_lexicon {
        cfg.sentiment_lexicon = Some(p.clone());
    }
    if let Some(p) = &args.competitor_lexicon {
        cfg.competitor_lexicon = Some(p.clone());
    }
    if let Some(p) = &args.embeddings {
        cfg.embedding_table = Some(p.clone());
    }
    if let Some(t) = args.vote_threshold {
        cfg.vote_threshold = t;
    }
    let parsed = parse_corpus(open(&args.corpus)?)?;
    if parsed.reviews.is_empty() {
        bail!(triage_core::Error::InvalidInput(format!("{} has no valid reviews", args.corpus.display())));
    }
    let items = label_corpus(parsed.reviews, cfg.vote_threshold);
    let split = split_corpus(&items, cfg.split, cfg.seed)?;
    Ok(Data { split, lexicons: cfg.lexicons()?, table: cfg.embedding_table()?, rejected: parsed.errors.len() })
}

fn select(split: &CorpusSplit, name: SplitName) -> Vec<LabeledReview> {
    match name {
        SplitName::Train => split.train.clone(),
        SplitName::Validation => split.validation.clone(),
        SplitName::Test => split.test.clone(),
        SplitName::All => [&split.train[..], &split.validation, &split.test].concat(),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = ServiceConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.pipeline.train.seed = seed;
    }
    eprintln!("seed: {}", cfg.seed);
    cfg.validate()?;

    match cli.command {
        Command::Ingest { input, output, vote_threshold } => {
            let parsed = parse_corpus(open(&input)?)?;
            let threshold = vote_threshold.unwrap_or(cfg.vote_threshold);
            let mut w = BufWriter::new(File::create(&output).with_context(|| format!("creating {}", output.display()))?);
            write_corpus(&mut w, &parsed.reviews)?;
            w.flush()?;
            let positives = parsed.reviews.iter().filter(|r| triage_core::corpus::label_influential(r, threshold)).count();
            report(json!({
                "command": "ingest",
                "seed": cfg.seed,
                "input": input,
                "output": output,
                "accepted": parsed.reviews.len(),
                "rejected": parsed.errors.len(),
                "influential": positives,
                "errors": parsed.errors.iter().take(50).map(|e| json!({"line": e.line, "message": e.message})).collect::<Vec<_>>(),
            }))
        }
        Command::Synth { spec, out_dir, reviews, noise } => {
            let mut spec = match spec {
                Some(p) => read_spec(&p)?,
                None => default_spec(),
            };
            if let Some(n) = reviews {
                spec.n_reviews = n;
            }
            if let Some(r) = noise {
                spec.label_noise_rate = r;
            }
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let corpus = generate_synthetic_corpus(&spec)?;
            fs::create_dir_all(&out_dir)?;
            let corpus_path = out_dir.join("corpus.jsonl");
            let mut w = BufWriter::new(File::create(&corpus_path)?);
            write_corpus(&mut w, corpus.reviews.iter().map(|r| &r.review))?;
            w.flush()?;
            write_json(&out_dir.join("ground_truth.json"), &corpus.ground_truth)?;
            fs::write(out_dir.join("sentiment.tsv"), corpus.lexicons.sentiment.to_tsv())?;
            let names: String = corpus.lexicons.competitor.names().iter().map(|n| format!("{n}\n")).collect();
            fs::write(out_dir.join("competitors.txt"), names)?;
            let positives = corpus.reviews.iter().filter(|r| r.influential).count();
            report(json!({
                "command": "synth",
                "seed": spec.seed,
                "out_dir": out_dir,
                "reviews": corpus.reviews.len(),
                "influential": positives,
                "files": ["corpus.jsonl", "ground_truth.json", "sentiment.tsv", "competitors.txt"],
            }))
        }
        Command::Train { data, out, variant, epochs, learning_rate, embedding_lr_scale, batch_size } => {
            let d = load_data(&data, &mut cfg)?;
            let p = &mut cfg.pipeline;
            if let Some(v) = variant {
                p.variant = v;
            }
            if let Some(e) = epochs {
                p.train.epochs = e;
            }
            if let Some(lr) = learning_rate {
                p.train.learning_rate = lr;
            }
            if let Some(s) = embedding_lr_scale {
                p.train.embedding_lr_scale = s;
            }
            if let Some(b) = batch_size {
                p.train.batch_size = b;
            }
            let start = std::time::Instant::now();
            let model = train_model::<f64>(&d.split, d.lexicons, &cfg.pipeline, d.table.as_ref())?;
            let seconds = start.elapsed().as_secs_f64();
            save_model(&model, &out)?;
            let best = model.history.best().context("empty training history")?;
            let test = (!d.split.test.is_empty()).then(|| model.evaluate_with(&d.split.test, d.table.as_ref())).transpose()?;
            report(json!({
                "command": "train",
                "seed": cfg.seed,
                "variant": model.variant(),
                "artifact": out,
                "digest": model_digest(&model)?,
                "rejected_lines": d.rejected,
                "sizes": {"train": d.split.train.len(), "validation": d.split.validation.len(), "test": d.split.test.len()},
                "best_epoch": best.epoch,
                "validation": best.validation,
                "test": test,
                "history": model.history.epochs,
                "seconds": seconds,
            }))
        }
        Command::Evaluate { data, model, split, predictions } => {
            let d = load_data(&data, &mut cfg)?;
            let m: TriageModel = load_model(&model)?;
            let items = select(&d.split, split);
            let metrics = m.evaluate_with(&items, d.table.as_ref())?;
            let external = predictions.map(|p| score_predictions(open(&p)?, &items).map_err(anyhow::Error::from)).transpose()?;
            report(json!({
                "command": "evaluate",
                "seed": cfg.seed,
                "split": format!("{split:?}").to_lowercase(),
                "reviews": items.len(),
                "digest": model_digest(&m)?,
                "metrics": metrics,
                "predictions": external,
            }))
        }
        Command::Explain { model, review, out_dir, method, samples, embeddings } => {
            if let Some(p) = embeddings {
                cfg.embedding_table = Some(p);
            }
            let table = cfg.embedding_table()?;
            let m: TriageModel = load_model(&model)?;
            let text = fs::read_to_string(&review).with_context(|| format!("reading {}", review.display()))?;
            let r: Review = serde_json::from_str(&text).map_err(triage_core::Error::from)?;
            let mut shap = cfg.shap.clone();
            if let Some(method) = method {
                shap.method = match method {
                    MethodArg::Exact => ShapMethod::Exact,
                    MethodArg::Kernel => ShapMethod::Kernel,
                };
            }
            if let Some(n) = samples {
                shap.n_samples = n;
            }
            let prediction = m.predict_with(&r, table.as_ref())?;
            let attribution = m.explain_features_with(&r, &shap, table.as_ref())?;
            fs::create_dir_all(&out_dir)?;
            write_json(
                &out_dir.join("features.json"),
                &json!({
                    "id": r.id,
                    "features": FeatureKind::ALL.map(|k| k.name()),
                    "values": m.features(&r).0,
                    "base_value": attribution.base_value,
                    "phi": attribution.phi,
                    "output": attribution.output,
                    "efficiency_gap": attribution.efficiency_gap(),
                }),
            )?;
            let mut files = vec!["features.json"];
            let words = if m.uses_hashed_text() {
                let w = m.explain_words(&r, &cfg.lime)?;
                write_json(&out_dir.join("words.json"), &w)?;
                fs::write(out_dir.join("highlights.html"), render_highlights(&w))?;
                files.extend(["words.json", "highlights.html"]);
                Some(w.top_k.iter().map(|&i| w.tokens[i].clone()).collect::<Vec<_>>())
            } else {
                None
            };
            report(json!({
                "command": "explain",
                "seed": cfg.seed,
                "id": r.id,
                "probability": prediction.probability,
                "label": prediction.label,
                "top_words": words,
                "out_dir": out_dir,
                "files": files,
            }))
        }
        Command::CompareVariants { data, epochs, baselines, json: as_json } => {
            let d = load_data(&data, &mut cfg)?;
            if let Some(e) = epochs {
                cfg.pipeline.train.epochs = e;
            }
            let mut rows = compare_variants::<f64>(&d.split, &d.lexicons, &cfg.pipeline, d.table.as_ref())?;
            let scored = if d.split.test.is_empty() { &d.split.validation } else { &d.split.test };
            for b in &baselines {
                let (name, path) = b.split_once('=').with_context(|| format!("baseline {b:?} is not NAME=FILE"))?;
                let metrics = score_predictions(open(Path::new(path))?, scored)?;
                rows.push(MetricsRow { method: name.to_string(), metrics });
            }
            if as_json {
                report(json!({"command": "compare-variants", "seed": cfg.seed, "rows": rows}))
            } else {
                print!("{}", MetricsTable(&rows));
                Ok(())
            }
        }
        Command::Serve { bind, model, reference_corpus } => {
            if let Some(b) = bind {
                cfg.bind = b;
            }
            if model.is_some() {
                cfg.model_path = model;
            }
            if reference_corpus.is_some() {
                cfg.reference_corpus = reference_corpus;
            }
            serve(cfg)
        }
    }
}

fn read_spec(path: &Path) -> Result<SyntheticSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "toml") {
        Ok(toml::from_str(&text)?)
    } else {
        Ok(serde_json::from_str(&text).map_err(triage_core::Error::from)?)
    }
}

fn serve(cfg: ServiceConfig) -> Result<()> {
    let bind = cfg.bind.clone();
    let state = Arc::new(AppState::from_config(cfg)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, crate::api::router(state)).await?;
        Ok(())
    })
}

/// Machine-readable error record and exit status for a failed command.
pub fn error_record(err: &anyhow::Error) -> (serde_json::Value, i32) {
    let (kind, code) = match err.chain().find_map(|e| e.downcast_ref::<triage_core::Error>()) {
        Some(e) => {
            let code = match e {
                triage_core::Error::Io(_) => 4,
                triage_core::Error::Checksum { .. } | triage_core::Error::Version { .. } | triage_core::Error::Artifact(_) => 5,
                triage_core::Error::Endpoint { .. } => 6,
                _ => 3,
            };
            (e.kind(), code)
        }
        None if err.chain().any(|e| e.is::<std::io::Error>()) => ("io", 4),
        None => ("error", 1),
    };
    (json!({"error": {"kind": kind, "message": format!("{err:#}")}}), code)
}
