//! Service configuration: a TOML file, then `TRIAGE_*` environment
//! overrides, then command-line flags.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use triage_core::corpus::SplitRatios;
use triage_core::encoder::{load_embedding_table, EmbeddingTable};
use triage_core::explain::{LimeConfig, ShapConfig};
use triage_core::features::{CompetitorLexicon, Lexicons, SentimentLexicon};
use triage_core::pipeline::PipelineConfig;
use triage_core::respond::{GenerationConfig, PromptTemplates};
use triage_core::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    pub model_path: Option<PathBuf>,
    /// Labeled reviews backing the queue, `/metrics` and global importance.
    pub reference_corpus: Option<PathBuf>,
    pub sentiment_lexicon: Option<PathBuf>,
    pub competitor_lexicon: Option<PathBuf>,
    /// External `id<TAB>v1 v2 ...` text embeddings, for models trained on them.
    pub embedding_table: Option<PathBuf>,
    pub seed: u64,
    pub vote_threshold: u32,
    pub split: SplitRatios,
    /// Reviews from the reference corpus used for global importance.
    pub global_sample: usize,
    pub keywords: usize,
    pub concurrency_limit: usize,
    /// Enables `POST /train`.
    pub allow_training: bool,
    pub pipeline: PipelineConfig,
    pub shap: ShapConfig,
    pub lime: LimeConfig,
    pub generation: GenerationConfig,
    pub prompts: PromptTemplates,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            model_path: None,
            reference_corpus: None,
            sentiment_lexicon: None,
            competitor_lexicon: None,
            embedding_table: None,
            seed: 42,
            vote_threshold: 3,
            split: SplitRatios::default(),
            global_sample: 500,
            keywords: 3,
            concurrency_limit: 8,
            allow_training: false,
            pipeline: PipelineConfig {
                train: TrainConfig {
                    learning_rate: 0.1,
                    embedding_lr_scale: 10.0,
                    epochs: 20,
                    seed: 42,
                    ..TrainConfig::default()
                },
                ..PipelineConfig::default()
            },
            shap: ShapConfig::default(),
            lime: LimeConfig::default(),
            generation: GenerationConfig::default(),
            prompts: PromptTemplates::default(),
        }
    }
}

/// Environment variables read by [`ServiceConfig::apply_env`].
pub const ENV_VARS: &[&str] = &[
    "TRIAGE_BIND",
    "TRIAGE_MODEL_PATH",
    "TRIAGE_REFERENCE_CORPUS",
    "TRIAGE_SENTIMENT_LEXICON",
    "TRIAGE_COMPETITOR_LEXICON",
    "TRIAGE_EMBEDDING_TABLE",
    "TRIAGE_SEED",
    "TRIAGE_VOTE_THRESHOLD",
    "TRIAGE_CONCURRENCY_LIMIT",
    "TRIAGE_ALLOW_TRAINING",
    "TRIAGE_GENERATION_ENDPOINT",
    "TRIAGE_GENERATION_TOKEN",
    "TRIAGE_GENERATION_TIMEOUT_SECS",
    "TRIAGE_GENERATION_FALLBACK",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| anyhow::anyhow!("{key}={value:?}: {e}"))
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// File (if any) with environment overrides applied.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        for &key in ENV_VARS {
            let Some(v) = get(key) else { continue };
            match key {
                "TRIAGE_BIND" => self.bind = v,
                "TRIAGE_MODEL_PATH" => self.model_path = Some(v.into()),
                "TRIAGE_REFERENCE_CORPUS" => self.reference_corpus = Some(v.into()),
                "TRIAGE_SENTIMENT_LEXICON" => self.sentiment_lexicon = Some(v.into()),
                "TRIAGE_COMPETITOR_LEXICON" => self.competitor_lexicon = Some(v.into()),
                "TRIAGE_EMBEDDING_TABLE" => self.embedding_table = Some(v.into()),
                "TRIAGE_SEED" => self.seed = parse(key, &v)?,
                "TRIAGE_VOTE_THRESHOLD" => self.vote_threshold = parse(key, &v)?,
                "TRIAGE_CONCURRENCY_LIMIT" => self.concurrency_limit = parse(key, &v)?,
                "TRIAGE_ALLOW_TRAINING" => self.allow_training = parse(key, &v)?,
                "TRIAGE_GENERATION_ENDPOINT" => self.generation.endpoint = Some(v),
                "TRIAGE_GENERATION_TOKEN" => self.generation.auth_token = Some(v),
                "TRIAGE_GENERATION_TIMEOUT_SECS" => self.generation.timeout_secs = parse(key, &v)?,
                "TRIAGE_GENERATION_FALLBACK" => self.generation.fallback_enabled = parse(key, &v)?,
                _ => unreachable!(),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.lime.validate()?;
        if self.concurrency_limit == 0 {
            bail!("concurrency_limit must be positive");
        }
        if self.keywords == 0 {
            bail!("keywords must be positive");
        }
        Ok(())
    }

    /// Fails when a configured path does not exist.
    pub fn check_paths(&self) -> Result<()> {
        let paths = [
            ("model_path", &self.model_path),
            ("reference_corpus", &self.reference_corpus),
            ("sentiment_lexicon", &self.sentiment_lexicon),
            ("competitor_lexicon", &self.competitor_lexicon),
            ("embedding_table", &self.embedding_table),
        ];
        for (name, path) in paths {
            if let Some(p) = path {
                if !p.exists() {
                    bail!("{name} {} does not exist", p.display());
                }
            }
        }
        Ok(())
    }

    pub fn lexicons(&self) -> Result<Lexicons> {
        let mut lex = Lexicons::default();
        if let Some(p) = &self.sentiment_lexicon {
            lex.sentiment = SentimentLexicon::parse(open(p)?).with_context(|| format!("sentiment lexicon {}", p.display()))?;
        }
        if let Some(p) = &self.competitor_lexicon {
            lex.competitor =
                CompetitorLexicon::parse(open(p)?).with_context(|| format!("competitor lexicon {}", p.display()))?;
        }
        Ok(lex)
    }

    pub fn embedding_table(&self) -> Result<Option<EmbeddingTable>> {
        self.embedding_table
            .as_ref()
            .map(|p| load_embedding_table(open(p)?).with_context(|| format!("embedding table {}", p.display())))
            .transpose()
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}
