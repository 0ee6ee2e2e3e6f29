use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use anyhow::{Context, Result};
use serde::Serialize;
use tokio::sync::Semaphore;
use triage_core::artifact::{load_model, model_digest, FORMAT_VERSION};
use triage_core::corpus::{label_corpus, parse_corpus, split_corpus, CorpusSplit};
use triage_core::encoder::EmbeddingTable;
use triage_core::explain::{self, GlobalImportance, ShapConfig};
use triage_core::{LabeledReview, Metrics, Review, TriageModel};

use crate::config::{open, ServiceConfig};

/// Labeled reviews behind the queue, `/metrics` and global importance.
pub struct Reference {
    pub items: Vec<LabeledReview>,
    pub split: CorpusSplit,
}

impl Reference {
    pub fn load(path: &Path, threshold: u32, config: &ServiceConfig) -> Result<Self> {
        let parsed = parse_corpus(open(path)?)?;
        if !parsed.errors.is_empty() {
            log::warn!("{}: skipped {} invalid lines", path.display(), parsed.errors.len());
        }
        let items = label_corpus(parsed.reviews, threshold);
        let split = split_corpus(&items, config.split, config.seed)
            .with_context(|| format!("splitting reference corpus {}", path.display()))?;
        Ok(Reference { items, split })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QueueEntry {
    pub review: Review,
    pub probability: f64,
    pub label: bool,
    pub influential: bool,
}

/// One immutable model plus everything derived from it.
pub struct Loaded {
    pub model: TriageModel,
    pub digest: String,
    pub path: Option<PathBuf>,
    pub metrics: Option<Metrics>,
    /// Reference reviews, most influential first.
    pub queue: Vec<QueueEntry>,
    pub global: RwLock<Option<Arc<GlobalImportance>>>,
}

impl Loaded {
    pub fn new(
        model: TriageModel,
        path: Option<PathBuf>,
        reference: Option<&Reference>,
        table: Option<&EmbeddingTable>,
    ) -> Result<Self> {
        let digest = model_digest(&model)?;
        let (metrics, queue) = match reference {
            Some(r) if !r.split.test.is_empty() => {
                let metrics = model.evaluate_with(&r.split.test, table)?;
                let mut queue = r
                    .items
                    .iter()
                    .map(|item| {
                        let p = model.predict_with(&item.review, table)?;
                        Ok(QueueEntry {
                            review: item.review.clone(),
                            probability: p.probability,
                            label: p.label,
                            influential: item.influential,
                        })
                    })
                    .collect::<triage_core::Result<Vec<_>>>()?;
                queue.sort_by(|a, b| b.probability.total_cmp(&a.probability).then_with(|| a.review.id.cmp(&b.review.id)));
                (Some(metrics), queue)
            }
            _ => (None, Vec::new()),
        };
        Ok(Loaded { model, digest, path, metrics, queue, global: RwLock::new(None) })
    }

    /// Mean |phi| over the first `sample` held-out reviews.
    pub fn compute_global(
        &self,
        reference: &Reference,
        sample: usize,
        shap: &ShapConfig,
        table: Option<&EmbeddingTable>,
    ) -> triage_core::Result<Arc<GlobalImportance>> {
        let items = reference
            .split
            .test
            .iter()
            .take(sample)
            .map(|r| Ok((self.model.features(&r.review), self.model.explain_features_with(&r.review, shap, table)?)))
            .collect::<triage_core::Result<Vec<_>>>()?;
        let global = Arc::new(explain::global_importance(&items));
        *self.global.write().unwrap() = Some(global.clone());
        Ok(global)
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum JobStatus {
    Running,
    Succeeded { artifact: PathBuf, digest: String, validation: Metrics, test: Option<Metrics>, best_epoch: usize },
    Failed { error: String },
}

pub struct AppState {
    pub config: ServiceConfig,
    pub reference: Option<Reference>,
    pub table: Option<EmbeddingTable>,
    pub limiter: Semaphore,
    current: RwLock<Option<Arc<Loaded>>>,
    jobs: Mutex<BTreeMap<u64, JobStatus>>,
    next_job: AtomicU64,
}

impl AppState {
    /// Reads every configured input; any missing path is an error.
    pub fn from_config(config: ServiceConfig) -> Result<Self> {
        config.validate()?;
        config.check_paths()?;
        let reference =
            config.reference_corpus.as_ref().map(|p| Reference::load(p, config.vote_threshold, &config)).transpose()?;
        let table = config.embedding_table()?;
        let state = AppState::new(config, reference, table);
        if let Some(path) = state.config.model_path.clone() {
            state.reload(Some(&path))?;
        }
        Ok(state)
    }

    pub fn new(config: ServiceConfig, reference: Option<Reference>, table: Option<EmbeddingTable>) -> Self {
        let limiter = Semaphore::new(config.concurrency_limit.max(1));
        AppState {
            config,
            reference,
            table,
            limiter,
            current: RwLock::new(None),
            jobs: Mutex::new(BTreeMap::new()),
            next_job: AtomicU64::new(1),
        }
    }

    pub fn current(&self) -> Option<Arc<Loaded>> {
        self.current.read().unwrap().clone()
    }

    /// Builds the new model's caches first, then swaps it in.
    pub fn install(&self, model: TriageModel, path: Option<PathBuf>) -> Result<Arc<Loaded>> {
        let loaded = Arc::new(Loaded::new(model, path, self.reference.as_ref(), self.table.as_ref())?);
        if let Some(r) = &self.reference {
            loaded.compute_global(r, self.config.global_sample, &self.config.shap, self.table.as_ref())?;
        }
        *self.current.write().unwrap() = Some(loaded.clone());
        log::info!("serving model {} (format v{FORMAT_VERSION})", loaded.digest);
        Ok(loaded)
    }

    pub fn reload(&self, path: Option<&Path>) -> Result<Arc<Loaded>> {
        let path = path
            .map(Path::to_path_buf)
            .or_else(|| self.config.model_path.clone())
            .context("no model path given or configured")?;
        let model: TriageModel = load_model(&path).with_context(|| format!("loading {}", path.display()))?;
        self.install(model, Some(path))
    }

    pub fn start_job(&self) -> u64 {
        let id = self.next_job.fetch_add(1, Ordering::Relaxed);
        self.jobs.lock().unwrap().insert(id, JobStatus::Running);
        id
    }

    pub fn finish_job(&self, id: u64, status: JobStatus) {
        self.jobs.lock().unwrap().insert(id, status);
    }

    pub fn job(&self, id: u64) -> Option<JobStatus> {
        self.jobs.lock().unwrap().get(&id).cloned()
    }
}
