//! HTTP routes. Every body is JSON; errors are
//! `{"error": {"kind", "message", "diagnostics"}}`.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use triage_core::artifact::{save_model, FORMAT_VERSION};
use triage_core::explain::{render_highlights, Attribution, GlobalImportance, LimeConfig, ShapConfig, WordExplanation};
use triage_core::pipeline::{train_model, PipelineConfig};
use triage_core::respond::{build_prompt, generate_response, select_keywords, PromptTier, ResponseDraft};
use triage_core::{FeatureKind, Metrics, Review, FEATURE_COUNT};

use crate::state::{AppState, JobStatus, Loaded, QueueEntry};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
    diagnostics: Vec<String>,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, kind, message: message.into(), diagnostics: Vec::new() }
    }

    fn bad_request(message: impl Into<String>, diagnostics: Vec<String>) -> Self {
        ApiError { diagnostics, ..Self::new(StatusCode::BAD_REQUEST, "bad_request", message) }
    }

    fn unavailable(kind: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, kind, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<triage_core::Error> for ApiError {
    fn from(e: triage_core::Error) -> Self {
        use triage_core::Error as E;
        let status = match &e {
            E::InvalidInput(_) | E::Parse { .. } | E::TooManyFeatures { .. } | E::Json(_) => StatusCode::BAD_REQUEST,
            E::Endpoint { .. } => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.kind(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({
            "error": { "kind": self.kind, "message": self.message, "diagnostics": self.diagnostics }
        });
        (self.status, Json(body)).into_response()
    }
}

/// JSON body whose rejections become 400 responses naming the problem.
pub struct Payload<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Payload<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Payload(v)),
            Err(rejection) => Err(rejection_error(rejection)),
        }
    }
}

fn rejection_error(rejection: JsonRejection) -> ApiError {
    let detail = rejection.body_text();
    ApiError::bad_request("malformed request body", vec![detail])
}

/// An empty body means all defaults.
fn optional_body<T: DeserializeOwned + Default>(bytes: &Bytes) -> Result<T, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request("malformed request body", vec![e.to_string()]))
}

type Shared = Arc<AppState>;
type ApiResult<T> = Result<Json<T>, ApiError>;

fn model(state: &AppState) -> Result<Arc<Loaded>, ApiError> {
    state.current().ok_or_else(|| ApiError::unavailable("no_model", "no model is loaded"))
}

fn checked(review: &Review) -> Result<(), ApiError> {
    review.validate().map_err(|e| ApiError::bad_request("invalid review", vec![e.to_string()]))
}

/// Runs CPU-bound work off the async workers, under the concurrency cap.
async fn blocking<R: Send + 'static>(
    state: &Shared,
    f: impl FnOnce() -> Result<R, ApiError> + Send + 'static,
) -> Result<R, ApiError> {
    let _permit = state.limiter.acquire().await.map_err(|e| ApiError::internal(e.to_string()))?;
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/predict", post(predict))
        .route("/queue", get(queue))
        .route("/explain/features", post(explain_features))
        .route("/explain/words", post(explain_words))
        .route("/explain/global", get(global))
        .route("/explain/global/refresh", post(refresh_global))
        .route("/prompt", post(prompt))
        .route("/respond", post(respond))
        .route("/metrics", get(metrics))
        .route("/train", post(train))
        .route("/train/{id}", get(train_status))
        .route("/reload", post(reload))
        .with_state(state)
}

fn feature_names() -> Vec<&'static str> {
    FeatureKind::ALL.iter().map(|k| k.name()).collect()
}

#[derive(Serialize)]
struct ModelInfo {
    digest: String,
    variant: triage_core::Variant,
    hashed_text: bool,
    path: Option<PathBuf>,
    best_epoch: usize,
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    name: &'static str,
    version: &'static str,
    format_version: u32,
    features: Vec<&'static str>,
    model: Option<ModelInfo>,
}

async fn health(State(state): State<Shared>) -> Json<Health> {
    let model = state.current().map(|l| ModelInfo {
        digest: l.digest.clone(),
        variant: l.model.variant(),
        hashed_text: l.model.uses_hashed_text(),
        path: l.path.clone(),
        best_epoch: l.model.history.best_epoch,
    });
    Json(Health {
        status: "ok",
        name: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        format_version: FORMAT_VERSION,
        features: feature_names(),
        model,
    })
}

#[derive(Serialize)]
struct PredictResponse {
    id: String,
    probability: f64,
    label: bool,
    /// Canonical feature order; excluded features are 0.
    attention_weights: [f64; FEATURE_COUNT],
}

async fn predict(State(state): State<Shared>, Payload(review): Payload<Review>) -> ApiResult<PredictResponse> {
    checked(&review)?;
    let loaded = model(&state)?;
    let p = loaded.model.predict_with(&review, state.table.as_ref())?;
    Ok(Json(PredictResponse {
        id: review.id,
        probability: p.probability,
        label: p.label,
        attention_weights: p.attention_weights,
    }))
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum LabelFilter {
    Influential,
    NotInfluential,
}

#[derive(Deserialize)]
struct QueueParams {
    page: Option<usize>,
    per_page: Option<usize>,
    /// Filters on the predicted label.
    label: Option<LabelFilter>,
    min_rating: Option<u8>,
    max_rating: Option<u8>,
    from: Option<chrono::NaiveDate>,
    to: Option<chrono::NaiveDate>,
}

#[derive(Serialize)]
struct QueuePage<'a> {
    total: usize,
    page: usize,
    per_page: usize,
    items: Vec<&'a QueueEntry>,
}

async fn queue(State(state): State<Shared>, params: Result<Query<QueueParams>, QueryRejection>) -> Response {
    let Query(q) = match params {
        Ok(q) => q,
        Err(e) => return ApiError::bad_request("malformed query", vec![e.body_text()]).into_response(),
    };
    let loaded = match model(&state) {
        Ok(l) => l,
        Err(e) => return e.into_response(),
    };
    let page = q.page.unwrap_or(1).max(1);
    let per_page = q.per_page.unwrap_or(20).clamp(1, 500);
    let keep = |e: &&QueueEntry| {
        let r = &e.review;
        match q.label {
            Some(LabelFilter::Influential) if !e.label => return false,
            Some(LabelFilter::NotInfluential) if e.label => return false,
            _ => {}
        }
        q.min_rating.is_none_or(|m| r.rating >= m)
            && q.max_rating.is_none_or(|m| r.rating <= m)
            && q.from.is_none_or(|d| r.review_date >= d)
            && q.to.is_none_or(|d| r.review_date <= d)
    };
    let matching: Vec<&QueueEntry> = loaded.queue.iter().filter(keep).collect();
    let body = QueuePage {
        total: matching.len(),
        page,
        per_page,
        items: matching.into_iter().skip((page - 1) * per_page).take(per_page).collect(),
    };
    Json(body).into_response()
}

#[derive(Deserialize)]
struct FeatureRequest {
    review: Review,
    shap: Option<ShapConfig>,
}

#[derive(Serialize)]
struct FeatureResponse {
    id: String,
    features: Vec<&'static str>,
    /// Raw feature values, canonical order.
    values: [f64; FEATURE_COUNT],
    #[serde(flatten)]
    attribution: Attribution<f64>,
    efficiency_gap: f64,
}

async fn explain_features(State(state): State<Shared>, Payload(req): Payload<FeatureRequest>) -> ApiResult<FeatureResponse> {
    checked(&req.review)?;
    let loaded = model(&state)?;
    let shap = req.shap.unwrap_or_else(|| state.config.shap.clone());
    let st = state.clone();
    blocking(&state, move || {
        let attribution = loaded.model.explain_features_with(&req.review, &shap, st.table.as_ref())?;
        Ok(FeatureResponse {
            values: loaded.model.features(&req.review).0,
            id: req.review.id,
            features: feature_names(),
            efficiency_gap: attribution.efficiency_gap(),
            attribution,
        })
    })
    .await
    .map(Json)
}

#[derive(Deserialize)]
struct WordRequest {
    review: Review,
    lime: Option<LimeConfig>,
    #[serde(default)]
    highlights: bool,
}

#[derive(Serialize)]
struct WordResponse {
    id: String,
    #[serde(flatten)]
    explanation: WordExplanation<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    highlights_html: Option<String>,
}

async fn explain_words(State(state): State<Shared>, Payload(req): Payload<WordRequest>) -> ApiResult<WordResponse> {
    checked(&req.review)?;
    let loaded = model(&state)?;
    let lime = req.lime.unwrap_or_else(|| state.config.lime.clone());
    blocking(&state, move || {
        let explanation = loaded.model.explain_words(&req.review, &lime)?;
        let highlights_html = req.highlights.then(|| render_highlights(&explanation));
        Ok(WordResponse { id: req.review.id, explanation, highlights_html })
    })
    .await
    .map(Json)
}

#[derive(Serialize)]
struct GlobalResponse {
    features: Vec<&'static str>,
    ranking: Vec<FeatureKind>,
    #[serde(flatten)]
    global: GlobalImportance,
}

impl GlobalResponse {
    fn from(g: &GlobalImportance) -> Self {
        GlobalResponse { features: feature_names(), ranking: g.ranking(), global: g.clone() }
    }
}

async fn global(State(state): State<Shared>) -> ApiResult<GlobalResponse> {
    let loaded = model(&state)?;
    let cached = loaded.global.read().unwrap().clone();
    cached
        .map(|g| Json(GlobalResponse::from(&g)))
        .ok_or_else(|| ApiError::unavailable("no_reference", "global importance needs a reference corpus"))
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct RefreshRequest {
    sample: Option<usize>,
    shap: Option<ShapConfig>,
}

async fn refresh_global(State(state): State<Shared>, body: Bytes) -> ApiResult<GlobalResponse> {
    let req: RefreshRequest = optional_body(&body)?;
    let loaded = model(&state)?;
    if state.reference.is_none() {
        return Err(ApiError::unavailable("no_reference", "global importance needs a reference corpus"));
    }
    let st = state.clone();
    blocking(&state, move || {
        let reference = st.reference.as_ref().expect("checked above");
        let shap = req.shap.unwrap_or_else(|| st.config.shap.clone());
        let g = loaded.compute_global(reference, req.sample.unwrap_or(st.config.global_sample), &shap, st.table.as_ref())?;
        Ok(GlobalResponse::from(&g))
    })
    .await
    .map(Json)
}

#[derive(Deserialize)]
struct PromptRequest {
    review: Review,
    tier: PromptTier,
    lime: Option<LimeConfig>,
}

#[derive(Serialize)]
struct PromptResponse {
    tier: PromptTier,
    influential: bool,
    keywords: Vec<String>,
    prompt: String,
}

/// Prediction, keywords and the prompt for a tier. Keywords are computed
/// for every tier so the fallback template can use them.
fn prepare(state: &AppState, loaded: &Loaded, req: &PromptRequest) -> Result<PromptResponse, ApiError> {
    let model = &loaded.model;
    let influential = model.predict_with(&req.review, state.table.as_ref())?.label;
    let keywords = if model.uses_hashed_text() {
        let lime = req.lime.as_ref().unwrap_or(&state.config.lime);
        select_keywords(&model.explain_words(&req.review, lime)?, state.config.keywords)
    } else {
        Vec::new()
    };
    let prompt = build_prompt(&req.review.text, req.tier, Some(influential), Some(&keywords), &state.config.prompts)?;
    Ok(PromptResponse { tier: req.tier, influential, keywords, prompt })
}

async fn prompt(State(state): State<Shared>, Payload(req): Payload<PromptRequest>) -> ApiResult<PromptResponse> {
    checked(&req.review)?;
    let loaded = model(&state)?;
    let st = state.clone();
    blocking(&state, move || prepare(&st, &loaded, &req)).await.map(Json)
}

#[derive(Serialize)]
struct RespondResponse {
    tier: PromptTier,
    influential: bool,
    keywords: Vec<String>,
    #[serde(flatten)]
    draft: ResponseDraft,
}

async fn respond(State(state): State<Shared>, Payload(req): Payload<PromptRequest>) -> ApiResult<RespondResponse> {
    checked(&req.review)?;
    let loaded = model(&state)?;
    let st = state.clone();
    blocking(&state, move || {
        let p = prepare(&st, &loaded, &req)?;
        let draft = generate_response(&p.prompt, &p.keywords, &st.config.generation)?;
        Ok(RespondResponse { tier: p.tier, influential: p.influential, keywords: p.keywords, draft })
    })
    .await
    .map(Json)
}

#[derive(Serialize)]
struct MetricsResponse {
    split: &'static str,
    reviews: usize,
    digest: String,
    #[serde(flatten)]
    metrics: Metrics,
}

async fn metrics(State(state): State<Shared>) -> ApiResult<MetricsResponse> {
    let loaded = model(&state)?;
    let metrics = loaded
        .metrics
        .ok_or_else(|| ApiError::unavailable("no_reference", "metrics need a reference corpus with a test split"))?;
    let reviews = state.reference.as_ref().map_or(0, |r| r.split.test.len());
    Ok(Json(MetricsResponse { split: "test", reviews, digest: loaded.digest.clone(), metrics }))
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct TrainRequest {
    pipeline: Option<PipelineConfig>,
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct JobCreated {
    job_id: u64,
}

async fn train(State(state): State<Shared>, body: Bytes) -> Result<(StatusCode, Json<JobCreated>), ApiError> {
    if !state.config.allow_training {
        return Err(ApiError::new(StatusCode::FORBIDDEN, "training_disabled", "training is disabled; use the CLI"));
    }
    if state.reference.is_none() {
        return Err(ApiError::unavailable("no_reference", "training needs a reference corpus"));
    }
    let req: TrainRequest = optional_body(&body)?;
    let id = state.start_job();
    let st = state.clone();
    tokio::task::spawn_blocking(move || {
        let status = run_training(&st, id, req).unwrap_or_else(|e| JobStatus::Failed { error: format!("{e:#}") });
        st.finish_job(id, status);
    });
    Ok((StatusCode::ACCEPTED, Json(JobCreated { job_id: id })))
}

fn run_training(state: &AppState, id: u64, req: TrainRequest) -> anyhow::Result<JobStatus> {
    let reference = state.reference.as_ref().expect("checked before spawning");
    let pipeline = req.pipeline.unwrap_or_else(|| state.config.pipeline.clone());
    let lexicons = match state.current() {
        Some(l) if state.config.sentiment_lexicon.is_none() && state.config.competitor_lexicon.is_none() => {
            l.model.lexicons.clone()
        }
        _ => state.config.lexicons()?,
    };
    let model = train_model::<f64>(&reference.split, lexicons, &pipeline, state.table.as_ref())?;
    let artifact = req.output.unwrap_or_else(|| std::env::temp_dir().join(format!("triage-job-{id}.bin")));
    save_model(&model, &artifact)?;
    let test = (!reference.split.test.is_empty())
        .then(|| model.evaluate_with(&reference.split.test, state.table.as_ref()))
        .transpose()?;
    let best = model.history.best().cloned().ok_or_else(|| anyhow::anyhow!("empty training history"))?;
    Ok(JobStatus::Succeeded {
        digest: triage_core::artifact::model_digest(&model)?,
        artifact,
        validation: best.validation,
        test,
        best_epoch: best.epoch,
    })
}

#[derive(Serialize)]
struct JobReport {
    id: u64,
    #[serde(flatten)]
    status: JobStatus,
}

async fn train_status(State(state): State<Shared>, Path(id): Path<u64>) -> ApiResult<JobReport> {
    state
        .job(id)
        .map(|status| Json(JobReport { id, status }))
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_such_job", format!("no training job {id}")))
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct ReloadRequest {
    path: Option<PathBuf>,
}

async fn reload(State(state): State<Shared>, body: Bytes) -> Result<Json<Health>, ApiError> {
    let req: ReloadRequest = optional_body(&body)?;
    let st = state.clone();
    blocking(&state, move || {
        st.reload(req.path.as_deref()).map_err(|e| ApiError::bad_request(format!("{e:#}"), vec![]))?;
        Ok(())
    })
    .await?;
    Ok(health(State(state)).await)
}
