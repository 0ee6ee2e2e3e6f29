use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use triage_core::artifact::{model_digest, save_model};
use triage_core::corpus::{generate_synthetic_corpus, split_corpus, CorpusSplit, SyntheticSpec, TriggerKeyword};
use triage_core::pipeline::{train_model, PipelineConfig};
use triage_core::respond::{build_prompt, PromptTemplates, PromptTier};
use triage_core::{FeatureKind, TrainConfig, TriageModel};
use triage_server::api::router;
use triage_server::config::ServiceConfig;
use triage_server::state::{AppState, Reference};

struct Fixture {
    model: TriageModel,
    items: Vec<triage_core::LabeledReview>,
    split: CorpusSplit,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let spec = SyntheticSpec {
            n_reviews: 1500,
            feature_weights: [(FeatureKind::NegValence, 2.5), (FeatureKind::Image, 2.0), (FeatureKind::Rating, -1.0)]
                .into_iter()
                .collect(),
            trigger_keywords: vec![TriggerKeyword { word: "waiter".into(), weight: 3.0 }],
            intercept: -1.5,
            label_noise_rate: 0.0,
            seed: 7,
        };
        let corpus = generate_synthetic_corpus(&spec).unwrap();
        let cfg = ServiceConfig::default();
        let split = split_corpus(&corpus.reviews, cfg.split, cfg.seed).unwrap();
        let pipeline = PipelineConfig {
            train: TrainConfig { learning_rate: 0.1, embedding_lr_scale: 10.0, epochs: 4, seed: 1, ..Default::default() },
            ..Default::default()
        };
        let model = train_model(&split, corpus.lexicons, &pipeline, None).unwrap();
        Fixture { model, items: corpus.reviews, split }
    })
}

fn config() -> ServiceConfig {
    ServiceConfig { global_sample: 20, ..Default::default() }
}

fn state_with(cfg: ServiceConfig, loaded: bool) -> Arc<AppState> {
    let f = fixture();
    let reference = Reference { items: f.items.clone(), split: f.split.clone() };
    let state = AppState::new(cfg, Some(reference), None);
    if loaded {
        state.install(f.model.clone(), None).unwrap();
    }
    Arc::new(state)
}

fn review_json() -> Value {
    json!({
        "id": "r-1",
        "restaurant_id": "shop-9",
        "rating": 1,
        "text": "The waiter ignored us and the soup was cold. Terrible service!",
        "image_count": 3,
        "helpful_votes": 0,
        "reply_count": 2,
        "review_date": "2023-05-01",
        "identity_disclosed": true,
        "member": false,
        "consumption_verified": true
    })
}

async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(&v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = router(state.clone()).oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(state: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(state, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn no_model_means_503() {
    let state = state_with(config(), false);
    let (status, health) = call_json(&state, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(health["model"].is_null());
    for (method, uri, body) in [
        ("POST", "/predict", Some(review_json())),
        ("POST", "/explain/features", Some(json!({"review": review_json()}))),
        ("GET", "/metrics", None),
    ] {
        let (status, err) = call_json(&state, method, uri, body).await;
        assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{uri}");
        assert_eq!(err["error"]["kind"], "no_model");
    }
}

#[tokio::test]
async fn predict_returns_probability_and_attention() {
    let state = state_with(config(), true);
    let (status, body) = call_json(&state, "POST", "/predict", Some(review_json())).await;
    assert_eq!(status, StatusCode::OK);
    let p = body["probability"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(body["label"].as_bool().unwrap(), p >= 0.5);
    let weights: Vec<f64> = serde_json::from_value(body["attention_weights"].clone()).unwrap();
    assert_eq!(weights.len(), 11);
    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
}

#[tokio::test]
async fn malformed_bodies_are_400_with_diagnostics() {
    let state = state_with(config(), true);
    let mut missing = review_json();
    missing.as_object_mut().unwrap().remove("rating");
    let (status, err) = call_json(&state, "POST", "/predict", Some(missing)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(err["error"]["diagnostics"][0].as_str().unwrap().contains("rating"), "{err}");

    let mut bad = review_json();
    bad["rating"] = json!(9);
    let (status, err) = call_json(&state, "POST", "/predict", Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(err["error"]["diagnostics"][0].as_str().unwrap().contains("rating 9"));

    let (status, _) = call_json(&state, "POST", "/respond", Some(json!({"review": review_json(), "tier": "loud"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call_json(&state, "GET", "/queue?page=zero", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn feature_attribution_is_efficient() {
    let state = state_with(config(), true);
    for shap in [json!(null), json!({"method": "kernel", "n_samples": 500, "seed": 3})] {
        let (status, body) =
            call_json(&state, "POST", "/explain/features", Some(json!({"review": review_json(), "shap": shap}))).await;
        assert_eq!(status, StatusCode::OK);
        let phi: Vec<f64> = serde_json::from_value(body["phi"].clone()).unwrap();
        let base = body["base_value"].as_f64().unwrap();
        let output = body["output"].as_f64().unwrap();
        assert!((base + phi.iter().sum::<f64>() - output).abs() < 1e-6);
        assert_eq!(body["features"][0], "identity");
    }
}

#[tokio::test]
async fn word_explanations_with_highlights() {
    let state = state_with(config(), true);
    let req = json!({"review": review_json(), "highlights": true, "lime": {"n_samples": 300}});
    let (status, body) = call_json(&state, "POST", "/explain/words", Some(req)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["tokens"].as_array().unwrap().len(), body["weights"].as_array().unwrap().len());
    let html = body["highlights_html"].as_str().unwrap();
    assert!(html.contains("hl-pos") || html.contains("hl-neg"));

    let (_, plain) = call_json(&state, "POST", "/explain/words", Some(json!({"review": review_json()}))).await;
    assert!(plain.get("highlights_html").is_none());
}

#[tokio::test]
async fn respond_echoes_the_built_prompt() {
    let state = state_with(config(), true);
    let templates = PromptTemplates::default();
    for tier in PromptTier::ALL {
        let req = json!({"review": review_json(), "tier": tier});
        let (status, body) = call_json(&state, "POST", "/respond", Some(req.clone())).await;
        assert_eq!(status, StatusCode::OK);
        let keywords: Vec<String> = serde_json::from_value(body["keywords"].clone()).unwrap();
        let influential = body["influential"].as_bool().unwrap();
        let expected =
            build_prompt(review_json()["text"].as_str().unwrap(), tier, Some(influential), Some(&keywords), &templates)
                .unwrap();
        assert_eq!(body["prompt"], expected);
        assert_eq!(body["source"], "template");
        assert!(body["sentence_count"].as_u64().unwrap() <= 2);

        let (_, preview) = call_json(&state, "POST", "/prompt", Some(req)).await;
        assert_eq!(preview["prompt"], expected);
    }
}

#[tokio::test]
async fn identical_requests_give_identical_bytes() {
    let state = state_with(config(), true);
    let req = json!({"review": review_json(), "shap": {"method": "kernel", "n_samples": 300, "seed": 11}});
    let a = call(&state, "POST", "/explain/features", Some(req.clone())).await;
    let b = call(&state, "POST", "/explain/features", Some(req)).await;
    assert_eq!(a, b);
    let req = json!({"review": review_json(), "lime": {"n_samples": 200, "exhaustive": false, "seed": 5}});
    let a = call(&state, "POST", "/explain/words", Some(req.clone())).await;
    let b = call(&state, "POST", "/explain/words", Some(req)).await;
    assert_eq!(a, b);
}

#[tokio::test]
async fn read_only_endpoints_leave_the_model_untouched() {
    let state = state_with(config(), true);
    let before = model_digest(&state.current().unwrap().model).unwrap();
    call(&state, "POST", "/predict", Some(review_json())).await;
    call(&state, "POST", "/explain/features", Some(json!({"review": review_json()}))).await;
    call(&state, "POST", "/explain/words", Some(json!({"review": review_json()}))).await;
    call(&state, "POST", "/respond", Some(json!({"review": review_json(), "tier": "with_explanation"}))).await;
    call(&state, "GET", "/explain/global", None).await;
    call(&state, "GET", "/queue", None).await;
    call(&state, "GET", "/metrics", None).await;
    let loaded = state.current().unwrap();
    assert_eq!(model_digest(&loaded.model).unwrap(), before);
    assert_eq!(loaded.digest, before);
}

#[tokio::test]
async fn metrics_queue_and_global() {
    let state = state_with(config(), true);
    let (status, m) = call_json(&state, "GET", "/metrics", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(m["split"], "test");
    assert_eq!(m["reviews"].as_u64().unwrap() as usize, fixture().split.test.len());
    assert!(m["f1"].as_f64().is_some());

    let (_, page) = call_json(&state, "GET", "/queue?page=2&per_page=5", None).await;
    assert_eq!(page["total"].as_u64().unwrap(), 1500);
    let items = page["items"].as_array().unwrap();
    assert_eq!(items.len(), 5);
    let probs: Vec<f64> = items.iter().map(|i| i["probability"].as_f64().unwrap()).collect();
    assert!(probs.windows(2).all(|w| w[0] >= w[1]));

    let (_, filtered) = call_json(&state, "GET", "/queue?label=influential&max_rating=2&per_page=500", None).await;
    assert!(filtered["items"].as_array().unwrap().iter().all(|i| i["label"] == true && i["review"]["rating"].as_u64() <= Some(2)));

    let (status, g) = call_json(&state, "GET", "/explain/global", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(g["instances"], 20);
    assert_eq!(g["ranking"].as_array().unwrap().len(), 11);
    let (status, g) = call_json(&state, "POST", "/explain/global/refresh", Some(json!({"sample": 10}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(g["instances"], 10);
    let (_, cached) = call_json(&state, "GET", "/explain/global", None).await;
    assert_eq!(cached["instances"], 10);
}

#[tokio::test]
async fn training_is_gated_and_reload_swaps() {
    let state = state_with(config(), true);
    let (status, _) = call_json(&state, "POST", "/train", None).await;
    assert_eq!(status, StatusCode::FORBIDDEN);

    let dir = tempfile::tempdir().unwrap();
    let state = state_with(ServiceConfig { allow_training: true, ..config() }, true);
    let out = dir.path().join("job.bin");
    let req = json!({"output": out, "pipeline": {"train": {"epochs": 2, "learning_rate": 0.1, "seed": 9}}});
    let (status, created) = call_json(&state, "POST", "/train", Some(req)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let id = created["job_id"].as_u64().unwrap();
    let report = loop {
        let (_, r) = call_json(&state, "GET", &format!("/train/{id}"), None).await;
        if r["status"] != "running" {
            break r;
        }
        tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    };
    assert_eq!(report["status"], "succeeded", "{report}");
    let (status, _) = call_json(&state, "GET", "/train/999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let old = state.current().unwrap().digest.clone();
    let (status, health) = call_json(&state, "POST", "/reload", Some(json!({"path": out}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(health["model"]["digest"], report["digest"]);
    assert_ne!(health["model"]["digest"], json!(old));
}

#[test]
fn startup_loads_configured_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    save_model(&fixture().model, &path).unwrap();
    let state = AppState::from_config(ServiceConfig { model_path: Some(path), ..config() }).unwrap();
    assert_eq!(state.current().unwrap().digest, model_digest(&fixture().model).unwrap());
    let missing = ServiceConfig { reference_corpus: Some(dir.path().join("nope.jsonl")), ..config() };
    assert!(AppState::from_config(missing).is_err());
}
