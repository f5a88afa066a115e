//! HTTP service for the annotate, train and review loop.
//!
//! Label and review submissions go through one writer ([`store::Store`]) and
//! are on disk before the response is sent. Training runs in the background,
//! one job at a time; reports read the latest completed model.

pub mod store;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use curation_core::analytics::{
    action_proportions_by, action_report, predict_corpus, PredictedFragment, ProportionWeighting,
};
use curation_core::annotation::{
    label_distribution, stratified_split, ActionClass, LabelSet, LabelSource, LabeledFragment,
};
use curation_core::config::Config;
use curation_core::corpus::Dimension;
use curation_core::evaluation::{confusion_matrix, metrics, MetricsReport};
use curation_core::fingerprint::short_digest;
use curation_core::models::{train, ModelKind, ModelOptions, TrainedModel};
use curation_core::{Corpus, FeatureSpace, FragmentSet};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use store::{EventKind, Store, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {message}")]
    Load { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub struct ServiceOptions {
    pub data_dir: PathBuf,
    pub fragments: FragmentSet,
    pub corpus: Option<Corpus>,
    pub static_dir: Option<PathBuf>,
    pub config: Config,
    /// Rewrite the event log after this many submissions.
    pub compact_every: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
}

#[derive(Clone, Debug, Serialize)]
pub struct Job {
    pub id: u64,
    pub model: ModelKind,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_labels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Output of the latest successful job.
pub struct Snapshot {
    pub job_id: u64,
    pub model: TrainedModel,
    pub metrics: Option<MetricsReport>,
    pub predictions: Vec<PredictedFragment>,
    by_id: HashMap<String, usize>,
}

impl Snapshot {
    fn prediction(&self, fragment_id: &str) -> Option<&PredictedFragment> {
        self.by_id.get(fragment_id).map(|&i| &self.predictions[i])
    }
}

struct Inner {
    data_dir: PathBuf,
    config: Config,
    fragments: FragmentSet,
    fragment_index: HashMap<String, usize>,
    corpus: Option<Corpus>,
    store: Mutex<Store>,
    jobs: Mutex<BTreeMap<u64, Job>>,
    next_job: AtomicU64,
    train_lock: tokio::sync::Mutex<()>,
    snapshot: RwLock<Option<Arc<Snapshot>>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn open(options: ServiceOptions) -> Result<AppState, ServiceError> {
        let store = Store::open(&options.data_dir, options.compact_every)?;
        std::fs::create_dir_all(options.data_dir.join("jobs"))?;
        let fragment_index = options
            .fragments
            .fragments
            .iter()
            .enumerate()
            .map(|(i, f)| (f.fragment_id.clone(), i))
            .collect();
        Ok(AppState(Arc::new(Inner {
            data_dir: options.data_dir,
            config: options.config,
            fragments: options.fragments,
            fragment_index,
            corpus: options.corpus,
            store: Mutex::new(store),
            jobs: Mutex::new(BTreeMap::new()),
            next_job: AtomicU64::new(1),
            train_lock: tokio::sync::Mutex::new(()),
            snapshot: RwLock::new(None),
        })))
    }

    /// Current one-label-per-fragment training set.
    pub fn training_set(&self) -> LabelSet {
        self.0.store.lock().unwrap().training_set()
    }

    pub fn job(&self, id: u64) -> Option<Job> {
        self.0.jobs.lock().unwrap().get(&id).cloned()
    }

    fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.0.snapshot.read().unwrap().clone()
    }
}

pub fn router(state: AppState, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/schema", get(schema))
        .route("/fragments", get(list_fragments))
        .route("/labels", get(list_labels).post(post_label))
        .route("/reviews", post(post_review))
        .route("/jobs/train", post(post_train))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/labels", get(get_job_labels))
        .route("/metrics/latest", get(latest_metrics))
        .route("/reports/{kind}", get(report))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(addr: SocketAddr, options: ServiceOptions) -> Result<(), ServiceError> {
    let static_dir = options.static_dir.clone();
    let state = AppState::open(options)?;
    let app = router(state, static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, app).await?;
    Ok(())
}

struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            body: json!({"error": code, "message": message.into()}),
        }
    }

    fn invalid_label(raw: &str) -> ApiError {
        let mut err = ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_label",
            format!("{raw:?} is not an action class"),
        );
        err.body["valid"] = json!(ActionClass::ALL.map(|c| c.as_str()));
        err
    }

    fn unknown_fragment(id: &str) -> ApiError {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_fragment", format!("no fragment {id:?}"))
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

async fn schema() -> Json<Value> {
    let classes: Vec<Value> = ActionClass::ALL
        .iter()
        .enumerate()
        .map(|(i, c)| json!({"name": c.as_str(), "display_name": c.display_name(), "key": (i + 1).to_string()}))
        .collect();
    Json(json!({ "classes": classes }))
}

#[derive(Deserialize)]
struct FragmentQuery {
    #[serde(default = "default_status")]
    status: String,
    #[serde(default = "default_page")]
    page: usize,
    #[serde(default = "default_page_size")]
    page_size: usize,
}

fn default_status() -> String {
    "unlabeled".into()
}

fn default_page() -> usize {
    1
}

fn default_page_size() -> usize {
    50
}

async fn list_fragments(State(state): State<AppState>, Query(q): Query<FragmentQuery>) -> ApiResult {
    let snapshot = state.snapshot();
    let store = state.0.store.lock().unwrap();
    let keep: Box<dyn Fn(&str) -> bool> = match q.status.as_str() {
        "unlabeled" => Box::new(|id| !store.is_labeled(id)),
        "labeled" => Box::new(|id| store.is_labeled(id)),
        "predicted" => Box::new(|id| {
            !store.is_labeled(id) && snapshot.as_ref().is_some_and(|s| s.prediction(id).is_some())
        }),
        "all" => Box::new(|_| true),
        other => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_status",
                format!("unknown status {other:?} (expected unlabeled, predicted, labeled or all)"),
            ))
        }
    };
    let page = q.page.max(1);
    let page_size = q.page_size.clamp(1, 500);
    let matching: Vec<_> = state
        .0
        .fragments
        .fragments
        .iter()
        .filter(|f| keep(&f.fragment_id))
        .collect();
    let items: Vec<Value> = matching
        .iter()
        .skip((page - 1) * page_size)
        .take(page_size)
        .map(|f| {
            let mut item = json!({
                "fragment_id": f.fragment_id,
                "ticket_id": f.ticket_id,
                "study_id": f.study_id,
                "text": f.text,
            });
            if let Some(label) = store.current(&f.fragment_id) {
                item["label"] = json!(label.label);
            }
            if let Some(p) = snapshot.as_ref().and_then(|s| s.prediction(&f.fragment_id)) {
                item["predicted"] = json!(p.label);
                item["low_confidence"] = json!(p.low_confidence);
            }
            item
        })
        .collect();
    Ok(Json(json!({
        "status": q.status,
        "page": page,
        "page_size": page_size,
        "total": matching.len(),
        "items": items,
    }))
    .into_response())
}

async fn list_labels(State(state): State<AppState>) -> Json<Value> {
    Json(json!({ "items": state.training_set().items() }))
}

#[derive(Deserialize)]
struct LabelRequest {
    fragment_id: String,
    label: String,
    annotator: String,
}

fn labeled(state: &AppState, fragment_id: &str, label: ActionClass, annotator: &str) -> Result<LabeledFragment, ApiError> {
    let &i = state
        .0
        .fragment_index
        .get(fragment_id)
        .ok_or_else(|| ApiError::unknown_fragment(fragment_id))?;
    let fragment = &state.0.fragments.fragments[i];
    Ok(LabeledFragment {
        fragment_id: fragment.fragment_id.clone(),
        text: fragment.text.clone(),
        label,
        annotator: annotator.to_string(),
        source: LabelSource::Ui,
        ticket_id: Some(fragment.ticket_id.clone()),
        timestamp: Some(now()),
    })
}

fn record(state: &AppState, kind: EventKind, item: LabeledFragment, predicted: Option<ActionClass>) -> ApiResult {
    let (event, replaced) = state.0.store.lock().unwrap().record(kind, item, predicted)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "seq": event.seq,
            "fragment_id": event.item.fragment_id,
            "label": event.item.label,
            "annotator": event.item.annotator,
            "replaced": replaced.map(|r| r.label),
        })),
    )
        .into_response())
}

async fn post_label(State(state): State<AppState>, Json(req): Json<LabelRequest>) -> ApiResult {
    let label: ActionClass = req.label.parse().map_err(|_| ApiError::invalid_label(&req.label))?;
    if req.annotator.trim().is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "missing_annotator", "annotator is required"));
    }
    let item = labeled(&state, &req.fragment_id, label, &req.annotator)?;
    record(&state, EventKind::Label, item, None)
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Decision {
    Confirm,
    Correct,
}

/// A reviewer's verdict on a model prediction.
#[derive(Deserialize)]
struct ReviewDecision {
    fragment_id: String,
    decision: Decision,
    corrected_label: Option<String>,
    reviewer: String,
}

async fn post_review(State(state): State<AppState>, Json(req): Json<ReviewDecision>) -> ApiResult {
    if !state.0.fragment_index.contains_key(&req.fragment_id) {
        return Err(ApiError::unknown_fragment(&req.fragment_id));
    }
    let predicted = state
        .snapshot()
        .and_then(|s| s.prediction(&req.fragment_id).map(|p| p.label));
    let (kind, label) = match (req.decision, &req.corrected_label) {
        (Decision::Correct, Some(raw)) => (
            EventKind::Correct,
            raw.parse::<ActionClass>().map_err(|_| ApiError::invalid_label(raw))?,
        ),
        (Decision::Correct, None) => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "missing_corrected_label",
                "a correction needs corrected_label",
            ))
        }
        (Decision::Confirm, Some(_)) => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "unexpected_corrected_label",
                "corrected_label is only allowed with decision=correct",
            ))
        }
        (Decision::Confirm, None) => (
            EventKind::Confirm,
            predicted.ok_or_else(|| {
                ApiError::new(StatusCode::CONFLICT, "no_prediction", "no prediction to confirm for this fragment")
            })?,
        ),
    };
    let item = labeled(&state, &req.fragment_id, label, &req.reviewer)?;
    record(&state, kind, item, predicted)
}

#[derive(Deserialize)]
struct TrainRequest {
    #[serde(default = "default_model")]
    model: String,
    /// Name of a TOML file under `<data_dir>/configs/`, without extension.
    config_ref: Option<String>,
}

fn default_model() -> String {
    "cnb".into()
}

async fn post_train(State(state): State<AppState>, Json(req): Json<TrainRequest>) -> ApiResult {
    let kind: ModelKind = req
        .model
        .parse()
        .map_err(|e: curation_core::models::ModelError| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_model", e.to_string()))?;
    let config = match &req.config_ref {
        None => state.0.config.clone(),
        Some(name) => {
            if name.contains(['/', '\\']) || name.starts_with('.') {
                return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config_ref", "bad config name"));
            }
            let path = state.0.data_dir.join("configs").join(format!("{name}.toml"));
            Config::load(&path)
                .map_err(|e| ApiError::new(StatusCode::NOT_FOUND, "unknown_config", e.to_string()))?
        }
    };
    let distinct = state.training_set().distinct_classes();
    if distinct < 2 {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "too_few_classes",
            format!("training needs labels from at least 2 classes; {distinct} labeled so far"),
        ));
    }
    let id = state.0.next_job.fetch_add(1, Ordering::SeqCst);
    let job = Job {
        id,
        model: kind,
        status: JobStatus::Queued,
        n_labels: None,
        accuracy: None,
        error: None,
        warnings: Vec::new(),
    };
    state.0.jobs.lock().unwrap().insert(id, job.clone());
    let worker = state.clone();
    tokio::spawn(async move {
        let _serial = worker.0.train_lock.lock().await;
        let labels = worker.training_set();
        worker.update_job(id, |j| {
            j.status = JobStatus::Running;
            j.n_labels = Some(labels.len());
        });
        let inner = worker.clone();
        let result = tokio::task::spawn_blocking(move || inner.run_training(id, kind, &config, labels)).await;
        match result {
            Ok(Ok((snapshot, warnings))) => {
                let accuracy = snapshot.metrics.as_ref().map(|m| m.accuracy);
                *worker.0.snapshot.write().unwrap() = Some(Arc::new(snapshot));
                worker.update_job(id, |j| {
                    j.status = JobStatus::Succeeded;
                    j.accuracy = accuracy;
                    j.warnings = warnings;
                });
            }
            Ok(Err(message)) => worker.update_job(id, |j| {
                j.status = JobStatus::Failed;
                j.error = Some(message);
            }),
            Err(join) => worker.update_job(id, |j| {
                j.status = JobStatus::Failed;
                j.error = Some(join.to_string());
            }),
        }
    });
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}

impl AppState {
    fn update_job(&self, id: u64, f: impl FnOnce(&mut Job)) {
        if let Some(job) = self.0.jobs.lock().unwrap().get_mut(&id) {
            f(job);
        }
    }

    /// Split, fit features, train, evaluate, and predict every fragment.
    fn run_training(
        &self,
        id: u64,
        kind: ModelKind,
        config: &Config,
        labels: LabelSet,
    ) -> Result<(Snapshot, Vec<String>), String> {
        let jobs_dir = self.0.data_dir.join("jobs");
        let mut dump = Vec::new();
        labels.write_jsonl(&mut dump).map_err(|e| e.to_string())?;
        std::fs::write(jobs_dir.join(format!("job-{id}.labels.jsonl")), &dump).map_err(|e| e.to_string())?;

        let split = stratified_split(&labels, config.split.test_fraction, config.seed, config.split.mode)
            .map_err(|e| e.to_string())?;
        let feature_config = config.feature_config().map_err(|e| e.to_string())?;
        let space = FeatureSpace::fit(&split.train.texts(), feature_config).map_err(|e| e.to_string())?;
        let x_train = space.transform(&split.train.texts());
        let options = ModelOptions {
            cnb: config.model.cnb,
            sgd: config.model.sgd.clone(),
        };
        let model = train(kind, &x_train, &split.train.labels(), &options, config.seed)
            .map_err(|e| e.to_string())?
            .with_features(space);
        let metrics = if split.test.is_empty() {
            None
        } else {
            let x_test = model.features.as_ref().unwrap().transform(&split.test.texts());
            let predicted = model.predict(&x_test).map_err(|e| e.to_string())?;
            let cm = confusion_matrix(&split.test.labels(), &predicted, &ActionClass::ALL).map_err(|e| e.to_string())?;
            let test_fingerprint = short_digest(&dump);
            Some(metrics(&cm, kind.as_str(), &test_fingerprint).map_err(|e| e.to_string())?)
        };
        let predictions = predict_corpus(&model, &self.0.fragments, None).map_err(|e| e.to_string())?;
        std::fs::write(jobs_dir.join(format!("job-{id}.model")), model.to_bytes()).map_err(|e| e.to_string())?;
        if let Some(m) = &metrics {
            let text = serde_json::to_string_pretty(m).map_err(|e| e.to_string())?;
            std::fs::write(jobs_dir.join(format!("job-{id}.metrics.json")), text).map_err(|e| e.to_string())?;
        }
        let by_id = predictions
            .iter()
            .enumerate()
            .map(|(i, p)| (p.fragment.fragment_id.clone(), i))
            .collect();
        Ok((
            Snapshot {
                job_id: id,
                model,
                metrics,
                predictions,
                by_id,
            },
            split.warnings,
        ))
    }
}

fn parse_job_id(raw: &str) -> Result<u64, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "unknown_job", format!("no job {raw:?}")))
}

async fn get_job(State(state): State<AppState>, UrlPath(raw): UrlPath<String>) -> ApiResult {
    let id = parse_job_id(&raw)?;
    let job = state
        .job(id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_job", format!("no job {id}")))?;
    Ok(Json(job).into_response())
}

/// The exact label set a job trained from.
async fn get_job_labels(State(state): State<AppState>, UrlPath(raw): UrlPath<String>) -> ApiResult {
    let id = parse_job_id(&raw)?;
    let path = state.0.data_dir.join("jobs").join(format!("job-{id}.labels.jsonl"));
    let text = std::fs::read(&path)
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "unknown_job", format!("no labels for job {id}")))?;
    let set = LabelSet::read_jsonl(text.as_slice())
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string()))?;
    Ok(Json(json!({ "job_id": id, "items": set.items() })).into_response())
}

async fn latest_metrics(State(state): State<AppState>) -> ApiResult {
    let snapshot = state
        .snapshot()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_model", "no training job has completed"))?;
    let metrics = snapshot
        .metrics
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_metrics", "latest job had no test split"))?;
    Ok(Json(json!({
        "job_id": snapshot.job_id,
        "model": snapshot.model.kind(),
        "metrics": metrics,
    }))
    .into_response())
}

#[derive(Deserialize)]
struct ReportQuery {
    by: Option<String>,
    weighting: Option<String>,
}

async fn report(State(state): State<AppState>, UrlPath(kind): UrlPath<String>, Query(q): Query<ReportQuery>) -> ApiResult {
    let cfg = &state.0.config.report;
    if kind == "fig2" {
        let dist = label_distribution(&state.training_set());
        return Ok(Json(json!({ "kind": "fig2", "distribution": dist })).into_response());
    }
    if kind != "table4" && kind != "fig4" {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_report",
            format!("no report {kind:?} (expected table4, fig4 or fig2)"),
        ));
    }
    let snapshot = state
        .snapshot()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no_model", "no training job has completed"))?;
    let corpus = state
        .0
        .corpus
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no_corpus", "service was started without a corpus"))?;
    let unprocessable = |e: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "report_failed", e);
    let body = if kind == "table4" {
        let report = action_report(&snapshot.predictions, corpus, &cfg.exclude, cfg.attribution)
            .map_err(|e| unprocessable(e.to_string()))?;
        json!({ "kind": "table4", "job_id": snapshot.job_id, "report": report })
    } else {
        let key: Dimension = q.by.as_deref().unwrap_or("level").parse().map_err(unprocessable)?;
        let weighting: ProportionWeighting = match &q.weighting {
            Some(w) => w.parse().map_err(unprocessable)?,
            None => cfg.proportions,
        };
        let grouped = action_proportions_by(&snapshot.predictions, corpus, key, &cfg.exclude, weighting, &cfg.archives)
            .map_err(|e| unprocessable(e.to_string()))?;
        json!({ "kind": "fig4", "job_id": snapshot.job_id, "proportions": grouped, "plot": grouped.plot_rows() })
    };
    Ok(Json(body).into_response())
}
