use std::collections::{BTreeMap, HashSet};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::rejection::{BytesRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use ucreg_core::chart::{train_and_evaluate, ChartSpec, EvaluationOptions};
use ucreg_core::correlation::build_panorama as correlate;
use ucreg_core::data::{decompose_target, parse_delimiter, Dataset, LoadOptions};
use ucreg_core::logit::{FitConfig, Profile};
use ucreg_core::query::{batch_query, query, similar_cases, QuerySession};
use ucreg_core::radviz::attribute_view;
use ucreg_core::store::{build_panorama, BuildOptions, DatasetFingerprint, PanoramaFile, FILE_EXTENSION};

use crate::{
    ApiError, AppState, ModelEntry, PanoramaEntry, SessionEntry, DATASET_ID_HEADER, MODEL_ID_HEADER, PANORAMA_ID_HEADER,
    SESSION_ID_HEADER,
};

type Shared = State<Arc<AppState>>;
type ApiResult = Result<Response, ApiError>;

fn json<T: Serialize>(value: &T) -> Response {
    let body = serde_json::to_vec(value).expect("export types serialize");
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn with_id(mut response: Response, name: &'static str, id: &str) -> Response {
    let value = HeaderValue::from_str(id).expect("ids are ascii");
    response.headers_mut().insert(HeaderName::from_static(name), value);
    response
}

fn body(raw: Result<Bytes, BytesRejection>) -> Result<Bytes, ApiError> {
    raw.map_err(|e| match e.status() {
        StatusCode::PAYLOAD_TOO_LARGE => ApiError::new(e.status(), "payload_too_large", e.body_text()),
        status => ApiError::new(status, "invalid_body", e.body_text()),
    })
}

fn parse<T: DeserializeOwned>(raw: Result<Bytes, BytesRejection>) -> Result<T, ApiError> {
    serde_json::from_slice(&body(raw)?).map_err(|e| ApiError::bad_request("invalid_json", e.to_string()))
}

fn params<T>(raw: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    raw.map(|Query(q)| q)
        .map_err(|e| ApiError::bad_request("invalid_query", e.body_text()))
}

/// Runs CPU-bound work off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

fn dataset(state: &AppState, id: &str) -> Result<Arc<Dataset>, ApiError> {
    state
        .datasets
        .get(id)
        .map(|d| (*d).clone())
        .ok_or_else(|| ApiError::not_found("dataset", id))
}

fn comma_list(text: Option<&str>) -> Vec<String> {
    text.unwrap_or_default()
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

#[derive(Debug, Default, Deserialize)]
pub struct TableParams {
    delimiter: Option<String>,
    id_column: Option<String>,
    header: Option<bool>,
}

impl TableParams {
    fn load(&self, bytes: &[u8], allow_empty: bool) -> Result<Dataset, ApiError> {
        let mut opts = LoadOptions {
            id_column: self.id_column.clone().filter(|s| !s.is_empty()),
            has_header: self.header.unwrap_or(true),
            allow_empty,
            ..LoadOptions::default()
        };
        if let Some(d) = &self.delimiter {
            opts.delimiter = parse_delimiter(d)
                .ok_or_else(|| ApiError::bad_request("invalid_query", format!("unsupported delimiter `{d}`")))?;
        }
        Dataset::load(bytes, &opts).map_err(|e| ucreg_core::Error::from(e).into())
    }
}

#[derive(Debug, Deserialize)]
pub struct UploadParams {
    #[serde(flatten)]
    table: TableParams,
    target: Option<String>,
}

pub async fn upload_dataset(
    State(state): Shared,
    q: Result<Query<UploadParams>, QueryRejection>,
    raw: Result<Bytes, BytesRejection>,
) -> ApiResult {
    let q = params(q)?;
    let bytes = body(raw)?;
    let ds = blocking(move || {
        let ds = q.table.load(&bytes, false)?;
        match q.target.filter(|t| !t.is_empty()) {
            Some(t) => ds.with_target(&t).map_err(|e| ucreg_core::Error::from(e).into()),
            None => Ok(ds),
        }
    })
    .await?;
    let response = json(&ds.summary());
    let id = state.datasets.insert(Arc::new(ds));
    Ok(with_id(response, DATASET_ID_HEADER, &id))
}

pub async fn dataset_summary(State(state): Shared, Path(id): Path<String>) -> ApiResult {
    Ok(json(&dataset(&state, &id)?.summary()))
}

#[derive(Debug, Deserialize)]
pub struct TargetBody {
    target: String,
}

pub async fn set_target(State(state): Shared, Path(id): Path<String>, raw: Result<Bytes, BytesRejection>) -> ApiResult {
    let TargetBody { target } = parse(raw)?;
    let ds = dataset(&state, &id)?;
    let dec = decompose_target(&ds, &target).map_err(ucreg_core::Error::from)?;
    let updated = (*ds).clone().with_target(&target).map_err(ucreg_core::Error::from)?;
    if !state.datasets.replace(&id, Arc::new(updated)) {
        return Err(ApiError::not_found("dataset", &id));
    }
    Ok(json(&dec.summary()))
}

#[derive(Debug, Deserialize)]
pub struct PanoramaParams {
    #[serde(default)]
    focus: String,
    distortion: Option<f64>,
    /// Comma-separated labels to hide.
    hidden: Option<String>,
    /// Comma-separated attributes to leave out.
    exclude: Option<String>,
    target: Option<String>,
}

pub async fn dataset_panorama(
    State(state): Shared,
    Path(id): Path<String>,
    q: Result<Query<PanoramaParams>, QueryRejection>,
) -> ApiResult {
    let q = params(q)?;
    let ds = dataset(&state, &id)?;
    let view = blocking(move || {
        let target = q
            .target
            .or_else(|| ds.target().map(String::from))
            .ok_or_else(|| ApiError::bad_request("no_target", "dataset has no target; set one or pass `target`"))?;
        let dec = decompose_target(&ds, &target).map_err(ucreg_core::Error::from)?;
        let excluded: HashSet<String> = comma_list(q.exclude.as_deref()).into_iter().collect();
        let panorama = correlate(&ds, &dec, &excluded).map_err(ucreg_core::Error::from)?;
        let hidden = comma_list(q.hidden.as_deref());
        attribute_view(panorama, &ds, &q.focus, &hidden, q.distortion.unwrap_or(1.0))
            .map_err(|e| ucreg_core::Error::from(e).into())
    })
    .await?;
    Ok(json(&view))
}

fn default_split() -> Option<f64> {
    EvaluationOptions::default().split
}

#[derive(Debug, Deserialize)]
pub struct ModelBody {
    dataset: String,
    title: Option<String>,
    target: Option<String>,
    labels: Vec<String>,
    attributes: Vec<String>,
    /// Held-out fraction; `null` evaluates on the training rows.
    #[serde(default = "default_split")]
    split: Option<f64>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    fit: FitConfig,
}

fn chart_spec(ds: &Dataset, title: Option<String>, target: Option<String>, labels: Vec<String>, attributes: Vec<String>) -> Result<ChartSpec, ApiError> {
    let target = target
        .or_else(|| ds.target().map(String::from))
        .ok_or_else(|| ApiError::bad_request("no_target", "dataset has no target; set one or pass `target`"))?;
    Ok(ChartSpec {
        title: title.unwrap_or_else(|| labels.join(" / ")),
        target,
        labels,
        attributes,
    })
}

pub async fn create_model(State(state): Shared, raw: Result<Bytes, BytesRejection>) -> ApiResult {
    let b: ModelBody = parse(raw)?;
    let ds = dataset(&state, &b.dataset)?;
    let spec = chart_spec(&ds, b.title, b.target, b.labels, b.attributes)?;
    let opts = EvaluationOptions {
        split: b.split,
        seed: b.seed,
    };
    let (report, evaluation) = blocking(move || Ok(train_and_evaluate(&ds, &spec, &opts, &b.fit)?)).await?;
    let response = json(&report);
    let id = state.models.insert(ModelEntry { report, evaluation });
    Ok(with_id(response, MODEL_ID_HEADER, &id))
}

pub async fn model_report(State(state): Shared, Path(id): Path<String>) -> ApiResult {
    let m = state.models.get(&id).ok_or_else(|| ApiError::not_found("model", &id))?;
    Ok(json(&m.report))
}

#[derive(Debug, Deserialize)]
pub struct DistortionParams {
    distortion: Option<f64>,
}

pub async fn model_lorrviz(
    State(state): Shared,
    Path(id): Path<String>,
    q: Result<Query<DistortionParams>, QueryRejection>,
) -> ApiResult {
    let q = params(q)?;
    let m = state.models.get(&id).ok_or_else(|| ApiError::not_found("model", &id))?;
    let layout = m.evaluation.lorrviz(q.distortion.unwrap_or(1.0))?;
    Ok(json(&layout))
}

#[derive(Debug, Deserialize)]
pub struct PanoramaBody {
    dataset: String,
    charts: Vec<ChartBody>,
    #[serde(default)]
    fit: FitConfig,
    /// RFC 3339 creation time to record instead of now.
    created: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct ChartBody {
    title: Option<String>,
    target: Option<String>,
    labels: Vec<String>,
    attributes: Vec<String>,
}

fn file_response(pf: &PanoramaFile, id: &str) -> Response {
    let disposition = format!("attachment; filename=\"panorama{FILE_EXTENSION}\"");
    let response = (
        [
            (header::CONTENT_TYPE, "application/json".to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        pf.save(),
    )
        .into_response();
    with_id(response, PANORAMA_ID_HEADER, id)
}

pub async fn create_panorama(State(state): Shared, raw: Result<Bytes, BytesRejection>) -> ApiResult {
    let b: PanoramaBody = parse(raw)?;
    let ds = dataset(&state, &b.dataset)?;
    let specs = b
        .charts
        .into_iter()
        .map(|c| chart_spec(&ds, c.title, c.target, c.labels, c.attributes))
        .collect::<Result<Vec<_>, _>>()?;
    let opts = BuildOptions { created: b.created };
    let attached = ds.clone();
    let pf = blocking(move || Ok(build_panorama(&ds, &specs, &b.fit, &opts)?)).await?;
    let pf = Arc::new(pf);
    let id = state.panoramas.insert(PanoramaEntry {
        file: pf.clone(),
        dataset: Some(attached),
    });
    Ok(file_response(&pf, &id))
}

pub async fn download_panorama(State(state): Shared, Path(id): Path<String>) -> ApiResult {
    let entry = state.panoramas.get(&id).ok_or_else(|| ApiError::not_found("panorama", &id))?;
    Ok(file_response(&entry.file, &id))
}

#[derive(Debug, Deserialize)]
pub struct ImportParams {
    dataset: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ChartInfo {
    title: String,
    labels: Vec<String>,
    attributes: Vec<String>,
    binary: bool,
}

/// What a query client needs to build its input form.
#[derive(Debug, Serialize)]
pub struct PanoramaInfo {
    created: String,
    charts: Vec<ChartInfo>,
    attributes: Vec<String>,
    defaults: Profile,
    fingerprint: Option<DatasetFingerprint>,
    /// Whether the attached dataset matches the fingerprint; absent without one.
    dataset_matches: Option<bool>,
}

pub async fn import_panorama(
    State(state): Shared,
    q: Result<Query<ImportParams>, QueryRejection>,
    raw: Result<Bytes, BytesRejection>,
) -> ApiResult {
    let q = params(q)?;
    let bytes = body(raw)?;
    let attached = q.dataset.as_deref().map(|id| dataset(&state, id)).transpose()?;
    let pf = PanoramaFile::load(&bytes)?;
    let dataset_matches = match (&attached, &pf.fingerprint) {
        (Some(ds), Some(fp)) => Some(DatasetFingerprint::of(ds) == *fp),
        _ => None,
    };
    let info = PanoramaInfo {
        created: pf.created.clone(),
        charts: pf
            .charts
            .iter()
            .map(|c| ChartInfo {
                title: c.spec.title.clone(),
                labels: c.labels(),
                attributes: c.spec.attributes.clone(),
                binary: c.spec.is_binary(),
            })
            .collect(),
        attributes: pf.attributes(),
        defaults: pf.default_profile(),
        fingerprint: pf.fingerprint.clone(),
        dataset_matches,
    };
    let id = state.panoramas.insert(PanoramaEntry {
        file: Arc::new(pf),
        dataset: attached,
    });
    Ok(with_id(json(&info), PANORAMA_ID_HEADER, &id))
}

fn panorama(state: &AppState, id: &str) -> Result<Arc<PanoramaEntry>, ApiError> {
    state.panoramas.get(id).ok_or_else(|| ApiError::not_found("panorama", id))
}

#[derive(Debug, Deserialize)]
pub struct QueryBody {
    panorama: String,
    profile: BTreeMap<String, f64>,
}

pub async fn query_profile(State(state): Shared, raw: Result<Bytes, BytesRejection>) -> ApiResult {
    let b: QueryBody = parse(raw)?;
    let entry = panorama(&state, &b.panorama)?;
    Ok(json(&query(&entry.file, &b.profile)?))
}

#[derive(Debug, Deserialize)]
pub struct StateBody {
    session: Option<String>,
    panorama: Option<String>,
    profile: BTreeMap<String, f64>,
}

fn lock(entry: &SessionEntry) -> std::sync::MutexGuard<'_, QuerySession> {
    // submit_state validates before mutating, so a poisoned session is intact.
    entry.session.lock().unwrap_or_else(|e| e.into_inner())
}

pub async fn submit_state(State(state): Shared, raw: Result<Bytes, BytesRejection>) -> ApiResult {
    let b: StateBody = parse(raw)?;
    if let Some(id) = &b.session {
        let entry = state.sessions.get(id).ok_or_else(|| ApiError::not_found("session", id))?;
        if b.panorama.as_ref().is_some_and(|p| *p != entry.panorama) {
            return Err(ApiError::bad_request("session_mismatch", "session belongs to another panorama"));
        }
        let mut session = lock(&entry);
        session.submit_state(b.profile)?;
        return Ok(with_id(json(&session.snapshot()), SESSION_ID_HEADER, id));
    }
    let pid = b
        .panorama
        .ok_or_else(|| ApiError::bad_request("invalid_json", "either `session` or `panorama` is required"))?;
    let entry = panorama(&state, &pid)?;
    let mut session = QuerySession::new(entry.file.clone());
    session.submit_state(b.profile)?;
    let response = json(&session.snapshot());
    let id = state.sessions.insert(SessionEntry {
        panorama: pid,
        session: Mutex::new(session),
    });
    Ok(with_id(response, SESSION_ID_HEADER, &id))
}

fn session(state: &AppState, id: &str) -> Result<Arc<SessionEntry>, ApiError> {
    state.sessions.get(id).ok_or_else(|| ApiError::not_found("session", id))
}

pub async fn session_snapshot(State(state): Shared, Path(id): Path<String>) -> ApiResult {
    let entry = session(&state, &id)?;
    let snapshot = lock(&entry).snapshot();
    Ok(json(&snapshot))
}

pub async fn session_streamgraph_csv(State(state): Shared, Path(id): Path<String>) -> ApiResult {
    let entry = session(&state, &id)?;
    let csv = lock(&entry).streamgraph_csv();
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
}

#[derive(Debug, Deserialize)]
pub struct BatchParams {
    panorama: String,
    color_by: Option<String>,
    distortion: Option<f64>,
    /// `json` (default) or `csv`.
    format: Option<String>,
    #[serde(flatten)]
    table: TableParams,
}

pub async fn batch(
    State(state): Shared,
    q: Result<Query<BatchParams>, QueryRejection>,
    raw: Result<Bytes, BytesRejection>,
) -> ApiResult {
    let q = params(q)?;
    let bytes = body(raw)?;
    let entry = panorama(&state, &q.panorama)?;
    let csv = match q.format.as_deref() {
        None | Some("json") => false,
        Some("csv") => true,
        Some(other) => return Err(ApiError::bad_request("invalid_query", format!("unknown format `{other}`"))),
    };
    blocking(move || {
        let table = q.table.load(&bytes, true)?;
        let color_by = q.color_by.as_deref().filter(|c| !c.is_empty());
        let result = batch_query(&entry.file, &table, color_by, q.distortion.unwrap_or(1.0))?;
        Ok(if csv {
            ([(header::CONTENT_TYPE, "text/csv")], result.to_csv(table.row_ids())).into_response()
        } else {
            json(&result)
        })
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct SimilarParams {
    session: String,
    chart: String,
    top_n: Option<usize>,
    /// Dataset to search instead of the one attached to the panorama.
    dataset: Option<String>,
    #[serde(default)]
    allow_stale: bool,
}

pub const DEFAULT_TOP_N: usize = 10;

pub async fn similar(State(state): Shared, q: Result<Query<SimilarParams>, QueryRejection>) -> ApiResult {
    let q = params(q)?;
    let entry = session(&state, &q.session)?;
    let (pf, profile) = {
        let s = lock(&entry);
        let profile = s
            .last_profile()
            .cloned()
            .ok_or_else(|| ApiError::bad_request("no_state", "session has no submitted profile"))?;
        (s.panorama().clone(), profile)
    };
    let ds = match &q.dataset {
        Some(id) => Some(dataset(&state, id)?),
        None => state.panoramas.get(&entry.panorama).and_then(|p| p.dataset.clone()),
    };
    let chart = pf.chart(&q.chart)?;
    let result = similar_cases(
        ds.as_deref(),
        pf.fingerprint.as_ref(),
        &profile,
        chart,
        q.top_n.unwrap_or(DEFAULT_TOP_N),
    )?;
    if result.stale_dataset && !q.allow_stale {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "stale_dataset",
            "attached dataset differs from the one the panorama was trained on; pass allow_stale=true to proceed",
        ));
    }
    Ok(json(&result))
}
