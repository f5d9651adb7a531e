//! HTTP/JSON service over a [`Catalog`], versioned under `/v1`.
//!
//! | Method | Path | Body / query | Response |
//! |---|---|---|---|
//! | `POST` | `/v1/models` | multipart `file` + `domain`, `url`, `name`, `description`, `tags`, `format` | [`IngestOutcome`] (201 when created) |
//! | `GET` | `/v1/models` | | [`ModelList`] of active models |
//! | `GET` | `/v1/models/{id}` | | [`ModelResponse`] |
//! | `GET` | `/v1/models/{id}/related` | | [`RelatedResponse`] |
//! | `DELETE` | `/v1/models/{id}` | | [`DeleteResponse`] |
//! | `POST` | `/v1/search/similar`, `/v1/search/pip` | multipart `file` + `k`, filters | [`SearchResponse`] |
//! | `GET` | `/v1/search/text` | `q`, `k`, filters | [`SearchResponse`] |
//! | `GET` | `/v1/stats` | | [`CatalogStats`] |
//! | `GET` | `/v1/healthz` | | `{"status":"ok"}` |
//!
//! Filters are `watertight`, `normals`, `filetype` and `source`; an absent
//! filter does not constrain. Errors are `{"error":{"code":..,"message":..}}`
//! with status 400 (invalid input), 404 (unknown id), 410 (taken down), 413
//! (upload too large) or 503 (store unavailable).

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};

use axum::extract::multipart::{Multipart, MultipartError, MultipartRejection};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::catalog::{
    Catalog, CatalogError, CatalogStats, FormatHint, IngestOutcome, IngestStatus, Lifecycle,
    ModelRecord, SourceMeta, VersionChain,
};
use crate::search::{Filters, SearchError, SearchMode, SearchQuery, SearchResult};
use crate::ModelId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApiConfig {
    pub bind: SocketAddr,
    pub max_upload_bytes: usize,
    /// Size of each precomputed related-models list.
    pub related_k: usize,
    /// `k` for searches that do not give one.
    pub default_k: usize,
    /// Save the catalog after every mutation (if it has a store).
    pub persist: bool,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            max_upload_bytes: 64 << 20,
            related_k: 10,
            default_k: 10,
            persist: true,
        }
    }
}

impl ApiConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_upload_bytes == 0 || self.related_k == 0 || self.default_k == 0 {
            return Err("upload limit and k values must be positive".into());
        }
        Ok(())
    }
}

/// Error response with a machine-readable code.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

impl ApiError {
    pub fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.into(),
            message: message.into(),
        }
    }

    fn bad(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn unavailable(message: impl Into<String>) -> Self {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "store-unavailable",
            message,
        )
    }

    fn multipart(e: MultipartError) -> Self {
        let status = e.status();
        let code = if status == StatusCode::PAYLOAD_TOO_LARGE {
            "too-large"
        } else {
            "bad-multipart"
        };
        ApiError::new(status, code, e.body_text())
    }
}

impl From<CatalogError> for ApiError {
    fn from(e: CatalogError) -> Self {
        let status = match &e {
            CatalogError::UnknownModel(_) => StatusCode::NOT_FOUND,
            CatalogError::Gone(_) => StatusCode::GONE,
            CatalogError::Storage(_) | CatalogError::Persist(_) | CatalogError::Export { .. } => {
                StatusCode::SERVICE_UNAVAILABLE
            }
            e if e.is_user_error() => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        ApiError::bad(e.code(), e.to_string())
    }
}

impl From<MultipartRejection> for ApiError {
    fn from(e: MultipartRejection) -> Self {
        ApiError::new(e.status(), "bad-multipart", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code,
                message: self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatedEntry {
    pub model_id: ModelId,
    pub score: f64,
}

/// Precomputed similar models per model. Entries are dropped whenever index
/// membership or bags change, so no entry can name a removed model.
#[derive(Debug, Default)]
pub struct RelatedCache {
    entries: HashMap<ModelId, Vec<RelatedEntry>>,
}

impl RelatedCache {
    pub fn get(&self, id: &ModelId) -> Option<&Vec<RelatedEntry>> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Whether any cached list (or key) mentions `id`.
    pub fn mentions(&self, id: &ModelId) -> bool {
        self.entries
            .iter()
            .any(|(k, v)| k == id || v.iter().any(|e| &e.model_id == id))
    }

    fn clear(&mut self) {
        self.entries.clear();
    }

    fn compute(
        &mut self,
        catalog: &Catalog,
        id: &ModelId,
        k: usize,
    ) -> Result<Vec<RelatedEntry>, CatalogError> {
        if let Some(hit) = self.entries.get(id) {
            return Ok(hit.clone());
        }
        let list: Vec<RelatedEntry> = catalog
            .related(id, k)?
            .into_iter()
            .map(|r| RelatedEntry {
                model_id: r.model_id,
                score: r.score,
            })
            .collect();
        self.entries.insert(id.clone(), list.clone());
        Ok(list)
    }
}

/// Shared service state: the catalog behind a single-writer lock and the
/// related-models cache.
#[derive(Debug)]
pub struct AppState {
    catalog: RwLock<Catalog>,
    related: Mutex<RelatedCache>,
    config: ApiConfig,
}

impl AppState {
    pub fn new(catalog: Catalog, config: ApiConfig) -> Arc<AppState> {
        Arc::new(AppState {
            catalog: RwLock::new(catalog),
            related: Mutex::new(RelatedCache::default()),
            config,
        })
    }

    pub fn config(&self) -> &ApiConfig {
        &self.config
    }

    pub fn read(&self) -> Result<RwLockReadGuard<'_, Catalog>, ApiError> {
        self.catalog
            .read()
            .map_err(|_| ApiError::unavailable("catalog lock poisoned"))
    }

    fn write(&self) -> Result<RwLockWriteGuard<'_, Catalog>, ApiError> {
        self.catalog
            .write()
            .map_err(|_| ApiError::unavailable("catalog lock poisoned"))
    }

    pub fn related_cache(&self) -> std::sync::MutexGuard<'_, RelatedCache> {
        self.related.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn save(&self, catalog: &mut Catalog) -> Result<(), ApiError> {
        if self.config.persist && catalog.root().is_some() {
            catalog
                .persist()
                .map_err(|e| ApiError::unavailable(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub record: ModelRecord,
    pub versions: Option<VersionChain>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub id: ModelId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelList {
    pub models: Vec<ModelSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatedResponse {
    pub model_id: ModelId,
    pub results: Vec<RelatedEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeleteResponse {
    pub model_id: ModelId,
    pub lifecycle: Lifecycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub mode: SearchMode,
    pub k: usize,
    pub results: Vec<SearchResult>,
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

struct Upload {
    file: Option<(Vec<u8>, Option<String>)>,
    fields: HashMap<String, String>,
}

async fn read_multipart(mp: Result<Multipart, MultipartRejection>) -> Result<Upload, ApiError> {
    let mut mp = mp?;
    let mut up = Upload {
        file: None,
        fields: HashMap::new(),
    };
    while let Some(field) = mp.next_field().await.map_err(ApiError::multipart)? {
        let name = field.name().unwrap_or_default().to_string();
        if name == "file" {
            let filename = field.file_name().map(str::to_string);
            let bytes = field.bytes().await.map_err(ApiError::multipart)?;
            up.file = Some((bytes.to_vec(), filename));
        } else {
            let text = field.text().await.map_err(ApiError::multipart)?;
            up.fields.insert(name, text);
        }
    }
    Ok(up)
}

fn require_file(up: &mut Upload) -> Result<(Vec<u8>, Option<FormatHint>), ApiError> {
    let (bytes, filename) = up
        .file
        .take()
        .ok_or_else(|| ApiError::bad("missing-file", "multipart field 'file' is required"))?;
    let hint = match up.fields.get("format").filter(|f| !f.is_empty()) {
        Some(f) => Some(f.parse::<FormatHint>()?),
        None => match &filename {
            Some(name) => FormatHint::from_name(name)?,
            None => None,
        },
    };
    Ok((bytes, hint))
}

fn tri_state(params: &HashMap<String, String>, key: &str) -> Result<Option<bool>, ApiError> {
    match params.get(key).map(String::as_str) {
        None | Some("") | Some("any") => Ok(None),
        Some("true") | Some("1") => Ok(Some(true)),
        Some("false") | Some("0") => Ok(Some(false)),
        Some(other) => Err(ApiError::bad(
            "invalid-filter",
            format!("{key} must be true or false, got {other:?}"),
        )),
    }
}

fn non_empty(params: &HashMap<String, String>, key: &str) -> Option<String> {
    params.get(key).filter(|v| !v.is_empty()).cloned()
}

fn filters_from(params: &HashMap<String, String>) -> Result<Filters, ApiError> {
    Ok(Filters {
        watertight: tri_state(params, "watertight")?,
        consistent_normals: tri_state(params, "normals")?,
        filetype: non_empty(params, "filetype"),
        source: non_empty(params, "source"),
    })
}

fn k_from(params: &HashMap<String, String>, default: usize) -> Result<usize, ApiError> {
    match params.get("k").filter(|v| !v.is_empty()) {
        None => Ok(default),
        Some(v) => match v.parse::<usize>() {
            Ok(k) if k > 0 => Ok(k),
            _ => Err(ApiError::bad(
                "invalid-k",
                format!("k must be a positive integer, got {v:?}"),
            )),
        },
    }
}

async fn post_model(
    State(st): State<Arc<AppState>>,
    mp: Result<Multipart, MultipartRejection>,
) -> Result<(StatusCode, Json<IngestOutcome>), ApiError> {
    let mut up = read_multipart(mp).await?;
    let filename = up.file.as_ref().and_then(|f| f.1.clone());
    let (bytes, hint) = require_file(&mut up)?;
    let field = |k: &str| up.fields.get(k).cloned().unwrap_or_default();
    let name = non_empty(&up.fields, "name")
        .or(filename)
        .unwrap_or_default();
    let source = SourceMeta {
        domain: non_empty(&up.fields, "domain").unwrap_or_else(|| "upload".into()),
        url: non_empty(&up.fields, "url"),
        name,
        description: field("description"),
        tags: field("tags")
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect(),
        actor: field("actor"),
    };
    blocking(move || {
        let mut cat = st.write()?;
        let out = cat.ingest(&bytes, hint, &source)?;
        if out.status == IngestStatus::Created {
            let mut cache = st.related_cache();
            cache.clear();
            cache.compute(&cat, &out.record.id, st.config.related_k)?;
        }
        if out.status != IngestStatus::Unchanged {
            st.save(&mut cat)?;
        }
        let status = match out.status {
            IngestStatus::Created => StatusCode::CREATED,
            _ => StatusCode::OK,
        };
        Ok((status, Json(out)))
    })
    .await
}

async fn list_models(State(st): State<Arc<AppState>>) -> Result<Json<ModelList>, ApiError> {
    let cat = st.read()?;
    Ok(Json(ModelList {
        models: cat
            .active_records()
            .map(|r| ModelSummary {
                id: r.id.clone(),
                name: r.name.clone(),
            })
            .collect(),
    }))
}

async fn get_model(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<ModelResponse>, ApiError> {
    let id = ModelId::new(id);
    let cat = st.read()?;
    let record = cat.active(&id)?.clone();
    Ok(Json(ModelResponse {
        versions: cat.versions(&id).cloned(),
        record,
    }))
}

async fn get_related(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<RelatedResponse>, ApiError> {
    let id = ModelId::new(id);
    blocking(move || {
        let cat = st.read()?;
        cat.active(&id)?;
        let results = st.related_cache().compute(&cat, &id, st.config.related_k)?;
        Ok(Json(RelatedResponse {
            model_id: id,
            results,
        }))
    })
    .await
}

async fn delete_model(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<DeleteResponse>, ApiError> {
    let id = ModelId::new(id);
    blocking(move || {
        let mut cat = st.write()?;
        cat.take_down(&id, "api")?;
        st.related_cache().clear();
        st.save(&mut cat)?;
        Ok(Json(DeleteResponse {
            model_id: id,
            lifecycle: Lifecycle::TakenDown,
        }))
    })
    .await
}

async fn geometric_search(
    st: Arc<AppState>,
    mode: SearchMode,
    query: HashMap<String, String>,
    mp: Result<Multipart, MultipartRejection>,
) -> Result<Json<SearchResponse>, ApiError> {
    let mut up = read_multipart(mp).await?;
    let mut params = query;
    params.extend(up.fields.drain());
    let (bytes, hint) = require_file(&mut up)?;
    let k = k_from(&params, st.config.default_k)?;
    let filters = filters_from(&params)?;
    blocking(move || {
        let cat = st.read()?;
        let bag = cat.query_bag(&bytes, hint)?;
        let q = SearchQuery {
            mode,
            ..SearchQuery::similar(bag, k)
        }
        .with_filters(filters);
        let results = cat.search(&q)?;
        Ok(Json(SearchResponse { mode, k, results }))
    })
    .await
}

async fn search_similar(
    State(st): State<Arc<AppState>>,
    Query(query): Query<HashMap<String, String>>,
    mp: Result<Multipart, MultipartRejection>,
) -> Result<Json<SearchResponse>, ApiError> {
    geometric_search(st, SearchMode::Similar, query, mp).await
}

async fn search_pip(
    State(st): State<Arc<AppState>>,
    Query(query): Query<HashMap<String, String>>,
    mp: Result<Multipart, MultipartRejection>,
) -> Result<Json<SearchResponse>, ApiError> {
    geometric_search(st, SearchMode::Pip, query, mp).await
}

async fn search_text(
    State(st): State<Arc<AppState>>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<SearchResponse>, ApiError> {
    let text = params
        .get("q")
        .cloned()
        .ok_or_else(|| ApiError::bad("missing-input", "query parameter q is required"))?;
    let k = k_from(&params, st.config.default_k)?;
    let filters = filters_from(&params)?;
    let cat = st.read()?;
    let results = cat.search(&SearchQuery::text(text, k).with_filters(filters))?;
    Ok(Json(SearchResponse {
        mode: SearchMode::Text,
        k,
        results,
    }))
}

async fn stats(State(st): State<Arc<AppState>>) -> Result<Json<CatalogStats>, ApiError> {
    Ok(Json(st.read()?.stats()))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not-found", "no such endpoint")
}

/// The `/v1` routes over shared state.
pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_upload_bytes;
    let v1 = Router::new()
        .route("/models", post(post_model).get(list_models))
        .route("/models/{id}", get(get_model).delete(delete_model))
        .route("/models/{id}/related", get(get_related))
        .route("/search/similar", post(search_similar))
        .route("/search/pip", post(search_pip))
        .route("/search/text", get(search_text))
        .route("/stats", get(stats))
        .route("/healthz", get(healthz))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state);
    Router::new().nest("/v1", v1).fallback(not_found)
}

/// Serves until `shutdown` resolves.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Binds `config.bind` and serves until Ctrl-C.
pub async fn serve(config: ApiConfig, catalog: Catalog) -> std::io::Result<()> {
    config
        .validate()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let state = AppState::new(catalog, config);
    serve_on(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
