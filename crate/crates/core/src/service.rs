//! HTTP query service over the profile store.
//!
//! Endpoints: `GET /health`, `GET /profiles/{key}`, `GET /search`,
//! `POST /ingest`, `GET /sources`, `GET /categories`. Bodies are JSON;
//! `/profiles/{key}` answers `Accept: text/plain` with the KEY/SOURCE block.
//!
//! `/search` is read-through cached. The cache state travels in the
//! `X-Cache` header (`hit` or `miss`) so that the body of a hit is the body
//! the miss produced.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeSet;
use std::hash::{Hash, Hasher};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, NaiveDate, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::data;
use crate::extract::{extract_descriptions, normalize_key, run_pipeline, CandidateReport, DescriptionKind};
use crate::lexdb::{Categorization, LexDb};
use crate::store::{export_profile, Observation, ProfileEntry, ProfileStore, StoreError};
use crate::text::{self, parse_corpus, tokenize, TaggedDoc, Tagger};

pub const ENV_ADDRESS: &str = "PROFILE_ADDRESS";
pub const ENV_STORE: &str = "PROFILE_STORE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    LocalDirectory,
    HttpFetch,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Tagged,
    #[default]
    Plain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub name: String,
    pub kind: SourceKind,
    pub location: String,
    #[serde(default)]
    pub format: SourceFormat,
}

fn default_address() -> String {
    "127.0.0.1:8080".into()
}

fn default_store() -> PathBuf {
    PathBuf::from("profile-store")
}

fn default_cache_size() -> usize {
    256
}

fn default_fetch_limit() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_address")]
    pub address: String,
    #[serde(default = "default_store")]
    pub store: PathBuf,
    #[serde(default = "default_cache_size")]
    pub cache_size: usize,
    /// Upper bound on articles read by one search fallback.
    #[serde(default = "default_fetch_limit")]
    pub fetch_limit: usize,
    #[serde(default)]
    pub sources: Vec<SourceConfig>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            address: default_address(),
            store: default_store(),
            cache_size: default_cache_size(),
            fetch_limit: default_fetch_limit(),
            sources: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Io(PathBuf, String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("duplicate source {0:?}")]
    DuplicateSource(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: ServiceConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative store and directory paths are taken
    /// relative to the file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e.to_string()))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if config.store.is_relative() {
            config.store = base.join(&config.store);
        }
        for source in &mut config.sources {
            if source.kind == SourceKind::LocalDirectory && Path::new(&source.location).is_relative() {
                source.location = base.join(&source.location).display().to_string();
            }
        }
        Ok(config)
    }

    /// Applies `PROFILE_ADDRESS` and `PROFILE_STORE`.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(address) = std::env::var(ENV_ADDRESS) {
            self.address = address;
        }
        if let Ok(store) = std::env::var(ENV_STORE) {
            self.store = PathBuf::from(store);
        }
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut seen = BTreeSet::new();
        for s in &self.sources {
            if s.name.trim().is_empty() {
                return Err(ConfigError::Invalid("source with empty name".into()));
            }
            if !seen.insert(s.name.as_str()) {
                return Err(ConfigError::DuplicateSource(s.name.clone()));
            }
            if s.kind == SourceKind::HttpFetch && !s.location.starts_with("http://") {
                return Err(ConfigError::Invalid(format!("source {:?}: only http:// URLs are supported", s.name)));
            }
        }
        if self.cache_size == 0 {
            return Err(ConfigError::Invalid("cache_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn source(&self, name: &str) -> Option<&SourceConfig> {
        self.sources.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot bind {address}: {message}")]
    Bind { address: String, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("server error: {0}")]
    Server(String),
}

// ---------------------------------------------------------------------------
// fetching

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchError {
    pub source: String,
    pub message: String,
}

fn fetch_error(source: &SourceConfig, message: impl ToString) -> FetchError {
    FetchError {
        source: source.name.clone(),
        message: message.to_string(),
    }
}

fn docs_from_text(text: &str, origin: &str, source: &SourceConfig, tagger: &Tagger) -> Result<Vec<TaggedDoc>, FetchError> {
    match source.format {
        SourceFormat::Tagged => parse_corpus(text).map_err(|e| fetch_error(source, format!("{origin}: {e}"))),
        SourceFormat::Plain => {
            text::read_document_text(text, Path::new(origin), &source.name, tagger).map_err(|e| fetch_error(source, e))
        }
    }
}

async fn read_local(source: &SourceConfig, limit: Option<usize>, tagger: &Tagger) -> Result<Vec<TaggedDoc>, FetchError> {
    let dir = PathBuf::from(&source.location);
    let mut files = Vec::new();
    let mut entries = tokio::fs::read_dir(&dir).await.map_err(|e| fetch_error(source, format!("{}: {e}", dir.display())))?;
    while let Some(entry) = entries.next_entry().await.map_err(|e| fetch_error(source, e))? {
        let path = entry.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    if let Some(limit) = limit {
        files.truncate(limit);
    }
    let mut docs = Vec::new();
    for file in files {
        let text = tokio::fs::read_to_string(&file).await.map_err(|e| fetch_error(source, format!("{}: {e}", file.display())))?;
        docs.extend(docs_from_text(&text, &file.display().to_string(), source, tagger)?);
    }
    Ok(docs)
}

async fn read_http(source: &SourceConfig, client: &reqwest::Client, tagger: &Tagger) -> Result<Vec<TaggedDoc>, FetchError> {
    let response = client.get(&source.location).send().await.map_err(|e| fetch_error(source, e))?;
    let status = response.status();
    if !status.is_success() {
        return Err(fetch_error(source, format!("{} returned {status}", source.location)));
    }
    let body = response.text().await.map_err(|e| fetch_error(source, e))?;
    let origin = source.location.rsplit('/').find(|s| !s.is_empty()).unwrap_or(&source.name);
    docs_from_text(&body, origin, source, tagger)
}

/// Reads every document of a source, up to `limit` files for directories.
pub async fn fetch_documents(
    source: &SourceConfig,
    limit: Option<usize>,
    client: &reqwest::Client,
    tagger: &Tagger,
) -> Result<Vec<TaggedDoc>, FetchError> {
    match source.kind {
        SourceKind::LocalDirectory => read_local(source, limit, tagger).await,
        SourceKind::HttpFetch => read_http(source, client, tagger).await,
    }
}

/// Descriptions of one entity pulled from the given sources. Failing sources
/// are reported, not fatal.
pub async fn fetch_and_extract(
    entity: &[String],
    sources: &[SourceConfig],
    fetch_limit: usize,
    client: &reqwest::Client,
    tagger: &Tagger,
    lex: &LexDb,
) -> (Vec<Observation>, Vec<FetchError>) {
    let mut docs = Vec::new();
    let mut errors = Vec::new();
    for source in sources {
        let remaining = fetch_limit.saturating_sub(docs.len());
        if remaining == 0 {
            break;
        }
        match fetch_documents(source, Some(remaining), client, tagger).await {
            Ok(mut got) => {
                got.truncate(remaining);
                docs.extend(got);
            }
            Err(e) => errors.push(e),
        }
    }
    let found = match extract_descriptions(entity, &docs, data::noun_phrase_grammar()) {
        Ok(found) => found,
        Err(e) => {
            errors.push(FetchError {
                source: String::new(),
                message: e.to_string(),
            });
            Vec::new()
        }
    };
    let observations = found
        .into_iter()
        .map(|d| {
            let categories = lex.categorize(&d.tokens);
            Observation::from(&crate::extract::CategorizedDescription { description: d, categories })
        })
        .collect();
    (observations, errors)
}

// ---------------------------------------------------------------------------
// cache

/// Canonical form of a search; equal requests share one cache slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SearchRequest {
    pub entity: Vec<String>,
    pub key: String,
    pub categories: Vec<String>,
    pub max: Option<usize>,
    pub sources: Vec<String>,
    pub fetch_limit: usize,
}

impl SearchRequest {
    pub fn new(entity: &str, categories: &[String], max: Option<usize>, sources: &[String], fetch_limit: usize) -> Self {
        let words = tokenize(entity);
        let canon = |xs: &[String]| -> Vec<String> {
            xs.iter()
                .map(|x| x.trim().to_string())
                .filter(|x| !x.is_empty())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        };
        SearchRequest {
            key: normalize_key(&words.join(" ")),
            entity: words,
            categories: canon(categories),
            max,
            sources: canon(sources),
            fetch_limit,
        }
    }

    fn cache_key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}",
            self.key,
            self.categories.join(","),
            self.max.map(|m| m.to_string()).unwrap_or_default(),
            self.sources.join(","),
            self.fetch_limit
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryRecord {
    pub request: SearchRequest,
    pub issued_at: DateTime<Utc>,
    pub result_hash: String,
}

#[derive(Debug, Clone)]
struct CachedResponse {
    record: QueryRecord,
    status: u16,
    body: Arc<str>,
}

/// Bounded map with least-recently-used eviction.
#[derive(Debug)]
struct QueryCache {
    capacity: usize,
    entries: IndexMap<String, CachedResponse>,
}

impl QueryCache {
    fn new(capacity: usize) -> Self {
        QueryCache {
            capacity,
            entries: IndexMap::new(),
        }
    }

    fn get(&mut self, key: &str) -> Option<CachedResponse> {
        let i = self.entries.get_index_of(key)?;
        let last = self.entries.len() - 1;
        self.entries.move_index(i, last);
        self.entries.get_index(last).map(|(_, v)| v.clone())
    }

    fn insert(&mut self, key: String, value: CachedResponse) {
        self.entries.shift_remove(&key);
        while self.entries.len() >= self.capacity {
            self.entries.shift_remove_index(0);
        }
        self.entries.insert(key, value);
    }

    fn invalidate(&mut self, profile_key: &str) {
        self.entries.retain(|_, v| v.record.request.key != profile_key);
    }
}

// ---------------------------------------------------------------------------
// service

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Store,
    Fetched,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub description: String,
    pub kind: Option<DescriptionKind>,
    pub categories: Vec<Categorization>,
    pub frequency: u64,
    pub source: String,
    pub first_seen: NaiveDate,
    pub last_seen: NaiveDate,
}

impl From<ProfileEntry> for SearchHit {
    fn from(e: ProfileEntry) -> Self {
        SearchHit {
            description: e.surface,
            kind: e.kind,
            categories: e.categories,
            frequency: e.frequency,
            source: e.source,
            first_seen: e.first_seen,
            last_seen: e.last_seen,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub key: String,
    pub categories: Vec<String>,
    pub max: Option<usize>,
    pub sources: Vec<String>,
    pub origin: Origin,
    pub results: Vec<SearchHit>,
    pub warnings: Vec<FetchError>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub status: u16,
    pub body: Arc<str>,
    pub cache_hit: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub source: String,
    pub documents: usize,
    pub candidates: CandidateReport,
    pub entities: usize,
    pub descriptions: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("unknown source {0:?}")]
    UnknownSource(String),
    #[error("an ingest is already running")]
    Busy,
    #[error("fetch failed for {}: {}", .0.source, .0.message)]
    Fetch(FetchError),
    #[error("{0}")]
    Pipeline(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Everything the endpoints share. Usable without HTTP.
pub struct Service {
    config: ServiceConfig,
    lex: LexDb,
    tagger: Tagger,
    client: reqwest::Client,
    // Lock order: store, then cache.
    store: RwLock<ProfileStore>,
    cache: Mutex<QueryCache>,
    ingest_lock: tokio::sync::Mutex<()>,
}

impl Service {
    pub fn new(config: ServiceConfig, store: ProfileStore, lex: LexDb) -> Result<Self, ServiceError> {
        config.validate()?;
        Ok(Service {
            cache: Mutex::new(QueryCache::new(config.cache_size)),
            config,
            lex,
            tagger: Tagger::shipped(),
            client: reqwest::Client::new(),
            store: RwLock::new(store),
            ingest_lock: tokio::sync::Mutex::new(()),
        })
    }

    /// Opens the configured store with the bundled lexical data.
    pub fn open(config: ServiceConfig) -> Result<Self, ServiceError> {
        let lex = LexDb::shipped();
        let store = ProfileStore::open(&config.store, lex.categories())?;
        Self::new(config, store, lex)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn with_store<R>(&self, f: impl FnOnce(&ProfileStore) -> R) -> R {
        f(&self.store.read().expect("store lock"))
    }

    pub fn categories(&self) -> Vec<String> {
        self.with_store(|s| s.categories().map(String::from).collect())
    }

    pub fn upsert_all(&self, observations: Vec<Observation>) -> Result<Vec<String>, StoreError> {
        let mut store = self.store.write().expect("store lock");
        let touched = store.upsert_batch(observations)?;
        let mut cache = self.cache.lock().expect("cache lock");
        for key in &touched {
            cache.invalidate(key);
        }
        Ok(touched)
    }

    pub fn commit(&self) -> Result<(), StoreError> {
        self.store.write().expect("store lock").commit()
    }

    /// Status, JSON body and number of results.
    fn respond(
        &self,
        store: &ProfileStore,
        req: &SearchRequest,
        origin: Origin,
        warnings: Vec<FetchError>,
    ) -> Result<(u16, String, usize), SearchError> {
        let filter = (!req.categories.is_empty()).then_some(req.categories.as_slice());
        let results = store.query(&req.key, filter, req.max).map_err(|e| match e {
            StoreError::UnknownCategory(c) => SearchError::BadRequest(format!("unknown category {c:?}")),
            StoreError::InvalidMax => SearchError::BadRequest("max must be at least 1".into()),
            other => SearchError::Store(other),
        })?;
        let status = if warnings.is_empty() { 200 } else { 502 };
        let count = results.len();
        let body = SearchResponse {
            key: req.key.clone(),
            categories: req.categories.clone(),
            max: req.max,
            sources: req.sources.clone(),
            origin,
            results: results.into_iter().map(SearchHit::from).collect(),
            warnings,
        };
        Ok((status, serde_json::to_string(&body).expect("response serializes"), count))
    }

    fn remember(&self, req: &SearchRequest, status: u16, body: &str) -> CachedResponse {
        let mut h = DefaultHasher::new();
        body.hash(&mut h);
        CachedResponse {
            record: QueryRecord {
                request: req.clone(),
                issued_at: Utc::now(),
                result_hash: format!("{:016x}", h.finish()),
            },
            status,
            body: Arc::from(body),
        }
    }

    /// Answers from the cache, else from the store, else from the requested
    /// sources (storing what they yield).
    pub async fn search(&self, req: &SearchRequest) -> Result<SearchOutcome, SearchError> {
        if req.key.is_empty() {
            return Err(SearchError::BadRequest("entity must not be empty".into()));
        }
        if let Some(bad) = req.sources.iter().find(|s| self.config.source(s).is_none()) {
            return Err(SearchError::BadRequest(format!("unknown source {bad:?}")));
        }
        let cache_key = req.cache_key();
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&cache_key) {
            return Ok(SearchOutcome {
                status: hit.status,
                body: hit.body,
                cache_hit: true,
            });
        }

        {
            let store = self.store.read().expect("store lock");
            let (status, body, count) = self.respond(&store, req, Origin::Store, Vec::new())?;
            if count > 0 || req.sources.is_empty() {
                let cached = self.remember(req, status, &body);
                self.cache.lock().expect("cache lock").insert(cache_key, cached.clone());
                return Ok(SearchOutcome {
                    status,
                    body: cached.body,
                    cache_hit: false,
                });
            }
        }

        let sources: Vec<SourceConfig> = req.sources.iter().filter_map(|s| self.config.source(s).cloned()).collect();
        let (observations, warnings) =
            fetch_and_extract(&req.entity, &sources, req.fetch_limit, &self.client, &self.tagger, &self.lex).await;
        if !observations.is_empty() {
            self.upsert_all(observations)?;
        }

        let store = self.store.read().expect("store lock");
        let failed = !warnings.is_empty();
        let (status, body, _) = self.respond(&store, req, Origin::Fetched, warnings)?;
        let cached = self.remember(req, status, &body);
        if !failed {
            self.cache.lock().expect("cache lock").insert(cache_key, cached.clone());
        }
        Ok(SearchOutcome {
            status,
            body: cached.body,
            cache_hit: false,
        })
    }

    /// Runs the full pipeline over one configured source and stores the
    /// results. Only one ingest runs at a time.
    pub async fn ingest(self: &Arc<Self>, source: &str) -> Result<IngestReport, IngestError> {
        let cfg = self
            .config
            .source(source)
            .cloned()
            .ok_or_else(|| IngestError::UnknownSource(source.to_string()))?;
        let _guard = self.ingest_lock.try_lock().map_err(|_| IngestError::Busy)?;
        let docs = fetch_documents(&cfg, None, &self.client, &self.tagger)
            .await
            .map_err(IngestError::Fetch)?;
        let documents = docs.len();
        let svc = Arc::clone(self);
        let output = tokio::task::spawn_blocking(move || run_pipeline(&docs, &svc.lex, data::noun_phrase_grammar()))
            .await
            .map_err(|e| IngestError::Pipeline(e.to_string()))?
            .map_err(|e| IngestError::Pipeline(e.to_string()))?;
        let observations: Vec<Observation> = output.descriptions.iter().map(Observation::from).collect();
        let descriptions = observations.len();
        self.upsert_all(observations)?;
        self.commit()?;
        tracing::info!(source, documents, descriptions, "ingest finished");
        Ok(IngestReport {
            source: source.to_string(),
            documents,
            candidates: output.report,
            entities: output.entities.len(),
            descriptions,
        })
    }
}

// ---------------------------------------------------------------------------
// HTTP

fn error_body(status: StatusCode, message: impl ToString) -> Response {
    (status, Json(serde_json::json!({ "error": message.to_string() }))).into_response()
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn profile(State(svc): State<Arc<Service>>, UrlPath(key): UrlPath<String>, headers: HeaderMap) -> Response {
    let wants_text = headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("text/plain"));
    svc.with_store(|store| match store.get(&key) {
        None => error_body(StatusCode::NOT_FOUND, format!("no profile for {:?}", normalize_key(&key))),
        Some(p) if wants_text => ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], export_profile(p)).into_response(),
        Some(p) => Json(p).into_response(),
    })
}

fn split_list(v: Option<&String>) -> Vec<String> {
    v.map(|s| s.split(',').map(str::to_string).collect()).unwrap_or_default()
}

async fn search(State(svc): State<Arc<Service>>, Query(params): Query<std::collections::HashMap<String, String>>) -> Response {
    let entity = params.get("entity").map(String::as_str).unwrap_or("");
    let parse_count = |name: &str| -> Result<Option<usize>, String> {
        match params.get(name).map(|s| s.trim()).filter(|s| !s.is_empty()) {
            None => Ok(None),
            Some(v) => match v.parse::<usize>() {
                Ok(n) if n >= 1 => Ok(Some(n)),
                _ => Err(format!("{name} must be a positive integer")),
            },
        }
    };
    let (max, fetch_limit) = match (parse_count("max"), parse_count("fetch_limit")) {
        (Ok(m), Ok(f)) => (m, f.unwrap_or(svc.config.fetch_limit)),
        (Err(m), _) | (_, Err(m)) => return error_body(StatusCode::BAD_REQUEST, m),
    };
    let req = SearchRequest::new(entity, &split_list(params.get("categories")), max, &split_list(params.get("sources")), fetch_limit);
    match svc.search(&req).await {
        Ok(out) => {
            let status = StatusCode::from_u16(out.status).unwrap_or(StatusCode::OK);
            let cache = if out.cache_hit { "hit" } else { "miss" };
            (
                status,
                [(header::CONTENT_TYPE, "application/json"), (header::HeaderName::from_static("x-cache"), cache)],
                out.body.to_string(),
            )
                .into_response()
        }
        Err(SearchError::BadRequest(m)) => error_body(StatusCode::BAD_REQUEST, m),
        Err(e) => error_body(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

#[derive(Debug, Deserialize)]
struct IngestBody {
    source: String,
}

async fn ingest(State(svc): State<Arc<Service>>, Json(body): Json<IngestBody>) -> Response {
    match svc.ingest(&body.source).await {
        Ok(report) => Json(report).into_response(),
        Err(e @ IngestError::UnknownSource(_)) => error_body(StatusCode::NOT_FOUND, e),
        Err(e @ IngestError::Busy) => error_body(StatusCode::CONFLICT, e),
        Err(e @ IngestError::Fetch(_)) => error_body(StatusCode::BAD_GATEWAY, e),
        Err(e) => error_body(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn sources(State(svc): State<Arc<Service>>) -> Json<Vec<SourceConfig>> {
    Json(svc.config.sources.clone())
}

async fn categories(State(svc): State<Arc<Service>>) -> Json<Vec<String>> {
    Json(svc.categories())
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/profiles/{key}", get(profile))
        .route("/search", get(search))
        .route("/ingest", post(ingest))
        .route("/sources", get(sources))
        .route("/categories", get(categories))
        .with_state(service)
}

/// A running server. Dropping it without [`ServiceHandle::shutdown`] leaves
/// the server task running until the runtime stops.
pub struct ServiceHandle {
    addr: SocketAddr,
    service: Arc<Service>,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn service(&self) -> &Arc<Service> {
        &self.service
    }

    /// Stops accepting requests, drains in-flight ones and commits the store.
    pub async fn shutdown(mut self) -> Result<(), ServiceError> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        (&mut self.task)
            .await
            .map_err(|e| ServiceError::Server(e.to_string()))?
            .map_err(|e| ServiceError::Server(e.to_string()))?;
        self.service.commit()?;
        Ok(())
    }
}

/// Binds the configured address and starts serving.
pub async fn serve(config: ServiceConfig) -> Result<ServiceHandle, ServiceError> {
    config.validate()?;
    let service = Arc::new(Service::open(config)?);
    serve_service(service).await
}

pub async fn serve_service(service: Arc<Service>) -> Result<ServiceHandle, ServiceError> {
    let address = service.config.address.clone();
    let listener = tokio::net::TcpListener::bind(&address).await.map_err(|e| ServiceError::Bind {
        address: address.clone(),
        message: e.to_string(),
    })?;
    let addr = listener.local_addr().map_err(|e| ServiceError::Bind {
        address,
        message: e.to_string(),
    })?;
    let (stop, stopped) = oneshot::channel::<()>();
    let app = router(Arc::clone(&service));
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    tracing::info!(%addr, "serving");
    Ok(ServiceHandle {
        addr,
        service,
        stop: Some(stop),
        task,
    })
}
