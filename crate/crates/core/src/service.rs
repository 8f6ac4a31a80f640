//! HTTP JSON API around the valuation pipeline.
//!
//! Each request runs geocode, validate, neighbor search, neighbor
//! imputation, prediction and explanation, in that order, against an
//! immutable [`Snapshot`] of datasets and models. `POST /api/v1/reload`
//! loads a fresh snapshot from disk and swaps it in; requests already in
//! flight finish on the one they started with.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::avm::{load_model, AvmError, GbdtModel};
use crate::domain::{
    validate_property, FeatureDecl, FeatureSchema, FeatureValue, GeoPoint, Property,
    PropertyConfiguration, PropertyType, Violation, DEFAULT_K, LATITUDE, LONGITUDE,
};
use crate::explain::{
    default_priors, generate_explanation, ConsistencyAnnotation, ExplanationInputs, LlmBackend,
    LlmConfig, NeighborComparisons, PricePrior, PromptOptions, Renderer, UNIT_PRICE_UNITS,
};
use crate::imputation::{impute_neighbor, ImputationReport};
use crate::ingest::{DataDir, IngestError};
use crate::neighbors::{NeighborIndex, SearchStatus};
use crate::stats::NormalizationStats;
use crate::synth::{LAT_RANGE, LON_RANGE};

/// Id given to every valuation target, so it can never collide with (and be
/// excluded as) a corpus record.
pub const TARGET_ID: &str = "request";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown property type {0:?}")]
    UnknownPropertyType(String),
    #[error("invalid request: {message}")]
    InvalidRequest {
        message: String,
        violations: Vec<Violation>,
    },
    #[error("no model loaded for {0}")]
    NoModel(PropertyType),
    #[error("no dataset loaded for {0}")]
    NoDataset(PropertyType),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Avm(#[from] AvmError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownPropertyType(_) | ServiceError::InvalidRequest { .. } => {
                StatusCode::BAD_REQUEST
            }
            ServiceError::NoModel(_) | ServiceError::NoDataset(_) => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        ServiceError::InvalidRequest {
            message: message.into(),
            violations: Vec::new(),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let violations = match &self {
            ServiceError::InvalidRequest { violations, .. } => violations.clone(),
            _ => Vec::new(),
        };
        let body = serde_json::json!({
            "error": self.to_string(),
            "violations": violations,
        });
        (self.status(), Json(body)).into_response()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl Default for BoundingBox {
    fn default() -> Self {
        Self {
            min_lat: LAT_RANGE.0,
            max_lat: LAT_RANGE.1,
            min_lon: LON_RANGE.0,
            max_lon: LON_RANGE.1,
        }
    }
}

impl BoundingBox {
    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.min_lat..=self.max_lat).contains(&p.lat) && (self.min_lon..=self.max_lon).contains(&p.lon)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeocodeError {
    #[error("address is empty")]
    EmptyAddress,
    #[error("address not found")]
    NotFound,
    #[error("geocoder timed out")]
    Timeout,
    #[error("geocoder failed: {0}")]
    Backend(String),
}

/// Resolves a street address to coordinates.
pub trait Geocoder: Send + Sync {
    fn geocode(&self, address: &str) -> Result<GeoPoint, GeocodeError>;
}

/// Offline geocoder: hashes the address to a fixed point in a bounding box.
#[derive(Debug, Clone, Default)]
pub struct StubGeocoder {
    pub bbox: BoundingBox,
}

impl Geocoder for StubGeocoder {
    fn geocode(&self, address: &str) -> Result<GeoPoint, GeocodeError> {
        let address = address.trim();
        if address.is_empty() {
            return Err(GeocodeError::EmptyAddress);
        }
        let digest = Sha256::digest(address.as_bytes());
        let unit = |bytes: &[u8]| {
            let v = u64::from_be_bytes(bytes.try_into().expect("8 bytes"));
            (v >> 11) as f64 / (1u64 << 53) as f64
        };
        let b = &self.bbox;
        Ok(GeoPoint {
            lat: b.min_lat + unit(&digest[0..8]) * (b.max_lat - b.min_lat),
            lon: b.min_lon + unit(&digest[8..16]) * (b.max_lon - b.min_lon),
        })
    }
}

/// Client for a Google-compatible geocoding endpoint. The API key is read
/// from an environment variable on every call.
#[derive(Debug, Clone)]
pub struct HttpGeocoder {
    pub endpoint: String,
    pub key_env: String,
    pub timeout: Duration,
}

impl Geocoder for HttpGeocoder {
    fn geocode(&self, address: &str) -> Result<GeoPoint, GeocodeError> {
        let address = address.trim();
        if address.is_empty() {
            return Err(GeocodeError::EmptyAddress);
        }
        let key = std::env::var(&self.key_env)
            .map_err(|_| GeocodeError::Backend(format!("environment variable {} is unset", self.key_env)))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| GeocodeError::Backend(e.to_string()))?;
        let response = client
            .get(&self.endpoint)
            .query(&[("address", address), ("key", key.as_str())])
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    GeocodeError::Timeout
                } else {
                    GeocodeError::Backend(e.to_string())
                }
            })?;
        let body: serde_json::Value = response
            .json()
            .map_err(|e| GeocodeError::Backend(e.to_string()))?;
        match body.get("status").and_then(|s| s.as_str()) {
            Some("OK") | None => {}
            Some("ZERO_RESULTS") => return Err(GeocodeError::NotFound),
            Some(other) => return Err(GeocodeError::Backend(other.to_string())),
        }
        let loc = body
            .pointer("/results/0/geometry/location")
            .ok_or(GeocodeError::NotFound)?;
        match (loc.get("lat").and_then(|v| v.as_f64()), loc.get("lng").and_then(|v| v.as_f64())) {
            (Some(lat), Some(lon)) => Ok(GeoPoint { lat, lon }),
            _ => Err(GeocodeError::Backend("malformed location".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
pub enum GeocoderConfig {
    Stub {
        #[serde(default)]
        bbox: BoundingBox,
    },
    Google {
        #[serde(default = "default_geocoder_endpoint")]
        endpoint: String,
        #[serde(default = "default_geocoder_key_env")]
        key_env: String,
        #[serde(default = "default_geocoder_timeout")]
        timeout_secs: f64,
    },
}

impl Default for GeocoderConfig {
    fn default() -> Self {
        GeocoderConfig::Stub {
            bbox: BoundingBox::default(),
        }
    }
}

fn default_geocoder_endpoint() -> String {
    "https://maps.googleapis.com/maps/api/geocode/json".into()
}

fn default_geocoder_key_env() -> String {
    "VALUATE_GEOCODER_KEY".into()
}

fn default_geocoder_timeout() -> f64 {
    3.0
}

impl GeocoderConfig {
    pub fn build(&self) -> Arc<dyn Geocoder> {
        match self {
            GeocoderConfig::Stub { bbox } => Arc::new(StubGeocoder { bbox: *bbox }),
            GeocoderConfig::Google {
                endpoint,
                key_env,
                timeout_secs,
            } => Arc::new(HttpGeocoder {
                endpoint: endpoint.clone(),
                key_env: key_env.clone(),
                timeout: Duration::from_secs_f64(*timeout_secs),
            }),
        }
    }
}

/// Service configuration, read from TOML. Credentials never appear here,
/// only the names of the environment variables holding them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_k")]
    pub default_k: usize,
    #[serde(default)]
    pub geocoder: GeocoderConfig,
    #[serde(default)]
    pub llm: Option<LlmConfig>,
    #[serde(default = "default_priors")]
    pub priors: Vec<PricePrior>,
    #[serde(default)]
    pub prompt: PromptOptions,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_k() -> usize {
    DEFAULT_K
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            bind: default_bind(),
            default_k: DEFAULT_K,
            geocoder: GeocoderConfig::default(),
            llm: None,
            priors: default_priors(),
            prompt: PromptOptions::default(),
        }
    }

    /// Reads a TOML file; a relative `data_dir` is taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        let mut config: ServiceConfig = toml::from_str(&text)
            .map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))?;
        if config.data_dir.is_relative() {
            if let Some(parent) = path.parent() {
                config.data_dir = parent.join(&config.data_dir);
            }
        }
        if config.default_k == 0 {
            anyhow::bail!("default_k must be at least 1");
        }
        Ok(config)
    }
}

/// Everything loaded for one property type.
pub struct TypeState {
    pub index: NeighborIndex,
    pub model: Option<GbdtModel>,
}

/// Read-only view of the data directory at one point in time.
pub struct Snapshot {
    pub schema: FeatureSchema,
    pub types: BTreeMap<PropertyType, TypeState>,
}

impl Snapshot {
    pub fn new(schema: FeatureSchema) -> Self {
        Self {
            schema,
            types: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, index: NeighborIndex, model: Option<GbdtModel>) {
        let ty = index.dataset().property_type();
        self.types.insert(ty, TypeState { index, model });
    }

    /// Loads every type with a dataset present; a type without a model file
    /// is loaded without one and answers 503.
    pub fn load(dir: &DataDir) -> Result<Self, ServiceError> {
        let schema = dir.load_schema()?;
        let mut snapshot = Snapshot::new(schema);
        for ty in dir.available_types() {
            let (dataset, rejects) = dir.load_dataset(ty, &snapshot.schema)?;
            if !rejects.is_empty() {
                tracing::warn!(property_type = %ty, rejected = rejects.len(), "rows rejected while loading dataset");
            }
            let path = dir.model_path(ty);
            let model = if path.exists() {
                Some(load_model(&path, &snapshot.schema)?)
            } else {
                tracing::warn!(property_type = %ty, "no model file; valuations for this type are unavailable");
                None
            };
            snapshot.insert(NeighborIndex::new(dataset), model);
        }
        Ok(snapshot)
    }
}

/// Backends shared by all requests.
#[derive(Clone)]
pub struct Services {
    pub geocoder: Arc<dyn Geocoder>,
    pub llm: Option<LlmBackend>,
    pub priors: Vec<PricePrior>,
    pub prompt: PromptOptions,
    pub default_k: usize,
}

impl Default for Services {
    fn default() -> Self {
        Self {
            geocoder: Arc::new(StubGeocoder::default()),
            llm: None,
            priors: default_priors(),
            prompt: PromptOptions::default(),
            default_k: DEFAULT_K,
        }
    }
}

impl Services {
    pub fn from_config(config: &ServiceConfig) -> Self {
        Self {
            geocoder: config.geocoder.build(),
            llm: config.llm.as_ref().map(LlmBackend::from_config),
            priors: config.priors.clone(),
            prompt: config.prompt.clone(),
            default_k: config.default_k,
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationRequest {
    pub property_type: String,
    #[serde(default)]
    pub address: String,
    #[serde(default)]
    pub features: BTreeMap<String, FeatureValue>,
    /// Omitted means unconstrained with the service's default k.
    #[serde(default)]
    pub configuration: Option<PropertyConfiguration>,
    #[serde(default = "default_true")]
    pub want_explanation: bool,
    #[serde(default)]
    pub want_llm: bool,
    /// Echoed back in the report; never used for matching.
    #[serde(default)]
    pub id: Option<String>,
}

impl ValuationRequest {
    pub fn new(property_type: PropertyType) -> Self {
        Self {
            property_type: property_type.as_str().into(),
            address: String::new(),
            features: BTreeMap::new(),
            configuration: None,
            want_explanation: true,
            want_llm: false,
            id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GeocodeStatus {
    /// Coordinates came with the request.
    Provided,
    Resolved { location: GeoPoint },
    Unresolved { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportNeighbor {
    pub rank: usize,
    pub id: String,
    pub distance: f64,
    pub location: Option<GeoPoint>,
    pub unit_price: Option<f64>,
    pub address: String,
    pub comparisons: NeighborComparisons,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationSummary {
    pub text: String,
    pub renderer: Renderer,
    pub consistency: Vec<ConsistencyAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationReport {
    #[serde(default)]
    pub request_id: Option<String>,
    pub property_type: PropertyType,
    pub predicted_unit_price: f64,
    pub units: String,
    /// The target after geocoding and imputation, as the model saw it.
    pub target: Property,
    pub location: Option<GeoPoint>,
    pub geocode: GeocodeStatus,
    pub imputation: ImputationReport,
    pub search_status: SearchStatus,
    pub candidates: usize,
    pub neighbors: Vec<ReportNeighbor>,
    pub explanation: Option<ExplanationSummary>,
    /// One line per pipeline stage that degraded.
    pub notes: Vec<String>,
}

fn has_coordinates(features: &BTreeMap<String, FeatureValue>) -> bool {
    [LATITUDE, LONGITUDE]
        .iter()
        .all(|f| matches!(features.get(*f), Some(FeatureValue::Numeric(_))))
}

/// Runs the full pipeline for one request.
pub fn handle_valuation(
    snapshot: &Snapshot,
    services: &Services,
    request: &ValuationRequest,
) -> Result<ValuationReport, ServiceError> {
    let ty: PropertyType = request
        .property_type
        .parse()
        .map_err(|_| ServiceError::UnknownPropertyType(request.property_type.clone()))?;
    let state = snapshot.types.get(&ty).ok_or(ServiceError::NoDataset(ty))?;
    let model = state.model.as_ref().ok_or(ServiceError::NoModel(ty))?;
    let schema = &snapshot.schema;
    let dataset = state.index.dataset();
    let stats: &NormalizationStats = dataset.stats();
    let mut notes = Vec::new();

    let mut target = Property::new(TARGET_ID, ty);
    target.address = request.address.trim().to_string();
    target.features = request.features.clone();

    let geocode = if has_coordinates(&target.features) {
        GeocodeStatus::Provided
    } else {
        match services.geocoder.geocode(&target.address) {
            Ok(location) => {
                target.set(LATITUDE, FeatureValue::Numeric(location.lat));
                target.set(LONGITUDE, FeatureValue::Numeric(location.lon));
                GeocodeStatus::Resolved { location }
            }
            Err(e) => {
                notes.push(format!("geocoding: {e}; continuing without coordinates"));
                GeocodeStatus::Unresolved { reason: e.to_string() }
            }
        }
    };
    target.location = target.location_from_features();

    let mut violations = validate_property(schema, &target);
    let configuration = request
        .configuration
        .clone()
        .unwrap_or_else(|| PropertyConfiguration::unconstrained(services.default_k));
    violations.extend(configuration.validate(schema));
    if !violations.is_empty() {
        return Err(ServiceError::InvalidRequest {
            message: violations
                .iter()
                .map(|v| format!("{}: {}", v.field, v.message))
                .collect::<Vec<_>>()
                .join("; "),
            violations,
        });
    }

    let search = state.index.find(&target, &configuration);
    match search.status {
        SearchStatus::Complete => {}
        SearchStatus::Shortfall { found, requested } => notes.push(format!(
            "neighbor search: only {found} of {requested} requested neighbors are comparable"
        )),
        SearchStatus::NoNeighborsMatched => notes.push(
            "neighbor search: no neighbors matched the configuration; imputed from corpus averages".into(),
        ),
    }

    let (completed, imputation) = impute_neighbor(&target, &search.properties(), schema, stats);
    let fallbacks = imputation.fallback_count();
    if fallbacks > 0 && !imputation.full_fallback {
        notes.push(format!(
            "imputation: {fallbacks} feature(s) fell back to corpus averages"
        ));
    }
    if !imputation.unresolved.is_empty() {
        notes.push(format!(
            "imputation: still missing after imputation: {}",
            imputation.unresolved.join(", ")
        ));
    }

    let prediction = model.predict(schema, &completed)?;

    let llm = if request.want_llm {
        if services.llm.is_none() {
            notes.push("explanation: no LLM backend configured; used the template".into());
        }
        services.llm.as_ref()
    } else {
        None
    };
    let bundle = generate_explanation(
        &ExplanationInputs {
            target: &completed,
            neighbors: &search.neighbors,
            prediction,
            schema,
            stats,
            priors: &services.priors,
            prompt: services.prompt.clone(),
        },
        llm,
    );
    if let (Some(reason), Some(_)) = (&bundle.fallback_reason, llm) {
        notes.push(format!("explanation: LLM unavailable ({reason}); used the template"));
    }

    let neighbors = search
        .neighbors
        .iter()
        .zip(bundle.neighbors)
        .map(|(n, comparisons)| ReportNeighbor {
            rank: n.rank,
            id: n.neighbor.id.clone(),
            distance: n.distance,
            location: n.neighbor.location.or_else(|| n.neighbor.location_from_features()),
            unit_price: n.neighbor.unit_price,
            address: n.neighbor.address.clone(),
            comparisons,
        })
        .collect();
    let explanation = request.want_explanation.then_some(ExplanationSummary {
        text: bundle.text,
        renderer: bundle.renderer,
        consistency: bundle.consistency,
        fallback_reason: bundle.fallback_reason,
    });

    Ok(ValuationReport {
        request_id: request.id.clone(),
        property_type: ty,
        predicted_unit_price: prediction,
        units: UNIT_PRICE_UNITS.into(),
        location: completed.location_from_features(),
        target: completed,
        geocode,
        imputation,
        search_status: search.status,
        candidates: search.candidates,
        neighbors,
        explanation,
        notes,
    })
}

/// Shared state behind the router.
pub struct AppState {
    snapshot: RwLock<Arc<Snapshot>>,
    services: Services,
    data_dir: Option<DataDir>,
}

impl AppState {
    /// State without a data directory; reload is then unavailable.
    pub fn new(snapshot: Snapshot, services: Services) -> Self {
        Self {
            snapshot: RwLock::new(Arc::new(snapshot)),
            services,
            data_dir: None,
        }
    }

    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        let dir = DataDir::new(&config.data_dir);
        let snapshot = Snapshot::load(&dir)?;
        Ok(Self {
            snapshot: RwLock::new(Arc::new(snapshot)),
            services: Services::from_config(config),
            data_dir: Some(dir),
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        Arc::clone(&self.snapshot.read().unwrap_or_else(|p| p.into_inner()))
    }

    /// Loads a new snapshot and swaps it in. On error the current one stays.
    pub fn reload(&self) -> Result<Arc<Snapshot>, ServiceError> {
        let dir = self
            .data_dir
            .as_ref()
            .ok_or_else(|| ServiceError::Internal("service has no data directory to reload from".into()))?;
        let fresh = Arc::new(Snapshot::load(dir)?);
        *self.snapshot.write().unwrap_or_else(|p| p.into_inner()) = Arc::clone(&fresh);
        Ok(fresh)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TypeHealth {
    pub property_type: PropertyType,
    pub records: usize,
    pub model_loaded: bool,
    pub trees: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub schema_hash: String,
    pub types: Vec<TypeHealth>,
}

fn health_of(snapshot: &Snapshot) -> Health {
    Health {
        status: "ok".into(),
        schema_hash: snapshot.schema.hash(),
        types: snapshot
            .types
            .iter()
            .map(|(ty, s)| TypeHealth {
                property_type: *ty,
                records: s.index.dataset().len(),
                model_loaded: s.model.is_some(),
                trees: s.model.as_ref().map_or(0, |m| m.trees().len()),
            })
            .collect(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SchemaResponse {
    pub property_type: PropertyType,
    pub schema_hash: String,
    pub features: Vec<FeatureDecl>,
    /// Corpus statistics, for sensible form ranges; absent without a dataset.
    pub stats: Option<NormalizationStats>,
}

async fn schema_handler(
    State(state): State<Arc<AppState>>,
    UrlPath(ty): UrlPath<String>,
) -> Result<Json<SchemaResponse>, ServiceError> {
    let ty: PropertyType = ty.parse().map_err(|_| ServiceError::UnknownPropertyType(ty))?;
    let snapshot = state.snapshot();
    Ok(Json(SchemaResponse {
        property_type: ty,
        schema_hash: snapshot.schema.hash(),
        features: snapshot.schema.features().to_vec(),
        stats: snapshot.types.get(&ty).map(|s| s.index.dataset().stats().clone()),
    }))
}

async fn valuation_handler(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<ValuationReport>, ServiceError> {
    let request: ValuationRequest = serde_json::from_slice(&body)
        .map_err(|e| ServiceError::invalid(format!("malformed request body: {e}")))?;
    let snapshot = state.snapshot();
    let services = state.services.clone();
    let report = tokio::task::spawn_blocking(move || handle_valuation(&snapshot, &services, &request))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    Ok(Json(report))
}

async fn health_handler(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(health_of(&state.snapshot()))
}

async fn reload_handler(State(state): State<Arc<AppState>>) -> Result<Json<Health>, ServiceError> {
    let worker = Arc::clone(&state);
    let fresh = tokio::task::spawn_blocking(move || worker.reload())
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    tracing::info!("snapshot reloaded");
    Ok(Json(health_of(&fresh)))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/schema/{type}", get(schema_handler))
        .route("/api/v1/valuations", post(valuation_handler))
        .route("/api/v1/health", get(health_handler))
        .route("/api/v1/reload", post(reload_handler))
        .with_state(state)
}

/// Binds and serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let bind = config.bind.clone();
    let state = tokio::task::spawn_blocking(move || AppState::from_config(&config)).await??;
    let listener = tokio::net::TcpListener::bind(&bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_is_deterministic_and_bounded() {
        let g = StubGeocoder::default();
        let a = g.geocode("No. 7, Sec. 5, Xinyi Rd, Taipei").unwrap();
        let b = g.geocode("No. 7, Sec. 5, Xinyi Rd, Taipei").unwrap();
        assert_eq!(a, b);
        assert!(g.bbox.contains(a));
        assert_ne!(a, g.geocode("somewhere else").unwrap());
        assert_eq!(g.geocode("   "), Err(GeocodeError::EmptyAddress));
    }

    #[test]
    fn config_parses_with_defaults() {
        let c: ServiceConfig = toml::from_str(
            r#"
            data_dir = "data"
            [geocoder]
            backend = "google"
            [llm]
            endpoint = "http://localhost:9/v1/chat/completions"
            token_env = "LLM_TOKEN"
            "#,
        )
        .unwrap();
        assert_eq!(c.bind, "127.0.0.1:8080");
        assert_eq!(c.default_k, DEFAULT_K);
        assert!(matches!(c.geocoder, GeocoderConfig::Google { ref key_env, .. } if key_env == "VALUATE_GEOCODER_KEY"));
        assert_eq!(c.llm.unwrap().token_env.as_deref(), Some("LLM_TOKEN"));
        assert!(toml::from_str::<ServiceConfig>("data_dir = \"d\"\napi_key = \"x\"").is_err());
    }

    #[test]
    fn request_accepts_a_property_document() {
        let p = Property::new("B-000001", PropertyType::Building)
            .with("house_age", FeatureValue::Numeric(3.0));
        let r: ValuationRequest = serde_json::from_str(&p.to_canonical_json()).unwrap();
        assert_eq!(r.property_type, "building");
        assert_eq!(r.features, p.features);
        assert!(r.want_explanation && !r.want_llm);
    }
}
