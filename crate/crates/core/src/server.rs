//! HTTP+JSON front end for [`SessionStore`].

use std::net::SocketAddr;
use std::path::PathBuf;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{Any, CorsLayer};

use crate::dataset::{read_csv, DatasetConfig};
use crate::error::Error;
use crate::model::{PerformanceTable, PreferenceStatement};
use crate::session::{demo_table, AnswerOutcome, CreateError, FieldError, SessionConfig, SessionStore, StoreConfig};

pub const ENV_BIND: &str = "PREFELICIT_BIND";
pub const ENV_DATA_DIR: &str = "PREFELICIT_DATA_DIR";
pub const ENV_SEED: &str = "PREFELICIT_SEED";
pub const ENV_CORS_ORIGIN: &str = "PREFELICIT_CORS_ORIGIN";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub data_dir: Option<PathBuf>,
    pub seed: u64,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: None,
            seed: 0,
            cors_origin: None,
        }
    }
}

impl ServerConfig {
    pub fn from_env() -> crate::Result<Self> {
        let mut cfg = ServerConfig::default();
        if let Ok(b) = std::env::var(ENV_BIND) {
            cfg.bind = b
                .parse()
                .map_err(|e| Error::InvalidInput(format!("{ENV_BIND}=`{b}`: {e}")))?;
        }
        if let Ok(d) = std::env::var(ENV_DATA_DIR) {
            cfg.data_dir = Some(d.into());
        }
        if let Ok(s) = std::env::var(ENV_SEED) {
            cfg.seed = s
                .parse()
                .map_err(|e| Error::InvalidInput(format!("{ENV_SEED}=`{s}`: {e}")))?;
        }
        cfg.cors_origin = std::env::var(ENV_CORS_ORIGIN).ok();
        Ok(cfg)
    }
}

struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    fields: Vec<FieldError>,
}

impl ApiError {
    fn fields(fields: Vec<FieldError>) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: "validation_failed",
            message: "request has invalid fields".into(),
            fields,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
            fields: Vec::new(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::SessionNotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::Conflict(_) | Error::DuplicatePair(..) | Error::Saturated => (StatusCode::CONFLICT, "conflict"),
            Error::InvalidInput(_) | Error::InvalidTable(_) | Error::DimensionMismatch { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_input")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError {
            status,
            code,
            message: e.to_string(),
            fields: Vec::new(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if !self.fields.is_empty() {
            body["fields"] = serde_json::to_value(&self.fields).expect("field errors serialize");
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_object(body: &Bytes) -> ApiResult<serde_json::Map<String, Value>> {
    match serde_json::from_slice::<Value>(body) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(ApiError::bad_request("body must be a JSON object")),
        Err(e) => Err(ApiError::bad_request(format!("malformed JSON: {e}"))),
    }
}

fn field<T: for<'de> Deserialize<'de>>(
    obj: &serde_json::Map<String, Value>,
    name: &str,
    errors: &mut Vec<FieldError>,
) -> Option<T> {
    let v = obj.get(name)?;
    match serde_json::from_value(v.clone()) {
        Ok(x) => Some(x),
        Err(e) => {
            errors.push(FieldError::new(name, e.to_string()));
            None
        }
    }
}

/// `table` (JSON) or `csv` (text plus optional `dataset` sidecar), a
/// `horizon`, and an optional `config`.
fn parse_create(body: &Bytes) -> ApiResult<(PerformanceTable, usize, SessionConfig)> {
    let obj = parse_object(body)?;
    let mut errors = Vec::new();
    const KNOWN: [&str; 5] = ["table", "csv", "dataset", "horizon", "config"];
    for k in obj.keys().filter(|k| !KNOWN.contains(&k.as_str())) {
        errors.push(FieldError::new(k, "unknown field"));
    }
    let table = match (obj.contains_key("table"), obj.contains_key("csv")) {
        (true, true) => {
            errors.push(FieldError::new("table", "give either `table` or `csv`, not both"));
            None
        }
        (false, false) => {
            errors.push(FieldError::new("table", "required (or provide `csv`)"));
            None
        }
        (true, false) => field::<PerformanceTable>(&obj, "table", &mut errors),
        (false, true) => {
            let dataset = field::<DatasetConfig>(&obj, "dataset", &mut errors).unwrap_or_default();
            field::<String>(&obj, "csv", &mut errors).and_then(|text| match read_csv(text.as_bytes(), &dataset) {
                Ok(t) => Some(t),
                Err(e) => {
                    errors.push(FieldError::new("csv", e.to_string()));
                    None
                }
            })
        }
    };
    let horizon = if obj.contains_key("horizon") {
        field::<usize>(&obj, "horizon", &mut errors)
    } else {
        errors.push(FieldError::new("horizon", "required"));
        None
    };
    let config = field::<SessionConfig>(&obj, "config", &mut errors).unwrap_or_default();
    match (table, horizon) {
        (Some(t), Some(h)) if errors.is_empty() => Ok((t, h, config)),
        _ => Err(ApiError::fields(errors)),
    }
}

async fn create_session(State(store): State<SessionStore>, body: Bytes) -> ApiResult<Response> {
    let (table, horizon, config) = parse_create(&body)?;
    match store.create(table, horizon, config).await {
        Ok(view) => Ok((StatusCode::CREATED, Json(view)).into_response()),
        Err(CreateError::Fields(f)) => Err(ApiError::fields(f)),
        Err(CreateError::Engine(e)) => Err(e.into()),
    }
}

async fn list_sessions(State(store): State<SessionStore>) -> Json<Value> {
    Json(json!({ "sessions": store.ids() }))
}

async fn get_session(State(store): State<SessionStore>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(store.get(&id)?.view()).into_response())
}

async fn export_session(State(store): State<SessionStore>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(store.get(&id)?.transcript()).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub preferred: usize,
    pub other: usize,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

async fn answer(State(store): State<SessionStore>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let obj = parse_object(&body)?;
    let req: AnswerRequest = serde_json::from_value(Value::Object(obj))
        .map_err(|e| ApiError::fields(vec![FieldError::new("body", e.to_string())]))?;
    if req.preferred == req.other {
        return Err(ApiError::fields(vec![FieldError::new(
            "other",
            "must differ from `preferred`",
        )]));
    }
    let statement = PreferenceStatement::new(req.preferred, req.other)?;
    let (outcome, view) = store.answer(&id, statement, req.idempotency_key.as_deref()).await?;
    let status = match outcome {
        AnswerOutcome::Accepted => StatusCode::ACCEPTED,
        AnswerOutcome::Replayed => StatusCode::OK,
    };
    Ok((status, Json(view)).into_response())
}

async fn demo() -> Json<PerformanceTable> {
    Json(demo_table())
}

async fn health() -> &'static str {
    "ok"
}

pub fn router(store: SessionStore, cors_origin: Option<&str>) -> crate::Result<Router> {
    let cors = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    let cors = match cors_origin {
        Some(o) => cors.allow_origin(
            o.parse::<HeaderValue>()
                .map_err(|e| Error::InvalidInput(format!("CORS origin `{o}`: {e}")))?,
        ),
        None => cors.allow_origin(Any),
    };
    Ok(Router::new()
        .route("/health", get(health))
        .route("/demo", get(demo))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/answer", post(answer))
        .route("/sessions/{id}/export", get(export_session))
        .layer(cors)
        .with_state(store))
}

/// Serves until ctrl-c.
pub async fn serve(cfg: ServerConfig) -> crate::Result<()> {
    let store = SessionStore::open(StoreConfig {
        data_dir: cfg.data_dir.clone(),
        server_seed: cfg.seed,
    })?;
    store.resume();
    let app = router(store, cfg.cors_origin.as_deref())?;
    let listener = tokio::net::TcpListener::bind(cfg.bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
