//! HTTP interface over the reasoner.
//!
//! | method | path               | body / result                                   |
//! |--------|--------------------|-------------------------------------------------|
//! | GET    | `/health`          | `ok`                                            |
//! | GET    | `/rulebases`       | list of handles                                 |
//! | POST   | `/rulebases`       | rule file → 201 handle, 400, or 422 diagnostics |
//! | GET    | `/rulebases/{id}`  | rules + sorted leaves, or 404                   |
//! | DELETE | `/rulebases/{id}`  | 204 or 404                                      |
//! | POST   | `/evaluate`        | `{rulebase_id, facts, goal, strategy}`          |
//!
//! Facts only ever live in the request; the service keeps no per-case state.

mod store;

use std::collections::HashMap;
use std::io;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use defeasible_core::loader::{has_errors, parse_rule_file, validate, Diagnostic, LoadError};
use defeasible_core::reasoner::{evaluate, explain, EvalStats, ExplainFormat, NodeStatus, Strategy};
use defeasible_core::{FactBase, PropositionId, Rule};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use store::{RuleBaseHandle, RuleBaseStore, StoredRuleBase};

pub type AppState = Arc<RuleBaseStore>;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{message}")]
    Unprocessable {
        message: String,
        diagnostics: Vec<Diagnostic>,
    },
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn unprocessable(message: impl Into<String>) -> Self {
        ApiError::Unprocessable {
            message: message.into(),
            diagnostics: Vec::new(),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: String,
    #[serde(skip_serializing_if = "<[Diagnostic]>::is_empty")]
    diagnostics: &'a [Diagnostic],
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Unprocessable { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let diagnostics = match &self {
            ApiError::Unprocessable { diagnostics, .. } => diagnostics.as_slice(),
            _ => &[],
        };
        let body = ErrorBody {
            error: self.to_string(),
            diagnostics,
        };
        (status, Json(body)).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/rulebases", get(list_rulebases).post(create_rulebase))
        .route("/rulebases/{id}", get(get_rulebase).delete(delete_rulebase))
        .route("/evaluate", post(evaluate_case))
        .with_state(state)
}

/// CORS for the case explorer. `None` allows any origin.
pub fn cors(origin: Option<&str>) -> Result<CorsLayer, String> {
    let allow = match origin {
        None => AllowOrigin::any(),
        Some(o) => AllowOrigin::exact(HeaderValue::from_str(o).map_err(|e| format!("bad origin {o:?}: {e}"))?),
    };
    Ok(CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST, Method::DELETE])
        .allow_headers([header::CONTENT_TYPE]))
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState, cors_origin: Option<&str>) -> io::Result<()> {
    let app = router(state).layer(cors(cors_origin).map_err(io::Error::other)?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn health() -> &'static str {
    "ok"
}

async fn list_rulebases(State(store): State<AppState>) -> Json<Vec<RuleBaseHandle>> {
    Json(store.list())
}

async fn create_rulebase(
    State(store): State<AppState>,
    Query(query): Query<HashMap<String, String>>,
    body: Bytes,
) -> Result<(StatusCode, Json<RuleBaseHandle>), ApiError> {
    let rules = parse_rule_file(&body).map_err(|err| match err {
        LoadError::InvalidRule(_) => ApiError::unprocessable(err.to_string()),
        other => ApiError::BadRequest(other.to_string()),
    })?;
    let (rb, diagnostics) = validate(rules, None);
    match rb {
        Some(rb) if !has_errors(&diagnostics) => {
            let handle = store.insert(query.get("name").cloned(), rb);
            Ok((StatusCode::CREATED, Json(handle)))
        }
        _ => Err(ApiError::Unprocessable {
            message: "rule base has errors".into(),
            diagnostics,
        }),
    }
}

#[derive(Serialize)]
struct RuleBaseView {
    #[serde(flatten)]
    handle: RuleBaseHandle,
    rules: Vec<Rule>,
    leaves: Vec<PropositionId>,
}

async fn get_rulebase(State(store): State<AppState>, Path(id): Path<String>) -> Result<Json<RuleBaseView>, ApiError> {
    let stored = store
        .get(&id)
        .ok_or_else(|| ApiError::NotFound(format!("no rule base {id:?}")))?;
    Ok(Json(RuleBaseView {
        handle: stored.handle,
        rules: stored.rules.rules().cloned().collect(),
        leaves: stored.rules.leaves().into_iter().collect(),
    }))
}

async fn delete_rulebase(State(store): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    if store.remove(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::NotFound(format!("no rule base {id:?}")))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateRequest {
    rulebase_id: String,
    #[serde(default)]
    facts: Vec<String>,
    goal: String,
    #[serde(default)]
    strategy: Option<String>,
}

#[derive(Serialize)]
struct EvaluateResponse {
    holds: bool,
    status: NodeStatus,
    /// Byte-for-byte the reasoner's structured explanation.
    proof: Box<RawValue>,
    stats: EvalStats,
}

async fn evaluate_case(State(store): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let request: EvaluateRequest = serde_json::from_slice(&body).map_err(|e| {
        if e.is_data() {
            ApiError::unprocessable(e.to_string())
        } else {
            ApiError::BadRequest(e.to_string())
        }
    })?;
    let stored = store
        .get(&request.rulebase_id)
        .ok_or_else(|| ApiError::NotFound(format!("no rule base {:?}", request.rulebase_id)))?;
    let goal = PropositionId::new(request.goal).map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let facts: FactBase = request
        .facts
        .into_iter()
        .map(PropositionId::new)
        .collect::<Result<_, _>>()
        .map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let strategy: Strategy = match request.strategy.as_deref() {
        None => Strategy::default(),
        Some(s) => s
            .parse()
            .map_err(|e: defeasible_core::reasoner::EvalError| ApiError::unprocessable(e.to_string()))?,
    };

    let response = tokio::task::spawn_blocking(move || -> Result<Vec<u8>, ApiError> {
        let verdict =
            evaluate(&stored.rules, &facts, &goal, strategy).map_err(|e| ApiError::Internal(e.to_string()))?;
        let proof = String::from_utf8(explain(&verdict, ExplainFormat::Structured))
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        let body = EvaluateResponse {
            holds: verdict.holds,
            status: verdict.status(),
            proof: RawValue::from_string(proof).map_err(|e| ApiError::Internal(e.to_string()))?,
            stats: verdict.stats,
        };
        serde_json::to_vec(&body).map_err(|e| ApiError::Internal(e.to_string()))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;

    Ok(([(header::CONTENT_TYPE, "application/json")], response).into_response())
}
