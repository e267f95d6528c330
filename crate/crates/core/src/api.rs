//! JSON-over-HTTP service for single assessments and what-if comparisons.
//!
//! Stateless: the model tables are shared read-only and nothing from a request is kept.
//! Bodies that do not match the schema get 400 with the offending field path; requests
//! that parse but make no sense for the model (a pedigree loop, an age out of range)
//! get 422.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::risk::{assessment_json, AssessRequest, RiskAssessment, RiskCategory, RiskError, RiskModel};

pub const WHATIF_SCHEMA: &str = "bcrisk.whatif/1";
pub const HEALTH_SCHEMA: &str = "bcrisk.health/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDelta {
    /// Dotted path into the request, e.g. `profile.hrt` or `age`.
    pub field: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub base: AssessRequest,
    #[serde(default)]
    pub deltas: Vec<FieldDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResult {
    pub field: String,
    pub assessment: RiskAssessment,
    pub ten_year_risk_change: f64,
    pub lifetime_risk_change: f64,
    /// Applied relative hazard over the base one.
    pub relative_hazard_ratio: f64,
    pub category_before: RiskCategory,
    pub category_after: RiskCategory,
    pub category_changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub schema: String,
    pub base: RiskAssessment,
    pub deltas: Vec<WhatIfResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVersions {
    pub combined: String,
    pub segregation: String,
    pub factors: String,
    pub density: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub schema: String,
    pub status: String,
    pub parameters: ParameterVersions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug)]
pub enum ApiError {
    /// Body does not match the request schema.
    Schema { path: String, message: String },
    /// Valid request the model cannot evaluate.
    Domain(String),
    Internal(String),
}

impl From<RiskError> for ApiError {
    fn from(e: RiskError) -> Self {
        if e.is_numeric() {
            ApiError::Internal(e.to_string())
        } else {
            ApiError::Domain(e.to_string())
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::Schema { path, message } => {
                (StatusCode::BAD_REQUEST, ErrorBody { error: "schema".into(), message, path: Some(path) })
            }
            ApiError::Domain(message) => {
                (StatusCode::UNPROCESSABLE_ENTITY, ErrorBody { error: "domain".into(), message, path: None })
            }
            ApiError::Internal(message) => {
                (StatusCode::INTERNAL_SERVER_ERROR, ErrorBody { error: "numeric".into(), message, path: None })
            }
        };
        json_response(status, serde_json::to_string_pretty(&body).expect("serializable"))
    }
}

fn json_response(status: StatusCode, mut body: String) -> Response {
    body.push('\n');
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| ApiError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// Shared state: the model behind an `Arc`, never mutated.
#[derive(Clone)]
pub struct AppState {
    pub model: Arc<RiskModel>,
}

pub fn router(model: Arc<RiskModel>) -> Router {
    Router::new()
        .route("/v1/assess", post(assess))
        .route("/v1/whatif", post(whatif))
        .route("/v1/health", get(health))
        .with_state(AppState { model })
}

async fn assess(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: AssessRequest = parse_body(&body)?;
    let a = state.model.assess_request(&req)?;
    Ok(json_response(StatusCode::OK, assessment_json(&a)))
}

async fn whatif(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: WhatIfRequest = parse_body(&body)?;
    let resp = evaluate_whatif(&state.model, &req)?;
    Ok(json_response(StatusCode::OK, serde_json::to_string_pretty(&resp).expect("serializable")))
}

async fn health(State(state): State<AppState>) -> Response {
    let m = &state.model;
    let h = Health {
        schema: HEALTH_SCHEMA.to_string(),
        status: "ok".to_string(),
        parameters: ParameterVersions {
            combined: m.parameter_version().to_string(),
            segregation: m.genetic().params().version.clone(),
            factors: m.factor_table().version.clone(),
            density: m.density_surfaces().version.clone(),
        },
    };
    json_response(StatusCode::OK, serde_json::to_string_pretty(&h).expect("serializable"))
}

/// `base` with the value at a dotted path replaced. The path must already exist in the
/// serialized request, so only known fields can be changed.
pub fn apply_delta(base: &AssessRequest, delta: &FieldDelta) -> Result<AssessRequest, ApiError> {
    let mut doc = serde_json::to_value(base).expect("serializable");
    let mut slot = &mut doc;
    for key in delta.field.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|o| o.get_mut(key))
            .ok_or_else(|| ApiError::Domain(format!("unknown field `{}`", delta.field)))?;
    }
    *slot = delta.value.clone();
    serde_path_to_error::deserialize(doc)
        .map_err(|e| ApiError::Domain(format!("field `{}`: {} at {}", delta.field, e.inner(), e.path())))
}

pub fn evaluate_whatif(model: &RiskModel, req: &WhatIfRequest) -> Result<WhatIfResponse, ApiError> {
    let base = model.assess_request(&req.base)?;
    let mut deltas = Vec::with_capacity(req.deltas.len());
    for d in &req.deltas {
        let changed = apply_delta(&req.base, d)?;
        let a = model.assess_request(&changed)?;
        deltas.push(WhatIfResult {
            field: d.field.clone(),
            ten_year_risk_change: a.ten_year_risk - base.ten_year_risk,
            lifetime_risk_change: a.lifetime_risk - base.lifetime_risk,
            relative_hazard_ratio: a.relative_hazard.applied / base.relative_hazard.applied,
            category_before: base.risk_category,
            category_after: a.risk_category,
            category_changed: a.risk_category != base.risk_category,
            assessment: a,
        });
    }
    Ok(WhatIfResponse { schema: WHATIF_SCHEMA.to_string(), base, deltas })
}

/// Serve on `addr` until the process is stopped.
pub async fn serve(model: Arc<RiskModel>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(model)).await
}
