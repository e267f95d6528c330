use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use bcrisk::api::{router, ErrorBody, Health, WhatIfResponse};
use bcrisk::risk::{RiskAssessment, RiskModel};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(method: &str, uri: &str, body: &str) -> (StatusCode, String) {
    let app = router(Arc::new(RiskModel::default()));
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn brca1_request() -> Value {
    json!({
        "age": 40,
        "horizons": [5, 20],
        "profile": {"menarche_age": 12},
        "pedigree": [
            {"id": "me", "sex": "female", "censor_age": 40, "brca_test": "brca1", "mother_id": "mum", "father_id": "dad"},
            {"id": "mum", "sex": "female", "censor_age": 66, "breast_age": 44},
            {"id": "dad", "sex": "male", "censor_age": 68}
        ]
    })
}

#[tokio::test]
async fn neutral_request_gives_population_curve() {
    let (status, body) = call("POST", "/v1/assess", r#"{"age": 50}"#).await;
    assert_eq!(status, StatusCode::OK);
    let a: RiskAssessment = serde_json::from_str(&body).unwrap();
    let model = RiskModel::default();
    let want = model.assess(None, &Default::default(), 50.0, &[]).unwrap();
    assert_eq!(a, want);
    assert_eq!(a.relative_hazard.applied, 1.0);
    assert!(a.risk_curve.windows(2).all(|w| w[1].risk >= w[0].risk));
    assert_eq!(a.risk_curve.last().unwrap().age, 85.0);
    assert_eq!(a.parameter_version, model.parameter_version());
}

#[tokio::test]
async fn audit_multiplies_to_applied_hazard() {
    let body = json!({"age": 45, "profile": {"menarche_age": 11, "bmi": 31, "height": 1.75}}).to_string();
    let (status, text) = call("POST", "/v1/assess", &body).await;
    assert_eq!(status, StatusCode::OK);
    let a: RiskAssessment = serde_json::from_str(&text).unwrap();
    let product: f64 = a.relative_hazard.audit.iter().map(|c| c.multiplier).product();
    assert!((product - a.relative_hazard.applied).abs() < 1e-9 * a.relative_hazard.applied);
}

#[tokio::test]
async fn malformed_json_is_400_with_path() {
    let (status, _) = call("POST", "/v1/assess", "{not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, text) = call("POST", "/v1/assess", r#"{"age": 50, "profile": {"bmi": "heavy"}}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let e: ErrorBody = serde_json::from_str(&text).unwrap();
    assert_eq!(e.path.as_deref(), Some("profile.bmi"));
    let (status, text) = call("POST", "/v1/assess", r#"{"age": 50, "colour": "red"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{text}");
}

#[tokio::test]
async fn domain_violations_are_422() {
    let (status, _) = call("POST", "/v1/assess", r#"{"age": 95}"#).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let cyclic = json!({"age": 40, "pedigree": [
        {"id": "a", "sex": "female", "censor_age": 40, "mother_id": "b", "father_id": "c"},
        {"id": "b", "sex": "female", "censor_age": 60, "mother_id": "a", "father_id": "c"},
        {"id": "c", "sex": "male", "censor_age": 60}
    ]});
    let (status, text) = call("POST", "/v1/assess", &cyclic.to_string()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{text}");
    let e: ErrorBody = serde_json::from_str(&text).unwrap();
    assert_eq!(e.error, "domain");
}

#[tokio::test]
async fn brca1_carrier_is_elevated() {
    let (status, text) = call("POST", "/v1/assess", &brca1_request().to_string()).await;
    assert_eq!(status, StatusCode::OK);
    let a: RiskAssessment = serde_json::from_str(&text).unwrap();
    let population = RiskModel::default().assess(None, &Default::default(), 40.0, &[]).unwrap();
    assert!(a.genotype_posterior.brca1_carrier > 0.999);
    assert!(a.lifetime_risk > 3.0 * population.lifetime_risk);
    assert_eq!(a.horizons.len(), 2);
}

#[tokio::test]
async fn whatif_hrt_multiplies_by_schedule_ratio() {
    let base = json!({"age": 55, "profile": {"menopause": {"status": "post", "age": 50}, "bmi": 27, "hrt": {"status": "never"}}});
    let hrt = json!({"status": "current", "kind": "combined", "years_since_start": 3});
    let req = json!({"base": base, "deltas": [
        {"field": "profile.hrt", "value": hrt},
        {"field": "profile.bmi", "value": 27}
    ]});
    let (status, text) = call("POST", "/v1/whatif", &req.to_string()).await;
    assert_eq!(status, StatusCode::OK, "{text}");
    let r: WhatIfResponse = serde_json::from_str(&text).unwrap();
    assert_eq!(r.deltas.len(), 2);
    let base_hrt = r.base.relative_hazard.audit.iter().find(|c| c.factor == bcrisk::factors::FactorId::Hrt).unwrap().hazard_ratio;
    assert!((r.deltas[0].relative_hazard_ratio - 2.0 / base_hrt).abs() < 1e-12);
    assert!(r.deltas[0].ten_year_risk_change > 0.0);
    assert_eq!(r.deltas[0].category_before, r.base.risk_category);
    assert_eq!(r.deltas[1].assessment, r.base);
}

#[tokio::test]
async fn whatif_edge_cases() {
    let (status, text) = call("POST", "/v1/whatif", &json!({"base": {"age": 50}, "deltas": []}).to_string()).await;
    assert_eq!(status, StatusCode::OK);
    let r: WhatIfResponse = serde_json::from_str(&text).unwrap();
    assert!(r.deltas.is_empty());
    let bad = json!({"base": {"age": 50}, "deltas": [{"field": "profile.eye_colour", "value": 1}]});
    let (status, _) = call("POST", "/v1/whatif", &bad.to_string()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn health_reports_versions() {
    let (status, text) = call("GET", "/v1/health", "").await;
    assert_eq!(status, StatusCode::OK);
    let h: Health = serde_json::from_str(&text).unwrap();
    assert_eq!(h.status, "ok");
    assert_eq!(h.parameters.combined, RiskModel::default().parameter_version());
}

#[tokio::test]
async fn concurrent_identical_requests_agree() {
    let app = router(Arc::new(RiskModel::default()));
    let body = brca1_request().to_string();
    let mut handles = Vec::new();
    for _ in 0..8 {
        let app = app.clone();
        let body = body.clone();
        handles.push(tokio::spawn(async move {
            let req = Request::post("/v1/assess").body(Body::from(body)).unwrap();
            let resp = app.oneshot(req).await.unwrap();
            resp.into_body().collect().await.unwrap().to_bytes()
        }));
    }
    let mut bodies = Vec::new();
    for h in handles {
        bodies.push(h.await.unwrap());
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}
