use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use greyalloc_cli::server::router;

async fn send(req: Request<Body>) -> (StatusCode, String) {
    let resp = router(None).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn post(path: &str, body: Value) -> (StatusCode, Value) {
    let (status, text) = send(
        Request::post(path)
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap(),
    )
    .await;
    (status, serde_json::from_str(&text).unwrap())
}

fn reference_matrix() -> Value {
    json!({
        "labels": ["land", "gdp", "unemployment", "welfare"],
        "entries": [
            [1.0, 0.5, 0.25, 2.0],
            [2.0, 1.0, 0.5, 3.0],
            [4.0, 2.0, 1.0, 5.0],
            [0.5, 1.0 / 3.0, 0.2, 1.0]
        ]
    })
}

fn country_rows() -> Value {
    json!({
        "entities": ["Ireland", "Estonia", "Austria"],
        "criteria": ["gdp", "land", "unemployment", "welfare"],
        "values": [
            [0.491458621, 0.061869, 0.41602317, 0.928571429],
            [0.548413195, 0.006428, 0.26447876, 0.285714286],
            [0.46310015, 0.117199, 0.19208494, 0.821428571]
        ]
    })
}

#[tokio::test]
async fn health() {
    let (status, text) = send(Request::get("/api/health").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
}

#[tokio::test]
async fn ahp_reference_matrix() {
    let (status, v) = post("/api/ahp", json!({ "matrix": reference_matrix() })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["consistent"], true);
    assert_eq!(v["top_criterion"], "unemployment");
    let w: Vec<f64> = v["weights"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    for (got, want) in w.iter().zip([0.1428, 0.2641, 0.5068, 0.0863]) {
        assert!((got - want).abs() < 0.005);
    }
}

#[tokio::test]
async fn ahp_inconsistent_is_not_an_error() {
    let m = json!({ "entries": [[1, 9, 0.1111111111111111], [0.1111111111111111, 1, 9], [9, 0.1111111111111111, 1]] });
    let (status, v) = post("/api/ahp", json!({ "matrix": m })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["consistent"], false);
    assert_eq!(v["labels"][0], "c1");
}

#[tokio::test]
async fn ahp_non_square_is_422() {
    let m = json!({ "entries": [[1, 2, 3], [0.5, 1, 2]] });
    let (status, v) = post("/api/ahp", json!({ "matrix": m })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "MalformedBody");
}

#[tokio::test]
async fn malformed_json_is_422() {
    let (status, text) = send(
        Request::post("/api/ahp")
            .header("content-type", "application/json")
            .body(Body::from("{\"matrix\": [1, 2"))
            .unwrap(),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert!(v["error"]["message"].is_string());
}

#[tokio::test]
async fn missing_content_type_is_422() {
    let (status, _) = send(Request::post("/api/ahp").body(Body::from("{}")).unwrap()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn allocate_reference_rows() {
    let body = json!({ "matrix": reference_matrix(), "indicators": country_rows(), "prenormalized": true });
    let (status, v) = post("/api/allocate", body).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["method"], "ahp");
    assert_eq!(v["ranking"][0]["entity"], "Ireland");
    assert_eq!(v["ranking"][0]["rank"], 1);
    let total: f64 = v["proportions"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[tokio::test]
async fn allocate_factor_without_betas_is_422() {
    let body = json!({ "indicators": country_rows(), "method": "factor", "prenormalized": true });
    let (status, v) = post("/api/allocate", body).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "MissingBetas");
}

#[tokio::test]
async fn allocate_degenerate_criterion_is_400() {
    let indicators = json!({
        "entities": ["a", "b"],
        "criteria": ["land", "gdp", "unemployment", "welfare"],
        "values": [[1, 2, 3, 4], [1, 3, 4, 5]]
    });
    let (status, v) = post("/api/allocate", json!({ "matrix": reference_matrix(), "indicators": indicators })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "DegenerateCriterion");
}

#[tokio::test]
async fn allocate_unknown_direction_is_400() {
    let body = json!({
        "matrix": reference_matrix(),
        "indicators": country_rows(),
        "directions": { "population": "cost" }
    });
    let (status, v) = post("/api/allocate", body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "UnknownCriterion");
}

#[tokio::test]
async fn forecast_roundtrip() {
    let values: Vec<f64> = (0..10)
        .map(|k| {
            let (a, b, x0) = (-0.5f64, -0.5 / 4e4, 800.0f64);
            a * x0 / (b * x0 + (a - b * x0) * (a * k as f64).exp())
        })
        .collect();
    let (status, v) = post("/api/forecast", json!({ "series": { "values": values }, "horizon": 3 })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["accuracy"]["grade"], "I");
    assert_eq!(v["projection"].as_array().unwrap().len(), 3);
    let value = v["saturation"]["value"].as_f64().unwrap();
    // the discrete estimate only approximates the continuous curve
    assert!((value - 4e4).abs() / 4e4 < 0.05, "{value}");
}

#[tokio::test]
async fn forecast_too_short_is_400() {
    let (status, v) = post("/api/forecast", json!({ "series": { "values": [1, 2, 3] } })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "SeriesTooShort");
}

#[tokio::test]
async fn forecast_unknown_model_is_422() {
    let (status, _) = post("/api/forecast", json!({ "series": { "values": [1, 2, 3, 4] }, "model": "arima" })).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn sensitivity_endpoint() {
    let body = json!({
        "subject": { "kind": "allocation", "matrix": reference_matrix(), "indicators": country_rows(), "prenormalized": true },
        "specs": [
            { "kind": "scale_matrix_entry", "row": 3, "col": 4, "factor": 0.6 },
            { "kind": "scale_indicator", "entity": "Nowhere", "criterion": "gdp", "factor": 2.0 }
        ]
    });
    let (status, v) = post("/api/sensitivity", body).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["reports"].as_array().unwrap().len(), 1);
    assert_eq!(v["failures"][0]["code"], "InvalidPerturbation");
    let w = v["reports"][0]["perturbed"]["weight.welfare"].as_f64().unwrap();
    assert!((w - 0.1045).abs() < 0.005);
}

#[tokio::test]
async fn sensitivity_all_failed_is_400() {
    let body = json!({
        "subject": { "kind": "forecast", "series": { "values": [10, 20, 28, 33] } },
        "specs": [{ "kind": "remove_point", "k": 5 }]
    });
    let (status, v) = post("/api/sensitivity", body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "SeriesTooShort");
}

#[tokio::test]
async fn identical_requests_identical_bodies() {
    let body = json!({ "matrix": reference_matrix(), "indicators": country_rows(), "prenormalized": true });
    let mut seen = Vec::new();
    for _ in 0..3 {
        let (_, text) = send(
            Request::post("/api/allocate")
                .header("content-type", "application/json")
                .body(Body::from(body.to_string()))
                .unwrap(),
        )
        .await;
        seen.push(text);
    }
    assert!(seen.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn serves_static_assets() {
    let dir = std::env::temp_dir().join(format!("greyalloc-static-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("index.html"), "<html>ui</html>").unwrap();
    let resp = router(Some(dir))
        .oneshot(Request::get("/index.html").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[..], b"<html>ui</html>");
}
