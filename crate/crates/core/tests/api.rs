use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use meshdex::analysis::primitives::{box_mesh, icosphere, prism};
use meshdex::api::{router, ApiConfig, AppState};
use meshdex::catalog::Catalog;
use meshdex::mesh::{write_stl_ascii, write_stl_binary};
use nalgebra::{Point3, Vector3};
use serde_json::Value;
use tower::ServiceExt;

const BOUNDARY: &str = "meshdex-test-boundary";

struct Form(Vec<u8>);

impl Form {
    fn new() -> Self {
        Form(Vec::new())
    }

    fn text(mut self, name: &str, value: &str) -> Self {
        self.0.extend_from_slice(
            format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n{value}\r\n").as_bytes(),
        );
        self
    }

    fn file(mut self, file_name: &str, bytes: &[u8]) -> Self {
        self.0.extend_from_slice(
            format!(
                "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{file_name}\"\r\n\
                 Content-Type: application/octet-stream\r\n\r\n"
            )
            .as_bytes(),
        );
        self.0.extend_from_slice(bytes);
        self.0.extend_from_slice(b"\r\n");
        self
    }

    fn finish(mut self) -> Vec<u8> {
        self.0
            .extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
        self.0
    }
}

fn state() -> Arc<AppState> {
    AppState::new(Catalog::default(), ApiConfig::default())
}

async fn call(state: &Arc<AppState>, req: Request<Body>) -> (StatusCode, Value) {
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let json = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, json)
}

fn post(uri: &str, form: Form) -> Request<Body> {
    Request::post(uri)
        .header(
            "content-type",
            format!("multipart/form-data; boundary={BOUNDARY}"),
        )
        .body(Body::from(form.finish()))
        .unwrap()
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn ball() -> String {
    write_stl_ascii(&icosphere(2, 1.0), "ball")
}

async fn upload(
    state: &Arc<AppState>,
    name: &str,
    bytes: &[u8],
    domain: &str,
) -> (StatusCode, Value) {
    call(
        state,
        post(
            "/v1/models",
            Form::new()
                .file(name, bytes)
                .text("domain", domain)
                .text("tags", "round, test"),
        ),
    )
    .await
}

#[tokio::test]
async fn ingest_returns_201_then_200_on_merge() {
    let st = state();
    let (status, body) = upload(&st, "ball.stl", ball().as_bytes(), "a.example").await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["status"], "created");
    let id = body["record"]["id"].as_str().unwrap().to_string();
    assert_eq!(body["record"]["tags"], serde_json::json!(["round", "test"]));

    let (status, body) = upload(&st, "copy.stl", ball().as_bytes(), "b.example").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "merged");
    assert_eq!(body["match"], "exact");
    assert_eq!(body["record"]["id"], id.as_str());

    let (status, body) = call(&st, get(&format!("/v1/models/{id}"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["record"]["sources"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn search_modes_and_related() {
    let st = state();
    upload(&st, "ball.stl", ball().as_bytes(), "a").await;
    let brick = write_stl_binary(&box_mesh(Point3::origin(), Vector3::new(3.0, 1.0, 0.5)));
    let (_, brick_body) = upload(&st, "brick.stl", &brick, "b").await;
    upload(
        &st,
        "rod.obj-less.stl",
        write_stl_ascii(&prism(8, 0.3, 2.0), "rod").as_bytes(),
        "c",
    )
    .await;

    let (status, body) = call(
        &st,
        post(
            "/v1/search/similar?k=2",
            Form::new().file("q.stl", ball().as_bytes()),
        ),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["mode"], "similar");
    let results = body["results"].as_array().unwrap();
    assert!(!results.is_empty() && results.len() <= 2);
    assert_eq!(results[0]["score"].as_f64().unwrap(), 1.0);

    let (status, body) = call(
        &st,
        post(
            "/v1/search/pip",
            Form::new()
                .file("q.stl", &brick)
                .text("filetype", "stl-binary"),
        ),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["results"][0]["model_id"], brick_body["record"]["id"]);

    let (status, body) = call(&st, get("/v1/search/text?q=brick")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["results"][0]["model_id"], brick_body["record"]["id"]);

    let id = brick_body["record"]["id"].as_str().unwrap();
    let (status, body) = call(&st, get(&format!("/v1/models/{id}/related"))).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["results"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["model_id"] != id));

    let (status, body) = call(&st, get("/v1/stats")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["active_models"], 3);
}

#[tokio::test]
async fn takedown_is_gone_everywhere() {
    let st = state();
    let (_, body) = upload(&st, "ball.stl", ball().as_bytes(), "a").await;
    let id = body["record"]["id"].as_str().unwrap().to_string();
    upload(
        &st,
        "ball2.stl",
        write_stl_ascii(&icosphere(2, 1.3), "ball").as_bytes(),
        "a",
    )
    .await;
    // Warm the related cache so that eviction is exercised.
    call(&st, get(&format!("/v1/models/{id}/related"))).await;

    let (status, _) = call(
        &st,
        Request::delete(format!("/v1/models/{id}"))
            .body(Body::empty())
            .unwrap(),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = call(&st, get(&format!("/v1/models/{id}"))).await;
    assert_eq!(status, StatusCode::GONE);
    assert_eq!(body["error"]["code"], "gone");
    let (status, _) = call(&st, get(&format!("/v1/models/{id}/related"))).await;
    assert_eq!(status, StatusCode::GONE);
    let (_, body) = call(
        &st,
        post(
            "/v1/search/similar",
            Form::new().file("q.stl", ball().as_bytes()),
        ),
    )
    .await;
    assert!(body["results"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["model_id"] != id.as_str()));
    assert!(!st.related_cache().mentions(&id.as_str().into()));
    let (status, _) = call(
        &st,
        Request::delete(format!("/v1/models/{id}"))
            .body(Body::empty())
            .unwrap(),
    )
    .await;
    assert_eq!(status, StatusCode::GONE);
}

#[tokio::test]
async fn errors_are_json_with_codes() {
    let st = state();
    let (status, body) = call(&st, get("/v1/models/nope")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "unknown-model");

    let (status, body) = upload(&st, "junk.stl", b"solid x\nfacet garbage\n", "a").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "parse-error");

    let (status, body) = call(&st, post("/v1/models", Form::new().text("domain", "a"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "missing-file");

    let (status, body) = call(
        &st,
        post(
            "/v1/search/similar?k=0",
            Form::new().file("q.stl", ball().as_bytes()),
        ),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "invalid-k");

    let (status, body) = call(&st, get("/v1/search/text")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"]["code"].is_string());

    let (status, body) = call(&st, get("/nowhere")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "not-found");
}

#[tokio::test]
async fn oversized_upload_is_rejected() {
    let st = AppState::new(
        Catalog::default(),
        ApiConfig {
            max_upload_bytes: 1024,
            ..ApiConfig::default()
        },
    );
    let (status, body) = upload(&st, "ball.stl", ball().as_bytes(), "a").await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(body["error"]["code"], "too-large");
    assert_eq!(st.read().unwrap().len(), 0);
}

#[tokio::test]
async fn mutations_persist_to_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let st = AppState::new(Catalog::open(dir.path()).unwrap(), ApiConfig::default());
    let (_, body) = upload(&st, "ball.stl", ball().as_bytes(), "a").await;
    let id = body["record"]["id"].as_str().unwrap().to_string();
    let reopened = Catalog::open(dir.path()).unwrap();
    assert!(reopened.active(&id.as_str().into()).is_ok());

    call(
        &st,
        Request::delete(format!("/v1/models/{id}"))
            .body(Body::empty())
            .unwrap(),
    )
    .await;
    let reopened = Catalog::open(dir.path()).unwrap();
    assert_eq!(
        reopened.active(&id.as_str().into()).unwrap_err().code(),
        "gone"
    );
}
