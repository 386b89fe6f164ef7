use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use reshape_core::model::{save_dataset, DrawingKind};
use reshape_core::synth::{gen_dataset, GenParams};
use reshape_service::{router, AppState, ServiceConfig};

const STRAIGHT: &str = r#"{"kind":"curve","color_choice":1,"strokes":[[[0,0.5],[0.33,0.5],[0.66,0.5],[1,0.5]]]}"#;

struct Api {
    app: Router,
    dir: tempfile::TempDir,
}

struct Reply {
    status: StatusCode,
    content_type: String,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

impl Api {
    fn empty() -> Api {
        let dir = tempfile::tempdir().unwrap();
        let (state, _) = AppState::open(ServiceConfig::new(dir.path().join("corpus.jsonl"))).unwrap();
        Api { app: router(state), dir }
    }

    fn seeded(kind: DrawingKind, count: usize) -> Api {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        save_dataset(&gen_dataset(kind, count, &GenParams::with_seed(1)), &path).unwrap();
        let (state, rejected) = AppState::open(ServiceConfig::new(path)).unwrap();
        assert!(rejected.is_empty());
        Api { app: router(state), dir }
    }

    fn corpus_bytes(&self) -> Vec<u8> {
        std::fs::read(self.dir.path().join("corpus.jsonl")).unwrap_or_default()
    }

    async fn send(&self, req: Request<Body>) -> Reply {
        let res = self.app.clone().oneshot(req).await.unwrap();
        let status = res.status();
        let content_type = res
            .headers()
            .get(header::CONTENT_TYPE)
            .map(|v| v.to_str().unwrap().to_string())
            .unwrap_or_default();
        let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply { status, content_type, body }
    }

    async fn get(&self, uri: &str) -> Reply {
        self.send(Request::get(uri).body(Body::empty()).unwrap()).await
    }

    async fn post(&self, uri: &str, body: &str) -> Reply {
        let req = Request::post(uri)
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        self.send(req).await
    }
}

#[tokio::test]
async fn submit_then_fetch() {
    let api = Api::empty();
    let r = api.post("/drawings", STRAIGHT).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let id = r.json()["id"].as_str().unwrap().to_string();
    let fetched = api.get(&format!("/drawings/{id}")).await;
    assert_eq!(fetched.status, StatusCode::OK);
    let v = fetched.json();
    assert_eq!(v["kind"], "curve");
    assert_eq!(v["site"], "web");
    let mut line = fetched.body.clone();
    line.push(b'\n');
    assert_eq!(api.corpus_bytes(), line);

    let list = api.get("/drawings").await.json();
    assert_eq!(list["count"], 1);
    assert_eq!(list["drawings"][0]["id"], id.as_str());
    assert_eq!(api.get("/drawings?kind=pixel").await.json()["count"], 0);
}

#[tokio::test]
async fn rejected_submissions_do_not_touch_the_file() {
    let api = Api::empty();
    let short = r#"{"kind":"curve","color_choice":1,"strokes":[[[0,0.5],[0.2,0.5],[0.5,0.5],[0.7,0.5]]]}"#;
    let r = api.post("/drawings", short).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    let v = r.json();
    assert_eq!(v["code"], "invalid_drawing");
    assert!(v["message"].as_str().unwrap().contains("right edge"));
    assert!(v["details"].as_array().is_some_and(|d| !d.is_empty()));

    for body in ["", "   ", "[1,2]", "{not json"] {
        let r = api.post("/drawings", body).await;
        assert_eq!(r.status, StatusCode::BAD_REQUEST, "{body:?}");
        assert_eq!(r.json()["code"], "bad_params");
    }
    assert!(api.corpus_bytes().is_empty());
}

#[tokio::test]
async fn coloring_by_id() {
    let api = Api::seeded(DrawingKind::Curve, 3);
    let a = api.get("/drawings/curve-1/coloring?res=64").await;
    assert_eq!(a.status, StatusCode::OK);
    let v = a.json();
    assert_eq!(v["resolution"], 64);
    assert_eq!(v["indices"].as_array().unwrap().len(), 64);
    assert!(v["indices"].as_array().unwrap().iter().all(|row| row.as_array().unwrap().len() == 64));
    assert_eq!(v["palette"].as_array().unwrap().len(), 5);
    let b = api.get("/drawings/curve-1/coloring?res=64").await;
    assert_eq!(a.body, b.body);

    assert_eq!(api.get("/drawings/nope/coloring").await.status, StatusCode::NOT_FOUND);
    for res in ["8", "513", "abc"] {
        let r = api.get(&format!("/drawings/curve-1/coloring?res={res}")).await;
        assert_eq!(r.status, StatusCode::BAD_REQUEST, "res={res}");
        assert_eq!(r.json()["code"], "bad_params");
    }
}

#[tokio::test]
async fn preview_is_stateless() {
    let api = Api::empty();
    let r = api.post("/coloring/preview?res=32", STRAIGHT).await;
    assert_eq!(r.status, StatusCode::OK);
    let v = r.json();
    let raw: Vec<i64> = v["indices"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|row| row.as_array().unwrap().iter().map(|x| x.as_i64().unwrap()))
        .collect();
    let ones = raw.iter().filter(|&&x| x == 1).count();
    assert!(raw.iter().all(|&x| x == 0 || x == 1));
    assert_eq!(ones, 32 * 16);

    let blank = api.post("/coloring/preview", r#"{"kind":"shapes","shapes":[],"res":16}"#).await;
    assert_eq!(blank.status, StatusCode::OK);
    let v = blank.json();
    assert_eq!(v["resolution"], 16);
    let first = &v["indices"][0][0];
    assert!(v["indices"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()).all(|x| x == first));

    let bad = api.post("/coloring/preview", r#"{"kind":"curve","color_choice":0,"strokes":[[[0.2,0.5],[0.3,0.5],[0.6,0.5],[1,0.5]]]}"#).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    assert_eq!(bad.json()["code"], "invalid_drawing");
    assert!(api.corpus_bytes().is_empty());
    assert_eq!(api.get("/drawings").await.json()["count"], 0);
}

#[tokio::test]
async fn aggregates_need_a_corpus() {
    let api = Api::empty();
    for uri in ["/aggregates/curve", "/aggregates/shapes", "/heatmap", "/sonify/pixel-beat", "/sonify/chaos-order"] {
        let r = api.get(uri).await;
        assert_eq!(r.status, StatusCode::CONFLICT, "{uri}");
    }
}

#[tokio::test]
async fn mean_curve_follows_submissions() {
    let api = Api::empty();
    let low = r#"{"kind":"curve","color_choice":0,"strokes":[[[0,0.2],[0.3,0.2],[0.6,0.2],[1,0.2]]]}"#;
    let high = r#"{"kind":"curve","color_choice":0,"strokes":[[[0,0.8],[0.3,0.8],[0.6,0.8],[1,0.8]]]}"#;
    api.post("/drawings", low).await;
    api.post("/drawings", high).await;
    let v = api.get("/aggregates/curve?m=16").await.json();
    assert_eq!(v["count"], 2);
    let pts = v["points"].as_array().unwrap();
    assert_eq!(pts.len(), 16);
    assert!(pts.iter().all(|p| (p[1].as_f64().unwrap() - 0.5).abs() < 1e-9));

    api.post("/drawings", high).await;
    let v = api.get("/aggregates/curve?m=16").await.json();
    assert_eq!(v["count"], 3);
    assert!((v["points"][0][1].as_f64().unwrap() - 0.6).abs() < 1e-9);
}

#[tokio::test]
async fn shapes_and_heatmap() {
    let api = Api::seeded(DrawingKind::Shapes, 12);
    let v = api.get("/aggregates/shapes").await.json();
    assert_eq!(v["count"], 12);
    for kind in ["circle", "triangle", "quad"] {
        assert_eq!(v["means"][kind]["kind"], kind);
    }

    let api = Api::seeded(DrawingKind::Pixel, 4);
    let v = api.get("/heatmap?window=2000&step=2000").await.json();
    let total: u64 = v["frames"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|f| f["counts"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()))
        .map(|c| c.as_u64().unwrap())
        .sum();
    assert_eq!(total, v["total_taps"].as_u64().unwrap());
    assert_eq!(total, 80);
    assert_eq!(api.get("/heatmap?window=0").await.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn morph_paths() {
    let api = Api::seeded(DrawingKind::Curve, 8);
    let same = api.get("/path?from=curve-3&to=curve-3").await.json();
    assert_eq!(same["path"]["nodes"], json!(["curve-3"]));
    assert_eq!(same["path"]["weight"], 0.0);
    assert_eq!(same["frames"].as_array().unwrap().len(), 1);

    let r = api.get("/path?from=curve-1&to=curve-8&k=2&frames=5&m=32").await;
    assert_eq!(r.status, StatusCode::OK);
    let v = r.json();
    let hops = v["path"]["nodes"].as_array().unwrap().len() - 1;
    assert!(hops >= 1);
    assert_eq!(v["frames"].as_array().unwrap().len(), hops * 4 + 1);
    assert!(v["frames"][0].as_array().unwrap().len() >= 32);

    assert_eq!(api.get("/path?from=curve-1&to=ghost").await.status, StatusCode::NOT_FOUND);
    assert_eq!(api.get("/path?from=curve-1").await.status, StatusCode::BAD_REQUEST);
    assert_eq!(api.get("/path?from=curve-1&to=curve-2&k=0").await.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn sonification_formats() {
    let api = Api::seeded(DrawingKind::Pixel, 3);
    let midi = api.get("/sonify/pixel-beat").await;
    assert_eq!(midi.status, StatusCode::OK);
    assert_eq!(midi.content_type, "audio/midi");
    assert_eq!(&midi.body[..4], b"MThd");
    midly::Smf::parse(&midi.body).unwrap();

    let events = api.get("/sonify/pixel-beat?format=json&bpm=90").await.json();
    assert_eq!(events.as_array().unwrap().len(), 60);
    assert_eq!(api.get("/sonify/unknown").await.status, StatusCode::NOT_FOUND);
    assert_eq!(api.get("/sonify/pixel-beat?bpm=-3").await.status, StatusCode::BAD_REQUEST);
    assert_eq!(api.get("/sonify/pixel-beat?format=wav").await.status, StatusCode::BAD_REQUEST);

    let curves = Api::seeded(DrawingKind::Curve, 15);
    let a = curves.get("/sonify/mean-curve?seed=4&format=json").await;
    let b = curves.get("/sonify/mean-curve?seed=4&format=json").await;
    assert_eq!(a.body, b.body);
    let voices: std::collections::BTreeSet<u64> =
        a.json().as_array().unwrap().iter().map(|e| e["voice"].as_u64().unwrap()).collect();
    assert_eq!(voices.len(), 11);
}

#[tokio::test]
async fn cors_for_the_ui_origin() {
    let api = Api::empty();
    let req = Request::get("/drawings")
        .header(header::ORIGIN, reshape_service::DEFAULT_UI_ORIGIN)
        .body(Body::empty())
        .unwrap();
    let res = api.app.clone().oneshot(req).await.unwrap();
    assert_eq!(
        res.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).unwrap(),
        reshape_service::DEFAULT_UI_ORIGIN
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_submissions_get_distinct_ids() {
    let api = Api::empty();
    let tasks: Vec<_> = (0..16)
        .map(|_| {
            let app = api.app.clone();
            tokio::spawn(async move {
                let req = Request::post("/drawings").body(Body::from(STRAIGHT)).unwrap();
                let res = app.oneshot(req).await.unwrap();
                assert_eq!(res.status(), StatusCode::CREATED);
                let body = res.into_body().collect().await.unwrap().to_bytes();
                serde_json::from_slice::<Value>(&body).unwrap()["id"].as_str().unwrap().to_string()
            })
        })
        .collect();
    let mut ids = Vec::new();
    for t in tasks {
        ids.push(t.await.unwrap());
    }
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 16);
    let lines = api.corpus_bytes().iter().filter(|&&b| b == b'\n').count();
    assert_eq!(lines, 16);
}
