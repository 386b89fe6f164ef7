//! HTTP API over an append-only drawing corpus: submission with
//! validation, live coloring, aggregates, morph paths and sonification.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::http::{header, HeaderValue, Method};
use axum::routing::{get, post};
use axum::Router;
use parking_lot::{Mutex, RwLock};
use reshape_core::aggregate::ResampledCurve;
use reshape_core::frechet::DistanceMatrix;
use reshape_core::model::{append_drawing, load_dataset, Dataset, Drawing, Palette, Rejection};
use tower_http::cors::CorsLayer;

mod error;
mod routes;

pub use error::{ApiError, ErrorCode};

pub const DEFAULT_UI_ORIGIN: &str = "http://localhost:5173";

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// JSON-lines corpus; created on the first submission if absent.
    pub dataset: PathBuf,
    pub palette: Palette,
    /// Browser origin allowed by CORS; `None` disables CORS headers.
    pub ui_origin: Option<String>,
}

impl ServiceConfig {
    pub fn new(dataset: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            dataset: dataset.into(),
            palette: Palette::default(),
            ui_origin: Some(DEFAULT_UI_ORIGIN.to_string()),
        }
    }
}

/// A cached response body.
#[derive(Clone, Debug)]
pub(crate) struct Cached {
    pub content_type: &'static str,
    pub bytes: Bytes,
}

/// Resampled curves and their pairwise distances at one density.
pub(crate) struct CurveSpace {
    pub curves: Vec<ResampledCurve>,
    pub matrix: DistanceMatrix,
}

#[derive(Clone)]
pub(crate) struct Snapshot {
    pub generation: u64,
    pub dataset: Arc<Dataset>,
}

#[derive(Default)]
struct Caches {
    generation: u64,
    bodies: HashMap<String, Cached>,
    spaces: HashMap<usize, Arc<CurveSpace>>,
}

struct Shared {
    config: ServiceConfig,
    corpus: RwLock<Snapshot>,
    /// Serializes id assignment and file appends.
    writer: Mutex<()>,
    caches: Mutex<Caches>,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    /// Loads the corpus, returning the lines that failed validation.
    pub fn open(config: ServiceConfig) -> reshape_core::Result<(AppState, Vec<Rejection>)> {
        let (dataset, rejections) = if config.dataset.exists() {
            let report = load_dataset(&config.dataset)?;
            (report.dataset, report.rejections)
        } else {
            (Dataset::default(), Vec::new())
        };
        let state = AppState(Arc::new(Shared {
            config,
            corpus: RwLock::new(Snapshot {
                generation: 0,
                dataset: Arc::new(dataset),
            }),
            writer: Mutex::new(()),
            caches: Mutex::new(Caches::default()),
        }));
        Ok((state, rejections))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.0.config
    }

    pub(crate) fn snapshot(&self) -> Snapshot {
        self.0.corpus.read().clone()
    }

    pub fn len(&self) -> usize {
        self.0.corpus.read().dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Assigns an id under the writer lock, lets `build` validate the
    /// record, appends it, then publishes a new generation. Nothing is
    /// written when `build` fails.
    pub(crate) fn insert_with<F>(&self, build: F) -> Result<String, ApiError>
    where
        F: FnOnce(&str) -> Result<Drawing, ApiError>,
    {
        let _writer = self.0.writer.lock();
        let current = self.snapshot();
        let id = next_id(&current.dataset);
        let drawing = build(&id)?;
        append_drawing(&self.0.config.dataset, &drawing)?;
        let generation = {
            let mut corpus = self.0.corpus.write();
            Arc::make_mut(&mut corpus.dataset).drawings.push(drawing);
            corpus.generation += 1;
            corpus.generation
        };
        let mut caches = self.0.caches.lock();
        caches.generation = generation;
        caches.bodies.clear();
        caches.spaces.clear();
        Ok(id)
    }

    pub(crate) fn cached(&self, generation: u64, key: &str) -> Option<Cached> {
        let caches = self.0.caches.lock();
        (caches.generation == generation)
            .then(|| caches.bodies.get(key).cloned())
            .flatten()
    }

    /// Stores a body unless a submission has landed since `generation`.
    pub(crate) fn store(&self, generation: u64, key: String, body: Cached) {
        let mut caches = self.0.caches.lock();
        if caches.generation == generation {
            caches.bodies.insert(key, body);
        }
    }

    pub(crate) fn space(&self, generation: u64, m: usize) -> Option<Arc<CurveSpace>> {
        let caches = self.0.caches.lock();
        (caches.generation == generation)
            .then(|| caches.spaces.get(&m).cloned())
            .flatten()
    }

    pub(crate) fn store_space(&self, generation: u64, m: usize, space: Arc<CurveSpace>) {
        let mut caches = self.0.caches.lock();
        if caches.generation == generation {
            caches.spaces.insert(m, space);
        }
    }
}

fn next_id(dataset: &Dataset) -> String {
    (dataset.len() + 1..)
        .map(|n| format!("d{n:06}"))
        .find(|id| dataset.get(id).is_none())
        .expect("unbounded id range")
}

pub fn router(state: AppState) -> Router {
    let cors = state.config().ui_origin.as_deref().map(|origin| {
        CorsLayer::new()
            .allow_origin(HeaderValue::from_str(origin).unwrap_or(HeaderValue::from_static(DEFAULT_UI_ORIGIN)))
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([header::CONTENT_TYPE])
    });
    let app = Router::new()
        .route("/drawings", post(routes::create_drawing).get(routes::list_drawings))
        .route("/drawings/{id}", get(routes::get_drawing))
        .route("/drawings/{id}/coloring", get(routes::drawing_coloring))
        .route("/coloring/preview", post(routes::preview_coloring))
        .route("/aggregates/curve", get(routes::mean_curve))
        .route("/aggregates/shapes", get(routes::mean_shapes))
        .route("/heatmap", get(routes::heatmap))
        .route("/path", get(routes::path))
        .route("/sonify/{movement}", get(routes::sonify))
        .with_state(state);
    match cors {
        Some(layer) => app.layer(layer),
        None => app,
    }
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let (state, rejections) = AppState::open(config).map_err(std::io::Error::other)?;
    for r in &rejections {
        eprintln!("skipped line {}: {}", r.line, r.reason);
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
