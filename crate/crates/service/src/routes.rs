use std::collections::HashMap;
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use chrono::{SecondsFormat, Utc};
use reshape_core::aggregate::{self, heatmap_timelapse, mean_shape_drawing, resample_all_with, DEFAULT_RESAMPLE_POINTS};
use reshape_core::coloring::{rasterize, ColoredRaster, DEFAULT_RESOLUTION};
use reshape_core::frechet::{
    distance_matrix, knn_graph, path_animation, shortest_path, DEFAULT_MATRIX_POINTS, DEFAULT_NEIGHBOURS,
};
use reshape_core::model::{format_timestamp, validate_value, Drawing, DrawingKind, ValidateOptions};
use reshape_core::sonify::{compose, encode_midi, events_to_json, Movement, SonifyConfig};
use reshape_core::Exec;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::{ApiError, AppState, Cached, CurveSpace};

const JSON: &str = "application/json";
const MIDI: &str = "audio/midi";
const MIN_RES: usize = 16;
const MAX_RES: usize = 512;
const MAX_FRAMES: usize = 1000;
const DEFAULT_FRAMES: usize = 30;
const DEFAULT_WINDOW_MS: u64 = 5000;
const DEFAULT_STEP_MS: u64 = 1000;

type Params = Query<HashMap<String, String>>;

fn param<T: FromStr>(q: &HashMap<String, String>, name: &str, default: Option<T>) -> Result<T, ApiError> {
    match q.get(name) {
        Some(raw) => raw
            .parse()
            .map_err(|_| ApiError::bad_params(format!("cannot parse {name}={raw:?}"))),
        None => default.ok_or_else(|| ApiError::bad_params(format!("missing query parameter {name}"))),
    }
}

fn in_range<T: PartialOrd + std::fmt::Display>(name: &str, v: T, lo: T, hi: T) -> Result<T, ApiError> {
    if v < lo || v > hi {
        return Err(ApiError::bad_params(format!("{name}={v} outside [{lo}, {hi}]")));
    }
    Ok(v)
}

fn respond(status: StatusCode, body: Cached) -> Response {
    (status, [(header::CONTENT_TYPE, body.content_type)], body.bytes).into_response()
}

fn json_body<T: Serialize>(value: &T) -> Result<Cached, ApiError> {
    let bytes = serde_json::to_vec(value).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Cached {
        content_type: JSON,
        bytes: Bytes::from(bytes),
    })
}

/// Serves `key` from the cache for the current corpus or computes it.
fn cached_or<F>(state: &AppState, key: String, compute: F) -> Result<Response, ApiError>
where
    F: FnOnce(&crate::Snapshot) -> Result<Cached, ApiError>,
{
    let snap = state.snapshot();
    if let Some(hit) = state.cached(snap.generation, &key) {
        return Ok(respond(StatusCode::OK, hit));
    }
    let body = compute(&snap)?;
    state.store(snap.generation, key, body.clone());
    Ok(respond(StatusCode::OK, body))
}

fn body_object(body: &Bytes) -> Result<Map<String, Value>, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::bad_params("empty request body"));
    }
    match serde_json::from_slice::<Value>(body) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ApiError::bad_params("body must be a JSON object")),
        Err(e) => Err(ApiError::bad_params(format!("body is not JSON: {e}"))),
    }
}

fn fill_metadata(map: &mut Map<String, Value>, id: &str, site: &str) {
    map.insert("id".into(), Value::String(id.to_string()));
    map.entry("site").or_insert_with(|| Value::String(site.to_string()));
    map.entry("created_at")
        .or_insert_with(|| Value::String(Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)));
}

pub async fn create_drawing(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let mut map = body_object(&body)?;
    let id = state.insert_with(|id| {
        fill_metadata(&mut map, id, "web");
        validate_value(Value::Object(map), ValidateOptions::default()).map_err(|r| ApiError::invalid_drawing(&r))
    })?;
    Ok(respond(StatusCode::CREATED, json_body(&json!({ "id": id }))?))
}

#[derive(Serialize)]
struct Summary<'a> {
    id: &'a str,
    kind: DrawingKind,
    site: &'a str,
    created_at: String,
}

fn summary(d: &Drawing) -> Summary<'_> {
    let (site, created_at) = match d {
        Drawing::Curve(c) => (&c.site, c.created_at),
        Drawing::Shapes(s) => (&s.site, s.created_at),
        Drawing::Pixel(p) => (&p.site, p.created_at),
    };
    Summary {
        id: d.id(),
        kind: d.kind(),
        site,
        created_at: format_timestamp(&created_at),
    }
}

pub async fn list_drawings(State(state): State<AppState>, Query(q): Params) -> Result<Response, ApiError> {
    let kind: Option<DrawingKind> = match q.get("kind") {
        None => None,
        Some(k) => Some(
            [DrawingKind::Curve, DrawingKind::Shapes, DrawingKind::Pixel]
                .into_iter()
                .find(|d| d.as_str() == k)
                .ok_or_else(|| ApiError::bad_params(format!("unknown kind {k:?}")))?,
        ),
    };
    let snap = state.snapshot();
    let items: Vec<Summary> = snap
        .dataset
        .drawings
        .iter()
        .filter(|d| kind.is_none_or(|k| d.kind() == k))
        .map(summary)
        .collect();
    let body = json_body(&json!({ "count": items.len(), "drawings": items }))?;
    Ok(respond(StatusCode::OK, body))
}

pub async fn get_drawing(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let snap = state.snapshot();
    let d = snap
        .dataset
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("no drawing {id:?}")))?;
    Ok(respond(
        StatusCode::OK,
        Cached {
            content_type: JSON,
            bytes: Bytes::from(d.to_json_line()),
        },
    ))
}

#[derive(Serialize)]
struct RasterBody<'a> {
    id: &'a str,
    resolution: usize,
    palette: Vec<String>,
    /// Raw winding or depth values, one array per row from the top.
    indices: Vec<&'a [i32]>,
    cells: Vec<&'a [usize]>,
}

fn raster_body(state: &AppState, id: &str, raster: &ColoredRaster) -> Result<Cached, ApiError> {
    let palette = &state.config().palette;
    let r = raster.resolution;
    json_body(&RasterBody {
        id,
        resolution: r,
        palette: (0..palette.len()).map(|i| palette.hex(i)).collect(),
        indices: raster.indices.chunks(r).collect(),
        cells: raster.cells.chunks(r).collect(),
    })
}

fn resolution(q: &HashMap<String, String>) -> Result<usize, ApiError> {
    in_range("res", param(q, "res", Some(DEFAULT_RESOLUTION))?, MIN_RES, MAX_RES)
}

pub async fn drawing_coloring(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Params,
) -> Result<Response, ApiError> {
    let res = resolution(&q)?;
    let key = format!("coloring/{id}/{res}/{:016x}", state.config().palette.fingerprint());
    cached_or(&state, key, |snap| {
        let d = snap
            .dataset
            .get(&id)
            .ok_or_else(|| ApiError::not_found(format!("no drawing {id:?}")))?;
        let raster = rasterize(d, res, state.config().palette.len())?;
        raster_body(&state, &id, &raster)
    })
}

pub async fn preview_coloring(
    State(state): State<AppState>,
    Query(q): Params,
    body: Bytes,
) -> Result<Response, ApiError> {
    let mut map = body_object(&body)?;
    let res = match map.remove("res") {
        Some(v) => {
            let r = v
                .as_u64()
                .ok_or_else(|| ApiError::bad_params("res must be an integer"))?;
            in_range("res", r as usize, MIN_RES, MAX_RES)?
        }
        None => resolution(&q)?,
    };
    fill_metadata(&mut map, "preview", "preview");
    let opts = ValidateOptions {
        palette_size: state.config().palette.len(),
        allow_empty: true,
    };
    let drawing = validate_value(Value::Object(map), opts).map_err(|r| ApiError::invalid_drawing(&r))?;
    let raster = rasterize(&drawing, res, state.config().palette.len())?;
    Ok(respond(StatusCode::OK, raster_body(&state, "preview", &raster)?))
}

pub async fn mean_curve(State(state): State<AppState>, Query(q): Params) -> Result<Response, ApiError> {
    let m = in_range("m", param(&q, "m", Some(DEFAULT_RESAMPLE_POINTS))?, 2, 4096)?;
    cached_or(&state, format!("aggregates/curve/{m}"), |snap| {
        let curves = snap.dataset.curves();
        if curves.is_empty() {
            return Err(ApiError::empty_corpus("no curve drawings yet"));
        }
        let mean = aggregate::mean_curve(&curves, m)?;
        json_body(&json!({
            "m": m,
            "count": curves.len(),
            "points": mean.resampled.points,
            "chain": mean.chain.segments,
        }))
    })
}

pub async fn mean_shapes(State(state): State<AppState>) -> Result<Response, ApiError> {
    cached_or(&state, "aggregates/shapes".into(), |snap| {
        let shapes = snap.dataset.shapes();
        if shapes.is_empty() {
            return Err(ApiError::empty_corpus("no shape drawings yet"));
        }
        let means = mean_shape_drawing(&shapes)?;
        json_body(&json!({ "count": shapes.len(), "means": means }))
    })
}

pub async fn heatmap(State(state): State<AppState>, Query(q): Params) -> Result<Response, ApiError> {
    let window: u64 = param(&q, "window", Some(DEFAULT_WINDOW_MS))?;
    let step: u64 = param(&q, "step", Some(DEFAULT_STEP_MS))?;
    if window == 0 || step == 0 {
        return Err(ApiError::bad_params("window and step must be positive"));
    }
    cached_or(&state, format!("heatmap/{window}/{step}"), |snap| {
        let pixels = snap.dataset.pixels();
        if pixels.is_empty() {
            return Err(ApiError::empty_corpus("no pixel drawings yet"));
        }
        let frames = heatmap_timelapse(&pixels, window, step)?;
        let taps: usize = pixels.iter().map(|p| p.taps.len()).sum();
        json_body(&json!({
            "window_ms": window,
            "step_ms": step,
            "total_taps": taps,
            "frames": frames,
        }))
    })
}

fn curve_space(state: &AppState, snap: &crate::Snapshot, m: usize) -> Result<Arc<CurveSpace>, ApiError> {
    if let Some(space) = state.space(snap.generation, m) {
        return Ok(space);
    }
    let drawings = snap.dataset.curves();
    if drawings.is_empty() {
        return Err(ApiError::empty_corpus("no curve drawings yet"));
    }
    let curves = resample_all_with(&drawings, m, Exec::default())?;
    let ids = drawings.iter().map(|d| d.id.clone()).collect();
    let matrix = distance_matrix(&curves, ids)?;
    let space = Arc::new(CurveSpace { curves, matrix });
    state.store_space(snap.generation, m, space.clone());
    Ok(space)
}

pub async fn path(State(state): State<AppState>, Query(q): Params) -> Result<Response, ApiError> {
    let from: String = param(&q, "from", None)?;
    let to: String = param(&q, "to", None)?;
    let k = in_range("k", param(&q, "k", Some(DEFAULT_NEIGHBOURS))?, 1, 64)?;
    let frames = in_range("frames", param(&q, "frames", Some(DEFAULT_FRAMES))?, 2, MAX_FRAMES)?;
    let m = in_range("m", param(&q, "m", Some(DEFAULT_MATRIX_POINTS))?, 2, 1024)?;
    let key = format!("path/{from}/{to}/{k}/{frames}/{m}");
    cached_or(&state, key, |snap| {
        for id in [&from, &to] {
            match snap.dataset.get(id) {
                Some(Drawing::Curve(_)) => {}
                Some(_) => return Err(ApiError::bad_params(format!("{id:?} is not a curve drawing"))),
                None => return Err(ApiError::not_found(format!("no drawing {id:?}"))),
            }
        }
        let space = curve_space(&state, snap, m)?;
        let graph = knn_graph(&space.matrix, k)?;
        let route = shortest_path(&graph, &from, &to)?;
        let hops: Vec<_> = route
            .nodes
            .iter()
            .map(|id| &space.curves[space.matrix.index_of(id).expect("path node in matrix")])
            .collect();
        let animation = path_animation(&hops, frames)?;
        let frames: Vec<_> = animation.iter().map(|f| &f.points).collect();
        json_body(&json!({ "path": route, "k": k, "m": m, "frames": frames }))
    })
}

pub async fn sonify(
    State(state): State<AppState>,
    Path(movement): Path<String>,
    Query(q): Params,
) -> Result<Response, ApiError> {
    let movement: Movement = movement
        .parse()
        .map_err(|_| ApiError::not_found(format!("unknown movement {movement:?}")))?;
    let seed: u64 = param(&q, "seed", Some(0))?;
    let bpm: f64 = param(&q, "bpm", Some(120.0))?;
    let format: String = param(&q, "format", Some("midi".to_string()))?;
    if format != "midi" && format != "json" {
        return Err(ApiError::bad_params(format!("format must be midi or json, got {format:?}")));
    }
    let cfg = SonifyConfig::with_bpm(bpm);
    cfg.check()?;
    let key = format!("sonify/{movement}/{seed}/{:x}/{format}", bpm.to_bits());
    cached_or(&state, key, |snap| {
        let events = compose(&snap.dataset, movement, &cfg, seed)?;
        Ok(if format == "json" {
            Cached {
                content_type: JSON,
                bytes: Bytes::from(events_to_json(&events)),
            }
        } else {
            Cached {
                content_type: MIDI,
                bytes: Bytes::from(encode_midi(&events, &cfg)?),
            }
        })
    })
}
