//! Drawing records, validation, and the JSON-lines dataset format.
//!
//! All coordinates live on the unit square with `y` pointing up. Validation
//! clamps coordinates to `[0, 1]` and rounds every real number to nine
//! significant digits, so a validated drawing is a fixed point of
//! save/load.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::hash::{Hash, Hasher};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::geometry::{is_simple_polygon, polygon_centroid, signed_area, Point};
use crate::Error;

pub const GRID_SIZE: usize = 6;
pub const DEFAULT_PALETTE_SIZE: usize = 5;
/// Polygons with smaller absolute area are degenerate.
pub const MIN_POLYGON_AREA: f64 = 1e-9;
/// Endpoints this close to a canvas edge are snapped onto it.
pub const EDGE_SNAP: f64 = 1e-9;

/// Rounds to nine significant digits. Idempotent, maps `-0.0` to `0.0`.
pub fn quantize(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { 0.0 } else { v };
    }
    let q: f64 = format!("{v:.8e}").parse().unwrap_or(v);
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

pub(crate) fn canvas_point(p: Point) -> Point {
    Point::new(quantize(p.x.clamp(0.0, 1.0)), quantize(p.y.clamp(0.0, 1.0)))
}

pub type CubicSegment = [Point; 4];

/// Chain of cubic Bézier segments joined end to start.
#[derive(Clone, Debug, PartialEq)]
pub struct BezierChain {
    pub segments: Vec<CubicSegment>,
}

impl BezierChain {
    pub fn new(segments: Vec<CubicSegment>) -> Self {
        BezierChain { segments }
    }

    pub fn start(&self) -> Point {
        self.segments[0][0]
    }

    pub fn end(&self) -> Point {
        self.segments[self.segments.len() - 1][3]
    }

    /// Flat control-point list, shared endpoints repeated (the wire layout).
    pub fn control_points(&self) -> Vec<Point> {
        self.segments.iter().flat_map(|s| s.iter().copied()).collect()
    }

    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> BezierChain {
        BezierChain::new(self.segments.iter().map(|s| s.map(&f)).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveDrawing {
    pub id: String,
    pub site: String,
    pub created_at: DateTime<Utc>,
    pub color_choice: usize,
    pub strokes: Vec<BezierChain>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Circle,
    Triangle,
    #[serde(rename = "quad")]
    Quadrilateral,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Circle, ShapeKind::Triangle, ShapeKind::Quadrilateral];

    pub fn as_str(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Quadrilateral => "quad",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Circle {
        #[serde(rename = "c")]
        center: Point,
        #[serde(rename = "r")]
        radius: f64,
    },
    Triangle {
        #[serde(rename = "v")]
        vertices: [Point; 3],
    },
    #[serde(rename = "quad")]
    Quad {
        #[serde(rename = "v")]
        vertices: [Point; 4],
    },
}

impl Shape {
    pub fn kind(&self) -> ShapeKind {
        match self {
            Shape::Circle { .. } => ShapeKind::Circle,
            Shape::Triangle { .. } => ShapeKind::Triangle,
            Shape::Quad { .. } => ShapeKind::Quadrilateral,
        }
    }

    pub fn vertices(&self) -> Option<&[Point]> {
        match self {
            Shape::Circle { .. } => None,
            Shape::Triangle { vertices } => Some(vertices),
            Shape::Quad { vertices } => Some(vertices),
        }
    }

    /// Unsigned area: `πr²` for circles, shoelace for polygons.
    pub fn area(&self) -> f64 {
        match self {
            Shape::Circle { radius, .. } => std::f64::consts::PI * radius * radius,
            Shape::Triangle { vertices } => signed_area(vertices).abs(),
            Shape::Quad { vertices } => signed_area(vertices).abs(),
        }
    }

    pub fn centroid(&self) -> Point {
        match self {
            Shape::Circle { center, .. } => *center,
            Shape::Triangle { vertices } => polygon_centroid(vertices),
            Shape::Quad { vertices } => polygon_centroid(vertices),
        }
    }

    pub fn translate(&self, by: Point) -> Shape {
        match self {
            Shape::Circle { center, radius } => Shape::Circle {
                center: *center + by,
                radius: *radius,
            },
            Shape::Triangle { vertices } => Shape::Triangle {
                vertices: vertices.map(|v| v + by),
            },
            Shape::Quad { vertices } => Shape::Quad {
                vertices: vertices.map(|v| v + by),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeDrawing {
    pub id: String,
    pub site: String,
    pub created_at: DateTime<Utc>,
    pub shapes: Vec<Shape>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapEvent {
    pub row: u8,
    pub col: u8,
    pub t_ms: u64,
    pub color_choice: usize,
}

impl TapEvent {
    pub fn cell(&self) -> usize {
        self.row as usize * GRID_SIZE + self.col as usize
    }
}

/// A 6×6 pixel session. The grid size is fixed, so it is not stored.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelDrawing {
    pub id: String,
    pub site: String,
    pub created_at: DateTime<Utc>,
    pub taps: Vec<TapEvent>,
}

impl PixelDrawing {
    /// Session length: the timestamp of the last tap, 0 when empty.
    pub fn duration_ms(&self) -> u64 {
        self.taps.last().map_or(0, |t| t.t_ms)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Drawing {
    Curve(CurveDrawing),
    Shapes(ShapeDrawing),
    Pixel(PixelDrawing),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawingKind {
    Curve,
    Shapes,
    Pixel,
}

impl DrawingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DrawingKind::Curve => "curve",
            DrawingKind::Shapes => "shapes",
            DrawingKind::Pixel => "pixel",
        }
    }
}

impl fmt::Display for DrawingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Drawing {
    pub fn id(&self) -> &str {
        match self {
            Drawing::Curve(d) => &d.id,
            Drawing::Shapes(d) => &d.id,
            Drawing::Pixel(d) => &d.id,
        }
    }

    pub fn kind(&self) -> DrawingKind {
        match self {
            Drawing::Curve(_) => DrawingKind::Curve,
            Drawing::Shapes(_) => DrawingKind::Shapes,
            Drawing::Pixel(_) => DrawingKind::Pixel,
        }
    }

    pub fn set_id(&mut self, id: String) {
        match self {
            Drawing::Curve(d) => d.id = id,
            Drawing::Shapes(d) => d.id = id,
            Drawing::Pixel(d) => d.id = id,
        }
    }

    /// Canonical single-line JSON: fixed field order, no trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_raw()).expect("drawing serialization is infallible")
    }

    pub fn to_raw(&self) -> RawDrawing {
        match self {
            Drawing::Curve(d) => RawDrawing::Curve(RawCurve {
                id: Some(d.id.clone()),
                site: Some(d.site.clone()),
                created_at: Some(format_timestamp(&d.created_at)),
                color_choice: d.color_choice,
                strokes: d.strokes.iter().map(BezierChain::control_points).collect(),
            }),
            Drawing::Shapes(d) => RawDrawing::Shapes(RawShapes {
                id: Some(d.id.clone()),
                site: Some(d.site.clone()),
                created_at: Some(format_timestamp(&d.created_at)),
                shapes: d.shapes.iter().map(RawShape::from).collect(),
            }),
            Drawing::Pixel(d) => RawDrawing::Pixel(RawPixel {
                id: Some(d.id.clone()),
                site: Some(d.site.clone()),
                created_at: Some(format_timestamp(&d.created_at)),
                grid_w: None,
                grid_h: None,
                taps: d
                    .taps
                    .iter()
                    .map(|t| RawTap {
                        row: t.row as i64,
                        col: t.col as i64,
                        t_ms: t.t_ms as i64,
                        color_choice: t.color_choice,
                    })
                    .collect(),
            }),
        }
    }
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

// Wire records. Field order here is the canonical on-disk order.

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RawDrawing {
    Curve(RawCurve),
    Shapes(RawShapes),
    Pixel(RawPixel),
}

// Written by hand so that `id` precedes the `kind` tag.
impl Serialize for RawDrawing {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let (id, kind, site, created_at) = match self {
            RawDrawing::Curve(c) => (&c.id, "curve", &c.site, &c.created_at),
            RawDrawing::Shapes(s) => (&s.id, "shapes", &s.site, &s.created_at),
            RawDrawing::Pixel(p) => (&p.id, "pixel", &p.site, &p.created_at),
        };
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("id", id)?;
        map.serialize_entry("kind", kind)?;
        map.serialize_entry("site", site)?;
        map.serialize_entry("created_at", created_at)?;
        match self {
            RawDrawing::Curve(c) => {
                map.serialize_entry("color_choice", &c.color_choice)?;
                map.serialize_entry("strokes", &c.strokes)?;
            }
            RawDrawing::Shapes(s) => map.serialize_entry("shapes", &s.shapes)?,
            RawDrawing::Pixel(p) => {
                if let Some(w) = p.grid_w {
                    map.serialize_entry("grid_w", &w)?;
                }
                if let Some(h) = p.grid_h {
                    map.serialize_entry("grid_h", &h)?;
                }
                map.serialize_entry("taps", &p.taps)?;
            }
        }
        map.end()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RawCurve {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub site: Option<String>,
    #[serde(default)]
    pub created_at: Option<String>,
    pub color_choice: usize,
    pub strokes: Vec<Vec<Point>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RawShapes {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub site: Option<String>,
    #[serde(default)]
    pub created_at: Option<String>,
    pub shapes: Vec<RawShape>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RawShape {
    Circle { c: Point, r: f64 },
    Triangle { v: Vec<Point> },
    Quad { v: Vec<Point> },
}

impl From<&Shape> for RawShape {
    fn from(s: &Shape) -> Self {
        match s {
            Shape::Circle { center, radius } => RawShape::Circle {
                c: *center,
                r: *radius,
            },
            Shape::Triangle { vertices } => RawShape::Triangle { v: vertices.to_vec() },
            Shape::Quad { vertices } => RawShape::Quad { v: vertices.to_vec() },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RawPixel {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub site: Option<String>,
    #[serde(default)]
    pub created_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_w: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_h: Option<i64>,
    pub taps: Vec<RawTap>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RawTap {
    pub row: i64,
    pub col: i64,
    pub t_ms: i64,
    pub color_choice: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    MalformedField,
    InvariantViolation,
    EmptyDrawing,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Problem {
    pub kind: ProblemKind,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            ProblemKind::MalformedField => "malformed-field",
            ProblemKind::InvariantViolation => "invariant-violation",
            ProblemKind::EmptyDrawing => "empty-drawing",
        };
        write!(f, "{tag} at {}: {}", self.field, self.message)
    }
}

/// Every problem found in one record.
#[derive(Clone, Debug, PartialEq, Serialize, thiserror::Error)]
pub struct ValidationReport {
    pub problems: Vec<Problem>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.problems.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

impl ValidationReport {
    fn single(kind: ProblemKind, field: &str, message: impl Into<String>) -> Self {
        ValidationReport {
            problems: vec![Problem {
                kind,
                field: field.to_string(),
                message: message.into(),
            }],
        }
    }

    pub fn has(&self, kind: ProblemKind) -> bool {
        self.problems.iter().any(|p| p.kind == kind)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ValidateOptions {
    pub palette_size: usize,
    /// Accept curve/shape drawings with nothing drawn yet (live previews).
    pub allow_empty: bool,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            palette_size: DEFAULT_PALETTE_SIZE,
            allow_empty: false,
        }
    }
}

#[derive(Default)]
struct Collector {
    problems: Vec<Problem>,
}

impl Collector {
    fn push(&mut self, kind: ProblemKind, field: impl Into<String>, message: impl Into<String>) {
        self.problems.push(Problem {
            kind,
            field: field.into(),
            message: message.into(),
        });
    }

    fn invariant(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.push(ProblemKind::InvariantViolation, field, message);
    }

    fn required(&mut self, field: &str, value: Option<String>) -> String {
        match value {
            Some(v) => v,
            None => {
                self.push(ProblemKind::MalformedField, field, "missing field");
                String::new()
            }
        }
    }

    fn timestamp(&mut self, value: Option<String>) -> DateTime<Utc> {
        let Some(raw) = value else {
            self.push(ProblemKind::MalformedField, "created_at", "missing field");
            return DateTime::<Utc>::UNIX_EPOCH;
        };
        match DateTime::parse_from_rfc3339(&raw) {
            Ok(t) => t.with_timezone(&Utc),
            Err(e) => {
                self.push(
                    ProblemKind::MalformedField,
                    "created_at",
                    format!("not an RFC 3339 timestamp: {e}"),
                );
                DateTime::<Utc>::UNIX_EPOCH
            }
        }
    }

    fn finish<T>(self, value: T) -> Result<T, ValidationReport> {
        if self.problems.is_empty() {
            Ok(value)
        } else {
            Err(ValidationReport {
                problems: self.problems,
            })
        }
    }
}

/// Parses one JSON record and validates it.
pub fn parse_drawing(text: &str, opts: ValidateOptions) -> Result<Drawing, ValidationReport> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| {
        ValidationReport::single(ProblemKind::MalformedField, "$", format!("invalid JSON: {e}"))
    })?;
    validate_value(value, opts)
}

pub fn validate_value(
    value: serde_json::Value,
    opts: ValidateOptions,
) -> Result<Drawing, ValidationReport> {
    if !value.is_object() {
        return Err(ValidationReport::single(
            ProblemKind::MalformedField,
            "$",
            "record must be a JSON object",
        ));
    }
    let raw: RawDrawing = serde_json::from_value(value)
        .map_err(|e| ValidationReport::single(ProblemKind::MalformedField, "$", e.to_string()))?;
    validate_drawing(raw, opts)
}

/// Enforces every drawing invariant, clamping coordinates onto the canvas.
/// The error lists all violations found, not just the first.
pub fn validate_drawing(raw: RawDrawing, opts: ValidateOptions) -> Result<Drawing, ValidationReport> {
    match raw {
        RawDrawing::Curve(c) => validate_curve(c, opts).map(Drawing::Curve),
        RawDrawing::Shapes(s) => validate_shapes(s, opts).map(Drawing::Shapes),
        RawDrawing::Pixel(p) => validate_pixel(p, opts).map(Drawing::Pixel),
    }
}

fn validate_curve(raw: RawCurve, opts: ValidateOptions) -> Result<CurveDrawing, ValidationReport> {
    let mut out = Collector::default();
    let id = out.required("id", raw.id);
    let site = out.required("site", raw.site);
    let created_at = out.timestamp(raw.created_at);
    if raw.color_choice >= opts.palette_size {
        out.invariant(
            "color_choice",
            format!("palette index {} out of range (k={})", raw.color_choice, opts.palette_size),
        );
    }
    if raw.strokes.is_empty() && !opts.allow_empty {
        out.push(ProblemKind::EmptyDrawing, "strokes", "curve drawing has no strokes");
    }
    let mut strokes = Vec::with_capacity(raw.strokes.len());
    for (si, pts) in raw.strokes.into_iter().enumerate() {
        let field = format!("strokes[{si}]");
        if pts.is_empty() || pts.len() % 4 != 0 {
            out.invariant(
                &field,
                format!("expected a positive multiple of 4 control points, got {}", pts.len()),
            );
            continue;
        }
        if pts.iter().any(|p| !p.is_finite()) {
            out.push(ProblemKind::MalformedField, &field, "non-finite coordinate");
            continue;
        }
        let mut segments: Vec<CubicSegment> = pts
            .chunks_exact(4)
            .map(|c| [canvas_point(c[0]), canvas_point(c[1]), canvas_point(c[2]), canvas_point(c[3])])
            .collect();
        for k in 1..segments.len() {
            if segments[k - 1][3] != segments[k][0] {
                out.invariant(
                    &field,
                    format!("segments {} and {k} are not connected (C0 break)", k - 1),
                );
            }
        }
        let first = &mut segments[0][0];
        if first.x <= EDGE_SNAP {
            first.x = 0.0;
        } else {
            out.invariant(&field, format!("does not start at the left edge (x={})", first.x));
        }
        let n = segments.len();
        let last = &mut segments[n - 1][3];
        if last.x >= 1.0 - EDGE_SNAP {
            last.x = 1.0;
        } else {
            out.invariant(&field, format!("does not reach the right edge (x={})", last.x));
        }
        strokes.push(BezierChain::new(segments));
    }
    out.finish(CurveDrawing {
        id,
        site,
        created_at,
        color_choice: raw.color_choice,
        strokes,
    })
}

fn validate_shape(raw: RawShape, field: &str, out: &mut Collector) -> Option<Shape> {
    match raw {
        RawShape::Circle { c, r } => {
            if !c.is_finite() || !r.is_finite() {
                out.push(ProblemKind::MalformedField, field, "non-finite value");
                return None;
            }
            let radius = quantize(r);
            if !(radius > 0.0 && radius <= 1.0) {
                out.invariant(field, format!("circle radius {r} outside (0, 1]"));
                return None;
            }
            Some(Shape::Circle {
                center: canvas_point(c),
                radius,
            })
        }
        RawShape::Triangle { v } | RawShape::Quad { v } if v.iter().any(|p| !p.is_finite()) => {
            out.push(ProblemKind::MalformedField, field, "non-finite coordinate");
            None
        }
        RawShape::Triangle { v } => {
            let Ok(vertices) = <[Point; 3]>::try_from(v.as_slice()) else {
                out.invariant(field, format!("triangle needs 3 vertices, got {}", v.len()));
                return None;
            };
            let vertices = vertices.map(canvas_point);
            check_polygon(&vertices, field, out).then_some(Shape::Triangle { vertices })
        }
        RawShape::Quad { v } => {
            let Ok(vertices) = <[Point; 4]>::try_from(v.as_slice()) else {
                out.invariant(field, format!("quadrilateral needs 4 vertices, got {}", v.len()));
                return None;
            };
            let vertices = vertices.map(canvas_point);
            check_polygon(&vertices, field, out).then_some(Shape::Quad { vertices })
        }
    }
}

fn check_polygon(vertices: &[Point], field: &str, out: &mut Collector) -> bool {
    if signed_area(vertices).abs() <= MIN_POLYGON_AREA {
        out.invariant(field, "degenerate polygon (zero area)");
        return false;
    }
    if !is_simple_polygon(vertices) {
        out.invariant(field, "self-intersecting polygon");
        return false;
    }
    true
}

fn validate_shapes(raw: RawShapes, opts: ValidateOptions) -> Result<ShapeDrawing, ValidationReport> {
    let mut out = Collector::default();
    let id = out.required("id", raw.id);
    let site = out.required("site", raw.site);
    let created_at = out.timestamp(raw.created_at);
    if raw.shapes.is_empty() && !opts.allow_empty {
        out.push(ProblemKind::EmptyDrawing, "shapes", "shape drawing has no shapes");
    }
    let shapes = raw
        .shapes
        .into_iter()
        .enumerate()
        .filter_map(|(i, s)| validate_shape(s, &format!("shapes[{i}]"), &mut out))
        .collect();
    out.finish(ShapeDrawing {
        id,
        site,
        created_at,
        shapes,
    })
}

fn validate_pixel(raw: RawPixel, opts: ValidateOptions) -> Result<PixelDrawing, ValidationReport> {
    let mut out = Collector::default();
    let id = out.required("id", raw.id);
    let site = out.required("site", raw.site);
    let created_at = out.timestamp(raw.created_at);
    for (name, dim) in [("grid_w", raw.grid_w), ("grid_h", raw.grid_h)] {
        if let Some(d) = dim {
            if d != GRID_SIZE as i64 {
                out.invariant(name, format!("grid is fixed at {GRID_SIZE}, got {d}"));
            }
        }
    }
    let grid = 0..GRID_SIZE as i64;
    let mut taps = Vec::with_capacity(raw.taps.len());
    let mut prev_t = 0u64;
    for (i, t) in raw.taps.into_iter().enumerate() {
        let field = format!("taps[{i}]");
        let mut ok = true;
        if !grid.contains(&t.row) || !grid.contains(&t.col) {
            out.invariant(&field, format!("cell ({}, {}) outside the 6x6 grid", t.row, t.col));
            ok = false;
        }
        if t.t_ms < 0 {
            out.invariant(&field, format!("negative timestamp {}", t.t_ms));
            ok = false;
        }
        if t.color_choice >= opts.palette_size {
            out.invariant(
                &field,
                format!("palette index {} out of range (k={})", t.color_choice, opts.palette_size),
            );
            ok = false;
        }
        if ok {
            let t_ms = t.t_ms as u64;
            if t_ms < prev_t {
                out.invariant(&field, format!("timestamp {t_ms} precedes previous tap at {prev_t}"));
            }
            prev_t = prev_t.max(t_ms);
            taps.push(TapEvent {
                row: t.row as u8,
                col: t.col as u8,
                t_ms,
                color_choice: t.color_choice,
            });
        }
    }
    out.finish(PixelDrawing {
        id,
        site,
        created_at,
        taps,
    })
}

/// RGB palette; cell colors are looked up by index.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<[u8; 3]>", into = "Vec<[u8; 3]>")]
pub struct Palette {
    colors: Vec<[u8; 3]>,
}

impl Palette {
    pub fn new(colors: Vec<[u8; 3]>) -> Result<Self, Error> {
        if colors.len() < 2 {
            return Err(Error::InvalidParams(format!(
                "palette needs at least 2 colors, got {}",
                colors.len()
            )));
        }
        Ok(Palette { colors })
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn colors(&self) -> &[[u8; 3]] {
        &self.colors
    }

    pub fn color(&self, index: usize) -> [u8; 3] {
        self.colors[index]
    }

    pub fn hex(&self, index: usize) -> String {
        let [r, g, b] = self.colors[index];
        format!("#{r:02x}{g:02x}{b:02x}")
    }

    /// Stable within a process; used as a cache key.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.colors.hash(&mut h);
        h.finish()
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidParams(format!("palette file: {e}")))
    }
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            colors: vec![
                [0xf4, 0xf1, 0xea],
                [0xd4, 0x21, 0x1c],
                [0xf6, 0xc3, 0x1b],
                [0x1d, 0x4e, 0x9a],
                [0x14, 0x14, 0x14],
            ],
        }
    }
}

impl TryFrom<Vec<[u8; 3]>> for Palette {
    type Error = Error;
    fn try_from(colors: Vec<[u8; 3]>) -> Result<Self, Error> {
        Palette::new(colors)
    }
}

impl From<Palette> for Vec<[u8; 3]> {
    fn from(p: Palette) -> Self {
        p.colors
    }
}

/// Drawings in file order. Kind-specific views preserve that order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub drawings: Vec<Drawing>,
}

impl Dataset {
    pub fn new(drawings: Vec<Drawing>) -> Self {
        Dataset { drawings }
    }

    pub fn len(&self) -> usize {
        self.drawings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.drawings.is_empty()
    }

    pub fn curves(&self) -> Vec<&CurveDrawing> {
        self.drawings
            .iter()
            .filter_map(|d| match d {
                Drawing::Curve(c) => Some(c),
                _ => None,
            })
            .collect()
    }

    pub fn shapes(&self) -> Vec<&ShapeDrawing> {
        self.drawings
            .iter()
            .filter_map(|d| match d {
                Drawing::Shapes(s) => Some(s),
                _ => None,
            })
            .collect()
    }

    pub fn pixels(&self) -> Vec<&PixelDrawing> {
        self.drawings
            .iter()
            .filter_map(|d| match d {
                Drawing::Pixel(p) => Some(p),
                _ => None,
            })
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<&Drawing> {
        self.drawings.iter().find(|d| d.id() == id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rejection {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct LoadReport {
    pub dataset: Dataset,
    pub rejections: Vec<Rejection>,
}

/// Reads a JSON-lines dataset. Bad lines are logged and skipped; only I/O
/// failures are fatal. Blank lines are ignored.
pub fn load_dataset(path: &Path) -> Result<LoadReport, Error> {
    let file = File::open(path)?;
    read_dataset(BufReader::new(file), ValidateOptions::default())
}

pub fn read_dataset<R: BufRead>(reader: R, opts: ValidateOptions) -> Result<LoadReport, Error> {
    let mut report = LoadReport::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_drawing(&line, opts) {
            Ok(d) => report.dataset.drawings.push(d),
            Err(e) => report.rejections.push(Rejection {
                line: i + 1,
                reason: e.to_string(),
            }),
        }
    }
    Ok(report)
}

pub fn save_dataset<'a>(
    drawings: impl IntoIterator<Item = &'a Drawing>,
    path: &Path,
) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    for d in drawings {
        w.write_all(d.to_json_line().as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Appends one canonical line and syncs it to disk.
pub fn append_drawing(path: &Path, drawing: &Drawing) -> Result<(), Error> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = drawing.to_json_line();
    line.push('\n');
    file.write_all(line.as_bytes())?;
    file.sync_data()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CURVE_OK: &str = r#"{"id":"c1","kind":"curve","site":"lab","created_at":"2022-03-01T10:00:00Z","color_choice":2,"strokes":[[[0,0.5],[0.3,0.6],[0.6,0.4],[1,0.5]]]}"#;

    fn opts() -> ValidateOptions {
        ValidateOptions::default()
    }

    #[test]
    fn accepts_spanning_curve() {
        let d = parse_drawing(CURVE_OK, opts()).unwrap();
        let Drawing::Curve(c) = d else { panic!("not a curve") };
        assert_eq!(c.strokes[0].start(), Point::new(0.0, 0.5));
        assert_eq!(c.strokes[0].end(), Point::new(1.0, 0.5));
    }

    #[test]
    fn rejects_curve_short_of_right_edge() {
        let text = CURVE_OK.replace("[1,0.5]", "[0.7,0.5]");
        let err = parse_drawing(&text, opts()).unwrap_err();
        assert!(err.has(ProblemKind::InvariantViolation));
        assert!(err.to_string().contains("right edge"), "{err}");
    }

    #[test]
    fn rejects_collinear_triangle() {
        let text = r#"{"id":"s","kind":"shapes","site":"x","created_at":"2022-01-01T00:00:00Z","shapes":[{"kind":"triangle","v":[[0.1,0.1],[0.2,0.2],[0.3,0.3]]}]}"#;
        let err = parse_drawing(text, opts()).unwrap_err();
        assert!(err.to_string().contains("degenerate polygon"), "{err}");
    }

    #[test]
    fn reports_every_violation() {
        let text = r#"{"id":"s","kind":"shapes","site":"x","created_at":"2022-01-01T00:00:00Z","shapes":[
            {"kind":"triangle","v":[[0.1,0.1],[0.2,0.2],[0.3,0.3]]},
            {"kind":"circle","c":[0.5,0.5],"r":0},
            {"kind":"quad","v":[[0,0],[1,1],[1,0],[0,1]]}]}"#
            .replace('\n', "");
        let err = parse_drawing(&text, opts()).unwrap_err();
        assert_eq!(err.problems.len(), 3, "{err}");
    }

    #[test]
    fn empty_drawing_errors() {
        let text = r#"{"id":"s","kind":"shapes","site":"x","created_at":"2022-01-01T00:00:00Z","shapes":[]}"#;
        let err = parse_drawing(text, opts()).unwrap_err();
        assert!(err.has(ProblemKind::EmptyDrawing));
        let lenient = ValidateOptions {
            allow_empty: true,
            ..opts()
        };
        assert!(parse_drawing(text, lenient).is_ok());
    }

    #[test]
    fn malformed_fields() {
        let err = parse_drawing(r#"{"kind":"curve","strokes":"nope"}"#, opts()).unwrap_err();
        assert!(err.has(ProblemKind::MalformedField));
        let err = parse_drawing("[1,2]", opts()).unwrap_err();
        assert!(err.has(ProblemKind::MalformedField));
        let missing_id = CURVE_OK.replace(r#""id":"c1","#, "");
        let err = parse_drawing(&missing_id, opts()).unwrap_err();
        assert_eq!(err.problems[0].field, "id");
    }

    #[test]
    fn clamps_out_of_canvas_coordinates() {
        let text = CURVE_OK.replace("[0.3,0.6]", "[0.3,1.4]").replace("[0,0.5]", "[-0.2,0.5]");
        let Drawing::Curve(c) = parse_drawing(&text, opts()).unwrap() else {
            unreachable!()
        };
        assert_eq!(c.strokes[0].segments[0][1], Point::new(0.3, 1.0));
        assert_eq!(c.strokes[0].start(), Point::new(0.0, 0.5));
    }

    #[test]
    fn c0_break_is_reported() {
        let text = r#"{"id":"c","kind":"curve","site":"x","created_at":"2022-01-01T00:00:00Z","color_choice":0,"strokes":[[[0,0.5],[0.1,0.5],[0.2,0.5],[0.5,0.5],[0.5,0.6],[0.6,0.5],[0.8,0.5],[1,0.5]]]}"#;
        let err = parse_drawing(text, opts()).unwrap_err();
        assert!(err.to_string().contains("C0"), "{err}");
    }

    #[test]
    fn pixel_taps_checked() {
        let text = r#"{"id":"p","kind":"pixel","site":"x","created_at":"2022-01-01T00:00:00Z","taps":[{"row":0,"col":6,"t_ms":5,"color_choice":0},{"row":1,"col":1,"t_ms":10,"color_choice":0},{"row":1,"col":2,"t_ms":3,"color_choice":9}]}"#;
        let err = parse_drawing(text, opts()).unwrap_err();
        assert_eq!(err.problems.len(), 2, "{err}");
        let bad_grid = r#"{"id":"p","kind":"pixel","site":"x","created_at":"2022-01-01T00:00:00Z","grid_w":8,"taps":[]}"#;
        assert!(parse_drawing(bad_grid, opts()).is_err());
    }

    #[test]
    fn quantize_is_idempotent() {
        for v in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-12, 0.999_999_999_9, -0.0] {
            let q = quantize(v);
            assert_eq!(quantize(q), q);
            let mantissa = format!("{q:e}");
            let digits = mantissa.split('e').next().unwrap().chars().filter(char::is_ascii_digit).count();
            assert!(digits <= 9, "{v} -> {mantissa}");
        }
        assert_eq!(quantize(-0.0).to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn dataset_with_bad_line() {
        let text = format!("{CURVE_OK}\n{CURVE_OK}\nnot json\n\n{CURVE_OK}\n");
        let report = read_dataset(text.as_bytes(), opts()).unwrap();
        assert_eq!(report.dataset.len(), 3);
        assert_eq!(report.rejections.len(), 1);
        assert_eq!(report.rejections[0].line, 3);
    }

    #[test]
    fn empty_dataset() {
        let report = read_dataset(&b""[..], opts()).unwrap();
        assert!(report.dataset.is_empty());
        assert!(report.rejections.is_empty());
    }

    #[test]
    fn canonical_field_order() {
        let d = parse_drawing(CURVE_OK, opts()).unwrap();
        assert_eq!(d.to_json_line(), CURVE_OK.replace("[0,0.5]", "[0.0,0.5]").replace("[1,0.5]", "[1.0,0.5]"));
    }

    #[test]
    fn palette_requires_two_colors() {
        assert!(Palette::new(vec![[0, 0, 0]]).is_err());
        assert_eq!(Palette::default().len(), DEFAULT_PALETTE_SIZE);
        assert_eq!(Palette::new(vec![[255, 255, 255], [0, 0, 0]]).unwrap().hex(0), "#ffffff");
    }
}
