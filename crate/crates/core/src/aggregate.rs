//! Collective artifacts built from many drawings: the mean curve, per-kind
//! mean shapes, prefix ("moving") means, and heat-map time-lapses of pixel
//! taps.
//!
//! Means are computed coordinate by coordinate with the contributing values
//! sorted before summation. The result therefore does not depend on input
//! order, and sequential and parallel runs agree bit for bit.

use std::borrow::Borrow;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::coloring::{chain_path_data, flatten_chain, polyline_path_data, shape_svg_element, DEFAULT_SAMPLES_PER_SEGMENT};
use crate::geometry::{polygon_centroid, signed_area, Point};
use crate::model::{
    BezierChain, CubicSegment, CurveDrawing, PixelDrawing, Shape, ShapeDrawing, ShapeKind,
    TapEvent, GRID_SIZE, MIN_POLYGON_AREA,
};
use crate::par::{map_range, map_slice, Exec};
use crate::{Error, Result};

pub const DEFAULT_RESAMPLE_POINTS: usize = 128;
pub const DEFAULT_REFIT_SEGMENTS: usize = 16;

/// `m` points spaced uniformly by arc length along a source stroke.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResampledCurve {
    pub points: Vec<Point>,
}

impl ResampledCurve {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Resamples a polyline at `m` arc-length-uniform positions. End points are
/// copied exactly.
pub fn resample_polyline(points: &[Point], m: usize) -> Result<ResampledCurve> {
    if m < 2 {
        return Err(Error::InvalidParams(format!("m must be at least 2, got {m}")));
    }
    let mut cumulative = Vec::with_capacity(points.len());
    let mut total = 0.0;
    cumulative.push(0.0);
    for w in points.windows(2) {
        total += w[0].distance(w[1]);
        cumulative.push(total);
    }
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Degenerate("zero-length curve".into()));
    }
    let last = points.len() - 1;
    let mut out = Vec::with_capacity(m);
    out.push(points[0]);
    let mut seg = 0;
    for j in 1..m - 1 {
        let target = j as f64 * total / (m - 1) as f64;
        while seg + 1 < last && cumulative[seg + 1] < target {
            seg += 1;
        }
        let span = cumulative[seg + 1] - cumulative[seg];
        let t = if span > 0.0 { ((target - cumulative[seg]) / span).clamp(0.0, 1.0) } else { 0.0 };
        out.push(points[seg].lerp(points[seg + 1], t));
    }
    out.push(points[last]);
    Ok(ResampledCurve { points: out })
}

/// Arc-length resampling of the drawing's first stroke, flattened at the
/// default density. Additional strokes do not take part in averaging.
pub fn resample(drawing: &CurveDrawing, m: usize) -> Result<ResampledCurve> {
    let stroke = drawing
        .strokes
        .first()
        .ok_or_else(|| Error::EmptyInput(format!("curve drawing {} has no strokes", drawing.id)))?;
    resample_polyline(&flatten_chain(stroke, DEFAULT_SAMPLES_PER_SEGMENT).points, m)
}

/// Order-independent mean: values are sorted before summation.
fn sorted_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn mean_point_sets<P: AsRef<[Point]>>(sets: &[P], len: usize) -> Vec<Point> {
    let mut xs = vec![0.0; sets.len()];
    let mut ys = vec![0.0; sets.len()];
    (0..len)
        .map(|j| {
            for (i, s) in sets.iter().enumerate() {
                let p = s.as_ref()[j];
                xs[i] = p.x;
                ys[i] = p.y;
            }
            Point::new(sorted_mean(&mut xs), sorted_mean(&mut ys))
        })
        .collect()
}

/// Pointwise mean of equally long resamplings.
pub fn mean_of_resampled(curves: &[ResampledCurve]) -> Result<ResampledCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::EmptyInput("no curves to average".into()))?;
    let m = first.len();
    if curves.iter().any(|c| c.len() != m) {
        return Err(Error::InvalidParams("resampled curves differ in length".into()));
    }
    let sets: Vec<&[Point]> = curves.iter().map(|c| c.points.as_slice()).collect();
    let mut points = mean_point_sets(&sets, m);
    // Inputs all start at x = 0 and end at x = 1.
    points[0].x = 0.0;
    points[m - 1].x = 1.0;
    Ok(ResampledCurve { points })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanCurve {
    pub resampled: ResampledCurve,
    /// Least-squares C0 cubic refit of the mean polyline, for rendering.
    #[serde(serialize_with = "serialize_chain")]
    pub chain: BezierChain,
}

fn serialize_chain<S: serde::Serializer>(chain: &BezierChain, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(chain.segments.len()))?;
    for seg in &chain.segments {
        seq.serialize_element(seg)?;
    }
    seq.end()
}

pub fn resample_all_with<T>(drawings: &[T], m: usize, exec: Exec) -> Result<Vec<ResampledCurve>>
where
    T: Borrow<CurveDrawing> + Sync,
{
    map_slice(exec, drawings, |d| resample(d.borrow(), m))
        .into_iter()
        .collect()
}

pub fn mean_curve_with<T>(drawings: &[T], m: usize, segments: usize, exec: Exec) -> Result<MeanCurve>
where
    T: Borrow<CurveDrawing> + Sync,
{
    if drawings.is_empty() {
        return Err(Error::EmptyInput("mean curve needs at least one drawing".into()));
    }
    let resampled = mean_of_resampled(&resample_all_with(drawings, m, exec)?)?;
    let chain = fit_bezier_chain(&resampled.points, segments);
    Ok(MeanCurve { resampled, chain })
}

/// Mean of the arc-length resamplings of every drawing's first stroke, plus
/// its Bézier refit.
pub fn mean_curve<T>(drawings: &[T], m: usize) -> Result<MeanCurve>
where
    T: Borrow<CurveDrawing> + Sync,
{
    mean_curve_with(drawings, m, DEFAULT_REFIT_SEGMENTS, Exec::default())
}

fn bernstein(t: f64) -> [f64; 4] {
    let u = 1.0 - t;
    [u * u * u, 3.0 * t * u * u, 3.0 * t * t * u, t * t * t]
}

/// Least-squares fit of an `s`-segment C0 cubic chain to `points`, sampled
/// at uniform global parameters `j / (len - 1)`. The chain's end points are
/// pinned to the first and last input points; the shared knots and inner
/// controls are free. `s` is reduced when there are too few points.
pub fn fit_bezier_chain(points: &[Point], segments: usize) -> BezierChain {
    let first = points[0];
    let last = points[points.len() - 1];
    let s = segments.max(1).min((points.len().saturating_sub(1)) / 4).max(1);
    let unknowns = 3 * s - 1;
    if points.len() < 4 || points.len() < unknowns + 2 {
        let a = first.lerp(last, 1.0 / 3.0);
        let b = first.lerp(last, 2.0 / 3.0);
        return BezierChain::new(vec![[first, a, b, last]]);
    }
    let knot = |i: usize| i - 1;
    let ctrl = |k: usize, which: usize| (s - 1) + 2 * k + which;

    let n = points.len();
    let mut design = DMatrix::<f64>::zeros(n, unknowns);
    let mut rhs = DMatrix::<f64>::zeros(n, 2);
    for (j, p) in points.iter().enumerate() {
        let u = j as f64 / (n - 1) as f64 * s as f64;
        let k = (u.floor() as usize).min(s - 1);
        let b = bernstein(u - k as f64);
        let mut target = [p.x, p.y];
        if k == 0 {
            target[0] -= b[0] * first.x;
            target[1] -= b[0] * first.y;
        } else {
            design[(j, knot(k))] += b[0];
        }
        design[(j, ctrl(k, 0))] += b[1];
        design[(j, ctrl(k, 1))] += b[2];
        if k + 1 == s {
            target[0] -= b[3] * last.x;
            target[1] -= b[3] * last.y;
        } else {
            design[(j, knot(k + 1))] += b[3];
        }
        rhs[(j, 0)] = target[0];
        rhs[(j, 1)] = target[1];
    }
    let solution = design
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .expect("SVD computed with both factors");
    let at = |idx: usize| Point::new(solution[(idx, 0)], solution[(idx, 1)]);
    let knot_point = |i: usize| {
        if i == 0 {
            first
        } else if i == s {
            last
        } else {
            at(knot(i))
        }
    };
    let segments: Vec<CubicSegment> = (0..s)
        .map(|k| [knot_point(k), at(ctrl(k, 0)), at(ctrl(k, 1)), knot_point(k + 1)])
        .collect();
    BezierChain::new(segments)
}

fn canonical_vertices<const N: usize>(vertices: &[Point; N]) -> Result<[Point; N]> {
    let area = signed_area(vertices);
    if area.abs() <= MIN_POLYGON_AREA {
        return Err(Error::Degenerate("degenerate polygon (zero area)".into()));
    }
    let mut v = *vertices;
    if area < 0.0 {
        v.reverse();
    }
    let c = polygon_centroid(&v);
    let key = |p: Point| ((p - c).y.atan2((p - c).x), p.distance(c));
    let start = (0..N)
        .min_by(|&a, &b| {
            let (ka, kb) = (key(v[a]), key(v[b]));
            ka.0.total_cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(a.cmp(&b))
        })
        .expect("polygon has vertices");
    v.rotate_left(start);
    Ok(v)
}

/// Counter-clockwise orientation, starting at the vertex with the smallest
/// polar angle about the centroid. Circles are returned unchanged.
pub fn canonicalize_polygon(shape: &Shape) -> Result<Shape> {
    Ok(match shape {
        Shape::Circle { .. } => *shape,
        Shape::Triangle { vertices } => Shape::Triangle {
            vertices: canonical_vertices(vertices)?,
        },
        Shape::Quad { vertices } => Shape::Quad {
            vertices: canonical_vertices(vertices)?,
        },
    })
}

/// Barycenter of same-kind shapes: mean center and radius for circles,
/// vertexwise mean of canonicalized polygons otherwise.
pub fn mean_shape(shapes: &[Shape]) -> Result<Shape> {
    let first = shapes
        .first()
        .ok_or_else(|| Error::EmptyInput("no shapes to average".into()))?;
    let kind = first.kind();
    if let Some(other) = shapes.iter().find(|s| s.kind() != kind) {
        return Err(Error::MixedKinds(format!("{kind} and {}", other.kind())));
    }
    match kind {
        ShapeKind::Circle => {
            let mut xs = Vec::with_capacity(shapes.len());
            let mut ys = Vec::with_capacity(shapes.len());
            let mut rs = Vec::with_capacity(shapes.len());
            for s in shapes {
                if let Shape::Circle { center, radius } = s {
                    xs.push(center.x);
                    ys.push(center.y);
                    rs.push(*radius);
                }
            }
            Ok(Shape::Circle {
                center: Point::new(sorted_mean(&mut xs), sorted_mean(&mut ys)),
                radius: sorted_mean(&mut rs),
            })
        }
        ShapeKind::Triangle => {
            let sets = canonical_sets::<3>(shapes)?;
            Ok(Shape::Triangle {
                vertices: mean_point_sets(&sets, 3).try_into().expect("3 vertices"),
            })
        }
        ShapeKind::Quadrilateral => {
            let sets = canonical_sets::<4>(shapes)?;
            Ok(Shape::Quad {
                vertices: mean_point_sets(&sets, 4).try_into().expect("4 vertices"),
            })
        }
    }
}

fn canonical_sets<const N: usize>(shapes: &[Shape]) -> Result<Vec<[Point; N]>> {
    shapes
        .iter()
        .map(|s| {
            let v = s.vertices().expect("polygon kind checked");
            canonical_vertices::<N>(v.try_into().expect("vertex count matches kind"))
        })
        .collect()
}

/// One mean shape per kind present in the pool.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MeanShapes {
    pub circle: Option<Shape>,
    pub triangle: Option<Shape>,
    pub quad: Option<Shape>,
}

impl MeanShapes {
    pub fn get(&self, kind: ShapeKind) -> Option<&Shape> {
        match kind {
            ShapeKind::Circle => self.circle.as_ref(),
            ShapeKind::Triangle => self.triangle.as_ref(),
            ShapeKind::Quadrilateral => self.quad.as_ref(),
        }
    }

    /// Present means in circle, triangle, quad order.
    pub fn shapes(&self) -> impl Iterator<Item = &Shape> {
        ShapeKind::ALL.into_iter().filter_map(|k| self.get(k))
    }

    pub fn len(&self) -> usize {
        self.shapes().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pools every circle, triangle and quadrilateral across the drawings and
/// averages each pool. Absent kinds are omitted.
pub fn mean_shape_drawing<T: Borrow<ShapeDrawing>>(drawings: &[T]) -> Result<MeanShapes> {
    let mut pools: [Vec<Shape>; 3] = Default::default();
    for d in drawings {
        for s in &d.borrow().shapes {
            let slot = ShapeKind::ALL.iter().position(|k| *k == s.kind()).expect("known kind");
            pools[slot].push(*s);
        }
    }
    let mean = |pool: &Vec<Shape>| -> Result<Option<Shape>> {
        if pool.is_empty() {
            Ok(None)
        } else {
            mean_shape(pool).map(Some)
        }
    };
    Ok(MeanShapes {
        circle: mean(&pools[0])?,
        triangle: mean(&pools[1])?,
        quad: mean(&pools[2])?,
    })
}

fn require_pair(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParams(format!(
            "prefix means need at least 2 drawings, got {n}"
        )));
    }
    Ok(())
}

/// Element `j - 2` is the mean curve of the first `j` drawings, `j = 2..=n`.
pub fn prefix_mean_curves_with<T>(drawings: &[T], m: usize, exec: Exec) -> Result<Vec<ResampledCurve>>
where
    T: Borrow<CurveDrawing> + Sync,
{
    require_pair(drawings.len())?;
    let resampled = resample_all_with(drawings, m, exec)?;
    map_range(exec, drawings.len() - 1, |i| mean_of_resampled(&resampled[..i + 2]))
        .into_iter()
        .collect()
}

pub fn prefix_mean_curves<T>(drawings: &[T], m: usize) -> Result<Vec<ResampledCurve>>
where
    T: Borrow<CurveDrawing> + Sync,
{
    prefix_mean_curves_with(drawings, m, Exec::default())
}

/// Element `j - 2` holds the per-kind means of the first `j` drawings.
pub fn prefix_mean_shapes_with<T>(drawings: &[T], exec: Exec) -> Result<Vec<MeanShapes>>
where
    T: Borrow<ShapeDrawing> + Sync,
{
    require_pair(drawings.len())?;
    map_range(exec, drawings.len() - 1, |i| mean_shape_drawing(&drawings[..i + 2]))
        .into_iter()
        .collect()
}

pub fn prefix_mean_shapes<T>(drawings: &[T]) -> Result<Vec<MeanShapes>>
where
    T: Borrow<ShapeDrawing> + Sync,
{
    prefix_mean_shapes_with(drawings, Exec::default())
}

/// A tap placed on the shared timeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimedTap {
    pub t_ms: u64,
    pub tap: TapEvent,
}

/// Concatenates sessions in dataset order: each drawing's taps are shifted
/// by the summed durations (last tap time) of the drawings before it.
pub fn global_timeline<T: Borrow<PixelDrawing>>(drawings: &[T]) -> Vec<TimedTap> {
    let mut offset = 0u64;
    let mut out = Vec::new();
    for d in drawings {
        let d = d.borrow();
        out.extend(d.taps.iter().map(|t| TimedTap {
            t_ms: offset + t.t_ms,
            tap: *t,
        }));
        offset += d.duration_ms();
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HeatFrame {
    pub t_start: u64,
    pub t_end: u64,
    /// `counts[row][col]`.
    pub counts: [[u32; GRID_SIZE]; GRID_SIZE],
}

impl HeatFrame {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().map(|&c| c as u64).sum()
    }

    pub fn max(&self) -> u32 {
        self.counts.iter().flatten().copied().max().unwrap_or(0)
    }
}

/// Sliding-window tap counts. Frame `f` covers `[f·step, f·step + window)`;
/// frames are emitted while the frame start does not pass the last tap.
pub fn heatmap_timelapse<T: Borrow<PixelDrawing>>(
    drawings: &[T],
    window_ms: u64,
    step_ms: u64,
) -> Result<Vec<HeatFrame>> {
    if window_ms == 0 || step_ms == 0 {
        return Err(Error::InvalidParams("window and step must be positive".into()));
    }
    let taps = global_timeline(drawings);
    let Some(last) = taps.iter().map(|t| t.t_ms).max() else {
        return Ok(Vec::new());
    };
    let n_frames = (last / step_ms + 1) as usize;
    let mut frames: Vec<HeatFrame> = (0..n_frames as u64)
        .map(|f| HeatFrame {
            t_start: f * step_ms,
            t_end: f * step_ms + window_ms,
            counts: [[0; GRID_SIZE]; GRID_SIZE],
        })
        .collect();
    for t in &taps {
        let hi = (t.t_ms / step_ms) as usize;
        let lo = if t.t_ms >= window_ms {
            ((t.t_ms - window_ms) / step_ms + 1) as usize
        } else {
            0
        };
        for frame in &mut frames[lo..=hi.min(n_frames - 1)] {
            frame.counts[t.tap.row as usize][t.tap.col as usize] += 1;
        }
    }
    Ok(frames)
}

const PREVIEW_SIZE: f64 = 512.0;

/// Mean curve (thick) over optional faint individual curves.
pub fn render_mean_curve_svg(mean: &MeanCurve, backdrop: &[ResampledCurve]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {s} {s}" width="{s}" height="{s}">"#,
        s = PREVIEW_SIZE
    );
    let _ = writeln!(out, r##"<rect width="{s}" height="{s}" fill="#ffffff"/>"##, s = PREVIEW_SIZE);
    for c in backdrop {
        let _ = writeln!(
            out,
            r##"<path d="{}" fill="none" stroke="#1d4e9a" stroke-opacity="0.15" stroke-width="1"/>"##,
            polyline_path_data(&c.points, PREVIEW_SIZE)
        );
    }
    let _ = writeln!(
        out,
        r##"<path d="{}" fill="none" stroke="#d4211c" stroke-width="3"/>"##,
        chain_path_data(&mean.chain, PREVIEW_SIZE)
    );
    out.push_str("</svg>\n");
    out
}

pub fn render_mean_shapes_svg(means: &MeanShapes) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {s} {s}" width="{s}" height="{s}">"#,
        s = PREVIEW_SIZE
    );
    let _ = writeln!(out, r##"<rect width="{s}" height="{s}" fill="#ffffff"/>"##, s = PREVIEW_SIZE);
    let fills = ["#d4211c", "#f6c31b", "#1d4e9a"];
    for (kind, fill) in ShapeKind::ALL.iter().zip(fills) {
        if let Some(s) = means.get(*kind) {
            let style = format!(r##"fill="{fill}" fill-opacity="0.6" stroke="#141414" stroke-width="2""##);
            let _ = writeln!(out, "{}", shape_svg_element(s, PREVIEW_SIZE, &style));
        }
    }
    out.push_str("</svg>\n");
    out
}

/// 6×6 grid shaded by count relative to `scale_max`.
pub fn render_heat_frame_svg(frame: &HeatFrame, scale_max: u32) -> String {
    let cell = 64;
    let size = cell * GRID_SIZE;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {size} {size}" width="{size}" height="{size}">"#
    );
    let max = scale_max.max(1) as f64;
    for (row, counts) in frame.counts.iter().enumerate() {
        for (col, &c) in counts.iter().enumerate() {
            let heat = c as f64 / max;
            let g = (255.0 * (1.0 - heat)).round() as u8;
            let _ = writeln!(
                out,
                r##"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="#ff{g:02x}{g:02x}"/>"##,
                col * cell,
                row * cell
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
