//! Region coloring: winding index for curve drawings, containment depth for
//! shape drawings, sampled at raster cell centers and mapped onto a palette
//! modulo its size.
//!
//! Open curves are closed at infinity: each polyline is extended by a
//! horizontal ray to `x = -∞` from its start and to `x = +∞` from its end.
//! The winding index of a point is the signed number of crossings of the
//! upward vertical ray from that point, `+1` for edges traversed with
//! increasing `x` and `-1` otherwise. An edge counts when the query `x` lies
//! in the half-open interval `[x_left, x_right)` of the edge, so a shared
//! vertex is counted once. Points lying exactly on the curve do not count
//! that edge.

use std::fmt::Write as _;

use serde::Serialize;

use crate::geometry::{orient, polygon_winding, signed_area, Point};
use crate::model::{BezierChain, CubicSegment, CurveDrawing, Drawing, Palette, Shape, ShapeDrawing};
use crate::par::{map_range, Exec};
use crate::{Error, Result};

pub const DEFAULT_SAMPLES_PER_SEGMENT: usize = 32;
pub const DEFAULT_RESOLUTION: usize = 256;
const DUPLICATE_EPS: f64 = 1e-12;

/// Ordered sample points of a flattened curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Polyline {
    pub points: Vec<Point>,
}

impl Polyline {
    pub fn new(points: Vec<Point>) -> Self {
        Polyline { points }
    }

    pub fn reversed(&self) -> Polyline {
        let mut points = self.points.clone();
        points.reverse();
        Polyline { points }
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }
}

/// de Casteljau evaluation of one cubic segment.
pub fn eval_cubic(seg: &CubicSegment, t: f64) -> Point {
    let a = seg[0].lerp(seg[1], t);
    let b = seg[1].lerp(seg[2], t);
    let c = seg[2].lerp(seg[3], t);
    let d = a.lerp(b, t);
    let e = b.lerp(c, t);
    d.lerp(e, t)
}

/// Samples every segment at `n` uniform parameter steps, giving
/// `segments * n + 1` points before consecutive duplicates are dropped.
/// The chain's end points are reproduced exactly.
pub fn flatten_chain(chain: &BezierChain, samples_per_segment: usize) -> Polyline {
    let n = samples_per_segment.max(2);
    let mut points: Vec<Point> = Vec::with_capacity(chain.segments.len() * n + 1);
    points.push(chain.start());
    for seg in &chain.segments {
        for k in 1..=n {
            let p = if k == n { seg[3] } else { eval_cubic(seg, k as f64 / n as f64) };
            match points.last() {
                Some(last) if last.distance(p) <= DUPLICATE_EPS => {
                    // Keep the later sample so the final end point survives.
                    if k == n {
                        *points.last_mut().unwrap() = p;
                    }
                }
                _ => points.push(p),
            }
        }
    }
    if points.len() > 1 {
        points[0] = chain.start();
    }
    Polyline { points }
}

pub fn flatten_curve_drawing(drawing: &CurveDrawing, samples_per_segment: usize) -> Vec<Polyline> {
    drawing
        .strokes
        .iter()
        .map(|c| flatten_chain(c, samples_per_segment))
        .collect()
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    left: Point,
    right: Point,
    sign: i32,
}

impl Edge {
    fn spans(&self, x: f64) -> bool {
        x >= self.left.x && x < self.right.x
    }

    fn crosses_above(&self, p: Point) -> bool {
        self.spans(p.x) && orient(self.left, self.right, p) < 0.0
    }
}

/// Horizontal half-line closing an open curve at infinity.
#[derive(Clone, Copy, Debug)]
struct Ray {
    at: Point,
    leftward: bool,
    sign: i32,
}

impl Ray {
    fn crosses_above(&self, p: Point) -> bool {
        let spans = if self.leftward { p.x < self.at.x } else { p.x >= self.at.x };
        spans && self.at.y > p.y
    }
}

/// Preprocessed crossing structure for a set of open polylines.
#[derive(Clone, Debug, Default)]
pub struct WindingField {
    edges: Vec<Edge>,
    rays: Vec<Ray>,
}

impl WindingField {
    /// The lexicographically smaller endpoint is extended to `x = -∞`, the
    /// other to `x = +∞`, whichever way the curve runs. Closed polylines get
    /// no rays.
    pub fn new(curves: &[Polyline]) -> Self {
        let mut field = WindingField::default();
        for curve in curves {
            let (Some(&first), Some(&last)) = (curve.points.first(), curve.points.last()) else {
                continue;
            };
            if first != last {
                let forward = (first.x, first.y) < (last.x, last.y);
                let sign = if forward { 1 } else { -1 };
                field.rays.push(Ray { at: first, leftward: forward, sign });
                field.rays.push(Ray { at: last, leftward: !forward, sign });
            }
            for w in curve.points.windows(2) {
                let (a, b) = (w[0], w[1]);
                if a.x < b.x {
                    field.edges.push(Edge { left: a, right: b, sign: 1 });
                } else if a.x > b.x {
                    field.edges.push(Edge { left: b, right: a, sign: -1 });
                }
            }
        }
        field
    }

    fn ray_count(&self, p: Point) -> i32 {
        self.rays.iter().filter(|r| r.crosses_above(p)).map(|r| r.sign).sum()
    }

    pub fn index_at(&self, p: Point) -> i32 {
        let finite: i32 = self
            .edges
            .iter()
            .filter(|e| e.crosses_above(p))
            .map(|e| e.sign)
            .sum();
        finite + self.ray_count(p)
    }

    /// Winding indices at several points sharing one abscissa. Filters the
    /// edges once, then applies the same predicate as [`index_at`].
    ///
    /// [`index_at`]: WindingField::index_at
    pub fn column(&self, x: f64, ys: impl Iterator<Item = f64>) -> Vec<i32> {
        let active: Vec<Edge> = self.edges.iter().filter(|e| e.spans(x)).copied().collect();
        ys.map(|y| {
            let p = Point::new(x, y);
            let finite: i32 = active
                .iter()
                .filter(|e| orient(e.left, e.right, p) < 0.0)
                .map(|e| e.sign)
                .sum();
            finite + self.ray_count(p)
        })
        .collect()
    }
}

/// Signed vertical-ray crossing count of `p` against horizontally extended
/// open curves.
pub fn winding_index(p: Point, curves: &[Polyline]) -> i32 {
    WindingField::new(curves).index_at(p)
}

fn ccw(vertices: &[Point]) -> Vec<Point> {
    let mut v = vertices.to_vec();
    if signed_area(&v) < 0.0 {
        v.reverse();
    }
    v
}

pub fn shape_contains(shape: &Shape, p: Point) -> bool {
    match shape {
        Shape::Circle { center, radius } => p.distance(*center) < *radius,
        Shape::Triangle { vertices } => polygon_winding(&ccw(vertices), p) != 0,
        Shape::Quad { vertices } => polygon_winding(&ccw(vertices), p) != 0,
    }
}

/// Number of shapes containing `p`.
pub fn shape_depth(p: Point, shapes: &[Shape]) -> i32 {
    shapes.iter().filter(|s| shape_contains(s, p)).count() as i32
}

/// Euclidean remainder, so `-1` maps to `k - 1`.
pub fn palette_index(raw: i32, k: usize) -> usize {
    raw.rem_euclid(k as i32) as usize
}

/// Row-major `R × R` grid; row 0 is the top of the canvas.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ColoredRaster {
    pub resolution: usize,
    pub palette_size: usize,
    /// Raw winding or depth values.
    pub indices: Vec<i32>,
    /// Palette indices, `indices mod palette_size`.
    pub cells: Vec<usize>,
}

impl ColoredRaster {
    fn from_indices(resolution: usize, palette_size: usize, indices: Vec<i32>) -> Self {
        let cells = indices.iter().map(|&r| palette_index(r, palette_size)).collect();
        ColoredRaster {
            resolution,
            palette_size,
            indices,
            cells,
        }
    }

    pub fn raw(&self, row: usize, col: usize) -> i32 {
        self.indices[row * self.resolution + col]
    }

    pub fn cell(&self, row: usize, col: usize) -> usize {
        self.cells[row * self.resolution + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i32]> {
        self.indices.chunks(self.resolution)
    }
}

/// Canvas coordinates of the center of raster cell `(row, col)`.
pub fn cell_center(row: usize, col: usize, resolution: usize) -> Point {
    let r = resolution as f64;
    Point::new((col as f64 + 0.5) / r, 1.0 - (row as f64 + 0.5) / r)
}

fn check_raster_params(resolution: usize, palette_size: usize) -> Result<()> {
    if resolution == 0 {
        return Err(Error::InvalidParams("resolution must be positive".into()));
    }
    if palette_size < 2 {
        return Err(Error::InvalidParams("palette needs at least 2 colors".into()));
    }
    Ok(())
}

pub fn rasterize_curves_with(
    drawing: &CurveDrawing,
    resolution: usize,
    palette_size: usize,
    exec: Exec,
) -> Result<ColoredRaster> {
    check_raster_params(resolution, palette_size)?;
    let curves = flatten_curve_drawing(drawing, DEFAULT_SAMPLES_PER_SEGMENT);
    let field = WindingField::new(&curves);
    let columns = map_range(exec, resolution, |col| {
        let x = cell_center(0, col, resolution).x;
        field.column(x, (0..resolution).map(|row| cell_center(row, col, resolution).y))
    });
    let mut indices = vec![0; resolution * resolution];
    for (col, column) in columns.into_iter().enumerate() {
        for (row, v) in column.into_iter().enumerate() {
            indices[row * resolution + col] = v;
        }
    }
    Ok(ColoredRaster::from_indices(resolution, palette_size, indices))
}

pub fn rasterize_shapes_with(
    drawing: &ShapeDrawing,
    resolution: usize,
    palette_size: usize,
    exec: Exec,
) -> Result<ColoredRaster> {
    check_raster_params(resolution, palette_size)?;
    let rows = map_range(exec, resolution, |row| {
        (0..resolution)
            .map(|col| shape_depth(cell_center(row, col, resolution), &drawing.shapes))
            .collect::<Vec<_>>()
    });
    Ok(ColoredRaster::from_indices(
        resolution,
        palette_size,
        rows.concat(),
    ))
}

pub fn rasterize_with(
    drawing: &Drawing,
    resolution: usize,
    palette_size: usize,
    exec: Exec,
) -> Result<ColoredRaster> {
    match drawing {
        Drawing::Curve(c) => rasterize_curves_with(c, resolution, palette_size, exec),
        Drawing::Shapes(s) => rasterize_shapes_with(s, resolution, palette_size, exec),
        Drawing::Pixel(p) => Err(Error::InvalidParams(format!(
            "pixel drawing {} has no region coloring",
            p.id
        ))),
    }
}

/// Colors a curve or shape drawing at cell centers.
pub fn rasterize(drawing: &Drawing, resolution: usize, palette_size: usize) -> Result<ColoredRaster> {
    rasterize_with(drawing, resolution, palette_size, Exec::default())
}

fn svg_open(out: &mut String, resolution: usize) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {r} {r}" width="{r}" height="{r}" shape-rendering="crispEdges">"#,
        r = resolution
    );
}

fn svg_cells(out: &mut String, raster: &ColoredRaster, palette: &Palette) {
    let r = raster.resolution;
    for row in 0..r {
        for col in 0..r {
            let _ = writeln!(
                out,
                r#"<rect x="{col}" y="{row}" width="1" height="1" fill="{}"/>"#,
                palette.hex(raster.cell(row, col) % palette.len())
            );
        }
    }
}

/// One `rect` per cell.
pub fn render_raster_svg(raster: &ColoredRaster, palette: &Palette) -> String {
    let mut out = String::new();
    svg_open(&mut out, raster.resolution);
    svg_cells(&mut out, raster, palette);
    out.push_str("</svg>\n");
    out
}

fn to_svg(p: Point, scale: f64) -> (f64, f64) {
    (p.x * scale, (1.0 - p.y) * scale)
}

/// SVG path data for a chain, scaled to `scale` user units with `y` down.
pub fn chain_path_data(chain: &BezierChain, scale: f64) -> String {
    let mut d = String::new();
    let (x, y) = to_svg(chain.start(), scale);
    let _ = write!(d, "M{x:.4} {y:.4}");
    for seg in &chain.segments {
        d.push_str(" C");
        for (i, p) in seg[1..].iter().enumerate() {
            let (x, y) = to_svg(*p, scale);
            let sep = if i == 0 { "" } else { " " };
            let _ = write!(d, "{sep}{x:.4} {y:.4}");
        }
    }
    d
}

pub fn polyline_path_data(points: &[Point], scale: f64) -> String {
    let mut d = String::new();
    for (i, p) in points.iter().enumerate() {
        let (x, y) = to_svg(*p, scale);
        let cmd = if i == 0 { 'M' } else { 'L' };
        let _ = write!(d, "{cmd}{x:.4} {y:.4} ");
    }
    d.trim_end().to_string()
}

pub fn shape_svg_element(shape: &Shape, scale: f64, style: &str) -> String {
    match shape {
        Shape::Circle { center, radius } => {
            let (cx, cy) = to_svg(*center, scale);
            format!(
                r#"<circle cx="{cx:.4}" cy="{cy:.4}" r="{:.4}" {style}/>"#,
                radius * scale
            )
        }
        Shape::Triangle { vertices } => polygon_element(vertices, scale, style),
        Shape::Quad { vertices } => polygon_element(vertices, scale, style),
    }
}

fn polygon_element(vertices: &[Point], scale: f64, style: &str) -> String {
    let pts: Vec<String> = vertices
        .iter()
        .map(|p| {
            let (x, y) = to_svg(*p, scale);
            format!("{x:.4},{y:.4}")
        })
        .collect();
    format!(r#"<polygon points="{}" {style}/>"#, pts.join(" "))
}

const OUTLINE: &str = r##"fill="none" stroke="#000000" stroke-width="0.75""##;

/// Colored raster with the drawing's strokes or shape outlines on top.
pub fn render_drawing_svg(drawing: &Drawing, raster: &ColoredRaster, palette: &Palette) -> String {
    let scale = raster.resolution as f64;
    let mut out = String::new();
    svg_open(&mut out, raster.resolution);
    svg_cells(&mut out, raster, palette);
    match drawing {
        Drawing::Curve(c) => {
            for chain in &c.strokes {
                let _ = writeln!(out, r#"<path d="{}" {OUTLINE}/>"#, chain_path_data(chain, scale));
            }
        }
        Drawing::Shapes(s) => {
            for shape in &s.shapes {
                let _ = writeln!(out, "{}", shape_svg_element(shape, scale, OUTLINE));
            }
        }
        Drawing::Pixel(_) => {}
    }
    out.push_str("</svg>\n");
    out
}

/// Plain PGM of the raw indices, shifted so the minimum maps to 0. The shift
/// is recorded in a comment line.
pub fn render_pgm(raster: &ColoredRaster) -> String {
    let min = raster.indices.iter().copied().min().unwrap_or(0);
    let max = raster.indices.iter().copied().max().unwrap_or(0);
    let maxval = (max - min).max(1);
    let mut out = String::new();
    let _ = writeln!(out, "P2");
    let _ = writeln!(out, "# raw index offset {min}");
    let _ = writeln!(out, "{r} {r}", r = raster.resolution);
    let _ = writeln!(out, "{maxval}");
    for row in raster.rows() {
        let line: Vec<String> = row.iter().map(|v| (v - min).to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn line(points: &[(f64, f64)]) -> Polyline {
        Polyline::new(points.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    /// Independent oracle: closes the extended curve far below the canvas
    /// and sums turning angles. Upward-ray crossings of the closed loop equal
    /// minus its counter-clockwise winding number.
    fn angle_sum_oracle(p: Point, curves: &[Polyline]) -> i32 {
        let far = 1e7;
        let mut total = 0.0;
        for c in curves {
            let first = c.points[0];
            let last = *c.points.last().unwrap();
            let mut ring = vec![Point::new(-far, first.y)];
            ring.extend(c.points.iter().copied());
            ring.push(Point::new(far, last.y));
            ring.push(Point::new(far, -far));
            ring.push(Point::new(-far, -far));
            for i in 0..ring.len() {
                let a = ring[i] - p;
                let b = ring[(i + 1) % ring.len()] - p;
                total += a.cross(b).atan2(a.dot(b));
            }
        }
        -(total / TAU).round() as i32
    }

    #[test]
    fn straight_curve_above_and_below() {
        let c = [line(&[(0.0, 0.5), (1.0, 0.5)])];
        assert_eq!(winding_index(Point::new(0.5, 0.75), &c), 0);
        assert_eq!(winding_index(Point::new(0.5, 0.25), &c), 1);
    }

    #[test]
    fn hand_traced_fold() {
        let c = [line(&[
            (0.0, 0.4),
            (0.7, 0.4),
            (0.7, 0.8),
            (0.2, 0.8),
            (0.2, 0.95),
            (1.0, 0.95),
        ])];
        assert_eq!(winding_index(Point::new(0.5, 0.2), &c), 1);
        assert_eq!(winding_index(Point::new(0.5, 0.6), &c), 0);
        for y in [0.2, 0.6, 0.9, 0.99] {
            let p = Point::new(0.5, y);
            assert_eq!(winding_index(p, &c), angle_sum_oracle(p, &c), "y={y}");
        }
    }

    #[test]
    fn shared_vertex_counted_once() {
        let c = [line(&[(0.0, 0.5), (0.5, 0.6), (1.0, 0.5)])];
        assert_eq!(winding_index(Point::new(0.5, 0.1), &c), 1);
    }

    #[test]
    fn de_casteljau_midpoint() {
        let seg = [
            Point::new(0.0, 0.0),
            Point::new(1.0 / 3.0, 1.0 / 3.0),
            Point::new(2.0 / 3.0, 2.0 / 3.0),
            Point::new(1.0, 1.0),
        ];
        let m = eval_cubic(&seg, 0.5);
        assert!((m.x - 0.5).abs() < 1e-15 && (m.y - 0.5).abs() < 1e-15);
        let poly = flatten_chain(&BezierChain::new(vec![seg]), 8);
        assert_eq!(poly.points.len(), 9);
        for p in &poly.points {
            assert!((p.x - p.y).abs() < 1e-12);
        }
        assert_eq!(poly.points[0], seg[0]);
        assert_eq!(*poly.points.last().unwrap(), seg[3]);
    }

    #[test]
    fn degenerate_segment_collapses() {
        let p = Point::new(0.4, 0.4);
        let chain = BezierChain::new(vec![
            [Point::new(0.0, 0.4), Point::new(0.1, 0.4), Point::new(0.3, 0.4), p],
            [p, p, p, p],
            [p, Point::new(0.6, 0.4), Point::new(0.8, 0.4), Point::new(1.0, 0.4)],
        ]);
        let poly = flatten_chain(&chain, 4);
        assert_eq!(poly.points.len(), 9);
        assert_eq!(poly.points[0], chain.start());
        assert_eq!(*poly.points.last().unwrap(), chain.end());
        assert!(poly.points.windows(2).all(|w| w[0].distance(w[1]) > 1e-12));
    }

    #[test]
    fn triangle_depth_matches_barycentric() {
        let tri = Shape::Triangle {
            vertices: [Point::new(0.1, 0.1), Point::new(0.9, 0.1), Point::new(0.5, 0.9)],
        };
        assert_eq!(shape_depth(Point::new(0.5, 0.3), std::slice::from_ref(&tri)), 1);
        let bary_inside = |p: Point| {
            let [a, b, c] = [Point::new(0.1, 0.1), Point::new(0.9, 0.1), Point::new(0.5, 0.9)];
            let det = (b - a).cross(c - a);
            let l1 = (b - p).cross(c - p) / det;
            let l2 = (c - p).cross(a - p) / det;
            let l3 = 1.0 - l1 - l2;
            l1 > 0.0 && l2 > 0.0 && l3 > 0.0
        };
        for i in 0..40 {
            for j in 0..40 {
                let p = Point::new((i as f64 + 0.37) / 40.0, (j as f64 + 0.61) / 40.0);
                assert_eq!(shape_contains(&tri, p), bary_inside(p), "{p:?}");
            }
        }
    }

    #[test]
    fn depth_counts_overlaps() {
        let shapes = [
            Shape::Circle { center: Point::new(0.4, 0.5), radius: 0.2 },
            Shape::Circle { center: Point::new(0.6, 0.5), radius: 0.2 },
        ];
        assert_eq!(shape_depth(Point::new(0.5, 0.5), &shapes), 2);
        assert_eq!(shape_depth(Point::new(0.25, 0.5), &shapes), 1);
        assert_eq!(shape_depth(Point::new(0.95, 0.95), &shapes), 0);
    }

    #[test]
    fn euclidean_palette_map() {
        assert_eq!(palette_index(-1, 5), 4);
        assert_eq!(palette_index(7, 5), 2);
        assert_eq!(palette_index(0, 5), 0);
    }

    #[test]
    fn cw_polygon_still_contains() {
        let cw = Shape::Quad {
            vertices: [
                Point::new(0.2, 0.2),
                Point::new(0.2, 0.8),
                Point::new(0.8, 0.8),
                Point::new(0.8, 0.2),
            ],
        };
        assert!(shape_contains(&cw, Point::new(0.5, 0.5)));
    }

    #[test]
    fn svg_rect_count_and_fill() {
        let raster = ColoredRaster::from_indices(2, 2, vec![0, 0, 0, 0]);
        let palette = Palette::new(vec![[255, 255, 255], [0, 0, 0]]).unwrap();
        let svg = render_raster_svg(&raster, &palette);
        assert_eq!(svg.matches("<rect").count(), 4);
        assert_eq!(svg.matches(r##"fill="#ffffff""##).count(), 4);
        assert_eq!(svg, render_raster_svg(&raster, &palette));
    }

    #[test]
    fn pgm_header() {
        let raster = ColoredRaster::from_indices(2, 5, vec![-1, 0, 1, 2]);
        let pgm = render_pgm(&raster);
        assert!(pgm.starts_with("P2\n# raw index offset -1\n2 2\n3\n0 1\n2 3\n"));
    }
}
