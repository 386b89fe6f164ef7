//! Seeded synthetic drawings for tests, benchmarks and demos.
//!
//! Randomness comes from SplitMix64, whose reference outputs are published,
//! and is turned into floats and bounded integers with fixed bit recipes so
//! a seed produces the same drawing on every platform.

use std::f64::consts::TAU;

use chrono::{DateTime, Duration, Utc};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::geometry::Point;
use crate::model::{
    canvas_point, quantize, BezierChain, CubicSegment, CurveDrawing, Drawing, DrawingKind,
    PixelDrawing, Shape, ShapeDrawing, TapEvent, DEFAULT_PALETTE_SIZE, GRID_SIZE,
};
use crate::{Error, Result};

const SITES: [&str; 6] = [
    "campus",
    "culture-centre",
    "science-center",
    "high-school",
    "learning-centre",
    "expo",
];

/// Portable seeded generator.
#[derive(Clone, Debug)]
pub struct SeededRng(SplitMix64);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(SplitMix64::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform on `[0, 1)` from the top 53 bits.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` by 128-bit multiply-shift.
    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// `k` distinct indices from `0..n` in draw order (partial Fisher–Yates).
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let k = k.min(n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenParams {
    pub seed: u64,
    pub n_segments: usize,
    pub wiggle: f64,
    pub n_shapes: usize,
    pub n_taps: usize,
    pub duration_ms: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            seed: 0,
            n_segments: 8,
            wiggle: 0.3,
            n_shapes: 3,
            n_taps: 20,
            duration_ms: 30_000,
        }
    }
}

impl GenParams {
    pub fn with_seed(seed: u64) -> Self {
        GenParams {
            seed,
            ..GenParams::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.n_segments == 0 {
            return Err(Error::InvalidParams("n_segments must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.wiggle) {
            return Err(Error::InvalidParams(format!("wiggle {} outside [0, 1]", self.wiggle)));
        }
        Ok(())
    }
}

struct Header {
    id: String,
    site: String,
    created_at: DateTime<Utc>,
}

fn header(kind: DrawingKind, seed: u64, rng: &mut SeededRng) -> Header {
    let base = DateTime::parse_from_rfc3339("2022-01-01T00:00:00Z")
        .expect("literal timestamp")
        .with_timezone(&Utc);
    let offset = rng.below(365 * 86_400) as i64;
    Header {
        id: format!("{kind}-{seed}"),
        site: SITES[rng.below(SITES.len() as u64) as usize].to_string(),
        created_at: base + Duration::seconds(offset),
    }
}

/// Single-stroke curve spanning the canvas. With `wiggle = 0` it is the
/// horizontal line `y = 0.5`.
pub fn gen_curve_drawing(params: &GenParams) -> CurveDrawing {
    let mut rng = SeededRng::new(params.seed);
    let h = header(DrawingKind::Curve, params.seed, &mut rng);
    let color_choice = rng.below(DEFAULT_PALETTE_SIZE as u64) as usize;

    let n = params.n_segments.max(1);
    let wiggle = params.wiggle.clamp(0.0, 1.0);
    let dx = 1.0 / n as f64;
    let height = |rng: &mut SeededRng| 0.5 + wiggle * (rng.unit() - 0.5);

    let knots: Vec<Point> = (0..=n)
        .map(|k| {
            let x = if k == n { 1.0 } else { k as f64 * dx };
            Point::new(x, height(&mut rng))
        })
        .collect();
    let mut segments: Vec<CubicSegment> = Vec::with_capacity(n);
    for k in 0..n {
        let x0 = knots[k].x;
        let inner = |frac: f64, rng: &mut SeededRng| {
            let jitter = wiggle * 1.5 * dx * (rng.unit() - 0.5);
            Point::new(x0 + frac * dx + jitter, height(rng))
        };
        let c1 = inner(1.0 / 3.0, &mut rng);
        let c2 = inner(2.0 / 3.0, &mut rng);
        segments.push([knots[k], c1, c2, knots[k + 1]].map(canvas_point));
    }
    CurveDrawing {
        id: h.id,
        site: h.site,
        created_at: h.created_at,
        color_choice,
        strokes: vec![BezierChain::new(segments)],
    }
}

fn gen_polygon<const N: usize>(rng: &mut SeededRng) -> [Point; N] {
    let radius = rng.range(0.08, 0.3);
    let rx = radius * rng.range(0.6, 1.0);
    let ry = radius * rng.range(0.6, 1.0);
    let reach = rx.max(ry);
    let center = Point::new(rng.range(reach, 1.0 - reach), rng.range(reach, 1.0 - reach));
    let phase = TAU * rng.unit();
    // Points on an ellipse in increasing angle order form a convex CCW polygon.
    std::array::from_fn(|i| {
        let a = phase + TAU * (i as f64 + 0.6 * rng.unit()) / N as f64;
        canvas_point(Point::new(center.x + rx * a.cos(), center.y + ry * a.sin()))
    })
}

/// Shapes cycle circle, triangle, quadrilateral.
pub fn gen_shape_drawing(params: &GenParams) -> ShapeDrawing {
    let mut rng = SeededRng::new(params.seed);
    let h = header(DrawingKind::Shapes, params.seed, &mut rng);
    let shapes = (0..params.n_shapes)
        .map(|i| match i % 3 {
            0 => {
                let r = rng.range(0.05, 0.25);
                let c = Point::new(rng.range(r, 1.0 - r), rng.range(r, 1.0 - r));
                Shape::Circle {
                    center: canvas_point(c),
                    radius: quantize(r),
                }
            }
            1 => Shape::Triangle {
                vertices: gen_polygon::<3>(&mut rng),
            },
            _ => Shape::Quad {
                vertices: gen_polygon::<4>(&mut rng),
            },
        })
        .collect();
    ShapeDrawing {
        id: h.id,
        site: h.site,
        created_at: h.created_at,
        shapes,
    }
}

pub fn gen_pixel_drawing(params: &GenParams) -> PixelDrawing {
    let mut rng = SeededRng::new(params.seed);
    let h = header(DrawingKind::Pixel, params.seed, &mut rng);
    let mut times: Vec<u64> = (0..params.n_taps)
        .map(|_| rng.below(params.duration_ms + 1))
        .collect();
    times.sort_unstable();
    let taps = times
        .into_iter()
        .map(|t_ms| TapEvent {
            row: rng.below(GRID_SIZE as u64) as u8,
            col: rng.below(GRID_SIZE as u64) as u8,
            t_ms,
            color_choice: rng.below(DEFAULT_PALETTE_SIZE as u64) as usize,
        })
        .collect();
    PixelDrawing {
        id: h.id,
        site: h.site,
        created_at: h.created_at,
        taps,
    }
}

/// `count` drawings of one kind with seeds `seed, seed + 1, ...`.
pub fn gen_dataset(kind: DrawingKind, count: usize, base: &GenParams) -> Vec<Drawing> {
    (0..count)
        .map(|i| {
            let p = GenParams {
                seed: base.seed.wrapping_add(i as u64),
                ..*base
            };
            match kind {
                DrawingKind::Curve => Drawing::Curve(gen_curve_drawing(&p)),
                DrawingKind::Shapes => Drawing::Shapes(gen_shape_drawing(&p)),
                DrawingKind::Pixel => Drawing::Pixel(gen_pixel_drawing(&p)),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_drawing, ShapeKind, ValidateOptions};

    #[test]
    fn splitmix_reference_outputs() {
        let mut rng = SeededRng::new(1234567);
        let expected = [
            6457827717110365317u64,
            3203168211198807973,
            9817491932198370423,
            4593380528125082431,
            16408922859458223821,
        ];
        for e in expected {
            assert_eq!(rng.next_u64(), e);
        }
    }

    #[test]
    fn zero_wiggle_is_horizontal() {
        let p = GenParams {
            wiggle: 0.0,
            ..GenParams::with_seed(3)
        };
        let c = gen_curve_drawing(&p);
        for seg in &c.strokes[0].segments {
            for pt in seg {
                assert_eq!(pt.y, 0.5);
            }
        }
        assert_eq!(c.strokes[0].start().x, 0.0);
        assert_eq!(c.strokes[0].end().x, 1.0);
    }

    #[test]
    fn deterministic() {
        let p = GenParams::with_seed(99);
        assert_eq!(gen_curve_drawing(&p), gen_curve_drawing(&p));
        assert_eq!(gen_shape_drawing(&p), gen_shape_drawing(&p));
        assert_eq!(gen_pixel_drawing(&p), gen_pixel_drawing(&p));
        assert_ne!(gen_curve_drawing(&p), gen_curve_drawing(&GenParams::with_seed(100)));
    }

    #[test]
    fn shape_kinds_cycle() {
        let d = gen_shape_drawing(&GenParams::with_seed(1));
        let kinds: Vec<_> = d.shapes.iter().map(Shape::kind).collect();
        assert_eq!(kinds, ShapeKind::ALL);
    }

    #[test]
    fn pixel_taps_sorted_and_counted() {
        let p = GenParams {
            n_taps: 0,
            ..GenParams::with_seed(5)
        };
        assert!(gen_pixel_drawing(&p).taps.is_empty());
        let d = gen_pixel_drawing(&GenParams::with_seed(5));
        assert_eq!(d.taps.len(), 20);
        assert!(d.taps.windows(2).all(|w| w[0].t_ms <= w[1].t_ms));
        assert!(d.taps.iter().all(|t| t.t_ms <= 30_000));
    }

    #[test]
    fn generated_drawings_validate_unchanged() {
        for seed in 0..200 {
            let p = GenParams {
                wiggle: (seed % 11) as f64 / 10.0,
                n_shapes: 1 + seed as usize % 6,
                ..GenParams::with_seed(seed)
            };
            for d in [
                Drawing::Curve(gen_curve_drawing(&p)),
                Drawing::Shapes(gen_shape_drawing(&p)),
                Drawing::Pixel(gen_pixel_drawing(&p)),
            ] {
                let v = validate_drawing(d.to_raw(), ValidateOptions::default())
                    .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
                assert_eq!(v, d);
            }
        }
    }

    #[test]
    fn sample_indices_distinct() {
        let mut rng = SeededRng::new(8);
        let mut s = rng.sample_indices(50, 10);
        assert_eq!(s.len(), 10);
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 10);
        assert_eq!(SeededRng::new(1).sample_indices(3, 10).len(), 3);
    }

    #[test]
    fn invalid_params() {
        let p = GenParams {
            n_segments: 0,
            ..GenParams::default()
        };
        assert!(p.check().is_err());
        let p = GenParams {
            wiggle: 1.5,
            ..GenParams::default()
        };
        assert!(p.check().is_err());
    }
}
