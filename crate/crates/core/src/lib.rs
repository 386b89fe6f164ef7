//! Crowd-drawing geometry toolkit: drawing records and their dataset format,
//! seeded synthetic drawings, winding/depth coloring, collective aggregates
//! (mean curve, mean shapes, heat-map time-lapse), discrete Fréchet analysis
//! over the space of curves, and sonification to Standard MIDI Files.
//!
//! Data-parallel loops (raster rows, per-drawing resampling, distance-matrix
//! pairs) run on rayon when the `parallel` feature is enabled (default).
//! Every such entry point has a `*_with(.., Exec)` variant so sequential and
//! parallel runs can be compared; results are identical either way.

pub mod aggregate;
pub mod coloring;
pub mod frechet;
pub mod geometry;
pub mod model;
pub mod par;
pub mod sonify;
pub mod synth;

pub use geometry::Point;
pub use par::Exec;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid drawing: {0}")]
    Validation(#[from] model::ValidationReport),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("unknown id: {0}")]
    UnknownId(String),
    #[error("mixed shape kinds: {0}")]
    MixedKinds(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
