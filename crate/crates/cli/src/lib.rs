//! The `reshape` command line. Every successful run prints one JSON summary
//! line on stdout; failures go to stderr prefixed `usage:` (exit 1) or
//! `data:` (exit 2).

use std::fmt::Write as _;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use reshape_core::aggregate::{
    heatmap_timelapse, mean_curve_with, mean_shape_drawing, render_heat_frame_svg, render_mean_curve_svg,
    render_mean_shapes_svg, resample_all_with, DEFAULT_REFIT_SEGMENTS,
};
use reshape_core::coloring::{polyline_path_data, rasterize, render_drawing_svg, render_pgm};
use reshape_core::frechet::{curve_distance_matrix_with, knn_graph, path_animation, shortest_path, DistanceMatrix};
use reshape_core::model::{load_dataset, save_dataset, Dataset, DrawingKind, Palette};
use reshape_core::sonify::{compose, encode_midi, events_to_json, Movement, SonifyConfig};
use reshape_core::synth::{gen_dataset, GenParams};
use reshape_core::Exec;
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "reshape", version, about = "Generate, color, aggregate, compare and sonify crowd drawings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Curve,
    Shapes,
    Pixel,
}

impl From<Kind> for DrawingKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Curve => DrawingKind::Curve,
            Kind::Shapes => DrawingKind::Shapes,
            Kind::Pixel => DrawingKind::Pixel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MovementArg {
    MeanCurve,
    PixelBeat,
    ChaosOrder,
}

impl From<MovementArg> for Movement {
    fn from(m: MovementArg) -> Self {
        match m {
            MovementArg::MeanCurve => Movement::MeanCurve,
            MovementArg::PixelBeat => Movement::PixelBeat,
            MovementArg::ChaosOrder => Movement::ChaosOrder,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic dataset
    Gen {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Bézier segments per curve
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..=1000))]
        segments: u64,
        /// Vertical spread of curve control points, in [0, 1]
        #[arg(long, default_value_t = 0.3)]
        wiggle: f64,
        /// Shapes per shape drawing
        #[arg(long, default_value_t = 3)]
        shapes: usize,
        /// Taps per pixel drawing
        #[arg(long, default_value_t = 20)]
        taps: usize,
        /// Session length for pixel drawings
        #[arg(long, default_value_t = 30_000)]
        duration_ms: u64,
    },
    /// Check every line of a dataset and report rejections
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
        /// Rewrite the accepted drawings in canonical form
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Color one drawing; the output extension picks SVG, PGM or JSON
    Color {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(1..=4096))]
        res: u64,
        /// JSON list of [r, g, b] colors
        #[arg(long)]
        palette: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean curve, mean shapes or heat-map time-lapse as JSON
    Aggregate {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long = "in")]
        input: PathBuf,
        /// Resample points per curve
        #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u64).range(2..=100_000))]
        m: u64,
        #[arg(long, default_value_t = 5000, value_parser = clap::value_parser!(u64).range(1..))]
        window: u64,
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        step: u64,
        #[arg(long)]
        out: PathBuf,
        /// SVG preview; a directory of frames for pixel data
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Pairwise discrete Fréchet distances between curve drawings
    Frechet {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(2..=10_000))]
        m: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shortest path between two curves and its morph frames
    Path {
        #[arg(long)]
        matrix: PathBuf,
        /// Dataset the matrix was computed from
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..=1000))]
        k: u64,
        #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(2..=10_000))]
        frames: u64,
        /// A `.json` file, otherwise a directory of SVG frames
        #[arg(long)]
        out: PathBuf,
    },
    /// Compile a movement to a Standard MIDI File
    Sonify {
        #[arg(long, value_enum)]
        movement: MovementArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 120.0)]
        bpm: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the note events as JSON
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the HTTP API
    Serve {
        #[arg(long, env = "RESHAPE_DATASET", default_value = "reshape.jsonl")]
        dataset: PathBuf,
        #[arg(long, env = "RESHAPE_HOST", default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "RESHAPE_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "RESHAPE_PALETTE")]
        palette: Option<PathBuf>,
        #[arg(long, env = "RESHAPE_UI_ORIGIN", default_value = reshape_service::DEFAULT_UI_ORIGIN)]
        ui_origin: String,
    },
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Data(m) => write!(f, "data: {m}"),
        }
    }
}

impl From<reshape_core::Error> for Failure {
    fn from(e: reshape_core::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn data(msg: impl Into<String>) -> Failure {
    Failure::Data(msg.into())
}

fn read_corpus(path: &Path) -> Result<(Dataset, usize), Failure> {
    let report = load_dataset(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    Ok((report.dataset, report.rejections.len()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("output serializes");
    s.push('\n');
    s
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default()
}

fn frame_svg(points: &[reshape_core::Point]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 512 512" width="512" height="512">"#
    );
    let _ = writeln!(out, r##"<rect width="512" height="512" fill="#ffffff"/>"##);
    let _ = writeln!(
        out,
        r##"<path d="{}" fill="none" stroke="#141414" stroke-width="3"/>"##,
        polyline_path_data(points, 512.0)
    );
    out.push_str("</svg>\n");
    out
}

fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| data(format!("{}: {e}", dir.display())))
}

/// Executes one parsed command and returns its summary.
pub fn execute(cli: Cli) -> Result<Value, Failure> {
    match cli.command {
        Command::Gen { kind, count, seed, out, segments, wiggle, shapes, taps, duration_ms } => {
            let params = GenParams {
                seed,
                n_segments: segments as usize,
                wiggle,
                n_shapes: shapes,
                n_taps: taps,
                duration_ms,
            };
            params.check().map_err(|e| usage(e.to_string()))?;
            let drawings = gen_dataset(kind.into(), count, &params);
            save_dataset(&drawings, &out).map_err(|e| data(format!("{}: {e}", out.display())))?;
            Ok(json!({ "command": "gen", "kind": DrawingKind::from(kind), "count": count, "seed": seed, "out": out }))
        }
        Command::Validate { input, out } => {
            let report = load_dataset(&input).map_err(|e| data(format!("{}: {e}", input.display())))?;
            if let Some(out) = &out {
                save_dataset(&report.dataset.drawings, out).map_err(|e| data(format!("{}: {e}", out.display())))?;
            }
            let ds = &report.dataset;
            Ok(json!({
                "command": "validate",
                "valid": ds.len(),
                "curve": ds.curves().len(),
                "shapes": ds.shapes().len(),
                "pixel": ds.pixels().len(),
                "rejected": report.rejections.iter()
                    .map(|r| json!({ "line": r.line, "reason": r.reason }))
                    .collect::<Vec<_>>(),
            }))
        }
        Command::Color { input, id, res, palette, out } => {
            let palette = match palette {
                Some(p) => Palette::load(&p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
                None => Palette::default(),
            };
            let (ds, _) = read_corpus(&input)?;
            let drawing = ds.get(&id).ok_or_else(|| data(format!("no drawing with id {id:?}")))?;
            let raster = rasterize(drawing, res as usize, palette.len())?;
            let format = extension(&out);
            let body = match format.as_str() {
                "svg" => render_drawing_svg(drawing, &raster, &palette),
                "pgm" => render_pgm(&raster),
                "json" => to_json(&raster),
                other => return Err(usage(format!("--out must end in .svg, .pgm or .json, got {other:?}"))),
            };
            write(&out, body)?;
            let (lo, hi) = raster.indices.iter().fold((i32::MAX, i32::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            Ok(json!({ "command": "color", "id": id, "res": res, "min_index": lo, "max_index": hi, "out": out }))
        }
        Command::Aggregate { kind, input, m, window, step, out, svg } => {
            let (ds, _) = read_corpus(&input)?;
            let m = m as usize;
            match kind {
                Kind::Curve => {
                    let curves = ds.curves();
                    if curves.is_empty() {
                        return Err(data("dataset has no curve drawings"));
                    }
                    let mean = mean_curve_with(&curves, m, DEFAULT_REFIT_SEGMENTS, Exec::default())?;
                    write(&out, to_json(&json!({
                        "kind": "curve", "m": m, "count": curves.len(),
                        "points": mean.resampled.points, "chain": mean.chain.segments,
                    })))?;
                    if let Some(svg) = &svg {
                        let backdrop = resample_all_with(&curves, m, Exec::default())?;
                        write(svg, render_mean_curve_svg(&mean, &backdrop))?;
                    }
                    Ok(json!({ "command": "aggregate", "kind": "curve", "count": curves.len(), "m": m, "out": out }))
                }
                Kind::Shapes => {
                    let shapes = ds.shapes();
                    if shapes.is_empty() {
                        return Err(data("dataset has no shape drawings"));
                    }
                    let means = mean_shape_drawing(&shapes)?;
                    write(&out, to_json(&json!({ "kind": "shapes", "count": shapes.len(), "means": means })))?;
                    if let Some(svg) = &svg {
                        write(svg, render_mean_shapes_svg(&means))?;
                    }
                    Ok(json!({ "command": "aggregate", "kind": "shapes", "count": shapes.len(), "means": means.len(), "out": out }))
                }
                Kind::Pixel => {
                    let pixels = ds.pixels();
                    if pixels.is_empty() {
                        return Err(data("dataset has no pixel drawings"));
                    }
                    let frames = heatmap_timelapse(&pixels, window, step)?;
                    let taps: usize = pixels.iter().map(|p| p.taps.len()).sum();
                    write(&out, to_json(&json!({
                        "kind": "pixel", "window_ms": window, "step_ms": step,
                        "total_taps": taps, "frames": frames,
                    })))?;
                    if let Some(dir) = &svg {
                        prepare_dir(dir)?;
                        let peak = frames.iter().map(|f| f.max()).max().unwrap_or(0);
                        for (i, f) in frames.iter().enumerate() {
                            write(&dir.join(format!("frame_{i:04}.svg")), render_heat_frame_svg(f, peak))?;
                        }
                    }
                    Ok(json!({ "command": "aggregate", "kind": "pixel", "frames": frames.len(), "taps": taps, "out": out }))
                }
            }
        }
        Command::Frechet { input, m, out } => {
            let (ds, _) = read_corpus(&input)?;
            let curves = ds.curves();
            if curves.is_empty() {
                return Err(data("dataset has no curve drawings"));
            }
            let matrix = curve_distance_matrix_with(&curves, m as usize, Exec::default())?;
            write(&out, to_json(&matrix))?;
            Ok(json!({ "command": "frechet", "count": matrix.len(), "m": m, "out": out }))
        }
        Command::Path { matrix, input, from, to, k, frames, out } => {
            let text = fs::read_to_string(&matrix).map_err(|e| data(format!("{}: {e}", matrix.display())))?;
            let matrix: DistanceMatrix =
                serde_json::from_str(&text).map_err(|e| data(format!("matrix file: {e}")))?;
            let n = matrix.ids.len();
            if matrix.distances.len() != n || matrix.distances.iter().any(|row| row.len() != n) {
                return Err(data("matrix file is not square over its ids"));
            }
            let (ds, _) = read_corpus(&input)?;
            let graph = knn_graph(&matrix, k as usize)?;
            let route = shortest_path(&graph, &from, &to)?;
            let mut hops = Vec::with_capacity(route.nodes.len());
            for id in &route.nodes {
                let curve = match ds.get(id) {
                    Some(reshape_core::model::Drawing::Curve(c)) => c,
                    _ => return Err(data(format!("curve {id:?} from the matrix is not in the dataset"))),
                };
                hops.push(reshape_core::aggregate::resample(curve, matrix.m.max(2))?);
            }
            let refs: Vec<_> = hops.iter().collect();
            let animation = path_animation(&refs, frames as usize)?;
            if extension(&out) == "json" {
                let points: Vec<_> = animation.iter().map(|f| &f.points).collect();
                write(&out, to_json(&json!({ "path": route, "frames": points })))?;
            } else {
                prepare_dir(&out)?;
                for (i, f) in animation.iter().enumerate() {
                    write(&out.join(format!("frame_{i:04}.svg")), frame_svg(&f.points))?;
                }
            }
            Ok(json!({
                "command": "path", "nodes": route.nodes, "weight": route.weight,
                "frames": animation.len(), "out": out,
            }))
        }
        Command::Sonify { movement, input, seed, bpm, out, json } => {
            let cfg = SonifyConfig::with_bpm(bpm);
            cfg.check().map_err(|e| usage(e.to_string()))?;
            let (ds, _) = read_corpus(&input)?;
            let events = compose(&ds, movement.into(), &cfg, seed)?;
            write(&out, encode_midi(&events, &cfg)?)?;
            if let Some(path) = &json {
                write(path, events_to_json(&events))?;
            }
            let mut voices: Vec<u8> = events.iter().map(|e| e.voice).collect();
            voices.sort_unstable();
            voices.dedup();
            Ok(json!({
                "command": "sonify", "movement": Movement::from(movement).as_str(), "seed": seed,
                "bpm": bpm, "events": events.len(), "voices": voices.len(), "out": out,
            }))
        }
        Command::Serve { dataset, host, port, palette, ui_origin } => {
            let palette = match palette {
                Some(p) => Palette::load(&p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
                None => Palette::default(),
            };
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| usage(format!("bad listen address {host}:{port}: {e}")))?;
            let config = reshape_service::ServiceConfig {
                dataset,
                palette,
                ui_origin: (!ui_origin.is_empty()).then_some(ui_origin),
            };
            eprintln!("listening on http://{addr}");
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(reshape_service::serve(config, addr))?;
            Ok(json!({ "command": "serve", "addr": addr.to_string() }))
        }
    }
}

/// Parses `args` (including the program name), runs, and reports. Returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let message = rendered.trim_start_matches("error: ").trim_end();
            eprintln!("usage: {message}");
            return 1;
        }
    };
    match execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(f) => {
            eprintln!("{f}");
            f.exit_code()
        }
    }
}

/// Long help for the root command and every subcommand, in order.
pub fn help_text() -> String {
    let mut root = Cli::command();
    root.build();
    let mut out = root.render_long_help().to_string();
    let names: Vec<String> = root.get_subcommands().map(|c| c.get_name().to_string()).collect();
    for name in names {
        let sub = root.find_subcommand_mut(&name).expect("listed subcommand");
        let _ = write!(out, "\n=== reshape {name} ===\n{}", sub.render_long_help());
    }
    out
}
