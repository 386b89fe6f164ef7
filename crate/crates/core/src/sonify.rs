//! Compiles drawings and aggregates into timed note events and writes them
//! as Standard MIDI Files or canonical event JSON.

use std::borrow::Borrow;
use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregate::{global_timeline, mean_of_resampled, prefix_mean_shapes, resample_all_with, ResampledCurve};
use crate::model::{CurveDrawing, Dataset, PixelDrawing, Shape, ShapeDrawing, ShapeKind, GRID_SIZE, MIN_POLYGON_AREA};
use crate::par::Exec;
use crate::synth::SeededRng;
use crate::{Error, Result};

pub const TICKS_PER_QUARTER: u16 = 480;
pub const DEFAULT_SAMPLE_VOICES: usize = 10;
pub const PIXEL_VOICE: u8 = 9;
pub const PIXEL_BASE_PITCH: u8 = 36;
pub const PIXEL_VELOCITY: u8 = 96;
pub const SHAPE_VELOCITY: u8 = 80;
/// Area that sounds for exactly one beat.
pub const UNIT_BEAT_AREA: f64 = 0.25;
pub const DEFAULT_VOICE_POINTS: usize = 64;
/// Length of each mean-curve voice, in beats.
pub const DEFAULT_VOICE_BEATS: f64 = 32.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub onset_s: f64,
    pub dur_s: f64,
    pub pitch: u8,
    pub velocity: u8,
    pub voice: u8,
}

impl NoteEvent {
    fn canonical_cmp(&self, other: &NoteEvent) -> Ordering {
        self.onset_s
            .total_cmp(&other.onset_s)
            .then(self.voice.cmp(&other.voice))
            .then(self.pitch.cmp(&other.pitch))
            .then(self.dur_s.total_cmp(&other.dur_s))
            .then(self.velocity.cmp(&other.velocity))
    }

    pub fn check(&self) -> Result<()> {
        let ok = self.onset_s.is_finite()
            && self.onset_s >= 0.0
            && self.dur_s.is_finite()
            && self.dur_s > 0.0
            && self.pitch <= 127
            && (1..=127).contains(&self.velocity)
            && self.voice <= 15;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("note event out of range: {self:?}")))
        }
    }
}

/// Sorts by `(onset, voice, pitch)`, then duration and velocity.
pub fn sort_events(events: &mut [NoteEvent]) {
    events.sort_by(NoteEvent::canonical_cmp);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SonifyConfig {
    pub bpm: f64,
    pub pitch_lo: u8,
    pub pitch_hi: u8,
    /// Quantization slots per quarter note; 4 is a sixteenth-note grid.
    pub grid_division: u32,
    /// Allowed pitch classes, 0 = C.
    pub scale: Vec<u8>,
}

impl Default for SonifyConfig {
    fn default() -> Self {
        SonifyConfig {
            bpm: 120.0,
            pitch_lo: 48,
            pitch_hi: 84,
            grid_division: 4,
            scale: (0..12).collect(),
        }
    }
}

impl SonifyConfig {
    pub fn with_bpm(bpm: f64) -> Self {
        SonifyConfig {
            bpm,
            ..SonifyConfig::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.bpm.is_finite() && self.bpm > 0.0) {
            return Err(Error::InvalidParams(format!("bpm must be positive, got {}", self.bpm)));
        }
        if self.pitch_lo >= self.pitch_hi || self.pitch_hi > 127 {
            return Err(Error::InvalidParams(format!(
                "pitch range {}..{} is empty or exceeds 127",
                self.pitch_lo, self.pitch_hi
            )));
        }
        if self.grid_division == 0 {
            return Err(Error::InvalidParams("grid division must be positive".into()));
        }
        if self.scale.is_empty() || self.scale.iter().any(|&pc| pc >= 12) {
            return Err(Error::InvalidParams("scale needs pitch classes in 0..12".into()));
        }
        if !(self.pitch_lo..=self.pitch_hi).any(|p| self.scale.contains(&(p % 12))) {
            return Err(Error::InvalidParams("no scale member inside the pitch range".into()));
        }
        Ok(())
    }

    pub fn beat_s(&self) -> f64 {
        60.0 / self.bpm
    }

    pub fn slot_s(&self) -> f64 {
        self.beat_s() / self.grid_division as f64
    }

    /// Nearest scale member to `pitch_lo + y·(pitch_hi − pitch_lo)`; ties
    /// resolve downward.
    pub fn map_pitch(&self, y: f64) -> u8 {
        let lo = self.pitch_lo as f64;
        let target = lo + y.clamp(0.0, 1.0) * (self.pitch_hi as f64 - lo);
        (self.pitch_lo..=self.pitch_hi)
            .filter(|p| self.scale.contains(&(p % 12)))
            .min_by(|a, b| {
                (*a as f64 - target)
                    .abs()
                    .total_cmp(&(*b as f64 - target).abs())
                    .then(a.cmp(b))
            })
            .unwrap_or(self.pitch_lo)
    }

    pub fn seconds_to_ticks(&self, s: f64) -> u32 {
        (s * self.bpm / 60.0 * TICKS_PER_QUARTER as f64).round() as u32
    }
}

/// One event per resample point. Height sets the pitch, the absolute
/// tangent angle sets the velocity.
pub fn curve_to_voice(
    curve: &ResampledCurve,
    cfg: &SonifyConfig,
    voice: u8,
    total_s: f64,
) -> Result<Vec<NoteEvent>> {
    cfg.check()?;
    if total_s.is_nan() || total_s <= 0.0 {
        return Err(Error::InvalidParams("total duration must be positive".into()));
    }
    let pts = &curve.points;
    let m = pts.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let step = total_s / m as f64;
    Ok((0..m)
        .map(|j| {
            let (a, b) = match (j, m) {
                (_, 1) => (pts[0], pts[0]),
                (0, _) => (pts[0], pts[1]),
                (j, m) if j == m - 1 => (pts[m - 2], pts[m - 1]),
                (j, _) => (pts[j - 1], pts[j + 1]),
            };
            let d = b - a;
            let theta = d.y.atan2(d.x);
            let velocity = 1 + (126.0 * theta.abs() / std::f64::consts::PI).round() as u8;
            NoteEvent {
                onset_s: j as f64 * step,
                dur_s: step,
                pitch: cfg.map_pitch(pts[j].y),
                velocity,
                voice,
            }
        })
        .collect())
}

/// Which drawings a mean-curve movement used.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanCurveMovement {
    /// Drawing ids for voices 1, 2, …
    pub sampled_ids: Vec<String>,
    pub events: Vec<NoteEvent>,
}

/// Voice 0 plays the mean curve; voices `1..=n` play `n` distinct drawings
/// drawn uniformly with the seed (all drawings when fewer than `n`).
pub fn mean_plus_samples_movement<T>(
    drawings: &[T],
    cfg: &SonifyConfig,
    n_samples: usize,
    seed: u64,
    m: usize,
    total_s: f64,
) -> Result<MeanCurveMovement>
where
    T: Borrow<CurveDrawing> + Sync,
{
    if drawings.is_empty() {
        return Err(Error::EmptyInput("mean-curve movement needs curve drawings".into()));
    }
    if n_samples > 15 {
        return Err(Error::InvalidParams(format!(
            "{n_samples} sample voices plus the mean exceed 16 MIDI channels"
        )));
    }
    let resampled = resample_all_with(drawings, m, Exec::default())?;
    let mean = mean_of_resampled(&resampled)?;
    let picks = SeededRng::new(seed).sample_indices(drawings.len(), n_samples);

    let mut events = curve_to_voice(&mean, cfg, 0, total_s)?;
    for (v, &idx) in picks.iter().enumerate() {
        events.extend(curve_to_voice(&resampled[idx], cfg, (v + 1) as u8, total_s)?);
    }
    sort_events(&mut events);
    Ok(MeanCurveMovement {
        sampled_ids: picks.iter().map(|&i| drawings[i].borrow().id.clone()).collect(),
        events,
    })
}

/// One percussion event per tap on the concatenated timeline, snapped to the
/// nearest grid slot. Each of the 36 cells has its own pitch.
pub fn pixel_beat<T: Borrow<PixelDrawing>>(drawings: &[T], cfg: &SonifyConfig) -> Result<Vec<NoteEvent>> {
    cfg.check()?;
    let slot = cfg.slot_s();
    let mut events: Vec<NoteEvent> = global_timeline(drawings)
        .into_iter()
        .map(|t| {
            let slot_index = (t.t_ms as f64 / 1000.0 / slot).round();
            NoteEvent {
                onset_s: slot_index * slot,
                dur_s: slot / 2.0,
                pitch: PIXEL_BASE_PITCH + (t.tap.row as usize * GRID_SIZE + t.tap.col as usize) as u8,
                velocity: PIXEL_VELOCITY,
                voice: PIXEL_VOICE,
            }
        })
        .collect();
    sort_events(&mut events);
    Ok(events)
}

pub fn shape_voice(kind: ShapeKind) -> u8 {
    match kind {
        ShapeKind::Circle => 0,
        ShapeKind::Triangle => 1,
        ShapeKind::Quadrilateral => 2,
    }
}

/// Kind picks the voice, centroid height the pitch, and `√area` the length
/// (area 0.25 lasts one beat).
pub fn shape_signature(shape: &Shape, cfg: &SonifyConfig, onset_s: f64) -> Result<NoteEvent> {
    let area = shape.area();
    let degenerate = match shape {
        Shape::Circle { radius, .. } => radius.is_nan() || *radius <= 0.0,
        _ => area <= MIN_POLYGON_AREA,
    };
    if degenerate || !area.is_finite() {
        return Err(Error::Degenerate(format!("{} with area {area}", shape.kind())));
    }
    Ok(NoteEvent {
        onset_s,
        dur_s: cfg.beat_s() * (area / UNIT_BEAT_AREA).sqrt(),
        pitch: cfg.map_pitch(shape.centroid().y),
        velocity: SHAPE_VELOCITY,
        voice: shape_voice(shape.kind()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChaosToOrder {
    /// Onset of the first averaged beat.
    pub phase_two_onset_s: f64,
    pub events: Vec<NoteEvent>,
}

/// Phase one plays each drawing on its own beat; phase two plays the prefix
/// means over the first 2, 3, …, n drawings, one per beat.
pub fn chaos_to_order_movement<T>(drawings: &[T], cfg: &SonifyConfig) -> Result<ChaosToOrder>
where
    T: Borrow<ShapeDrawing> + Sync,
{
    cfg.check()?;
    let n = drawings.len();
    if n < 2 {
        return Err(Error::InvalidParams(format!(
            "chaos-to-order needs at least 2 shape drawings, got {n}"
        )));
    }
    let beat = cfg.beat_s();
    let mut events = Vec::new();
    for (i, d) in drawings.iter().enumerate() {
        for s in &d.borrow().shapes {
            events.push(shape_signature(s, cfg, i as f64 * beat)?);
        }
    }
    for (k, means) in prefix_mean_shapes(drawings)?.iter().enumerate() {
        let onset = (n + k) as f64 * beat;
        for s in means.shapes() {
            events.push(shape_signature(s, cfg, onset)?);
        }
    }
    sort_events(&mut events);
    Ok(ChaosToOrder {
        phase_two_onset_s: n as f64 * beat,
        events,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Movement {
    MeanCurve,
    PixelBeat,
    ChaosOrder,
}

impl Movement {
    pub const ALL: [Movement; 3] = [Movement::MeanCurve, Movement::PixelBeat, Movement::ChaosOrder];

    pub fn as_str(self) -> &'static str {
        match self {
            Movement::MeanCurve => "mean-curve",
            Movement::PixelBeat => "pixel-beat",
            Movement::ChaosOrder => "chaos-order",
        }
    }
}

impl fmt::Display for Movement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Movement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Movement::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownId(format!("movement {s:?}")))
    }
}

/// Compiles one movement from the matching drawings of a dataset with the
/// default voice length and sample count.
pub fn compose(dataset: &Dataset, movement: Movement, cfg: &SonifyConfig, seed: u64) -> Result<Vec<NoteEvent>> {
    match movement {
        Movement::MeanCurve => {
            let curves = dataset.curves();
            let total_s = DEFAULT_VOICE_BEATS * cfg.beat_s();
            mean_plus_samples_movement(&curves, cfg, DEFAULT_SAMPLE_VOICES, seed, DEFAULT_VOICE_POINTS, total_s)
                .map(|m| m.events)
        }
        Movement::PixelBeat => {
            let pixels = dataset.pixels();
            if pixels.is_empty() {
                return Err(Error::EmptyInput("pixel-beat needs pixel drawings".into()));
            }
            pixel_beat(&pixels, cfg)
        }
        Movement::ChaosOrder => {
            let shapes = dataset.shapes();
            if shapes.is_empty() {
                return Err(Error::EmptyInput("chaos-order needs shape drawings".into()));
            }
            chaos_to_order_movement(&shapes, cfg).map(|m| m.events)
        }
    }
}

fn push_vlq(buf: &mut Vec<u8>, value: u32) {
    let mut groups = [0u8; 5];
    let mut n = 0;
    let mut v = value;
    loop {
        groups[n] = (v & 0x7f) as u8;
        n += 1;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        let continuation = if i > 0 { 0x80 } else { 0 };
        buf.push(groups[i] | continuation);
    }
}

fn push_chunk(buf: &mut Vec<u8>, tag: &[u8; 4], body: &[u8]) {
    buf.extend_from_slice(tag);
    buf.extend_from_slice(&(body.len() as u32).to_be_bytes());
    buf.extend_from_slice(body);
}

/// Microseconds per quarter note, as three big-endian bytes.
pub fn tempo_bytes(bpm: f64) -> Result<[u8; 3]> {
    let micros = (60_000_000.0 / bpm).round();
    if !(micros >= 1.0 && micros < (1u32 << 24) as f64) {
        return Err(Error::InvalidParams(format!("bpm {bpm} outside the MIDI tempo range")));
    }
    let [_, a, b, c] = (micros as u32).to_be_bytes();
    Ok([a, b, c])
}

/// Format-1 SMF at 480 ticks per quarter: a tempo track followed by one
/// track per used voice, in voice order.
pub fn encode_midi(events: &[NoteEvent], cfg: &SonifyConfig) -> Result<Vec<u8>> {
    cfg.check()?;
    for e in events {
        e.check()?;
    }
    let mut voices: Vec<u8> = events.iter().map(|e| e.voice).collect();
    voices.sort_unstable();
    voices.dedup();

    let mut out = Vec::new();
    let mut header = Vec::with_capacity(6);
    header.extend_from_slice(&1u16.to_be_bytes());
    header.extend_from_slice(&(1 + voices.len() as u16).to_be_bytes());
    header.extend_from_slice(&TICKS_PER_QUARTER.to_be_bytes());
    push_chunk(&mut out, b"MThd", &header);

    let mut tempo = vec![0x00, 0xff, 0x51, 0x03];
    tempo.extend_from_slice(&tempo_bytes(cfg.bpm)?);
    tempo.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);
    push_chunk(&mut out, b"MTrk", &tempo);

    for &voice in &voices {
        // (tick, note-off before note-on, pitch, status, velocity)
        let mut msgs: Vec<(u32, u8, u8, u8, u8)> = Vec::new();
        for e in events.iter().filter(|e| e.voice == voice) {
            let on = cfg.seconds_to_ticks(e.onset_s);
            let off = cfg.seconds_to_ticks(e.onset_s + e.dur_s).max(on + 1);
            msgs.push((on, 1, e.pitch, 0x90 | voice, e.velocity));
            msgs.push((off, 0, e.pitch, 0x80 | voice, 0));
        }
        msgs.sort_unstable();
        let mut body = Vec::with_capacity(msgs.len() * 4 + 4);
        let mut now = 0;
        for (tick, _, pitch, status, velocity) in msgs {
            push_vlq(&mut body, tick - now);
            now = tick;
            body.extend_from_slice(&[status, pitch, velocity]);
        }
        body.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);
        push_chunk(&mut out, b"MTrk", &body);
    }
    Ok(out)
}

pub fn write_midi(events: &[NoteEvent], cfg: &SonifyConfig, path: &Path) -> Result<Vec<u8>> {
    let bytes = encode_midi(events, cfg)?;
    std::fs::write(path, &bytes)?;
    Ok(bytes)
}

/// Sorted compact JSON array; `[]` when empty.
pub fn events_to_json(events: &[NoteEvent]) -> String {
    let mut sorted = events.to_vec();
    sort_events(&mut sorted);
    serde_json::to_string(&sorted).expect("note events serialize")
}

pub fn write_events_json(events: &[NoteEvent], path: &Path) -> Result<()> {
    std::fs::write(path, events_to_json(events))?;
    Ok(())
}

pub fn read_events_json(path: &Path) -> Result<Vec<NoteEvent>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
