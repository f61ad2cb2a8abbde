//! Egocentric 84x84 grayscale view of the track and the 4-frame stack.
//!
//! The camera sits 1.2 m above the centre of gravity looking along the
//! vehicle heading over flat ground. Horizontal field of view is 90 degrees;
//! the vertical focal length is four times the horizontal one and the
//! horizon sits on row 10, so most rows image the road within 200 m. Each
//! ground pixel is classified by casting its centre onto the ground plane
//! and measuring it against the centerline polyline.
//!
//! Palette (part of the observation contract):
//!
//! | class               | luminance |
//! |---------------------|-----------|
//! | sky / horizon       | 0.0       |
//! | off-track ground    | 0.15      |
//! | track surface       | 0.5       |
//! | centerline dash     | 0.75      |
//! | boundary line       | 1.0       |

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::track::TrackModel;
use crate::vehicle::VehicleState;

pub const FRAME_SIZE: usize = 84;
pub const FRAME_PIXELS: usize = FRAME_SIZE * FRAME_SIZE;
pub const STACK_DEPTH: usize = 4;

pub const SKY: f32 = 0.0;
pub const OFF_TRACK: f32 = 0.15;
pub const SURFACE: f32 = 0.5;
pub const DASH: f32 = 0.75;
pub const BOUNDARY: f32 = 1.0;

pub const EYE_HEIGHT: f64 = 1.2;
pub const FAR_CLIP: f64 = 200.0;
const FOCAL_X: f64 = 42.0;
const FOCAL_Y: f64 = 168.0;
const CENTER_X: f64 = 42.0;
pub const HORIZON_ROW: usize = 10;
/// Painted boundary line width, measured inward from each edge.
pub const BOUNDARY_WIDTH: f64 = 0.5;
pub const DASH_HALF_WIDTH: f64 = 0.15;
pub const DASH_LENGTH: f64 = 3.0;
pub const DASH_PERIOD: f64 = 9.0;
const GRID_CELL: f64 = 8.0;
const HINT_REACH: usize = 3;

#[derive(Clone, PartialEq)]
pub struct Frame {
    pixels: Box<[f32]>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("len", &self.pixels.len())
            .finish()
    }
}

impl Frame {
    pub fn filled(value: f32) -> Self {
        Self {
            pixels: vec![value; FRAME_PIXELS].into_boxed_slice(),
        }
    }

    pub fn from_pixels(pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != FRAME_PIXELS {
            return Err(Error::Shape(format!(
                "frame needs {FRAME_PIXELS} pixels, got {}",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Shape("frame luminance outside [0, 1]".into()));
        }
        Ok(Self {
            pixels: pixels.into_boxed_slice(),
        })
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * FRAME_SIZE + col]
    }

    pub fn count(&self, value: f32) -> usize {
        self.pixels.iter().filter(|p| **p == value).count()
    }

    /// Binary PGM (P5, 8-bit).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{FRAME_SIZE} {FRAME_SIZE}\n255\n").into_bytes();
        out.extend(self.pixels.iter().map(|p| (p * 255.0).round() as u8));
        out
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

/// The four most recent frames, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    frames: [Arc<Frame>; STACK_DEPTH],
}

impl FrameStack {
    pub fn reset(frame: Frame) -> Self {
        let f = Arc::new(frame);
        Self {
            frames: [f.clone(), f.clone(), f.clone(), f],
        }
    }

    pub fn push(&mut self, frame: Frame) {
        self.frames.rotate_left(1);
        self.frames[STACK_DEPTH - 1] = Arc::new(frame);
    }

    pub fn frames(&self) -> &[Arc<Frame>; STACK_DEPTH] {
        &self.frames
    }

    pub fn newest(&self) -> &Frame {
        &self.frames[STACK_DEPTH - 1]
    }

    /// Copies the stack into a channel-major `[4, 84, 84]` buffer.
    pub fn write_into<F: Copy>(&self, out: &mut [F], convert: impl Fn(f32) -> F) {
        assert_eq!(out.len(), STACK_DEPTH * FRAME_PIXELS);
        for (chunk, frame) in out.chunks_exact_mut(FRAME_PIXELS).zip(self.frames.iter()) {
            for (o, p) in chunk.iter_mut().zip(frame.pixels.iter()) {
                *o = convert(*p);
            }
        }
    }
}

/// Track plus a uniform grid of nearby segments for per-pixel lookups.
#[derive(Debug)]
pub struct Scene {
    track: Arc<TrackModel>,
    origin: (f64, f64),
    cols: usize,
    rows: usize,
    cells: Vec<Vec<u32>>,
}

impl Scene {
    pub fn new(track: Arc<TrackModel>) -> Self {
        let (_, max_hw) = track.half_width_extrema();
        let margin = max_hw + 2.0;
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in track.samples() {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let origin = (x0 - margin, y0 - margin);
        let cols = ((x1 - x0 + 2.0 * margin) / GRID_CELL).ceil() as usize + 1;
        let rows = ((y1 - y0 + 2.0 * margin) / GRID_CELL).ceil() as usize + 1;
        let mut cells = vec![Vec::new(); cols * rows];
        for i in 0..track.len() {
            let a = track.sample(i);
            let b = track.sample(i + 1);
            let cx0 = ((a.x.min(b.x) - margin - origin.0) / GRID_CELL)
                .floor()
                .max(0.0) as usize;
            let cy0 = ((a.y.min(b.y) - margin - origin.1) / GRID_CELL)
                .floor()
                .max(0.0) as usize;
            let cx1 =
                (((a.x.max(b.x) + margin - origin.0) / GRID_CELL).floor() as usize).min(cols - 1);
            let cy1 =
                (((a.y.max(b.y) + margin - origin.1) / GRID_CELL).floor() as usize).min(rows - 1);
            for cy in cy0..=cy1 {
                for cx in cx0..=cx1 {
                    cells[cy * cols + cx].push(i as u32);
                }
            }
        }
        Self {
            track,
            origin,
            cols,
            rows,
            cells,
        }
    }

    pub fn track(&self) -> &Arc<TrackModel> {
        &self.track
    }

    fn cell(&self, x: f64, y: f64) -> &[u32] {
        let cx = ((x - self.origin.0) / GRID_CELL).floor();
        let cy = ((y - self.origin.1) / GRID_CELL).floor();
        if cx < 0.0 || cy < 0.0 || cx >= self.cols as f64 || cy >= self.rows as f64 {
            return &[];
        }
        &self.cells[cy as usize * self.cols + cx as usize]
    }

    // (distance^2, arc length, half width) of the closest point on segment i.
    fn segment_hit(&self, i: usize, x: f64, y: f64) -> (f64, f64, f64) {
        let t = &self.track;
        let a = t.sample(i);
        let b = t.sample(i + 1);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len2 = dx * dx + dy * dy;
        let u = (((x - a.x) * dx + (y - a.y) * dy) / len2).clamp(0.0, 1.0);
        let (px, py) = (a.x + dx * u, a.y + dy * u);
        let d2 = (x - px).powi(2) + (y - py).powi(2);
        let hw = a.half_width + (b.half_width - a.half_width) * u;
        (d2, a.s + u * t.spacing(), hw)
    }

    fn classify(&self, x: f64, y: f64, hint: &mut Option<usize>) -> f32 {
        let n = self.track.len();
        let mut best: Option<(usize, f64, f64, f64)> = None;
        let consider = |i: usize, best: &mut Option<(usize, f64, f64, f64)>| {
            let (d2, s, hw) = self.segment_hit(i, x, y);
            if best.is_none_or(|b| d2 < b.1) {
                *best = Some((i, d2, s, hw));
            }
        };
        if let Some(h) = *hint {
            for k in 0..=2 * HINT_REACH {
                consider((h + n + k - HINT_REACH) % n, &mut best);
            }
        }
        let inside = |b: Option<(usize, f64, f64, f64)>| b.is_some_and(|b| b.1 <= b.3 * b.3);
        if !inside(best) {
            best = None;
            for &i in self.cell(x, y) {
                consider(i as usize, &mut best);
            }
        }
        match best {
            Some((i, d2, s, hw)) if d2 <= hw * hw => {
                *hint = Some(i);
                let d = d2.sqrt();
                if d >= hw - BOUNDARY_WIDTH {
                    BOUNDARY
                } else if d <= DASH_HALF_WIDTH && s.rem_euclid(DASH_PERIOD) < DASH_LENGTH {
                    DASH
                } else {
                    SURFACE
                }
            }
            _ => {
                *hint = None;
                OFF_TRACK
            }
        }
    }

    /// Renders the driver's view. Pure in `(state, scene)`.
    pub fn render(&self, state: &VehicleState) -> Frame {
        let mut pixels = vec![SKY; FRAME_PIXELS];
        let (fx, fy) = (state.yaw.cos(), state.yaw.sin());
        // Image right in world coordinates.
        let (rx, ry) = (fy, -fx);
        let mut row_hint = None;
        for row in HORIZON_ROW..FRAME_SIZE {
            let dv = row as f64 + 0.5 - HORIZON_ROW as f64;
            let depth = FOCAL_Y * EYE_HEIGHT / dv;
            let line = &mut pixels[row * FRAME_SIZE..(row + 1) * FRAME_SIZE];
            if depth > FAR_CLIP {
                line.fill(OFF_TRACK);
                continue;
            }
            let mut hint = row_hint;
            let mut first_hit = None;
            for (col, px) in line.iter_mut().enumerate() {
                let right = (col as f64 + 0.5 - CENTER_X) * depth / FOCAL_X;
                let x = state.x + depth * fx + right * rx;
                let y = state.y + depth * fy + right * ry;
                *px = self.classify(x, y, &mut hint);
                if first_hit.is_none() && hint.is_some() {
                    first_hit = hint;
                }
            }
            row_hint = first_hit.or(row_hint);
        }
        Frame {
            pixels: pixels.into_boxed_slice(),
        }
    }
}
