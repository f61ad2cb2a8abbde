//! Closed race-track geometry parameterized by centerline arc length.
//!
//! A [`TrackModel`] is a uniformly resampled closed centerline. All queries
//! (projection, progress, boundaries) are answered against the sampled
//! polyline, so a point on the polyline always projects onto itself.

mod file;

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

pub use file::{parse_track, TrackSource};

/// Smallest half width a track may have anywhere.
pub const MIN_HALF_WIDTH: f64 = 2.0;
/// Projection search window around the hint, in metres.
const SEARCH_WINDOW: f64 = 50.0;

/// Bundled stand-in circuit: fast right, hairpin, two left-handers, a fast
/// right-hand sequence and a final left, 4011 m long.
pub const BUNDLED_TRACK: &str = include_str!("../../assets/tracks/ridgeback.trk");
/// 600 m oval used for desk-scale learning runs.
pub const OVAL_TRACK: &str = include_str!("../../assets/tracks/oval600.trk");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSample {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// Mean curvature over `[s, s + spacing)`; positive turns left.
    pub curvature: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone)]
pub struct TrackModel {
    name: String,
    samples: Vec<TrackSample>,
    spacing: f64,
    total_length: f64,
    finish_distance: f64,
}

/// Where a point sits relative to the centerline.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrackProjection {
    /// Arc length of the nearest centerline point, in `[0, total_length)`.
    pub s_cl: f64,
    /// Signed lateral offset over half width; +1 is the left edge.
    pub track_pos: f64,
    /// Heading error against the track tangent, wrapped to `(-pi, pi]`.
    pub angle: f64,
    /// Signed lateral offset in metres.
    pub lateral: f64,
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

impl TrackModel {
    /// Builds a model from already uniform samples, checking every invariant.
    pub fn from_samples(
        name: impl Into<String>,
        samples: Vec<TrackSample>,
        finish_distance: f64,
    ) -> Result<Self> {
        if samples.len() < 8 {
            return Err(Error::InvalidTrack("fewer than 8 samples".into()));
        }
        for w in samples.windows(2) {
            if !(w[1].s > w[0].s) {
                return Err(Error::NonMonotone { s: w[1].s });
            }
        }
        if samples[0].s != 0.0 {
            return Err(Error::InvalidTrack("first sample must sit at s = 0".into()));
        }
        if let Some(bad) = samples.iter().find(|p| !(p.half_width > MIN_HALF_WIDTH)) {
            return Err(Error::WidthTooSmall {
                s: bad.s,
                width: bad.half_width,
            });
        }
        let n = samples.len();
        let spacing = samples[1].s - samples[0].s;
        let total_length = spacing * n as f64;
        let uniform = samples
            .iter()
            .enumerate()
            .all(|(i, p)| (p.s - spacing * i as f64).abs() < 1e-6);
        if !uniform {
            return Err(Error::InvalidTrack(
                "samples are not uniformly spaced".into(),
            ));
        }
        if !(finish_distance > 0.0) {
            return Err(Error::InvalidTrack(
                "finish distance must be positive".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            samples,
            spacing,
            total_length,
            finish_distance,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_track(&text)
    }

    pub fn bundled() -> Self {
        parse_track(BUNDLED_TRACK).expect("bundled track is valid")
    }

    pub fn oval() -> Self {
        parse_track(OVAL_TRACK).expect("bundled oval is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn samples(&self) -> &[TrackSample] {
        &self.samples
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn finish_distance(&self) -> f64 {
        self.finish_distance
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Wraps an arc length into `[0, total_length)`.
    pub fn wrap_s(&self, s: f64) -> f64 {
        let w = s.rem_euclid(self.total_length);
        if w >= self.total_length {
            0.0
        } else {
            w
        }
    }

    pub fn sample(&self, i: usize) -> &TrackSample {
        &self.samples[i % self.samples.len()]
    }

    // Segment index and fraction for an arc length.
    fn locate(&self, s: f64) -> (usize, f64) {
        let s = self.wrap_s(s);
        let i = ((s / self.spacing).floor() as usize).min(self.samples.len() - 1);
        let t = ((s - self.samples[i].s) / self.spacing).clamp(0.0, 1.0);
        (i, t)
    }

    pub fn point_at(&self, s: f64) -> (f64, f64) {
        let (i, t) = self.locate(s);
        let a = self.sample(i);
        let b = self.sample(i + 1);
        (a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let (i, t) = self.locate(s);
        let a = self.sample(i);
        let b = self.sample(i + 1);
        wrap_angle(a.heading + wrap_angle(b.heading - a.heading) * t)
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        self.sample(self.locate(s).0).curvature
    }

    pub fn half_width_at(&self, s: f64) -> f64 {
        let (i, t) = self.locate(s);
        let a = self.sample(i).half_width;
        let b = self.sample(i + 1).half_width;
        a + (b - a) * t
    }

    /// World position at arc length `s`, offset `lateral` metres to the left.
    pub fn pose_at(&self, s: f64, lateral: f64) -> (f64, f64, f64) {
        let (i, _) = self.locate(s);
        let (tx, ty) = self.segment_dir(i);
        let (x, y) = self.point_at(s);
        (x - ty * lateral, y + tx * lateral, self.heading_at(s))
    }

    fn segment_dir(&self, i: usize) -> (f64, f64) {
        let a = self.sample(i);
        let b = self.sample(i + 1);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len = dx.hypot(dy);
        (dx / len, dy / len)
    }

    // Closest point on segment i -> (distance^2, fraction).
    fn segment_closest(&self, i: usize, x: f64, y: f64) -> (f64, f64) {
        let a = self.sample(i);
        let b = self.sample(i + 1);
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len2 = dx * dx + dy * dy;
        let t = (((x - a.x) * dx + (y - a.y) * dy) / len2).clamp(0.0, 1.0);
        let (px, py) = (a.x + dx * t, a.y + dy * t);
        ((x - px).powi(2) + (y - py).powi(2), t)
    }

    fn nearest_in(&self, x: f64, y: f64, indices: impl Iterator<Item = usize>) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for i in indices {
            let p = &self.samples[i];
            let d2 = (p.x - x).powi(2) + (p.y - y).powi(2);
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        best
    }

    /// Nearest-point projection of a pose onto the centerline.
    ///
    /// With a hint only a +-50 m window around it is searched; the search
    /// falls back to the whole lap when the windowed optimum sits on the
    /// window edge or outside the widened corridor.
    pub fn project(&self, x: f64, y: f64, heading: f64, hint_s: Option<f64>) -> TrackProjection {
        let n = self.samples.len();
        let nearest = match hint_s {
            Some(hint) => {
                let half = ((SEARCH_WINDOW / self.spacing).ceil() as usize).min(n / 2);
                let center = (self.wrap_s(hint) / self.spacing).round() as usize;
                let start = center + n - half;
                let window = (0..=2 * half).map(|k| (start + k) % n);
                let (i, d2) = self.nearest_in(x, y, window);
                let off = (i + n - start % n) % n;
                let on_edge = off == 0 || off == 2 * half;
                let corridor = 3.0 * self.samples[i].half_width;
                if on_edge || d2 > corridor * corridor {
                    self.nearest_in(x, y, 0..n)
                } else {
                    (i, d2)
                }
            }
            None => self.nearest_in(x, y, 0..n),
        };
        let i = nearest.0;
        let prev = (i + n - 1) % n;
        let (d_prev, t_prev) = self.segment_closest(prev, x, y);
        let (d_next, t_next) = self.segment_closest(i, x, y);
        let (seg, t) = if d_prev < d_next {
            (prev, t_prev)
        } else {
            (i, t_next)
        };
        let a = self.sample(seg);
        let b = self.sample(seg + 1);
        let (tx, ty) = self.segment_dir(seg);
        let (cx, cy) = (a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
        let lateral = tx * (y - cy) - ty * (x - cx);
        let s_cl = self.wrap_s(a.s + t * self.spacing);
        let half_width = a.half_width + (b.half_width - a.half_width) * t;
        let track_heading = a.heading + wrap_angle(b.heading - a.heading) * t;
        TrackProjection {
            s_cl,
            track_pos: lateral / half_width,
            angle: wrap_angle(heading - track_heading),
            lateral,
        }
    }

    /// Wrap-aware signed difference `s_now - s_prev` in `(-L/2, L/2]`.
    pub fn progress_delta(&self, s_prev: f64, s_now: f64) -> f64 {
        let l = self.total_length;
        let mut d = (s_now - s_prev).rem_euclid(l);
        if d > l / 2.0 {
            d -= l;
        }
        d
    }

    pub fn curvature_extrema(&self) -> (f64, f64) {
        self.samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.curvature), hi.max(p.curvature))
            })
    }

    pub fn half_width_extrema(&self) -> (f64, f64) {
        self.samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.half_width), hi.max(p.half_width))
            })
    }

    /// Multi-line summary used by `track-info`.
    pub fn summary(&self) -> String {
        let (wmin, wmax) = self.half_width_extrema();
        let (kmin, kmax) = self.curvature_extrema();
        let tightest = 1.0 / kmin.abs().max(kmax.abs());
        format!(
            "name: {}\nlength: {:.3} m\nsamples: {} (spacing {:.4} m)\nfinish distance: {:.1} m\n\
             half width: min {:.2} m, max {:.2} m\ncurvature: min {:.5} 1/m, max {:.5} 1/m \
             (tightest radius {:.1} m)\n",
            self.name,
            self.total_length,
            self.samples.len(),
            self.spacing,
            self.finish_distance,
            wmin,
            wmax,
            kmin,
            kmax,
            tightest
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle() -> TrackModel {
        parse_track("gripline-track v1\nname circle\nhalf_width 5\nfinish 600\narc 100 360\n")
            .unwrap()
    }

    #[test]
    fn circle_length_and_curvature() {
        let t = circle();
        assert!((t.total_length() - 628.32).abs() < 0.1);
        for p in t.samples() {
            assert!((p.curvature - 0.01).abs() < 1e-9, "{}", p.curvature);
        }
    }

    #[test]
    fn projection_on_centerline_and_sign_convention() {
        let t = circle();
        let (x, y) = t.point_at(250.0);
        let h = t.heading_at(250.0);
        let p = t.project(x, y, h, Some(250.0));
        assert!(p.track_pos.abs() < 1e-9);
        assert!((p.s_cl - 250.0).abs() < 1e-9);
        assert!(p.angle.abs() < 1e-9);

        let (lx, ly, _) = t.pose_at(250.0, 0.5 * t.half_width_at(250.0));
        let p = t.project(lx, ly, h, Some(250.0));
        assert!((p.track_pos - 0.5).abs() < 1e-9, "{}", p.track_pos);
    }

    #[test]
    fn progress_delta_cases() {
        let t = parse_track(
            "gripline-track v1\nhalf_width 5\nfinish 3900\narc 636.6197723675814 360\n",
        )
        .unwrap();
        assert!((t.total_length() - 4000.0).abs() < 1e-6);
        assert!((t.progress_delta(100.0, 101.2) - 1.2).abs() < 1e-9);
        assert!((t.progress_delta(3999.0, 1.0) - 2.0).abs() < 1e-9);
        assert!((t.progress_delta(10.0, 8.5) + 1.5).abs() < 1e-9);
        assert!((t.progress_delta(0.0, 2000.0) - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn global_fallback_recovers_from_bad_hint() {
        let t = circle();
        let (x, y) = t.point_at(400.0);
        let p = t.project(x, y, 0.0, Some(100.0));
        assert!((p.s_cl - 400.0).abs() < 1e-6);
    }
}
