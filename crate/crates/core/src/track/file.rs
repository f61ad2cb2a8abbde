//! Text track format.
//!
//! ```text
//! gripline-track v1
//! name oval600
//! spacing 1.0          # maximum sample spacing, metres (<= 1)
//! half_width 6         # or repeated `half_width_at <s> <m>` knots
//! finish 600           # episode-completion distance
//! straight 142.92
//! arc 50 180           # radius (m), turn angle (deg, positive = left)
//! ```
//!
//! Instead of segments a file may give a curvature profile (`length <m>` plus
//! `curvature <s> <1/m>` knots, linear between knots) or a closed polyline
//! (`point <x> <y>` lines, last point repeating the first).

use std::f64::consts::PI;

use super::{wrap_angle, TrackModel, TrackSample};
use crate::error::{Error, Result};

pub const HEADER: &str = "gripline-track v1";
const CLOSURE_GAP: f64 = 0.05;
const CLOSURE_HEADING: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Straight {
        length: f64,
    },
    /// Signed: positive angle turns left.
    Arc {
        radius: f64,
        angle: f64,
    },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Straight { length } => length,
            Segment::Arc { radius, angle } => radius * angle.abs(),
        }
    }

    fn curvature(&self) -> f64 {
        match *self {
            Segment::Straight { .. } => 0.0,
            Segment::Arc { radius, angle } => angle.signum() / radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Segments(Vec<Segment>),
    Curvature { length: f64, knots: Vec<(f64, f64)> },
    Polyline(Vec<(f64, f64)>),
}

/// Parsed, not yet compiled, track description.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSource {
    pub name: String,
    pub spacing: f64,
    pub half_width: Vec<(f64, f64)>,
    pub finish: Option<f64>,
    pub start: (f64, f64, f64),
    pub geometry: Geometry,
}

fn num(line: usize, tok: Option<&str>, what: &str) -> Result<f64> {
    let tok = tok.ok_or_else(|| Error::TrackParse {
        line,
        msg: format!("missing {what}"),
    })?;
    let v: f64 = tok.parse().map_err(|_| Error::TrackParse {
        line,
        msg: format!("bad {what} {tok:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::TrackParse {
            line,
            msg: format!("non-finite {what}"),
        });
    }
    Ok(v)
}

impl TrackSource {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, h)) if h == HEADER => {}
            Some((n, h)) => {
                return Err(Error::TrackParse {
                    line: n,
                    msg: format!("expected header {HEADER:?}, found {h:?}"),
                })
            }
            None => {
                return Err(Error::TrackParse {
                    line: 0,
                    msg: "empty file".into(),
                })
            }
        }
        let mut src = TrackSource {
            name: "unnamed".into(),
            spacing: 1.0,
            half_width: Vec::new(),
            finish: None,
            start: (0.0, 0.0, 0.0),
            geometry: Geometry::Segments(Vec::new()),
        };
        let mut segments = Vec::new();
        let mut knots = Vec::new();
        let mut length = None;
        let mut points = Vec::new();
        for (n, line) in lines {
            let mut tok = line.split_whitespace();
            let key = tok.next().unwrap_or_default();
            match key {
                "name" => src.name = tok.collect::<Vec<_>>().join(" "),
                "spacing" => src.spacing = num(n, tok.next(), "spacing")?,
                "half_width" => {
                    src.half_width.clear();
                    src.half_width
                        .push((0.0, num(n, tok.next(), "half width")?));
                }
                "half_width_at" => {
                    let s = num(n, tok.next(), "arc length")?;
                    let w = num(n, tok.next(), "half width")?;
                    src.half_width.push((s, w));
                }
                "finish" => src.finish = Some(num(n, tok.next(), "finish distance")?),
                "start" => {
                    let x = num(n, tok.next(), "x")?;
                    let y = num(n, tok.next(), "y")?;
                    let h = num(n, tok.next(), "heading")?;
                    src.start = (x, y, h.to_radians());
                }
                "straight" => {
                    let length = num(n, tok.next(), "length")?;
                    if !(length > 0.0) {
                        return Err(Error::TrackParse {
                            line: n,
                            msg: "straight length must be positive".into(),
                        });
                    }
                    segments.push(Segment::Straight { length });
                }
                "arc" => {
                    let radius = num(n, tok.next(), "radius")?;
                    let angle = num(n, tok.next(), "angle")?.to_radians();
                    if !(radius > 0.0) || angle == 0.0 {
                        return Err(Error::TrackParse {
                            line: n,
                            msg: "arc needs positive radius and non-zero angle".into(),
                        });
                    }
                    segments.push(Segment::Arc { radius, angle });
                }
                "length" => length = Some(num(n, tok.next(), "length")?),
                "curvature" => {
                    let s = num(n, tok.next(), "arc length")?;
                    let k = num(n, tok.next(), "curvature")?;
                    knots.push((s, k));
                }
                "point" => {
                    let x = num(n, tok.next(), "x")?;
                    let y = num(n, tok.next(), "y")?;
                    points.push((x, y));
                }
                other => {
                    return Err(Error::TrackParse {
                        line: n,
                        msg: format!("unknown keyword {other:?}"),
                    })
                }
            }
        }
        let kinds = [!segments.is_empty(), !knots.is_empty(), !points.is_empty()];
        if kinds.iter().filter(|k| **k).count() != 1 {
            return Err(Error::TrackParse {
                line: 0,
                msg: "exactly one of segments, curvature profile or polyline is required".into(),
            });
        }
        src.geometry = if !segments.is_empty() {
            Geometry::Segments(segments)
        } else if !knots.is_empty() {
            let length = length.ok_or_else(|| Error::TrackParse {
                line: 0,
                msg: "curvature profile needs `length`".into(),
            })?;
            Geometry::Curvature { length, knots }
        } else {
            Geometry::Polyline(points)
        };
        if src.half_width.is_empty() {
            return Err(Error::TrackParse {
                line: 0,
                msg: "missing half_width".into(),
            });
        }
        if !(src.spacing > 0.0 && src.spacing <= 1.0) {
            return Err(Error::TrackParse {
                line: 0,
                msg: "spacing must be in (0, 1] m".into(),
            });
        }
        Ok(src)
    }

    /// Resamples the geometry into a [`TrackModel`].
    pub fn compile(&self) -> Result<TrackModel> {
        // (s, x, y, unwrapped heading) at uniform spacing, plus the end pose.
        let (mut pts, end) = match &self.geometry {
            Geometry::Segments(segs) => sample_segments(segs, self.spacing, self.start),
            Geometry::Curvature { length, knots } => {
                sample_curvature(*length, knots, self.spacing, self.start)?
            }
            Geometry::Polyline(points) => sample_polyline(points, self.spacing)?,
        };
        let total = pts.len() as f64 * (pts[1].0 - pts[0].0);
        let (gx, gy) = (end.1 - pts[0].1, end.2 - pts[0].2);
        let turn = end.3 - pts[0].3;
        let laps = (turn / (2.0 * PI)).round();
        let gh = turn - laps * 2.0 * PI;
        let gap = gx.hypot(gy);
        if gap > CLOSURE_GAP || gh.abs() > CLOSURE_HEADING || laps == 0.0 {
            return Err(Error::OpenLoop {
                gap,
                heading_gap: gh,
            });
        }
        for p in pts.iter_mut() {
            let f = p.0 / total;
            p.1 -= gx * f;
            p.2 -= gy * f;
            p.3 -= gh * f;
        }
        let n = pts.len();
        let spacing = total / n as f64;
        let widths = self.half_width_profile(total)?;
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let (s, x, y, h) = pts[i];
            let h_next = if i + 1 < n {
                pts[i + 1].3
            } else {
                pts[0].3 + laps * 2.0 * PI
            };
            samples.push(TrackSample {
                s,
                x,
                y,
                heading: wrap_angle(h),
                curvature: (h_next - h) / spacing,
                half_width: interp_wrapped(&widths, s, total),
            });
        }
        let finish = self.finish.unwrap_or(total);
        TrackModel::from_samples(self.name.clone(), samples, finish)
    }

    fn half_width_profile(&self, total: f64) -> Result<Vec<(f64, f64)>> {
        let mut knots = self.half_width.clone();
        if knots[0].0 != 0.0 {
            return Err(Error::TrackParse {
                line: 0,
                msg: "half width profile must start at s = 0".into(),
            });
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::NonMonotone { s: w[1].0 });
            }
        }
        if let Some(&(s, _)) = knots.last() {
            if s >= total {
                return Err(Error::TrackParse {
                    line: 0,
                    msg: format!("half width knot at {s} beyond track length {total:.3}"),
                });
            }
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(knots)
    }
}

// Piecewise-linear interpolation over knots that wrap at `total`.
fn interp_wrapped(knots: &[(f64, f64)], s: f64, total: f64) -> f64 {
    if knots.len() == 1 {
        return knots[0].1;
    }
    let idx = knots.partition_point(|k| k.0 <= s);
    let (a, b) = if idx == knots.len() {
        (knots[idx - 1], (knots[0].0 + total, knots[0].1))
    } else {
        (knots[idx - 1], knots[idx])
    };
    let t = (s - a.0) / (b.0 - a.0);
    a.1 + (b.1 - a.1) * t
}

type Pose = (f64, f64, f64, f64);

fn uniform_count(total: f64, spacing: f64) -> usize {
    ((total / spacing) - 1e-9).ceil().max(8.0) as usize
}

fn sample_segments(segs: &[Segment], spacing: f64, start: (f64, f64, f64)) -> (Vec<Pose>, Pose) {
    let total: f64 = segs.iter().map(Segment::length).sum();
    let n = uniform_count(total, spacing);
    let ds = total / n as f64;
    // Start pose of every segment.
    let mut starts = Vec::with_capacity(segs.len() + 1);
    let (mut x, mut y, mut h, mut s) = (start.0, start.1, start.2, 0.0);
    for seg in segs {
        starts.push((s, x, y, h));
        let (nx, ny, nh) = advance(seg, x, y, h, seg.length());
        x = nx;
        y = ny;
        h = nh;
        s += seg.length();
    }
    let end = (total, x, y, h);
    let mut k = 0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let si = ds * i as f64;
        while k + 1 < segs.len() && starts[k + 1].0 <= si {
            k += 1;
        }
        let (s0, x0, y0, h0) = starts[k];
        let (px, py, ph) = advance(&segs[k], x0, y0, h0, si - s0);
        out.push((si, px, py, ph));
    }
    (out, end)
}

fn advance(seg: &Segment, x: f64, y: f64, h: f64, d: f64) -> (f64, f64, f64) {
    match *seg {
        Segment::Straight { .. } => (x + d * h.cos(), y + d * h.sin(), h),
        Segment::Arc { .. } => {
            let k = seg.curvature();
            let h1 = h + k * d;
            (
                x + (h1.sin() - h.sin()) / k,
                y - (h1.cos() - h.cos()) / k,
                h1,
            )
        }
    }
}

fn sample_curvature(
    length: f64,
    knots: &[(f64, f64)],
    spacing: f64,
    start: (f64, f64, f64),
) -> Result<(Vec<Pose>, Pose)> {
    if knots[0].0 != 0.0 {
        return Err(Error::TrackParse {
            line: 0,
            msg: "curvature profile must start at s = 0".into(),
        });
    }
    for w in knots.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::NonMonotone { s: w[1].0 });
        }
    }
    if knots.last().is_some_and(|k| k.0 >= length) {
        return Err(Error::NonMonotone { s: length });
    }
    let n = uniform_count(length, spacing);
    let ds = length / n as f64;
    const SUB: usize = 16;
    let h_sub = ds / SUB as f64;
    let kappa = |s: f64| interp_wrapped(knots, s.min(length), length);
    let (mut x, mut y, mut h) = start;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let s0 = ds * i as f64;
        out.push((s0, x, y, h));
        for j in 0..SUB {
            // Heading is integrated exactly (trapezoid of a linear profile),
            // position with Simpson's rule over each substep.
            let a = s0 + h_sub * j as f64;
            let (ka, km, kb) = (kappa(a), kappa(a + 0.5 * h_sub), kappa(a + h_sub));
            let hm = h + 0.25 * h_sub * (ka + km);
            let hb = h + 0.5 * h_sub * (ka + kb);
            x += h_sub / 6.0 * (h.cos() + 4.0 * hm.cos() + hb.cos());
            y += h_sub / 6.0 * (h.sin() + 4.0 * hm.sin() + hb.sin());
            h = hb;
        }
    }
    Ok((out, (length, x, y, h)))
}

fn sample_polyline(points: &[(f64, f64)], spacing: f64) -> Result<(Vec<Pose>, Pose)> {
    if points.len() < 4 {
        return Err(Error::InvalidTrack(
            "polyline needs at least 4 points".into(),
        ));
    }
    let first = points[0];
    let last = points[points.len() - 1];
    let gap = (last.0 - first.0).hypot(last.1 - first.1);
    if gap > CLOSURE_GAP {
        return Err(Error::OpenLoop {
            gap,
            heading_gap: 0.0,
        });
    }
    let mut cum = vec![0.0];
    for (i, w) in points.windows(2).enumerate() {
        let d = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
        if !(d > 0.0) {
            return Err(Error::NonMonotone { s: cum[i] });
        }
        cum.push(cum[i] + d);
    }
    let total = *cum.last().unwrap();
    let n = uniform_count(total, spacing);
    let ds = total / n as f64;
    let pos: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let s = ds * i as f64;
            let k = cum.partition_point(|c| *c <= s).clamp(1, points.len() - 1);
            let t = (s - cum[k - 1]) / (cum[k] - cum[k - 1]);
            let (a, b) = (points[k - 1], points[k]);
            (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t)
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    let mut unwrapped = 0.0;
    for i in 0..n {
        let p = pos[(i + n - 1) % n];
        let q = pos[(i + 1) % n];
        let h = (q.1 - p.1).atan2(q.0 - p.0);
        unwrapped = if i == 0 {
            h
        } else {
            unwrapped + wrap_angle(h - unwrapped)
        };
        out.push((ds * i as f64, pos[i].0, pos[i].1, unwrapped));
    }
    let closing = out[n - 1].3 + wrap_angle(out[0].3 - out[n - 1].3);
    let end = (total, out[0].1, out[0].2, closing);
    Ok((out, end))
}

/// Parses and compiles a track file in one go.
pub fn parse_track(text: &str) -> Result<TrackModel> {
    TrackSource::parse(text)?.compile()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_open_loop() {
        let err = parse_track("gripline-track v1\nhalf_width 5\nstraight 100\n").unwrap_err();
        assert!(err.to_string().contains("open loop"), "{err}");
    }

    #[test]
    fn rejects_missing_header() {
        let err = parse_track("half_width 5\narc 10 360\n").unwrap_err();
        assert!(matches!(err, Error::TrackParse { line: 1, .. }));
    }

    #[test]
    fn rejects_narrow_track() {
        let err = parse_track("gripline-track v1\nhalf_width 1.5\narc 50 360\n").unwrap_err();
        assert!(matches!(err, Error::WidthTooSmall { .. }), "{err}");
    }

    #[test]
    fn rejects_non_monotone_profile() {
        let text = "gripline-track v1\nhalf_width 5\nlength 628.3185307179587\n\
                    curvature 0 0.01\ncurvature 300 0.01\ncurvature 200 0.01\n";
        let err = parse_track(text).unwrap_err();
        assert!(matches!(err, Error::NonMonotone { .. }), "{err}");
    }

    #[test]
    fn curvature_profile_circle() {
        let text = "gripline-track v1\nhalf_width 5\nlength 628.3185307179587\ncurvature 0 0.01\n";
        let t = parse_track(text).unwrap();
        assert!((t.total_length() - 628.3185307179587).abs() < 1e-9);
        for p in t.samples() {
            assert!((p.curvature - 0.01).abs() < 1e-6);
            assert!((p.x.hypot(p.y - 100.0) - 100.0).abs() < 1e-3);
        }
    }

    #[test]
    fn polyline_square_with_rounded_corners_closes() {
        let mut text = String::from("gripline-track v1\nhalf_width 4\n");
        for i in 0..=72 {
            let a = (i as f64 * 5.0).to_radians();
            text.push_str(&format!("point {} {}\n", 80.0 * a.cos(), 80.0 * a.sin()));
        }
        let t = parse_track(&text).unwrap();
        assert!((t.total_length() - 2.0 * PI * 80.0).abs() < 2.0);
    }

    #[test]
    fn polyline_with_duplicate_point_is_non_monotone() {
        let text = "gripline-track v1\nhalf_width 4\npoint 0 0\npoint 100 0\npoint 100 0\n\
                    point 100 100\npoint 0 100\npoint 0 0\n";
        assert!(matches!(parse_track(text), Err(Error::NonMonotone { .. })));
    }

    #[test]
    fn width_profile_interpolates_and_wraps() {
        let text = "gripline-track v1\nhalf_width_at 0 4\nhalf_width_at 100 8\narc 100 360\n";
        let t = parse_track(text).unwrap();
        assert!((t.half_width_at(50.0) - 6.0).abs() < 1e-9);
        assert!((t.half_width_at(100.0) - 8.0).abs() < 1e-2);
        let l = t.total_length();
        assert!((t.half_width_at(100.0 + (l - 100.0) / 2.0) - 6.0).abs() < 1e-9);
    }
}
