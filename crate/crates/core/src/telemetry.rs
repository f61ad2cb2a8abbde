//! Per-step telemetry, CSV round-tripping, learning curves, wheel-lock
//! analysis and the SVG lap figure.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::TerminationReason;
use crate::error::{Error, Result};
use crate::track::TrackModel;

pub const CSV_VERSION: u32 = 1;
pub const CSV_HEADER: &str =
    "t,s_cl,x,y,steer,throttle_brake,vx,ws_fl,ws_fr,ws_rl,ws_rr,track_pos,ax,ay,r_tdiff,r_ter,r_act,r_total";
const CSV_MAGIC: &str = "# gripline-telemetry";

/// One agent step as seen by the analysis tools. Wheel speeds are
/// circumferential (omega * radius), m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub t: f64,
    pub s_cl: f64,
    pub x: f64,
    pub y: f64,
    pub steer: f64,
    pub throttle_brake: f64,
    pub vx: f64,
    pub wheel_speeds: [f64; 4],
    pub track_pos: f64,
    pub ax: f64,
    pub ay: f64,
    pub r_tdiff: f64,
    pub r_ter: f64,
    pub r_act: f64,
    pub r_total: f64,
}

impl TelemetryRecord {
    fn fields(&self) -> [f64; 18] {
        let w = self.wheel_speeds;
        [
            self.t,
            self.s_cl,
            self.x,
            self.y,
            self.steer,
            self.throttle_brake,
            self.vx,
            w[0],
            w[1],
            w[2],
            w[3],
            self.track_pos,
            self.ax,
            self.ay,
            self.r_tdiff,
            self.r_ter,
            self.r_act,
            self.r_total,
        ]
    }

    fn from_fields(f: &[f64; 18]) -> Self {
        Self {
            t: f[0],
            s_cl: f[1],
            x: f[2],
            y: f[3],
            steer: f[4],
            throttle_brake: f[5],
            vx: f[6],
            wheel_speeds: [f[7], f[8], f[9], f[10]],
            track_pos: f[11],
            ax: f[12],
            ay: f[13],
            r_tdiff: f[14],
            r_ter: f[15],
            r_act: f[16],
            r_total: f[17],
        }
    }
}

/// Unwrapped centerline distance from `start_s` for each row.
pub fn telemetry_distance(rows: &[TelemetryRecord], start_s: f64, track_length: f64) -> Vec<f64> {
    let mut prev = start_s;
    let mut acc = 0.0;
    rows.iter()
        .map(|r| {
            let mut d = r.s_cl - prev;
            if d > 0.5 * track_length {
                d -= track_length;
            } else if d < -0.5 * track_length {
                d += track_length;
            }
            acc += d;
            prev = r.s_cl;
            acc
        })
        .collect()
}

/// A whole episode: rows plus how it ended.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub track_length: f64,
    /// Centerline position at reset.
    pub start_s: f64,
    pub rows: Vec<TelemetryRecord>,
    pub termination: Option<TerminationReason>,
    pub truncated: bool,
}

impl EpisodeRecord {
    pub fn new(track_length: f64, start_s: f64) -> Self {
        Self {
            track_length,
            start_s,
            rows: Vec::new(),
            termination: None,
            truncated: false,
        }
    }

    pub fn push(&mut self, row: TelemetryRecord) {
        self.rows.push(row);
    }

    pub fn finish(&mut self, termination: Option<TerminationReason>, truncated: bool) {
        self.termination = termination;
        self.truncated = truncated;
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Unwrapped centerline distance of every row.
    pub fn distance(&self) -> Vec<f64> {
        telemetry_distance(&self.rows, self.start_s, self.track_length)
    }

    fn outcome(&self) -> &'static str {
        match (self.termination, self.truncated) {
            (Some(r), _) => r.as_str(),
            (None, true) => "Truncated",
            (None, false) => "None",
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        if self.rows.is_empty() {
            return Err(Error::EmptyTelemetry);
        }
        let mut out = format!(
            "{CSV_MAGIC} v{CSV_VERSION} track_length={} start_s={} outcome={}\n{CSV_HEADER}\n",
            self.track_length,
            self.start_s,
            self.outcome()
        );
        for r in &self.rows {
            let f = r.fields();
            for (i, v) in f.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::CsvParse { line, msg };
        let mut lines = text.lines();
        let meta = lines
            .next()
            .ok_or_else(|| bad(1, "missing version line".into()))?;
        let rest = meta
            .strip_prefix(CSV_MAGIC)
            .ok_or_else(|| bad(1, "not a telemetry file".into()))?;
        let mut parts = rest.split_whitespace();
        if parts.next() != Some(&format!("v{CSV_VERSION}")) {
            return Err(bad(
                1,
                format!("unsupported version, expected v{CSV_VERSION}"),
            ));
        }
        let mut rec = EpisodeRecord::new(0.0, 0.0);
        for kv in parts {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(1, format!("bad field {kv}")))?;
            let num = || {
                v.parse::<f64>()
                    .map_err(|_| bad(1, format!("bad number {v}")))
            };
            match k {
                "track_length" => rec.track_length = num()?,
                "start_s" => rec.start_s = num()?,
                "outcome" => match v {
                    "Truncated" => rec.truncated = true,
                    "None" => {}
                    _ => {
                        rec.termination = Some(
                            TerminationReason::parse(v)
                                .ok_or_else(|| bad(1, format!("unknown outcome {v}")))?,
                        )
                    }
                },
                _ => return Err(bad(1, format!("unknown field {k}"))),
            }
        }
        if lines.next() != Some(CSV_HEADER) {
            return Err(bad(2, "header does not match".into()));
        }
        for (i, line) in lines.enumerate() {
            let mut f = [0.0; 18];
            let mut n = 0;
            for cell in line.split(',') {
                if n == 18 {
                    return Err(bad(i + 3, "too many columns".into()));
                }
                f[n] = cell
                    .parse()
                    .map_err(|_| bad(i + 3, format!("bad number {cell:?}")))?;
                n += 1;
            }
            if n != 18 {
                return Err(bad(i + 3, format!("expected 18 columns, got {n}")));
            }
            rec.rows.push(TelemetryRecord::from_fields(&f));
        }
        if rec.rows.is_empty() {
            return Err(Error::EmptyTelemetry);
        }
        Ok(rec)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub training_step: u64,
    pub max_distance: f64,
    pub lap_time: Option<f64>,
}

/// Evaluation distance against training steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningCurve {
    points: Vec<CurvePoint>,
}

/// A run of evaluations whose distances stay within a relative band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plateau {
    /// Index range into the curve, end exclusive.
    pub start: usize,
    pub end: usize,
    pub level: f64,
    /// A later evaluation exceeds the band.
    pub broken: bool,
}

impl LearningCurve {
    pub fn new(points: Vec<CurvePoint>) -> Result<Self> {
        if points
            .windows(2)
            .any(|w| w[1].training_step <= w[0].training_step)
        {
            return Err(Error::Config(
                "learning curve steps must increase strictly".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Reads `training_step,max_distance,lap_time[,...]` rows.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if !header.starts_with("training_step,max_distance,lap_time") {
            return Err(Error::CsvParse {
                line: 1,
                msg: "expected training_step,max_distance,lap_time header".into(),
            });
        }
        let mut points = Vec::new();
        for (i, line) in lines.enumerate() {
            let bad = |m: &str| Error::CsvParse {
                line: i + 2,
                msg: m.to_string(),
            };
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() < 3 {
                return Err(bad("expected at least 3 columns"));
            }
            points.push(CurvePoint {
                training_step: cells[0].parse().map_err(|_| bad("bad training_step"))?,
                max_distance: cells[1].parse().map_err(|_| bad("bad max_distance"))?,
                lap_time: if cells[2].is_empty() {
                    None
                } else {
                    Some(cells[2].parse().map_err(|_| bad("bad lap_time"))?)
                },
            });
        }
        Self::new(points)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn distances(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.max_distance).collect()
    }

    /// First evaluation that finished a lap.
    pub fn first_lap(&self) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.lap_time.is_some())
    }

    /// Greedy left-to-right scan for maximal runs of at least `min_len`
    /// evaluations with `max - min <= tol * max`, ignoring runs at zero
    /// distance.
    pub fn plateaus(&self, min_len: usize, tol: f64) -> Vec<Plateau> {
        let d = self.distances();
        let mut out = Vec::new();
        let mut i = 0;
        while i < d.len() {
            let (mut lo, mut hi) = (d[i], d[i]);
            let mut j = i + 1;
            while j < d.len() {
                let (l, h) = (lo.min(d[j]), hi.max(d[j]));
                if h - l > tol * h {
                    break;
                }
                lo = l;
                hi = h;
                j += 1;
            }
            if j - i >= min_len && hi > 0.0 {
                let level = d[i..j].iter().sum::<f64>() / (j - i) as f64;
                let broken = d[j..].iter().any(|v| *v > hi * (1.0 + tol));
                out.push(Plateau {
                    start: i,
                    end: j,
                    level,
                    broken,
                });
                i = j;
            } else {
                i += 1;
            }
        }
        out
    }

    /// Plateaus followed by a breakthrough whose levels differ pairwise by
    /// more than `tol`.
    pub fn distinct_broken_plateaus(&self, min_len: usize, tol: f64) -> Vec<Plateau> {
        let mut out: Vec<Plateau> = Vec::new();
        for p in self.plateaus(min_len, tol).into_iter().filter(|p| p.broken) {
            if out
                .iter()
                .all(|q| (p.level - q.level).abs() > tol * p.level.max(q.level))
            {
                out.push(p);
            }
        }
        out
    }

    /// Least-squares slope of distance against training step.
    pub fn trend_slope(&self) -> f64 {
        let n = self.points.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let xs: Vec<f64> = self.points.iter().map(|p| p.training_step as f64).collect();
        let ys = self.distances();
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    }

    /// Pointwise median over curves sampled at the same steps (truncated to
    /// the shortest).
    pub fn median(curves: &[LearningCurve]) -> Result<Self> {
        let n = curves.iter().map(|c| c.points.len()).min().unwrap_or(0);
        let mut points = Vec::with_capacity(n);
        for i in 0..n {
            let step = curves[0].points[i].training_step;
            if curves.iter().any(|c| c.points[i].training_step != step) {
                return Err(Error::Config(
                    "curves are evaluated at different steps".into(),
                ));
            }
            let mut d: Vec<f64> = curves.iter().map(|c| c.points[i].max_distance).collect();
            d.sort_by(f64::total_cmp);
            let mut laps: Vec<f64> = curves.iter().filter_map(|c| c.points[i].lap_time).collect();
            laps.sort_by(f64::total_cmp);
            let m = d.len();
            let med = if m % 2 == 1 {
                d[m / 2]
            } else {
                0.5 * (d[m / 2 - 1] + d[m / 2])
            };
            // A lap time counts for the median only when most runs finished.
            let lap_time = (laps.len() * 2 > curves.len()).then(|| laps[laps.len() / 2]);
            points.push(CurvePoint {
                training_step: step,
                max_distance: med,
                lap_time,
            });
        }
        Self::new(points)
    }
}

/// Lock-event detection thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LockConfig {
    /// Rows with `throttle_brake` below this form braking zones.
    pub brake_threshold: f64,
    /// Wheel speed this fraction below vehicle speed counts as locking.
    pub slip_fraction: f64,
    /// Window after an event in which the brake must be reduced.
    pub reaction_time: f64,
    /// Minimum increase of `throttle_brake` counted as a reduction.
    pub min_release: f64,
    /// Events below this vehicle speed are ignored.
    pub min_speed: f64,
}

impl Default for LockConfig {
    fn default() -> Self {
        Self {
            brake_threshold: -0.5,
            slip_fraction: 0.15,
            reaction_time: 0.25,
            min_release: 0.1,
            min_speed: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockEvent {
    pub row: usize,
    pub t: f64,
    pub s_cl: f64,
    /// Most-locked wheel (FL, FR, RL, RR index).
    pub wheel: usize,
    /// `1 - wheel_speed / vx` of that wheel.
    pub deficit: f64,
    /// Delay until the brake was reduced, if within the window.
    pub released_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrakeZone {
    /// Row range, end exclusive.
    pub start: usize,
    pub end: usize,
    pub t_start: f64,
    pub s_start: f64,
    pub events: Vec<LockEvent>,
}

impl BrakeZone {
    /// Has events and every one was followed by a brake reduction.
    pub fn modulated(&self) -> bool {
        !self.events.is_empty() && self.events.iter().all(|e| e.released_after.is_some())
    }
}

fn locked_wheel(r: &TelemetryRecord, cfg: &LockConfig) -> Option<(usize, f64)> {
    if r.vx < cfg.min_speed {
        return None;
    }
    let (w, ws) = r
        .wheel_speeds
        .iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |b, (i, v)| if *v < b.1 { (i, *v) } else { b },
        );
    let deficit = 1.0 - ws / r.vx;
    (deficit > cfg.slip_fraction).then_some((w, deficit))
}

/// Braking zones with their lock events.
pub fn wheel_lock_signature(rows: &[TelemetryRecord], cfg: &LockConfig) -> Vec<BrakeZone> {
    let mut zones = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        if rows[i].throttle_brake >= cfg.brake_threshold {
            i += 1;
            continue;
        }
        let start = i;
        while i < rows.len() && rows[i].throttle_brake < cfg.brake_threshold {
            i += 1;
        }
        let mut events = Vec::new();
        let mut was_locked = false;
        for k in start..i {
            let lock = locked_wheel(&rows[k], cfg);
            if let (Some((wheel, deficit)), false) = (lock, was_locked) {
                let base = rows[k].throttle_brake;
                let released_after = rows[k + 1..]
                    .iter()
                    .take_while(|r| r.t - rows[k].t <= cfg.reaction_time + 1e-9)
                    .find(|r| r.throttle_brake >= base + cfg.min_release)
                    .map(|r| r.t - rows[k].t);
                events.push(LockEvent {
                    row: k,
                    t: rows[k].t,
                    s_cl: rows[k].s_cl,
                    wheel,
                    deficit,
                    released_after,
                });
            }
            was_locked = lock.is_some();
        }
        zones.push(BrakeZone {
            start,
            end: i,
            t_start: rows[start].t,
            s_start: rows[start].s_cl,
            events,
        });
    }
    zones
}

/// Figure appearance; see `docs/figures.md` for the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureOptions {
    pub width: f64,
    /// Friction-circle radius drawn in the GG inset, m/s^2.
    pub mu_g: Option<f64>,
    /// Vertical offset between successive wheel-speed traces, m/s.
    pub wheel_offset: f64,
    pub title: String,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            width: 900.0,
            mu_g: None,
            wheel_offset: 5.0,
            title: String::new(),
        }
    }
}

struct Panel {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Panel {
    fn px(&self, v: f64) -> f64 {
        self.x + (v - self.x0) / (self.x1 - self.x0) * self.w
    }

    fn py(&self, v: f64) -> f64 {
        self.y + self.h - (v - self.y0) / (self.y1 - self.y0) * self.h
    }

    fn frame(&self, svg: &mut String, label: &str) {
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#888"/>"##,
            self.x, self.y, self.w, self.h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            self.x + 4.0,
            self.y + 12.0,
            label
        );
        for (v, y) in [(self.y1, self.y + 10.0), (self.y0, self.y + self.h)] {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="end">{:.4}</text>"#,
                self.x - 3.0,
                y,
                v
            );
        }
        for (v, x) in [(self.x0, self.x), (self.x1, self.x + self.w)] {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="middle">{:.4}</text>"#,
                x,
                self.y + self.h + 11.0,
                v
            );
        }
    }

    fn line(&self, svg: &mut String, pts: impl Iterator<Item = (f64, f64)>, color: &str) {
        let mut p = String::new();
        for (x, y) in pts {
            if !p.is_empty() {
                p.push(' ');
            }
            let _ = write!(p, "{:.2},{:.2}", self.px(x), self.py(y));
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{p}"/>"#
        );
    }

    fn hline(&self, svg: &mut String, v: f64, color: &str) {
        let y = self.py(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-dasharray="3,3"/>"#,
            self.x,
            self.x + self.w
        );
    }
}

fn span(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-9 {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

const WHEEL_COLORS: [&str; 4] = ["#d62728", "#ff7f0e", "#2ca02c", "#9467bd"];

/// The lap figure as SVG text. A pure function of its inputs.
pub fn export_svg_figure(
    rec: &EpisodeRecord,
    curve: Option<&LearningCurve>,
    track: Option<&TrackModel>,
    opts: &FigureOptions,
) -> Result<String> {
    if rec.rows.is_empty() {
        return Err(Error::EmptyTelemetry);
    }
    let rows = &rec.rows;
    let dist = rec.distance();
    let (d0, d1) = span(dist.iter().copied());
    let (left, w) = (60.0, opts.width - 80.0);
    let mut y = 30.0;
    let mut svg = String::new();
    let mut panels = String::new();

    if let Some(c) = curve.filter(|c| !c.is_empty()) {
        let (s0, s1) = span(c.points.iter().map(|p| p.training_step as f64));
        let (_, m1) = span(c.points.iter().map(|p| p.max_distance));
        let p = Panel {
            x: left,
            y,
            w,
            h: 140.0,
            x0: s0,
            x1: s1,
            y0: 0.0,
            y1: m1,
        };
        p.frame(&mut panels, "evaluation distance [m] vs training steps");
        p.line(
            &mut panels,
            c.points
                .iter()
                .map(|q| (q.training_step as f64, q.max_distance)),
            "#1f77b4",
        );
        y += 170.0;
    }

    let inputs = Panel {
        x: left,
        y,
        w,
        h: 120.0,
        x0: d0,
        x1: d1,
        y0: -1.05,
        y1: 1.05,
    };
    inputs.frame(
        &mut panels,
        "steering (blue), throttle/brake (red) vs distance [m]",
    );
    inputs.hline(&mut panels, 0.0, "#bbb");
    inputs.line(
        &mut panels,
        dist.iter().zip(rows).map(|(d, r)| (*d, r.steer)),
        "#1f77b4",
    );
    inputs.line(
        &mut panels,
        dist.iter().zip(rows).map(|(d, r)| (*d, r.throttle_brake)),
        "#d62728",
    );
    y += 150.0;

    let off = opts.wheel_offset;
    let (v0, v1) = span(rows.iter().flat_map(|r| {
        std::iter::once(r.vx).chain((0..4).map(move |k| r.wheel_speeds[k] + off * (k + 1) as f64))
    }));
    let speed = Panel {
        x: left,
        y,
        w,
        h: 180.0,
        x0: d0,
        x1: d1,
        y0: v0.min(0.0),
        y1: v1,
    };
    speed.frame(
        &mut panels,
        &format!("speed (black) and wheel speeds FL FR RL RR offset by {off} m/s steps [m/s]"),
    );
    speed.line(
        &mut panels,
        dist.iter().zip(rows).map(|(d, r)| (*d, r.vx)),
        "#000",
    );
    for (k, color) in WHEEL_COLORS.iter().enumerate() {
        let o = off * (k + 1) as f64;
        speed.line(
            &mut panels,
            dist.iter()
                .zip(rows)
                .map(|(d, r)| (*d, r.wheel_speeds[k] + o)),
            color,
        );
    }
    // GG inset in the top right corner of the speed panel.
    let lim = rows
        .iter()
        .map(|r| r.ax.hypot(r.ay))
        .fold(opts.mu_g.unwrap_or(0.0), f64::max)
        .max(1.0)
        * 1.1;
    let gg = Panel {
        x: left + w - 130.0,
        y: y + 5.0,
        w: 125.0,
        h: 125.0,
        x0: -lim,
        x1: lim,
        y0: -lim,
        y1: lim,
    };
    let _ = writeln!(
        panels,
        r##"<rect x="{:.2}" y="{:.2}" width="125" height="125" fill="white" stroke="#888"/>"##,
        gg.x, gg.y
    );
    let _ = writeln!(
        panels,
        r#"<text x="{:.2}" y="{:.2}" font-size="9">GG: lat (x) vs long (y) [m/s^2]</text>"#,
        gg.x + 2.0,
        gg.y + 10.0
    );
    if let Some(r) = opts.mu_g {
        let _ = writeln!(
            panels,
            r##"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="none" stroke="#888" stroke-dasharray="2,2"/>"##,
            gg.px(0.0),
            gg.py(0.0),
            r / (2.0 * lim) * gg.w
        );
    }
    for r in rows {
        let _ = writeln!(
            panels,
            r##"<circle cx="{:.2}" cy="{:.2}" r="1" fill="#1f77b4"/>"##,
            gg.px(r.ay),
            gg.py(r.ax)
        );
    }
    y += 210.0;

    let pos = Panel {
        x: left,
        y,
        w,
        h: 100.0,
        x0: d0,
        x1: d1,
        y0: -1.3,
        y1: 1.3,
    };
    pos.frame(&mut panels, "track position (+1 left edge) vs distance [m]");
    for v in [-1.0, 0.0, 1.0] {
        pos.hline(&mut panels, v, "#bbb");
    }
    pos.line(
        &mut panels,
        dist.iter().zip(rows).map(|(d, r)| (*d, r.track_pos)),
        "#2ca02c",
    );
    y += 130.0;

    let mut xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
    let mut ys: Vec<f64> = rows.iter().map(|r| r.y).collect();
    let edges: Vec<Vec<(f64, f64)>> = match track {
        Some(t) => [-1.0, 1.0]
            .iter()
            .map(|side| {
                let mut e: Vec<(f64, f64)> = t
                    .samples()
                    .iter()
                    .map(|s| {
                        let hw = side * s.half_width;
                        (s.x - hw * s.heading.sin(), s.y + hw * s.heading.cos())
                    })
                    .collect();
                e.push(e[0]);
                e
            })
            .collect(),
        None => Vec::new(),
    };
    for e in &edges {
        xs.extend(e.iter().map(|p| p.0));
        ys.extend(e.iter().map(|p| p.1));
    }
    let (x0, x1) = span(xs.into_iter());
    let (y0, y1) = span(ys.into_iter());
    let side = (w * 0.5).min(360.0);
    let scale = side / (x1 - x0).max(y1 - y0);
    let map = Panel {
        x: left,
        y,
        w: (x1 - x0) * scale,
        h: (y1 - y0) * scale,
        x0,
        x1,
        y0,
        y1,
    };
    map.frame(&mut panels, "trajectory x-y [m]");
    for e in &edges {
        map.line(&mut panels, e.iter().copied(), "#999");
    }
    map.line(&mut panels, rows.iter().map(|r| (r.x, r.y)), "#d62728");
    y += map.h + 30.0;

    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}" font-family="sans-serif">"#,
        opts.width, y, opts.width, y
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let title = if opts.title.is_empty() {
        format!("episode: {} rows, outcome {}", rows.len(), rec.outcome())
    } else {
        opts.title.clone()
    };
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="18" font-size="14">{}</text>"#,
        xml_escape(&title)
    );
    svg.push_str(&panels);
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn write_svg_figure(
    path: impl AsRef<Path>,
    rec: &EpisodeRecord,
    curve: Option<&LearningCurve>,
    track: Option<&TrackModel>,
    opts: &FigureOptions,
) -> Result<()> {
    let path = path.as_ref();
    let svg = export_svg_figure(rec, curve, track, opts)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
