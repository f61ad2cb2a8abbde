//! Quasi-steady-state lap-time oracle on a point-mass friction circle.
//!
//! The profile follows the centerline. Corner speeds come from
//! `v = sqrt(mu g / |kappa|)`; a forward pass limits acceleration by the
//! friction-circle remainder and the drive-force cap, a backward pass limits
//! braking by the remainder. Speeds are capped by the vehicle's top speed.

use crate::error::{Error, Result};
use crate::telemetry::{telemetry_distance, TelemetryRecord};
use crate::track::TrackModel;
use crate::vehicle::{VehicleParams, GRAVITY};

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    /// Distance from the profile start; `n + 1` nodes, uniform spacing.
    pub distance: Vec<f64>,
    pub curvature: Vec<f64>,
    pub v_limit: Vec<f64>,
    pub v_qss: Vec<f64>,
    /// Cumulative time at each node.
    pub time: Vec<f64>,
    pub lap_time: f64,
    /// Per interval `(accel_long, accel_lat)` in m/s^2.
    pub gg_points: Vec<(f64, f64)>,
    pub mu: f64,
    /// Centerline position of the first node.
    pub start_s: f64,
    pub track_length: f64,
}

fn remainder(a_max: f64, v: f64, kappa: f64) -> f64 {
    let lat = v * v * kappa;
    (a_max * a_max - lat * lat).max(0.0).sqrt()
}

struct Geometry {
    ds: f64,
    curvature: Vec<f64>,
    v_limit: Vec<f64>,
}

fn geometry(
    track: &TrackModel,
    mu: f64,
    params: &VehicleParams,
    start_s: f64,
    length: f64,
) -> Geometry {
    let n = (length / track.spacing()).round().max(1.0) as usize;
    let ds = length / n as f64;
    let a_max = mu * GRAVITY;
    let top = params.top_speed();
    let curvature: Vec<f64> = (0..=n)
        .map(|i| track.curvature_at(track.wrap_s(start_s + i as f64 * ds)))
        .collect();
    let v_limit = curvature
        .iter()
        .map(|k| {
            if k.abs() < 1e-12 {
                top
            } else {
                (a_max / k.abs()).sqrt().min(top)
            }
        })
        .collect();
    Geometry {
        ds,
        curvature,
        v_limit,
    }
}

fn forward_step(v: f64, kappa: f64, ds: f64, a_max: f64, params: &VehicleParams) -> f64 {
    let a = remainder(a_max, v, kappa).min(params.drive_force(v) / params.mass);
    (v * v + 2.0 * a * ds).sqrt()
}

fn backward_step(v: f64, kappa: f64, ds: f64, a_max: f64) -> f64 {
    (v * v + 2.0 * remainder(a_max, v, kappa) * ds).sqrt()
}

fn finish(g: Geometry, v: Vec<f64>, mu: f64, start_s: f64, track_length: f64) -> SpeedProfile {
    let n = v.len() - 1;
    let mut time = vec![0.0; n + 1];
    let mut gg = Vec::with_capacity(n);
    for i in 0..n {
        let dt = 2.0 * g.ds / (v[i] + v[i + 1]);
        time[i + 1] = time[i] + dt;
        let a_long = (v[i + 1] * v[i + 1] - v[i] * v[i]) / (2.0 * g.ds);
        // The lateral load that limited this interval sits at its start when
        // accelerating and at its end when braking.
        let j = if a_long >= 0.0 { i } else { i + 1 };
        gg.push((a_long, v[j] * v[j] * g.curvature[j]));
    }
    SpeedProfile {
        distance: (0..=n).map(|i| i as f64 * g.ds).collect(),
        curvature: g.curvature,
        v_limit: g.v_limit,
        lap_time: time[n],
        time,
        v_qss: v,
        gg_points: gg,
        mu,
        start_s,
        track_length,
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "mu must be positive, got {mu}"
        )))
    }
}

/// Flying lap: the profile is periodic over one full lap.
pub fn qss_profile(track: &TrackModel, mu: f64, params: &VehicleParams) -> Result<SpeedProfile> {
    check_mu(mu)?;
    let g = geometry(track, mu, params, 0.0, track.total_length());
    let n = g.v_limit.len() - 1;
    let a_max = mu * GRAVITY;
    // Node n is node 0 again; passes start at the slowest corner, whose
    // limit speed is always reachable.
    let lim = &g.v_limit[..n];
    let start = (0..n).fold(0, |b, i| if lim[i] < lim[b] { i } else { b });
    let mut fwd = lim.to_vec();
    for k in 0..n {
        let i = (start + k) % n;
        let j = (i + 1) % n;
        fwd[j] = fwd[j].min(forward_step(fwd[i], g.curvature[i], g.ds, a_max, params));
    }
    let mut v = fwd;
    for k in 0..n {
        let j = (start + n - k) % n;
        let i = (j + n - 1) % n;
        v[i] = v[i].min(backward_step(v[j], g.curvature[j], g.ds, a_max));
    }
    v.push(v[0]);
    Ok(finish(g, v, mu, 0.0, track.total_length()))
}

/// From rest at `start_s` over `distance` metres, with no end-speed
/// constraint. This is the task an episode poses.
pub fn qss_standing(
    track: &TrackModel,
    mu: f64,
    params: &VehicleParams,
    start_s: f64,
    distance: f64,
) -> Result<SpeedProfile> {
    check_mu(mu)?;
    if !(distance > 0.0) {
        return Err(Error::InvalidParams("profile distance must be > 0".into()));
    }
    let g = geometry(track, mu, params, start_s, distance);
    let n = g.v_limit.len() - 1;
    let a_max = mu * GRAVITY;
    let mut v = g.v_limit.clone();
    v[0] = 0.0;
    for i in 0..n {
        v[i + 1] = v[i + 1].min(forward_step(v[i], g.curvature[i], g.ds, a_max, params));
    }
    for j in (1..=n).rev() {
        v[j - 1] = v[j - 1].min(backward_step(v[j], g.curvature[j], g.ds, a_max));
    }
    Ok(finish(g, v, mu, start_s, track.total_length()))
}

impl SpeedProfile {
    /// A constant-speed reference over the same nodes as `like`.
    pub fn constant(like: &SpeedProfile, speed: f64) -> Self {
        let n = like.distance.len();
        let v = vec![speed; n];
        let time: Vec<f64> = like.distance.iter().map(|d| d / speed).collect();
        Self {
            distance: like.distance.clone(),
            curvature: like.curvature.clone(),
            v_limit: like.v_limit.clone(),
            v_qss: v,
            lap_time: time[n - 1],
            time,
            gg_points: like
                .curvature
                .windows(2)
                .map(|w| (0.0, speed * speed * w[0]))
                .collect(),
            mu: like.mu,
            start_s: like.start_s,
            track_length: like.track_length,
        }
    }

    pub fn length(&self) -> f64 {
        *self.distance.last().unwrap()
    }

    fn spacing(&self) -> f64 {
        self.distance[1] - self.distance[0]
    }

    /// Elapsed time at `d` metres, constant acceleration within each
    /// interval.
    pub fn time_at(&self, d: f64) -> f64 {
        let d = d.clamp(0.0, self.length());
        let ds = self.spacing();
        let i = ((d / ds) as usize).min(self.distance.len() - 2);
        let x = d - self.distance[i];
        let (v0, v1) = (self.v_qss[i], self.v_qss[i + 1]);
        let a = (v1 * v1 - v0 * v0) / (2.0 * ds);
        let vx = (v0 * v0 + 2.0 * a * x).max(0.0).sqrt();
        if v0 + vx > 0.0 {
            self.time[i] + 2.0 * x / (v0 + vx)
        } else {
            self.time[i]
        }
    }

    /// Distance covered after `t` seconds (inverse of [`Self::time_at`]).
    pub fn distance_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.lap_time {
            return self.length();
        }
        let i = self.time.partition_point(|v| *v <= t) - 1;
        let ds = self.spacing();
        let (v0, v1) = (self.v_qss[i], self.v_qss[i + 1]);
        let a = (v1 * v1 - v0 * v0) / (2.0 * ds);
        let tau = t - self.time[i];
        (v0 * tau + 0.5 * a * tau * tau).clamp(0.0, ds) + self.distance[i]
    }

    /// Speed at `d` metres, linear in `v^2` within each interval.
    pub fn speed_at(&self, d: f64) -> f64 {
        let d = d.clamp(0.0, self.length());
        let ds = self.spacing();
        let i = ((d / ds) as usize).min(self.distance.len() - 2);
        let f = (d - self.distance[i]) / ds;
        let (a, b) = (self.v_qss[i].powi(2), self.v_qss[i + 1].powi(2));
        (a + (b - a) * f).max(0.0).sqrt()
    }

    pub fn max_gg_radius(&self) -> f64 {
        self.gg_points
            .iter()
            .map(|(x, y)| x.hypot(*y))
            .fold(0.0, f64::max)
    }

    /// `distance,curvature,v_limit,v_qss,time` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("distance,curvature,v_limit,v_qss,time\n");
        for i in 0..self.distance.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.distance[i], self.curvature[i], self.v_limit[i], self.v_qss[i], self.time[i]
            ));
        }
        out
    }
}

/// Time-difference channel `dt(d) = t_agent(d) - t_reference(d)` over the
/// distance both cover; one `(distance, dt)` row per telemetry sample.
pub fn compare_lap(
    telemetry: &[TelemetryRecord],
    reference: &SpeedProfile,
) -> Result<Vec<(f64, f64)>> {
    if telemetry.is_empty() {
        return Err(Error::EmptyTelemetry);
    }
    let dist = telemetry_distance(telemetry, reference.start_s, reference.track_length);
    let out: Vec<(f64, f64)> = dist
        .iter()
        .zip(telemetry)
        .filter(|(d, _)| **d > 0.0 && **d <= reference.length() + 1e-9)
        .map(|(d, r)| (*d, r.t - reference.time_at(*d)))
        .collect();
    if out.is_empty() {
        return Err(Error::NonOverlapping(format!(
            "telemetry spans {:.1}..{:.1} m, reference 0..{:.1} m",
            dist.iter().copied().fold(f64::INFINITY, f64::min),
            dist.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            reference.length()
        )));
    }
    Ok(out)
}
