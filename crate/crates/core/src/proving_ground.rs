//! Scripted closed-loop manoeuvres used to characterise the vehicle model.

use crate::env::RawAction;
use crate::track::TrackModel;
use crate::vehicle::{physics_step, ControlInputs, VehicleParams, VehicleState, PHYSICS_DT};

/// Outcome of holding a constant-radius circle at a target speed.
#[derive(Debug, Clone, Copy)]
pub struct CircleRun {
    pub target_speed: f64,
    /// Largest radial error over the last quarter of the run, m.
    pub max_radial_error: f64,
    pub final_speed: f64,
}

/// Steer per rad/s of yaw-rate shortfall; compensates understeer.
const CIRCLE_YAW_GAIN: f64 = 0.5;

/// Drives a counter-clockwise circle of `radius` around `(0, radius)` with a
/// pure-pursuit steering loop and a proportional speed loop.
pub fn hold_circle(
    params: &VehicleParams,
    radius: f64,
    target_speed: f64,
    seconds: f64,
) -> CircleRun {
    let mut s = VehicleState::at_rest(0.0, 0.0, 0.0);
    s.vx = target_speed;
    s.wheel_omega = [target_speed / params.wheel_radius; 4];
    let (cx, cy) = (0.0, radius);
    let lookahead = 12.0_f64.max(0.5 * target_speed);
    let steps = (seconds / PHYSICS_DT).round() as usize;
    let tail = steps * 3 / 4;
    let mut max_err: f64 = 0.0;
    for k in 0..steps {
        let phase = (s.y - cy).atan2(s.x - cx) + lookahead / radius;
        let (tx, ty) = (cx + radius * phase.cos(), cy + radius * phase.sin());
        let (dx, dy) = (tx - s.x, ty - s.y);
        let (sy, cyaw) = (s.yaw.sin(), s.yaw.cos());
        let lat = -sy * dx + cyaw * dy;
        let dist2 = dx * dx + dy * dy;
        let curvature = 2.0 * lat / dist2;
        let delta = (params.wheelbase() * curvature).atan();
        let steer =
            delta / params.max_steer_angle + CIRCLE_YAW_GAIN * (s.vx * curvature - s.yaw_rate);
        let throttle = 0.5 * (target_speed - s.vx);
        let inputs = ControlInputs::new(steer, throttle);
        s = match physics_step(&s, inputs, params, PHYSICS_DT) {
            Ok(n) => n,
            Err(_) => {
                return CircleRun {
                    target_speed,
                    max_radial_error: f64::INFINITY,
                    final_speed: f64::NAN,
                }
            }
        };
        if k >= tail {
            let r = (s.x - cx).hypot(s.y - cy);
            max_err = max_err.max((r - radius).abs());
        }
    }
    CircleRun {
        target_speed,
        max_radial_error: max_err,
        final_speed: s.speed(),
    }
}

/// Highest speed at which the circle can be held within `tolerance` metres,
/// found by bisection to 0.05 m/s.
pub fn skidpad_max_speed(params: &VehicleParams, radius: f64, tolerance: f64) -> f64 {
    let holds = |v: f64| {
        let run = hold_circle(params, radius, v, 30.0);
        run.max_radial_error < tolerance && (run.final_speed - v).abs() < 0.05 * v
    };
    let guess = (params.mu * crate::vehicle::GRAVITY * radius).sqrt();
    let (mut lo, mut hi) = (0.5 * guess, 1.5 * guess);
    if !holds(lo) {
        return 0.0;
    }
    while hi - lo > 0.05 {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Pure-pursuit driver for agent-rate control: tracks a line at a lateral
/// offset from the centerline and a target speed, both functions of `s`.
pub struct LineFollower<L, V> {
    pub lateral: L,
    pub speed: V,
    pub lookahead_min: f64,
    pub lookahead_time: f64,
    /// Throttle per m/s of speed error.
    pub speed_gain: f64,
    /// Extra steer per rad/s of yaw-rate shortfall against the pursuit arc.
    pub yaw_gain: f64,
}

impl<L: Fn(f64) -> f64, V: Fn(f64) -> f64> LineFollower<L, V> {
    pub fn new(lateral: L, speed: V) -> Self {
        Self {
            lateral,
            speed,
            lookahead_min: 8.0,
            lookahead_time: 0.6,
            speed_gain: 0.5,
            yaw_gain: 0.0,
        }
    }

    pub fn act(
        &self,
        track: &TrackModel,
        params: &VehicleParams,
        state: &VehicleState,
        s_cl: f64,
    ) -> RawAction {
        let look = self.lookahead_min.max(self.lookahead_time * state.vx);
        let s_t = track.wrap_s(s_cl + look);
        let (tx, ty, _) = track.pose_at(s_t, (self.lateral)(s_t));
        let (dx, dy) = (tx - state.x, ty - state.y);
        let lat = -state.yaw.sin() * dx + state.yaw.cos() * dy;
        let curvature = 2.0 * lat / (dx * dx + dy * dy);
        let steer = (params.wheelbase() * curvature).atan() / params.max_steer_angle
            + self.yaw_gain * (state.vx * curvature - state.yaw_rate);
        let throttle = self.speed_gain * ((self.speed)(s_cl) - state.vx);
        RawAction::new(steer.clamp(-1.0, 1.0), throttle.clamp(-1.0, 1.0))
    }
}
