//! Planar two-track vehicle with friction-circle tires and wheel-spin dynamics.
//!
//! Body frame: x forward, y left, yaw counter-clockwise. Wheels are indexed
//! front-left, front-right, rear-left, rear-right. Tire forces are linear in
//! slip and normalized by wheel load, then scaled back onto the friction
//! circle `|F| <= mu * Fz`. Wheel speed obeys
//! `I_w * domega/dt = T_drive - T_brake - R * F_x` with `omega >= 0`, solved
//! implicitly in the linear tire regime so that the stiff slip dynamics stay
//! stable at the 2 ms step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::track::TrackProjection;

pub const GRAVITY: f64 = 9.81;
/// Physics step used throughout the simulator.
pub const PHYSICS_DT: f64 = 0.002;
/// Slip denominators never drop below this speed.
const SLIP_SPEED_FLOOR: f64 = 1.0;
/// Speed scale over which rolling resistance fades in around standstill.
const ROLLING_SPEED_SCALE: f64 = 0.5;
/// Off-track excursions below this speed cause no damage.
pub const DAMAGE_SPEED_GATE: f64 = 5.0;
const DAMAGE_PER_MPS: f64 = 1e-3;
/// Brake release threshold of the optional anti-lock assist.
const ABS_SLIP_THRESHOLD: f64 = -0.12;
const WHEEL_SOLVE_ITERS: usize = 48;

pub const FL: usize = 0;
pub const FR: usize = 1;
pub const RL: usize = 2;
pub const RR: usize = 3;

/// Vehicle parameters. The defaults are invented stand-ins for a touring car,
/// not measured data for any real vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// kg m^2
    pub yaw_inertia: f64,
    /// CG to front axle, m
    pub cg_to_front: f64,
    /// CG to rear axle, m
    pub cg_to_rear: f64,
    /// m
    pub track_width: f64,
    /// m
    pub cg_height: f64,
    pub mu: f64,
    /// Longitudinal force per unit slip ratio, per newton of load.
    pub tire_stiffness_long: f64,
    /// Front lateral force per unit slip (tan of slip angle), per newton
    /// of load.
    pub tire_stiffness_lat: f64,
    /// Rear over front lateral stiffness; above 1 the car understeers.
    pub rear_lat_stiffness_ratio: f64,
    /// kg m^2, per wheel
    pub wheel_inertia: f64,
    /// m
    pub wheel_radius: f64,
    /// Total rear-axle drive torque, N m.
    pub max_drive_torque: f64,
    /// W; caps drive torque at speed (single-speed torque map).
    pub max_power: f64,
    /// Total brake torque over all four wheels, N m.
    pub max_brake_torque: f64,
    pub brake_bias_front: f64,
    /// rad
    pub max_steer_angle: f64,
    /// N / (m/s)^2
    pub aero_drag_coeff: f64,
    /// Rolling resistance coefficient (force per newton of weight).
    pub rolling_resistance: f64,
    /// Per-wheel brake release on deep slip. Off by default.
    pub abs_enabled: bool,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1150.0,
            yaw_inertia: 1600.0,
            cg_to_front: 1.25,
            cg_to_rear: 1.45,
            track_width: 1.6,
            cg_height: 0.45,
            mu: 1.1,
            tire_stiffness_long: 18.0,
            tire_stiffness_lat: 14.0,
            rear_lat_stiffness_ratio: 1.5,
            wheel_inertia: 1.2,
            wheel_radius: 0.32,
            max_drive_torque: 2000.0,
            max_power: 220_000.0,
            max_brake_torque: 6000.0,
            brake_bias_front: 0.62,
            max_steer_angle: 0.35,
            aero_drag_coeff: 0.38,
            rolling_resistance: 0.012,
            abs_enabled: false,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("cg_to_front", self.cg_to_front),
            ("cg_to_rear", self.cg_to_rear),
            ("track_width", self.track_width),
            ("cg_height", self.cg_height),
            ("mu", self.mu),
            ("tire_stiffness_long", self.tire_stiffness_long),
            ("tire_stiffness_lat", self.tire_stiffness_lat),
            ("rear_lat_stiffness_ratio", self.rear_lat_stiffness_ratio),
            ("wheel_inertia", self.wheel_inertia),
            ("wheel_radius", self.wheel_radius),
            ("max_drive_torque", self.max_drive_torque),
            ("max_power", self.max_power),
            ("max_brake_torque", self.max_brake_torque),
            ("max_steer_angle", self.max_steer_angle),
            ("aero_drag_coeff", self.aero_drag_coeff),
            ("rolling_resistance", self.rolling_resistance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.brake_bias_front > 0.0 && self.brake_bias_front < 1.0) {
            return Err(Error::InvalidParams(
                "brake_bias_front must be in (0, 1)".into(),
            ));
        }
        if self.mu > 2.0 {
            return Err(Error::InvalidParams("mu must be in (0, 2]".into()));
        }
        Ok(())
    }

    pub fn wheelbase(&self) -> f64 {
        self.cg_to_front + self.cg_to_rear
    }

    pub fn weight(&self) -> f64 {
        self.mass * GRAVITY
    }

    /// Drive force available at the contact patches at speed `v`.
    pub fn drive_force(&self, v: f64) -> f64 {
        (self.max_drive_torque / self.wheel_radius).min(self.max_power / v.max(1.0))
    }

    /// Resistive force (drag plus rolling) at forward speed `v`.
    pub fn resistance(&self, v: f64) -> f64 {
        self.aero_drag_coeff * v * v.abs()
            + self.rolling_resistance * self.weight() * (v / ROLLING_SPEED_SCALE).tanh()
    }

    /// Speed at which drive force equals resistance.
    pub fn top_speed(&self) -> f64 {
        let (mut lo, mut hi) = (1.0, 200.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.drive_force(mid) > self.resistance(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Body-frame wheel positions (x, y) in FL, FR, RL, RR order.
    pub fn wheel_positions(&self) -> [(f64, f64); 4] {
        let (a, b, h) = (self.cg_to_front, self.cg_to_rear, 0.5 * self.track_width);
        [(a, h), (a, -h), (-b, h), (-b, -h)]
    }
}

/// Driver inputs in `[-1, 1]`: steer +1 is full left, throttle_brake +1 is
/// full throttle and -1 full brake.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInputs {
    pub steer: f64,
    pub throttle_brake: f64,
}

impl ControlInputs {
    pub fn new(steer: f64, throttle_brake: f64) -> Self {
        Self {
            steer,
            throttle_brake,
        }
        .clamped()
    }

    pub fn clamped(self) -> Self {
        // NaN inputs are treated as neutral.
        let c = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        Self {
            steer: c(self.steer),
            throttle_brake: c(self.throttle_brake),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    /// Body-frame velocity, m/s.
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
    /// rad/s, FL FR RL RR
    pub wheel_omega: [f64; 4],
    pub damage: f64,
    /// Tire-generated body accelerations of the last step, m/s^2.
    pub accel_long: f64,
    pub accel_lat: f64,
}

/// Per-wheel diagnostic output of a physics step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelForces {
    /// Tire-frame longitudinal and lateral force, N.
    pub fx: f64,
    pub fy: f64,
    /// Normal load, N.
    pub fz: f64,
    pub slip_ratio: f64,
    /// Lateral slip `v_lat / v_long` (tangent of the slip angle).
    pub slip_lat: f64,
}

impl VehicleState {
    pub fn at_rest(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw,
            ..Self::default()
        }
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn wheel_speeds(&self, params: &VehicleParams) -> [f64; 4] {
        self.wheel_omega.map(|w| w * params.wheel_radius)
    }

    pub fn is_finite(&self) -> bool {
        [
            self.x,
            self.y,
            self.yaw,
            self.vx,
            self.vy,
            self.yaw_rate,
            self.damage,
            self.accel_long,
            self.accel_lat,
        ]
        .iter()
        .chain(self.wheel_omega.iter())
        .all(|v| v.is_finite())
    }

    /// Translational, yaw and wheel rotational kinetic energy, J.
    pub fn kinetic_energy(&self, params: &VehicleParams) -> f64 {
        let wheels: f64 = self.wheel_omega.iter().map(|w| w * w).sum();
        0.5 * params.mass * (self.vx * self.vx + self.vy * self.vy)
            + 0.5 * params.yaw_inertia * self.yaw_rate * self.yaw_rate
            + 0.5 * params.wheel_inertia * wheels
    }

    /// State reflected across the world x-axis, wheels swapped left/right.
    pub fn mirrored(&self) -> Self {
        let w = self.wheel_omega;
        Self {
            x: self.x,
            y: -self.y,
            yaw: -self.yaw,
            vx: self.vx,
            vy: -self.vy,
            yaw_rate: -self.yaw_rate,
            wheel_omega: [w[FR], w[FL], w[RR], w[RL]],
            damage: self.damage,
            accel_long: self.accel_long,
            accel_lat: -self.accel_lat,
        }
    }
}

// Quasi-static wheel loads from the previous step's accelerations.
fn wheel_loads(state: &VehicleState, p: &VehicleParams) -> [f64; 4] {
    let (a, b, l) = (p.cg_to_front, p.cg_to_rear, p.wheelbase());
    let w = p.weight();
    let m = p.mass;
    let front = w * b / l - m * state.accel_long * p.cg_height / l;
    let rear = w * a / l + m * state.accel_long * p.cg_height / l;
    // Leftward acceleration moves load to the right-hand wheels.
    let lat = m * state.accel_lat * p.cg_height / p.track_width;
    let (df, dr) = (lat * b / l, lat * a / l);
    let raw = [
        (0.5 * front - df).max(0.0),
        (0.5 * front + df).max(0.0),
        (0.5 * rear - dr).max(0.0),
        (0.5 * rear + dr).max(0.0),
    ];
    let total = (raw[FL] + raw[FR]) + (raw[RL] + raw[RR]);
    let scale = w / total;
    raw.map(|f| f * scale)
}

/// Advances the vehicle by `dt` seconds with semi-implicit Euler.
pub fn physics_step(
    state: &VehicleState,
    inputs: ControlInputs,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState> {
    let (next, _) = physics_step_detailed(state, inputs, params, dt)?;
    Ok(next)
}

/// [`physics_step`] that also reports the per-wheel forces it applied.
pub fn physics_step_detailed(
    state: &VehicleState,
    inputs: ControlInputs,
    p: &VehicleParams,
    dt: f64,
) -> Result<(VehicleState, [WheelForces; 4])> {
    if !state.is_finite() {
        return Err(Error::Diverged);
    }
    let inputs = inputs.clamped();
    let delta = inputs.steer * p.max_steer_angle;
    let (sin_d, cos_d) = (delta.sin(), delta.cos());
    let loads = wheel_loads(state, p);
    let positions = p.wheel_positions();
    let r_w = p.wheel_radius;
    let i_w = p.wheel_inertia;

    let throttle = inputs.throttle_brake.max(0.0);
    let brake = (-inputs.throttle_brake).max(0.0);
    let drive_each = 0.5 * throttle * p.drive_force(state.vx) * r_w;
    let brake_front = 0.5 * brake * p.max_brake_torque * p.brake_bias_front;
    let brake_rear = 0.5 * brake * p.max_brake_torque * (1.0 - p.brake_bias_front);

    let mut forces = [WheelForces::default(); 4];
    let mut omega_next = [0.0; 4];
    // Body-frame force per wheel.
    let mut body = [(0.0, 0.0); 4];
    for i in 0..4 {
        let (px, py) = positions[i];
        let front = i < 2;
        let (s, c) = if front { (sin_d, cos_d) } else { (0.0, 1.0) };
        let vwx = state.vx - state.yaw_rate * py;
        let vwy = state.vy + state.yaw_rate * px;
        let v_long = c * vwx + s * vwy;
        let v_lat = -s * vwx + c * vwy;
        let fz = loads[i];
        let den = v_long.abs().max(SLIP_SPEED_FLOOR);
        let slip_lat = v_lat / den;
        let k_lat = if front {
            p.tire_stiffness_lat
        } else {
            p.tire_stiffness_lat * p.rear_lat_stiffness_ratio
        };
        let fy_lin = -k_lat * fz * slip_lat;
        let omega = state.wheel_omega[i];
        let slip_ratio = (omega * r_w - v_long) / den;

        let drive = if front { 0.0 } else { drive_each };
        let mut brake_t = if front { brake_front } else { brake_rear };
        if p.abs_enabled && brake_t > 0.0 && slip_ratio < ABS_SLIP_THRESHOLD {
            brake_t = 0.0;
        }
        let cap = p.mu * fz;
        let tire = |w: f64| {
            let fx = p.tire_stiffness_long * fz * (w * r_w - v_long) / den;
            let mag = fx.hypot(fy_lin);
            if mag > cap {
                (fx * cap / mag, fy_lin * cap / mag)
            } else {
                (fx, fy_lin)
            }
        };
        // Backward Euler on the wheel: the residual is strictly increasing in
        // the new wheel speed, and a brake that can hold the wheel at zero
        // keeps it locked.
        let residual = |w: f64| i_w * (w - omega) / dt - drive + brake_t + r_w * tire(w).0;
        let w_new = if residual(0.0) >= 0.0 {
            0.0
        } else {
            let mut lo = 0.0;
            let mut hi = omega.max(0.0) + dt / i_w * (drive + r_w * cap) + 1e-9;
            for _ in 0..WHEEL_SOLVE_ITERS {
                let mid = 0.5 * (lo + hi);
                if residual(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let (fx, fy) = tire(w_new);
        omega_next[i] = w_new;
        forces[i] = WheelForces {
            fx,
            fy,
            fz,
            slip_ratio,
            slip_lat,
        };
        body[i] = (c * fx - s * fy, s * fx + c * fy);
    }

    let fx_front = body[FL].0 + body[FR].0;
    let fx_rear = body[RL].0 + body[RR].0;
    let fy_front = body[FL].1 + body[FR].1;
    let fy_rear = body[RL].1 + body[RR].1;
    let tire_fx = fx_front + fx_rear;
    let tire_fy = fy_front + fy_rear;
    let half_track = 0.5 * p.track_width;
    let mz = p.cg_to_front * fy_front - p.cg_to_rear * fy_rear
        + half_track * ((body[FR].0 - body[FL].0) + (body[RR].0 - body[RL].0));

    let m = p.mass;
    let fx_total = tire_fx - p.resistance(state.vx);
    let vx = state.vx + dt * (fx_total / m + state.yaw_rate * state.vy);
    let vy = state.vy + dt * (tire_fy / m - state.yaw_rate * state.vx);
    let yaw_rate = state.yaw_rate + dt * mz / p.yaw_inertia;
    let yaw = state.yaw + dt * yaw_rate;
    let (sin_y, cos_y) = (yaw.sin(), yaw.cos());
    let next = VehicleState {
        x: state.x + dt * (vx * cos_y - vy * sin_y),
        y: state.y + dt * (vx * sin_y + vy * cos_y),
        yaw,
        vx,
        vy,
        yaw_rate,
        wheel_omega: omega_next,
        damage: state.damage,
        accel_long: tire_fx / m,
        accel_lat: tire_fy / m,
    };
    if !next.is_finite() {
        return Err(Error::Diverged);
    }
    Ok((next, forces))
}

/// Accumulates damage for off-track excursions at speed.
pub fn update_damage(state: &mut VehicleState, projection: &TrackProjection) {
    let speed = state.speed();
    if projection.track_pos.abs() > 1.2 && speed > DAMAGE_SPEED_GATE {
        state.damage += DAMAGE_PER_MPS * speed;
    }
}
