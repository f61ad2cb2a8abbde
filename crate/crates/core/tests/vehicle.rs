use gripline_core::proving_ground::skidpad_max_speed;
use gripline_core::vehicle::{
    physics_step, physics_step_detailed, ControlInputs, VehicleParams, VehicleState, FL, GRAVITY,
    PHYSICS_DT,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rolling(vx: f64, p: &VehicleParams) -> VehicleState {
    let mut s = VehicleState::default();
    s.vx = vx;
    s.wheel_omega = [vx / p.wheel_radius; 4];
    s
}

#[test]
fn skidpad_speed_matches_analytic_limit() {
    let p = VehicleParams {
        mu: 1.0,
        ..VehicleParams::default()
    };
    let radius = 100.0;
    let v = skidpad_max_speed(&p, radius, 1.0);
    let oracle = (1.0 * GRAVITY * radius).sqrt();
    assert!(
        (v - oracle).abs() / oracle < 0.05,
        "skidpad {v} vs {oracle}"
    );
}

#[test]
fn mirror_symmetry_is_exact() {
    let p = VehicleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut a = rolling(25.0, &p);
    a.y = 1.5;
    a.yaw = 0.1;
    a.vy = 0.4;
    a.yaw_rate = 0.05;
    let mut b = a.mirrored();
    for _ in 0..5000 {
        let steer = rng.random_range(-1.0..1.0);
        let pedal = rng.random_range(-1.0..1.0);
        a = physics_step(&a, ControlInputs::new(steer, pedal), &p, PHYSICS_DT).unwrap();
        b = physics_step(&b, ControlInputs::new(-steer, pedal), &p, PHYSICS_DT).unwrap();
        assert_eq!(a.mirrored(), b);
    }
}

#[test]
fn identical_inputs_give_bit_identical_states() {
    let p = VehicleParams::default();
    let s = rolling(30.0, &p);
    let i = ControlInputs::new(0.3, -0.6);
    let a = physics_step(&s, i, &p, PHYSICS_DT).unwrap();
    let b = physics_step(&s, i, &p, PHYSICS_DT).unwrap();
    assert_eq!(a, b);
}

#[test]
fn coasting_never_gains_energy() {
    let p = VehicleParams::default();
    let mut s = rolling(40.0, &p);
    let mut e = s.kinetic_energy(&p);
    for _ in 0..5000 {
        s = physics_step(&s, ControlInputs::default(), &p, PHYSICS_DT).unwrap();
        let e2 = s.kinetic_energy(&p);
        assert!(e2 <= e * (1.0 + 1e-12), "{e2} > {e}");
        e = e2;
    }
    assert!(s.vx < 40.0);
}

#[test]
fn friction_circle_holds_over_random_steps() {
    let p = VehicleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut s = rolling(20.0, &p);
    for k in 0..100_000 {
        if k % 500 == 0 {
            let vx: f64 = rng.random_range(0.0..70.0);
            s = rolling(vx, &p);
            s.vy = rng.random_range(-4.0..4.0);
            s.yaw_rate = rng.random_range(-1.0..1.0);
            for w in s.wheel_omega.iter_mut() {
                *w *= rng.random_range(0.0..1.3);
            }
            s.accel_long = rng.random_range(-12.0..12.0);
            s.accel_lat = rng.random_range(-12.0..12.0);
        }
        let inputs = ControlInputs::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let (next, forces) = physics_step_detailed(&s, inputs, &p, PHYSICS_DT).unwrap();
        for f in &forces {
            let limit = p.mu * f.fz;
            assert!(f.fx.hypot(f.fy) <= limit * (1.0 + 1e-6), "{f:?}");
        }
        let a = next.accel_long.hypot(next.accel_lat);
        assert!(a <= p.mu * GRAVITY * 1.05, "accel {a}");
        assert!(next.wheel_omega.iter().all(|w| *w >= 0.0));
        s = next;
    }
}

// Front-left tire forces once the wheel settles under a constant brake
// torque, with the body state frozen so the slip angle stays fixed.
fn settled_front_left(total_brake_torque: f64) -> (f64, f64) {
    let p = VehicleParams {
        max_brake_torque: total_brake_torque,
        ..VehicleParams::default()
    };
    let mut s = rolling(50.0, &p);
    s.vy = -2.0;
    let mut fy = 0.0;
    for _ in 0..5000 {
        let (next, forces) =
            physics_step_detailed(&s, ControlInputs::new(0.0, -1.0), &p, PHYSICS_DT).unwrap();
        s.wheel_omega = next.wheel_omega;
        fy = forces[FL].fy;
    }
    (s.wheel_omega[FL], fy)
}

#[test]
fn locked_wheel_loses_lateral_force() {
    let p = VehicleParams::default();
    let static_fz = 0.5 * p.weight() * p.cg_to_rear / p.wheelbase();
    // Pure-longitudinal lock torque of the front-left wheel, as a total
    // brake torque through the front bias.
    let lock_total = p.mu * static_fz * p.wheel_radius * 2.0 / p.brake_bias_front;

    let (omega_locked, fy_locked) = settled_front_left(3.0 * lock_total);
    assert_eq!(omega_locked, 0.0);
    let (omega_braked, fy_braked) = settled_front_left(0.9 * lock_total);
    assert!(omega_braked > 0.0);
    assert!(
        fy_locked.abs() < 0.1 * fy_braked.abs(),
        "locked {fy_locked} vs braked {fy_braked}"
    );
}

#[test]
fn free_rolling_wheel_speeds_match_vehicle_speed() {
    let p = VehicleParams::default();
    let mut s = rolling(25.0, &p);
    for _ in 0..1000 {
        s = physics_step(&s, ControlInputs::new(0.0, 0.1), &p, PHYSICS_DT).unwrap();
    }
    for ws in s.wheel_speeds(&p) {
        assert!((ws - s.vx).abs() / s.vx < 0.02, "{ws} vs {}", s.vx);
    }
}
