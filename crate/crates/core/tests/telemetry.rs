use std::sync::Arc;

use gripline_core::env::{EnvConfig, RacingEnv, RawAction, TerminationReason};
use gripline_core::lap_baseline::qss_standing;
use gripline_core::proving_ground::LineFollower;
use gripline_core::render::Scene;
use gripline_core::telemetry::{
    export_svg_figure, wheel_lock_signature, CurvePoint, EpisodeRecord, FigureOptions,
    LearningCurve, LockConfig, CSV_HEADER,
};
use gripline_core::track::{parse_track, TrackModel};
use gripline_core::vehicle::GRAVITY;
use gripline_core::Error;

fn env_on(track: TrackModel, cfg: EnvConfig) -> RacingEnv {
    RacingEnv::new(Arc::new(Scene::new(Arc::new(track))), cfg).unwrap()
}

fn long_straight() -> TrackModel {
    parse_track(
        "gripline-track v1\nname long\nspacing 1\nhalf_width 6\nfinish 1000\nstraight 600\narc 100 180\nstraight 600\narc 100 180\n",
    )
    .unwrap()
}

/// Drives with `throttle(record_so_far)` while steering along the
/// centerline, until `steps` rows or the episode ends.
fn drive(
    env: &mut RacingEnv,
    steps: usize,
    mut throttle: impl FnMut(&EpisodeRecord) -> f64,
) -> EpisodeRecord {
    env.reset();
    let mut rec = EpisodeRecord::new(env.track().total_length(), env.projection().s_cl);
    let follower = LineFollower::new(|_| 0.0, |_| 0.0);
    let params = env.config().vehicle.clone();
    for _ in 0..steps {
        let steer = follower
            .act(env.track(), &params, env.vehicle(), env.projection().s_cl)
            .squashed()[0];
        let r = env.step(RawAction::new(steer, throttle(&rec))).unwrap();
        rec.push(r.info);
        if r.done() {
            rec.finish(r.termination, r.truncated);
            break;
        }
    }
    rec
}

#[test]
fn hundred_steps_span_five_seconds() {
    let mut env = env_on(TrackModel::oval(), EnvConfig::default());
    let rec = drive(&mut env, 100, |_| 0.5);
    assert_eq!(rec.len(), 100);
    assert!((rec.rows.last().unwrap().t - 5.0).abs() < 1e-9);
    for w in rec.rows.windows(2) {
        assert!((w[1].t - w[0].t - 0.05).abs() < 1e-9);
    }
}

#[test]
fn free_rolling_wheels_match_vehicle_speed() {
    let mut env = env_on(long_straight(), EnvConfig::default());
    // Accelerate gently for 6 s, then coast.
    let rec = drive(&mut env, 200, |r| if r.len() < 120 { 0.4 } else { 0.0 });
    let coasting = &rec.rows[140..];
    assert!(coasting[0].vx > 10.0);
    for r in coasting {
        for w in r.wheel_speeds {
            assert!((w - r.vx).abs() / r.vx < 0.02, "wheel {w} vs vx {}", r.vx);
        }
    }
}

#[test]
fn terminated_episode_has_one_outcome() {
    let mut env = env_on(TrackModel::oval(), EnvConfig::default());
    env.reset();
    let mut rec = EpisodeRecord::new(600.0, 0.0);
    loop {
        let r = env.step(RawAction::new(1.0, 0.6)).unwrap();
        rec.push(r.info);
        if r.done() {
            rec.finish(r.termination, r.truncated);
            break;
        }
    }
    assert_eq!(rec.termination, Some(TerminationReason::OffTrack));
    let terminal: Vec<_> = rec.rows.iter().filter(|r| r.r_ter != 0.0).collect();
    assert_eq!(terminal.len(), 1);
    assert_eq!(terminal[0].t, rec.rows.last().unwrap().t);
    let csv = rec.to_csv().unwrap();
    assert_eq!(csv.matches("outcome=").count(), 1);
    assert!(csv.lines().next().unwrap().ends_with("outcome=OffTrack"));
}

#[test]
fn empty_record_is_an_error() {
    let rec = EpisodeRecord::new(600.0, 0.0);
    let e = rec.to_csv().unwrap_err();
    assert!(matches!(e, Error::EmptyTelemetry));
    assert_eq!(e.to_string(), "empty telemetry");
    assert!(matches!(
        export_svg_figure(&rec, None, None, &FigureOptions::default()),
        Err(Error::EmptyTelemetry)
    ));
}

#[test]
fn csv_round_trip_is_byte_identical() {
    let mut env = env_on(TrackModel::oval(), EnvConfig::default());
    let rec = drive(&mut env, 150, |_| 0.7);
    let a = rec.to_csv().unwrap();
    assert_eq!(a.lines().nth(1).unwrap(), CSV_HEADER);
    let parsed = EpisodeRecord::parse_csv(&a).unwrap();
    assert_eq!(parsed, rec);
    assert_eq!(parsed.to_csv().unwrap(), a);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    rec.write_csv(&p).unwrap();
    assert_eq!(EpisodeRecord::read_csv(&p).unwrap(), rec);
}

fn curve() -> LearningCurve {
    LearningCurve::new(
        (1..=20)
            .map(|i| CurvePoint {
                training_step: i * 10_000,
                max_distance: (i as f64 * 30.0).min(400.0),
                lap_time: None,
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn svg_is_a_pure_function_of_the_record() {
    let track = TrackModel::oval();
    let mut env = env_on(track.clone(), EnvConfig::default());
    let rec = drive(&mut env, 120, |_| 0.8);
    let opts = FigureOptions {
        mu_g: Some(1.1 * GRAVITY),
        ..Default::default()
    };
    let a = export_svg_figure(&rec, Some(&curve()), Some(&track), &opts).unwrap();
    let b = export_svg_figure(&rec, Some(&curve()), Some(&track), &opts).unwrap();
    assert_eq!(a, b);
    assert!(a.starts_with("<svg"));
    assert!(a.trim_end().ends_with("</svg>"));
    // Learning curve, inputs (2), speed + wheels (5), track position,
    // two track edges and the trajectory.
    assert_eq!(a.matches("<polyline").count(), 12);
    let without = export_svg_figure(&rec, None, None, &opts).unwrap();
    assert_eq!(without.matches("<polyline").count(), 9);
    assert!(a.contains("evaluation distance"));
    assert!(!without.contains("evaluation distance"));
}

#[test]
fn qss_profile_driving_fills_the_friction_circle() {
    let track = TrackModel::bundled();
    let cfg = EnvConfig::default();
    let mu = cfg.vehicle.mu;
    let profile = qss_standing(&track, mu, &cfg.vehicle, 0.0, track.finish_distance()).unwrap();
    let mut env = env_on(track.clone(), cfg.clone());
    env.reset();
    let mut rec = EpisodeRecord::new(track.total_length(), 0.0);
    let mut controlled = Vec::new();
    let speed_profile = profile.clone();
    let follower = LineFollower {
        speed_gain: 1.0,
        lookahead_time: 0.3,
        yaw_gain: 0.5,
        ..LineFollower::new(|_| 0.0, move |s: f64| speed_profile.speed_at(s + 5.0))
    };
    loop {
        let a = follower.act(
            &track,
            &cfg.vehicle,
            env.vehicle(),
            env.progress_total().max(0.0),
        );
        let r = env.step(a).unwrap();
        // Only samples taken while the car is on track and not sliding.
        let v = env.vehicle();
        if v.vy.abs() < 0.1 * v.vx.abs() && r.info.track_pos.abs() < 1.0 {
            controlled.push(r.info.ax.hypot(r.info.ay));
        }
        rec.push(r.info);
        if r.done() {
            rec.finish(r.termination, r.truncated);
            break;
        }
    }
    // The limit profile is driven through the first braking zones.
    assert!(
        env.progress_total() > 800.0,
        "stopped at {:.1} m",
        env.progress_total()
    );
    let radius = controlled.iter().copied().fold(0.0, f64::max);
    let mu_g = mu * GRAVITY;
    assert!(
        (radius - mu_g).abs() / mu_g < 0.05,
        "GG radius {radius:.3} vs mu g {mu_g:.3} ({:?} after {} rows)",
        rec.termination,
        rec.len()
    );
}

#[test]
fn scripted_abs_releases_after_every_lock() {
    let mut env = env_on(long_straight(), EnvConfig::default());
    let cfg = LockConfig::default();
    let rec = drive(&mut env, 400, |r| {
        let Some(last) = r.rows.last() else {
            return 1.0;
        };
        if r.len() < 140 {
            1.0
        } else if last.vx > cfg.min_speed
            && last
                .wheel_speeds
                .iter()
                .any(|w| *w < (1.0 - cfg.slip_fraction) * last.vx)
        {
            -0.3
        } else {
            -1.0
        }
    });
    let zones = wheel_lock_signature(&rec.rows, &cfg);
    let events: usize = zones.iter().map(|z| z.events.len()).sum();
    assert!(events >= 2, "only {events} lock events");
    for z in zones.iter().filter(|z| !z.events.is_empty()) {
        assert!(z.modulated(), "zone at t={} not modulated", z.t_start);
    }
}

#[test]
fn full_brake_locks_without_modulation() {
    let mut env = env_on(long_straight(), EnvConfig::default());
    let rec = drive(&mut env, 300, |r| if r.len() < 140 { 1.0 } else { -1.0 });
    let zones = wheel_lock_signature(&rec.rows, &LockConfig::default());
    assert_eq!(zones.len(), 1);
    assert!(!zones[0].events.is_empty());
    assert!(zones[0].events.iter().all(|e| e.released_after.is_none()));
    assert!(!zones[0].modulated());
}

#[test]
fn coasting_has_no_lock_events() {
    let mut env = env_on(long_straight(), EnvConfig::default());
    let rec = drive(&mut env, 300, |r| if r.len() < 100 { 0.8 } else { 0.0 });
    let zones = wheel_lock_signature(&rec.rows, &LockConfig::default());
    assert!(zones.iter().all(|z| z.events.is_empty()));
    assert!(zones.is_empty());
}

#[test]
fn learning_curve_csv_parses_trainer_format() {
    let text = "training_step,max_distance,lap_time,termination_reason\n10000,182.5,,OffTrack\n20000,601.2,41.5,Finish\n";
    let c = LearningCurve::parse_csv(text).unwrap();
    assert_eq!(c.points().len(), 2);
    assert_eq!(c.first_lap().unwrap().training_step, 20000);
    assert_eq!(c.points()[1].lap_time, Some(41.5));
    assert!(LearningCurve::parse_csv("step,x\n").is_err());
    assert!(LearningCurve::parse_csv("training_step,max_distance,lap_time\n5,1,\n5,2,\n").is_err());
}

#[test]
fn median_curve_and_trend() {
    let mk = |scale: f64| {
        LearningCurve::new(
            (1..=10)
                .map(|i| CurvePoint {
                    training_step: i * 100,
                    max_distance: scale * i as f64,
                    lap_time: None,
                })
                .collect(),
        )
        .unwrap()
    };
    let m = LearningCurve::median(&[mk(1.0), mk(3.0), mk(2.0)]).unwrap();
    assert_eq!(m.distances()[4], 10.0);
    assert!((m.trend_slope() - 0.02).abs() < 1e-12);
}

#[test]
fn tuned_lock_thresholds_change_detection() {
    let mut env = env_on(long_straight(), EnvConfig::default());
    let rec = drive(&mut env, 300, |r| if r.len() < 140 { 1.0 } else { -1.0 });
    let strict = LockConfig {
        slip_fraction: 1.01,
        ..Default::default()
    };
    assert!(wheel_lock_signature(&rec.rows, &strict)
        .iter()
        .all(|z| z.events.is_empty()));
}
