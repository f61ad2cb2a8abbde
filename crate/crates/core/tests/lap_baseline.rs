use gripline_core::lap_baseline::{compare_lap, qss_profile, qss_standing, SpeedProfile};
use gripline_core::telemetry::TelemetryRecord;
use gripline_core::track::{parse_track, TrackModel};
use gripline_core::vehicle::{VehicleParams, GRAVITY};
use gripline_core::Error;
use proptest::prelude::*;

fn circle() -> TrackModel {
    parse_track("gripline-track v1\nname circle\nspacing 0.5\nhalf_width 5\nfinish 600\nstart 0 -100 0\narc 100 360\n")
        .unwrap()
}

fn long_straight() -> TrackModel {
    parse_track(
        "gripline-track v1\nname long\nspacing 1\nhalf_width 6\nfinish 1000\nstraight 600\narc 100 180\nstraight 600\narc 100 180\n",
    )
    .unwrap()
}

fn check_profile_invariants(p: &SpeedProfile) {
    let a_max = p.mu * GRAVITY;
    let ds = p.distance[1] - p.distance[0];
    for i in 0..p.v_qss.len() {
        assert!(p.v_qss[i] <= p.v_limit[i] + 1e-12, "node {i}");
    }
    // Continuity: no interval changes v^2 faster than the full grip allows.
    for w in p.v_qss.windows(2) {
        assert!((w[1] * w[1] - w[0] * w[0]).abs() <= 2.0 * a_max * ds * (1.0 + 1e-9));
    }
    for (ax, ay) in &p.gg_points {
        assert!(
            ax.hypot(*ay) <= a_max * (1.0 + 1e-9),
            "({ax}, {ay}) outside {a_max}"
        );
    }
    assert!((p.lap_time - p.time.last().unwrap()).abs() < 1e-12);
}

#[test]
fn circle_runs_at_skidpad_speed() {
    let params = VehicleParams::default();
    let p = qss_profile(&circle(), 1.0, &params).unwrap();
    let want = (9.81f64 * 100.0).sqrt();
    assert!((want - 31.32).abs() < 0.005);
    for v in &p.v_qss {
        assert!((v - want).abs() / want < 1e-3, "{v}");
    }
    assert!((p.lap_time - 20.06).abs() < 0.01, "{}", p.lap_time);
    check_profile_invariants(&p);
}

#[test]
fn straight_profile_only_accelerates() {
    let params = VehicleParams::default();
    let track = long_straight();
    let p = qss_standing(&track, 1.1, &params, 0.0, 550.0).unwrap();
    let ds = p.distance[1] - p.distance[0];
    let top = params.top_speed();
    let mut v: f64 = 0.0;
    for (i, got) in p.v_qss.iter().enumerate() {
        assert!((got - v).abs() < 1e-9, "node {i}: {got} vs {v}");
        let a = (1.1 * GRAVITY).min(params.drive_force(v) / params.mass);
        v = (v * v + 2.0 * a * ds).sqrt().min(top);
    }
    assert!(p.gg_points.iter().all(|(ax, _)| *ax >= 0.0));
    check_profile_invariants(&p);
}

#[test]
fn bundled_profile_invariants() {
    let params = VehicleParams::default();
    for mu in [0.6, 1.1, 1.6] {
        let t = TrackModel::bundled();
        check_profile_invariants(&qss_profile(&t, mu, &params).unwrap());
        check_profile_invariants(&qss_standing(&t, mu, &params, 0.0, 3900.0).unwrap());
    }
}

#[test]
fn one_percent_grip_loss_slows_the_bundled_lap_in_band() {
    let params = VehicleParams::default();
    let t = TrackModel::bundled();
    let a = qss_profile(&t, 1.1, &params).unwrap().lap_time;
    let b = qss_profile(&t, 1.089, &params).unwrap().lap_time;
    let rel = (b - a) / a;
    assert!(b > a);
    assert!((0.0005..=0.005).contains(&rel), "relative increase {rel}");
}

#[test]
fn grip_scaling_scales_corner_speeds_by_root() {
    let params = VehicleParams::default();
    let t = TrackModel::bundled();
    let c: f64 = 0.8;
    let a = qss_profile(&t, 1.0, &params).unwrap();
    let b = qss_profile(&t, c, &params).unwrap();
    let top = params.top_speed();
    let mut checked = 0;
    for i in 0..a.v_qss.len() {
        let limited =
            a.v_qss[i] == a.v_limit[i] && b.v_qss[i] == b.v_limit[i] && a.v_limit[i] < top;
        if limited {
            assert!((b.v_qss[i] / a.v_qss[i] - c.sqrt()).abs() < 1e-12);
            checked += 1;
        }
    }
    assert!(checked > 10, "only {checked} curvature-limited nodes");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn lap_time_is_monotone_in_grip(mu in 0.3f64..1.9, step in 0.001f64..0.3) {
        let params = VehicleParams::default();
        let t = TrackModel::oval();
        let lo = qss_profile(&t, mu, &params).unwrap().lap_time;
        let hi = qss_profile(&t, mu + step, &params).unwrap().lap_time;
        prop_assert!(hi <= lo);
    }
}

/// Telemetry sampled every `ts` seconds from a profile driven exactly.
fn profile_telemetry(p: &SpeedProfile, ts: f64, track_length: f64) -> Vec<TelemetryRecord> {
    let n = (p.lap_time / ts).floor() as usize;
    (1..=n)
        .map(|k| {
            let t = k as f64 * ts;
            let d = p.distance_at(t);
            TelemetryRecord {
                t,
                s_cl: (p.start_s + d).rem_euclid(track_length),
                vx: p.speed_at(d),
                ..Default::default()
            }
        })
        .collect()
}

#[test]
fn self_comparison_is_zero() {
    let t = TrackModel::bundled();
    let p = qss_profile(&t, 1.1, &VehicleParams::default()).unwrap();
    let tel = profile_telemetry(&p, 0.05, t.total_length());
    let dt = compare_lap(&tel, &p).unwrap();
    assert!(dt.len() > 1000);
    for (d, v) in dt {
        assert!(v.abs() < 0.01, "dt {v} at {d}");
    }
}

#[test]
fn faster_lap_against_constant_reference_gains_time_monotonically() {
    let t = TrackModel::oval();
    let p = qss_profile(&t, 1.1, &VehicleParams::default()).unwrap();
    let reference = SpeedProfile::constant(&p, 20.0);
    let tel = profile_telemetry(&p, 0.05, t.total_length());
    let dt = compare_lap(&tel, &reference).unwrap();
    assert!(dt.windows(2).all(|w| w[1].1 < w[0].1));
    assert!(dt.last().unwrap().1 < 0.0);
}

#[test]
fn slower_corner_shows_up_only_over_that_corner() {
    let t = TrackModel::oval();
    let p = qss_profile(&t, 1.1, &VehicleParams::default()).unwrap();
    // First half circle of the oval spans 142.9..300.0 m.
    let (c0, c1) = (142.92, 300.0);
    let mut slow = p.clone();
    for (i, d) in p.distance.iter().enumerate() {
        if *d >= c0 && *d <= c1 {
            slow.v_qss[i] *= 0.9;
        }
    }
    let ds = p.distance[1] - p.distance[0];
    for i in 0..slow.v_qss.len() - 1 {
        slow.time[i + 1] = slow.time[i] + 2.0 * ds / (slow.v_qss[i] + slow.v_qss[i + 1]);
    }
    slow.lap_time = *slow.time.last().unwrap();
    let tel = profile_telemetry(&slow, 0.05, t.total_length());
    let dt = compare_lap(&tel, &p).unwrap();
    let mut before_end = 0.0;
    for w in dt.windows(2) {
        let (d, v) = w[1];
        let prev = w[0].1;
        if d < c0 - 1.0 {
            assert!(v.abs() < 0.01, "{d}: {v}");
        } else if d > c0 + 1.0 && d < c1 - 1.0 {
            assert!(v > prev, "{d}: dt not increasing");
        } else if d > c1 + 1.0 {
            assert!((v - prev).abs() < 0.01, "{d}: dt changes after the corner");
            before_end = v;
        }
    }
    assert!(before_end > 0.5);
}

#[test]
fn disjoint_telemetry_is_rejected() {
    let t = TrackModel::oval();
    let p = qss_profile(&t, 1.1, &VehicleParams::default()).unwrap();
    let parked = vec![
        TelemetryRecord {
            t: 0.05,
            s_cl: 0.0,
            ..Default::default()
        };
        3
    ];
    assert!(matches!(
        compare_lap(&parked, &p),
        Err(Error::NonOverlapping(_))
    ));
    assert!(matches!(compare_lap(&[], &p), Err(Error::EmptyTelemetry)));
}
