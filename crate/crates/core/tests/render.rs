use std::sync::Arc;

use gripline_core::render::{
    Frame, Scene, BOUNDARY, DASH, DASH_PERIOD, FRAME_SIZE, OFF_TRACK, SKY, SURFACE,
};
use gripline_core::track::{parse_track, TrackModel};
use gripline_core::vehicle::VehicleState;

fn oval_scene() -> Scene {
    Scene::new(Arc::new(TrackModel::oval()))
}

// 600 m straights so the far field stays straight.
fn long_straight_scene() -> Scene {
    let text = "gripline-track v1\nname long\nspacing 1\nhalf_width 6\nfinish 1500\nstart 0 0 0\nstraight 600\narc 100 180\nstraight 600\narc 100 180\n";
    Scene::new(Arc::new(parse_track(text).unwrap()))
}

fn car_at(track: &TrackModel, s: f64, lateral: f64, yaw_offset: f64) -> VehicleState {
    let (x, y, h) = track.pose_at(s, lateral);
    VehicleState::at_rest(x, y, h + yaw_offset)
}

fn half_counts(f: &Frame, value: f32) -> (usize, usize) {
    let (mut left, mut right) = (0, 0);
    for r in 0..FRAME_SIZE {
        for c in 0..FRAME_SIZE {
            if f.get(r, c) == value {
                if c < FRAME_SIZE / 2 {
                    left += 1;
                } else {
                    right += 1;
                }
            }
        }
    }
    (left, right)
}

#[test]
fn centered_on_straight_is_mirror_symmetric() {
    let scene = long_straight_scene();
    let f = scene.render(&VehicleState::at_rest(40.0, 0.0, 0.0));
    for r in 0..FRAME_SIZE {
        for c in 0..FRAME_SIZE / 2 {
            let (a, b) = (f.get(r, c), f.get(r, FRAME_SIZE - 1 - c));
            assert!((a - b).abs() <= 1.0 / 255.0, "row {r} col {c}: {a} vs {b}");
        }
    }
}

#[test]
fn offset_to_the_left_shows_more_grass_on_the_left() {
    let scene = oval_scene();
    let t = scene.track().clone();
    let f = scene.render(&car_at(&t, 60.0, 0.9 * 6.0, 0.0));
    let (left, right) = half_counts(&f, OFF_TRACK);
    assert!(left > right, "{left} vs {right}");
}

#[test]
fn yawed_car_sees_less_track() {
    let scene = oval_scene();
    let t = scene.track().clone();
    let aligned = scene.render(&car_at(&t, 60.0, 0.0, 0.0));
    let yawed = scene.render(&car_at(&t, 60.0, 0.0, std::f64::consts::FRAC_PI_2));
    assert!(yawed.count(SURFACE) < aligned.count(SURFACE));
}

#[test]
fn render_is_pure() {
    let scene = oval_scene();
    let t = scene.track().clone();
    let s = car_at(&t, 230.0, 1.0, 0.1);
    assert_eq!(scene.render(&s), scene.render(&s));
}

#[test]
fn dash_period_translation_reproduces_frame() {
    let scene = long_straight_scene();
    let base = scene.render(&VehicleState::at_rest(20.0, 0.0, 0.0));
    for k in 1..4 {
        let moved = scene.render(&VehicleState::at_rest(
            20.0 + k as f64 * DASH_PERIOD,
            0.0,
            0.0,
        ));
        assert_eq!(base, moved, "shift by {k} periods");
    }
}

#[test]
fn on_track_frames_are_informative() {
    let scene = oval_scene();
    let t = scene.track().clone();
    let mut s = 0.0;
    while s < t.total_length() {
        let f = scene.render(&car_at(
            &t,
            s,
            2.0 * ((s / 37.0).sin()),
            0.2 * (s / 53.0).cos(),
        ));
        let classes = [SKY, OFF_TRACK, SURFACE, DASH, BOUNDARY]
            .iter()
            .filter(|v| f.count(**v) > 0)
            .count();
        assert!(classes >= 3, "s = {s}");
        assert!(f.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
        s += 13.0;
    }
}

#[test]
fn bundled_track_renders_dashes_and_boundaries() {
    let scene = Scene::new(Arc::new(TrackModel::bundled()));
    let t = scene.track().clone();
    let f = scene.render(&car_at(&t, 100.0, 0.0, 0.0));
    assert!(f.count(DASH) > 0);
    assert!(f.count(BOUNDARY) > 0);
    assert_eq!(f.get(0, 0), SKY);
}
