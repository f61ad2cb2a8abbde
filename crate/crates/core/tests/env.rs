use std::sync::Arc;

use gripline_core::env::{EnvConfig, RacingEnv, RawAction, RewardConfig, TerminationReason};
use gripline_core::proving_ground::LineFollower;
use gripline_core::render::Scene;
use gripline_core::track::TrackModel;
use gripline_core::Error;
use proptest::prelude::*;

fn oval_env(cfg: EnvConfig) -> RacingEnv {
    RacingEnv::new(Arc::new(Scene::new(Arc::new(TrackModel::oval()))), cfg).unwrap()
}

fn with_finish(d: f64) -> EnvConfig {
    EnvConfig {
        reward: RewardConfig {
            finish_distance: Some(d),
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn reset_places_car_on_start_line() {
    let mut env = oval_env(EnvConfig::default());
    let obs = env.reset();
    let p = env.projection();
    assert_eq!(p.s_cl, 0.0);
    assert_eq!(p.track_pos, 0.0);
    assert_eq!(p.angle, 0.0);
    assert_eq!(env.vehicle().speed(), 0.0);
    assert_eq!(env.vehicle().wheel_omega, [0.0; 4]);
    let f = obs.frames();
    assert!(f.iter().all(|x| **x == *f[0]));
    assert_eq!(obs, env.reset());
}

#[test]
fn reset_after_termination_forgets_the_episode() {
    let mut env = oval_env(EnvConfig::default());
    let fresh = env.reset();
    let mut st = *env.vehicle();
    st.vx = 20.0;
    st.yaw += 3.0;
    env.set_vehicle(st);
    let r = env.step(RawAction::new(1.0, 1.0)).unwrap();
    assert_eq!(r.termination, Some(TerminationReason::TurnedBack));
    assert!(matches!(
        env.step(RawAction::default()),
        Err(Error::EpisodeOver)
    ));
    assert_eq!(env.reset(), fresh);
    assert_eq!(env.step_count(), 0);
    assert_eq!(env.episode_reward(), 0.0);
    assert_eq!(env.progress_total(), 0.0);
}

#[test]
fn leaving_the_track_terminates_with_penalty() {
    let mut env = oval_env(EnvConfig::default());
    let (x, y, h) = env.track().pose_at(50.0, 1.25 * 6.0);
    let mut st = gripline_core::vehicle::VehicleState::at_rest(x, y, h);
    st.vx = 2.0;
    env.set_vehicle(st);
    let r = env.step(RawAction::default()).unwrap();
    assert_eq!(r.termination, Some(TerminationReason::OffTrack));
    assert_eq!(r.reward.r_ter, -10.0);
    assert_eq!(
        r.reward.total,
        r.reward.r_tdiff + r.reward.r_ter - r.reward.r_act
    );
}

#[test]
fn crossing_finish_distance_pays_bonus() {
    let mut env = oval_env(with_finish(20.0));
    let mut last = None;
    for _ in 0..400 {
        let r = env.step(RawAction::new(0.0, 1.0)).unwrap();
        if r.done() {
            last = Some(r);
            break;
        }
    }
    let r = last.expect("episode should end");
    assert_eq!(r.termination, Some(TerminationReason::Finish));
    assert_eq!(r.reward.r_ter, 100.0);
    assert!(env.progress_total() > 20.0);
}

#[test]
fn parked_car_hits_low_progress_at_step_501() {
    let mut env = oval_env(EnvConfig::default());
    for k in 1..=501 {
        let r = env.step(RawAction::default()).unwrap();
        if k < 501 {
            assert_eq!(r.termination, None, "step {k}");
            assert_eq!(r.reward.total, 0.0);
        } else {
            assert_eq!(r.termination, Some(TerminationReason::LowProgress));
            assert_eq!(r.reward.total, -10.0);
        }
    }
}

#[test]
fn rolling_backwards_triggers_backwards_after_debounce() {
    let mut env = oval_env(EnvConfig::default());
    let mut st = *env.vehicle();
    let (x, y, h) = env.track().pose_at(100.0, 0.0);
    st.x = x;
    st.y = y;
    st.yaw = h;
    // Wheels cannot spin backwards, so the car slides to a stop.
    st.vx = -30.0;
    env.set_vehicle(st);
    let mut steps = 0;
    loop {
        let r = env.step(RawAction::default()).unwrap();
        steps += 1;
        assert!(r.reward.r_tdiff < 0.0);
        if let Some(t) = r.termination {
            assert_eq!(t, TerminationReason::Backwards);
            break;
        }
    }
    assert_eq!(steps, 20);
}

#[test]
fn damage_terminates() {
    let mut env = oval_env(EnvConfig::default());
    let mut st = *env.vehicle();
    st.damage = 0.5;
    env.set_vehicle(st);
    let r = env.step(RawAction::default()).unwrap();
    assert_eq!(r.termination, Some(TerminationReason::Damaged));
    assert_eq!(r.reward.r_ter, -10.0);
}

#[test]
fn diverging_physics_terminates_with_damage_penalty() {
    let mut env = oval_env(EnvConfig::default());
    let mut st = *env.vehicle();
    st.vx = 1e308;
    st.yaw_rate = 1e308;
    env.set_vehicle(st);
    let r = env.step(RawAction::new(1.0, 1.0)).unwrap();
    assert_eq!(r.termination, Some(TerminationReason::Diverged));
    assert_eq!(r.reward.r_ter, -10.0);
    assert!(env.vehicle().is_finite());
}

#[test]
fn truncation_is_not_termination() {
    let cfg = EnvConfig {
        max_episode_steps: 30,
        ..Default::default()
    };
    let mut env = oval_env(cfg);
    for k in 1..=30 {
        let r = env.step(RawAction::new(0.0, 0.5)).unwrap();
        assert_eq!(r.truncated, k == 30);
        assert_eq!(r.termination, None);
    }
}

fn drive_lap(env: &mut RacingEnv, weave: f64) -> (f64, Vec<f64>) {
    let driver = LineFollower::new(move |s: f64| weave * (s / 23.0).sin(), |_| 15.0);
    let params = env.config().vehicle.clone();
    let mut sum = 0.0;
    let mut rewards = Vec::new();
    loop {
        let a = driver.act(env.track(), &params, env.vehicle(), env.projection().s_cl);
        let r = env.step(a).unwrap();
        rewards.push(r.reward.total);
        if r.termination == Some(TerminationReason::Finish) {
            return (sum, rewards);
        }
        sum += r.reward.r_tdiff;
        assert!(!r.done(), "{:?}", r.termination);
    }
}

#[test]
fn lap_progress_is_line_independent() {
    let length = TrackModel::oval().total_length();
    for weave in [0.0, 3.5] {
        // Finish fires on the step that crosses one lap; everything before it
        // is strictly less than one lap.
        let mut env = oval_env(with_finish(length));
        let (before, _) = drive_lap(&mut env, weave);
        let total = env.progress_total();
        assert!(before <= length && total > length);
        assert!(total - length < 1.0, "{total}");
    }
}

#[test]
fn sum_of_tdiff_over_a_lap_matches_length() {
    let length = TrackModel::oval().total_length();
    let mut env = oval_env(with_finish(2.0 * length));
    let driver = LineFollower::new(|s: f64| 4.0 * (s / 17.0).sin(), |_| 14.0);
    let params = env.config().vehicle.clone();
    let start = env.projection().s_cl;
    let mut sum = 0.0;
    let mut laps_done = false;
    for _ in 0..4000 {
        let a = driver.act(env.track(), &params, env.vehicle(), env.projection().s_cl);
        let r = env.step(a).unwrap();
        assert!(!r.done());
        sum += r.reward.r_tdiff;
        if env.progress_total() > length {
            // Compare with the exact arc-length gap to the start.
            let over = env.track().progress_delta(start, env.projection().s_cl);
            assert!(
                (sum - (length + over)).abs() < 0.1,
                "{sum} vs {}",
                length + over
            );
            laps_done = true;
            break;
        }
    }
    assert!(laps_done);
}

#[test]
fn identical_actions_give_identical_trajectories() {
    let run = || {
        let mut env = oval_env(EnvConfig::default());
        let mut out = Vec::new();
        for k in 0..120 {
            let a = RawAction::new(0.3 * (k as f64 * 0.1).sin(), 0.8 - 0.01 * k as f64);
            let r = env.step(a).unwrap();
            out.push((r.info, r.reward, r.observation.newest().clone()));
            if r.done() {
                break;
            }
        }
        out
    };
    assert_eq!(run(), run());
}

#[test]
fn snapshot_restore_resumes_exactly() {
    let mut env = oval_env(EnvConfig::default());
    let actions: Vec<RawAction> = (0..60)
        .map(|k| RawAction::new(0.2 * (k as f64 * 0.3).cos(), 0.7))
        .collect();
    for a in &actions[..30] {
        env.step(*a).unwrap();
    }
    let snap = env.snapshot();
    let json = serde_json::to_string(&snap).unwrap();
    let tail: Vec<_> = actions[30..]
        .iter()
        .map(|a| env.step(*a).unwrap())
        .collect();

    let mut other = oval_env(EnvConfig::default());
    other
        .restore(&serde_json::from_str(&json).unwrap())
        .unwrap();
    for (a, expect) in actions[30..].iter().zip(&tail) {
        let got = other.step(*a).unwrap();
        assert_eq!(got.info, expect.info);
        assert_eq!(got.observation, expect.observation);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reward_identity_and_nonnegative_penalty(
        actions in prop::collection::vec((-40.0..40.0f64, -40.0..40.0f64), 1..40)
    ) {
        let mut env = oval_env(EnvConfig::default());
        for (s, t) in actions {
            let r = env.step(RawAction::new(s, t)).unwrap();
            let b = r.reward;
            prop_assert_eq!(b.total, b.r_tdiff + b.r_ter - b.r_act);
            prop_assert!(b.r_act >= 0.0);
            if s.abs() <= 3.0 && t.abs() <= 3.0 {
                prop_assert_eq!(b.r_act, 0.0);
            }
            if r.done() {
                prop_assert!(env.step(RawAction::default()).is_err());
                break;
            }
        }
    }
}
