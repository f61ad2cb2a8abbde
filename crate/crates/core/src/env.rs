//! Racing MDP: 0.05 s agent steps over 25 physics substeps, centerline
//! progress reward, action-bound penalty and rule-based termination.

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{FrameStack, Scene, STACK_DEPTH};
use crate::telemetry::TelemetryRecord;
use crate::track::{TrackModel, TrackProjection};
use crate::vehicle::{physics_step, update_damage, ControlInputs, VehicleParams, VehicleState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// m/s, only used by the optional baseline subtraction.
    pub v_ref: f64,
    pub p_sc: f64,
    pub p_bnd: f64,
    pub finish_bonus: f64,
    pub penalty_offtrack: f64,
    pub penalty_turnback: f64,
    pub penalty_damage: f64,
    pub penalty_backwards: f64,
    pub penalty_low_progress: f64,
    /// m of net progress; `None` uses the track's own finish distance.
    pub finish_distance: Option<f64>,
    pub low_progress_window: u32,
    /// |track_pos| beyond which the car counts as off track.
    pub offtrack_limit: f64,
    /// |angle| beyond which the car counts as turned back, rad.
    pub turnback_angle: f64,
    /// Consecutive negative-progress steps before `Backwards` fires.
    pub backwards_steps: u32,
    /// Use `(|a|/p_sc - p_bnd + 1)^2` without clamping at zero.
    pub unclamped_action_penalty: bool,
    /// Subtract `v_ref * ts` from the progress term.
    pub v_ref_baseline: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            v_ref: 20.0,
            p_sc: 15.0,
            p_bnd: 1.2,
            finish_bonus: 100.0,
            penalty_offtrack: -10.0,
            penalty_turnback: -10.0,
            penalty_damage: -10.0,
            penalty_backwards: -10.0,
            penalty_low_progress: -10.0,
            finish_distance: None,
            low_progress_window: 500,
            offtrack_limit: 1.2,
            turnback_angle: FRAC_PI_2,
            backwards_steps: 20,
            unclamped_action_penalty: false,
            v_ref_baseline: false,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("reward: {m}")));
        if !(self.p_sc > 0.0) {
            return bad("p_sc must be > 0");
        }
        if !(self.p_bnd > 1.0) {
            return bad("p_bnd must be > 1");
        }
        let penalties = [
            self.penalty_offtrack,
            self.penalty_turnback,
            self.penalty_damage,
            self.penalty_backwards,
            self.penalty_low_progress,
        ];
        if penalties.iter().any(|p| !(*p <= 0.0)) {
            return bad("penalties must be <= 0");
        }
        if !(self.finish_bonus > 0.0) {
            return bad("finish_bonus must be > 0");
        }
        if self.finish_distance.is_some_and(|d| !(d > 0.0)) {
            return bad("finish_distance must be > 0");
        }
        if self.backwards_steps == 0 {
            return bad("backwards_steps must be >= 1");
        }
        Ok(())
    }

    /// Penalty for one raw action channel.
    pub fn channel_penalty(&self, raw: f64) -> f64 {
        let e = raw.abs() / self.p_sc - self.p_bnd + 1.0;
        if self.unclamped_action_penalty {
            e * e
        } else {
            let e = e.max(0.0);
            e * e
        }
    }

    fn penalty_for(&self, reason: TerminationReason) -> f64 {
        match reason {
            TerminationReason::Finish => self.finish_bonus,
            TerminationReason::OffTrack => self.penalty_offtrack,
            TerminationReason::TurnedBack => self.penalty_turnback,
            TerminationReason::Damaged | TerminationReason::Diverged => self.penalty_damage,
            TerminationReason::Backwards => self.penalty_backwards,
            TerminationReason::LowProgress => self.penalty_low_progress,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Agent step, s.
    pub ts: f64,
    pub substeps: u32,
    /// Episodes longer than this are truncated (not terminated).
    pub max_episode_steps: u32,
    pub reward: RewardConfig,
    pub vehicle: VehicleParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            ts: 0.05,
            substeps: 25,
            max_episode_steps: 6000,
            reward: RewardConfig::default(),
            vehicle: VehicleParams::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ts > 0.0) || self.substeps == 0 {
            return Err(Error::Config(
                "env: ts and substeps must be positive".into(),
            ));
        }
        if self.max_episode_steps == 0 {
            return Err(Error::Config("env: max_episode_steps must be >= 1".into()));
        }
        self.reward.validate()?;
        self.vehicle.validate()
    }

    pub fn physics_dt(&self) -> f64 {
        self.ts / self.substeps as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminationReason {
    Finish,
    OffTrack,
    TurnedBack,
    Damaged,
    Backwards,
    LowProgress,
    Diverged,
}

impl TerminationReason {
    pub const ALL: [TerminationReason; 7] = [
        Self::Finish,
        Self::OffTrack,
        Self::TurnedBack,
        Self::Damaged,
        Self::Backwards,
        Self::LowProgress,
        Self::Diverged,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Finish => "Finish",
            Self::OffTrack => "OffTrack",
            Self::TurnedBack => "TurnedBack",
            Self::Damaged => "Damaged",
            Self::Backwards => "Backwards",
            Self::LowProgress => "LowProgress",
            Self::Diverged => "Diverged",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl std::fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Label for an episode outcome including "still running" / truncation.
pub fn outcome_label(reason: Option<TerminationReason>) -> &'static str {
    reason.map_or("None", TerminationReason::as_str)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_tdiff: f64,
    pub r_ter: f64,
    pub r_act: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(r_tdiff: f64, r_ter: f64, r_act: f64) -> Self {
        Self {
            r_tdiff,
            r_ter,
            r_act,
            total: r_tdiff + r_ter - r_act,
        }
    }
}

/// Network output before squashing. Channel 0 steers, channel 1 is
/// throttle (+) / brake (-).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RawAction {
    pub raw: [f64; 2],
}

impl RawAction {
    pub fn new(steer: f64, throttle_brake: f64) -> Self {
        Self {
            raw: [steer, throttle_brake],
        }
    }

    pub fn squashed(&self) -> [f64; 2] {
        self.raw
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) })
    }

    pub fn controls(&self) -> ControlInputs {
        let [s, t] = self.squashed();
        ControlInputs::new(s, t)
    }
}

/// Reward for one transition. `termination` selects the terminal term.
pub fn compute_reward(
    track: &TrackModel,
    prev: &TrackProjection,
    now: &TrackProjection,
    action: &RawAction,
    termination: Option<TerminationReason>,
    cfg: &RewardConfig,
    ts: f64,
) -> RewardBreakdown {
    let mut r_tdiff = track.progress_delta(prev.s_cl, now.s_cl);
    if cfg.v_ref_baseline {
        r_tdiff -= cfg.v_ref * ts;
    }
    let r_act = action.raw.iter().map(|a| cfg.channel_penalty(*a)).sum();
    let r_ter = termination.map_or(0.0, |r| cfg.penalty_for(r));
    RewardBreakdown::new(r_tdiff, r_ter, r_act)
}

/// Everything the termination rules look at after a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminationInputs {
    pub projection: TrackProjection,
    pub damage: f64,
    pub step_count: u32,
    /// Episode reward so far, excluding any terminal term of this step.
    pub episode_reward: f64,
    /// Net centerline progress since reset, m.
    pub progress_total: f64,
    /// Consecutive steps with negative progress, including this one.
    pub negative_progress_run: u32,
}

/// First matching rule in priority order Finish, OffTrack, TurnedBack,
/// Damaged, Backwards, LowProgress.
pub fn check_termination(
    inp: &TerminationInputs,
    cfg: &RewardConfig,
    finish_distance: f64,
) -> Option<TerminationReason> {
    if inp.progress_total > finish_distance {
        Some(TerminationReason::Finish)
    } else if inp.projection.track_pos.abs() > cfg.offtrack_limit {
        Some(TerminationReason::OffTrack)
    } else if inp.projection.angle.abs() > cfg.turnback_angle {
        Some(TerminationReason::TurnedBack)
    } else if inp.damage > 0.0 {
        Some(TerminationReason::Damaged)
    } else if inp.negative_progress_run >= cfg.backwards_steps {
        Some(TerminationReason::Backwards)
    } else if inp.step_count > cfg.low_progress_window && inp.episode_reward <= 0.0 {
        Some(TerminationReason::LowProgress)
    } else {
        None
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: FrameStack,
    pub reward: RewardBreakdown,
    pub termination: Option<TerminationReason>,
    /// Step limit reached without a terminal event.
    pub truncated: bool,
    pub info: TelemetryRecord,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.termination.is_some() || self.truncated
    }
}

/// Serializable episode state; frames are re-rendered on restore.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSnapshot {
    pub vehicle: VehicleState,
    /// States behind the frames in the stack, oldest first.
    pub frame_states: Vec<VehicleState>,
    pub projection: TrackProjection,
    pub step_count: u32,
    pub episode_reward: f64,
    pub progress_total: f64,
    pub negative_progress_run: u32,
    pub done: bool,
}

pub struct RacingEnv {
    scene: Arc<Scene>,
    cfg: EnvConfig,
    finish_distance: f64,
    state: VehicleState,
    frame_states: VecDeque<VehicleState>,
    stack: FrameStack,
    projection: TrackProjection,
    step_count: u32,
    episode_reward: f64,
    progress_total: f64,
    negative_progress_run: u32,
    done: bool,
}

impl RacingEnv {
    pub fn new(scene: Arc<Scene>, cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let finish_distance = cfg
            .reward
            .finish_distance
            .unwrap_or_else(|| scene.track().finish_distance());
        let start = Self::start_state(scene.track());
        let stack = FrameStack::reset(scene.render(&start));
        let projection = scene
            .track()
            .project(start.x, start.y, start.yaw, Some(0.0));
        let mut env = Self {
            scene,
            cfg,
            finish_distance,
            state: start,
            frame_states: VecDeque::from(vec![start; STACK_DEPTH]),
            stack,
            projection,
            step_count: 0,
            episode_reward: 0.0,
            progress_total: 0.0,
            negative_progress_run: 0,
            done: false,
        };
        env.reset();
        Ok(env)
    }

    fn start_state(track: &TrackModel) -> VehicleState {
        let (x, y, heading) = track.pose_at(0.0, 0.0);
        VehicleState::at_rest(x, y, heading)
    }

    pub fn reset(&mut self) -> FrameStack {
        let track = self.scene.track();
        self.state = Self::start_state(track);
        self.projection = track.project(self.state.x, self.state.y, self.state.yaw, Some(0.0));
        self.frame_states = VecDeque::from(vec![self.state; STACK_DEPTH]);
        self.stack = FrameStack::reset(self.scene.render(&self.state));
        self.step_count = 0;
        self.episode_reward = 0.0;
        self.progress_total = 0.0;
        self.negative_progress_run = 0;
        self.done = false;
        self.stack.clone()
    }

    pub fn step(&mut self, action: RawAction) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeOver);
        }
        let track = self.scene.track().clone();
        let controls = action.controls();
        let dt = self.cfg.physics_dt();
        let prev = self.projection;
        let mut proj = prev;
        let mut diverged = false;
        for _ in 0..self.cfg.substeps {
            match physics_step(&self.state, controls, &self.cfg.vehicle, dt) {
                Ok(next) => self.state = next,
                Err(Error::Diverged) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
            proj = track.project(self.state.x, self.state.y, self.state.yaw, Some(proj.s_cl));
            update_damage(&mut self.state, &proj);
        }
        self.step_count += 1;
        self.projection = proj;

        let progress = track.progress_delta(prev.s_cl, proj.s_cl);
        self.progress_total += progress;
        self.negative_progress_run = if progress < 0.0 {
            self.negative_progress_run + 1
        } else {
            0
        };
        let rc = &self.cfg.reward;
        let shaped = compute_reward(&track, &prev, &proj, &action, None, rc, self.cfg.ts);
        let termination = if diverged {
            Some(TerminationReason::Diverged)
        } else {
            check_termination(
                &TerminationInputs {
                    projection: proj,
                    damage: self.state.damage,
                    step_count: self.step_count,
                    episode_reward: self.episode_reward + shaped.total,
                    progress_total: self.progress_total,
                    negative_progress_run: self.negative_progress_run,
                },
                rc,
                self.finish_distance,
            )
        };
        let reward = compute_reward(&track, &prev, &proj, &action, termination, rc, self.cfg.ts);
        self.episode_reward += reward.total;
        let truncated = termination.is_none() && self.step_count >= self.cfg.max_episode_steps;
        self.done = termination.is_some() || truncated;

        self.frame_states.pop_front();
        self.frame_states.push_back(self.state);
        self.stack.push(self.scene.render(&self.state));

        let s = &self.state;
        let info = TelemetryRecord {
            t: self.step_count as f64 * self.cfg.ts,
            s_cl: proj.s_cl,
            x: s.x,
            y: s.y,
            steer: controls.steer,
            throttle_brake: controls.throttle_brake,
            vx: s.vx,
            wheel_speeds: s.wheel_speeds(&self.cfg.vehicle),
            track_pos: proj.track_pos,
            ax: s.accel_long,
            ay: s.accel_lat,
            r_tdiff: reward.r_tdiff,
            r_ter: reward.r_ter,
            r_act: reward.r_act,
            r_total: reward.total,
        };
        Ok(StepResult {
            observation: self.stack.clone(),
            reward,
            termination,
            truncated,
            info,
        })
    }

    pub fn observation(&self) -> &FrameStack {
        &self.stack
    }

    pub fn vehicle(&self) -> &VehicleState {
        &self.state
    }

    pub fn projection(&self) -> &TrackProjection {
        &self.projection
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    pub fn episode_reward(&self) -> f64 {
        self.episode_reward
    }

    pub fn progress_total(&self) -> f64 {
        self.progress_total
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn finish_distance(&self) -> f64 {
        self.finish_distance
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn track(&self) -> &TrackModel {
        self.scene.track()
    }

    /// Places the vehicle in an arbitrary state (tests and scripted drivers).
    /// The frame stack is refilled from the new state.
    pub fn set_vehicle(&mut self, state: VehicleState) {
        let hint = Some(self.projection.s_cl);
        self.state = state;
        self.projection = self.track().project(state.x, state.y, state.yaw, hint);
        self.frame_states = VecDeque::from(vec![state; STACK_DEPTH]);
        self.stack = FrameStack::reset(self.scene.render(&state));
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            vehicle: self.state,
            frame_states: self.frame_states.iter().copied().collect(),
            projection: self.projection,
            step_count: self.step_count,
            episode_reward: self.episode_reward,
            progress_total: self.progress_total,
            negative_progress_run: self.negative_progress_run,
            done: self.done,
        }
    }

    pub fn restore(&mut self, snap: &EnvSnapshot) -> Result<()> {
        if snap.frame_states.len() != STACK_DEPTH {
            return Err(Error::Checkpoint(format!(
                "environment snapshot holds {} frame states, expected {STACK_DEPTH}",
                snap.frame_states.len()
            )));
        }
        let mut stack = FrameStack::reset(self.scene.render(&snap.frame_states[0]));
        for s in &snap.frame_states[1..] {
            stack.push(self.scene.render(s));
        }
        self.state = snap.vehicle;
        self.frame_states = snap.frame_states.iter().copied().collect();
        self.stack = stack;
        self.projection = snap.projection;
        self.step_count = snap.step_count;
        self.episode_reward = snap.episode_reward;
        self.progress_total = snap.progress_total;
        self.negative_progress_run = snap.negative_progress_run;
        self.done = snap.done;
        Ok(())
    }
}
