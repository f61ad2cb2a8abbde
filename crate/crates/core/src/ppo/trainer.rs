//! Synchronous PPO: parallel rollouts, GAE, clipped updates, periodic
//! deterministic evaluation, resumable checkpoints.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{clip_grad_norm, Adam};
use super::config::PpoConfig;
use super::gae::{compute_gae, normalize};
use super::loss::{ppo_loss, LossCoefs, LossSample, LossStats};
use crate::env::{EnvConfig, EnvSnapshot, RacingEnv, RawAction, TerminationReason};
use crate::error::{Error, Result};
use crate::policy::{
    batch_observations, checkpoint, deterministic_action, sample_action, HeadVars, NetShape,
    PolicyNet, Tape,
};
use crate::render::{FrameStack, Scene};
use crate::telemetry::EpisodeRecord;
use crate::track::TrackModel;

pub const TRAIN_LOG: &str = "train_log.csv";
pub const UPDATE_LOG: &str = "updates.csv";
pub const LEARNING_CURVE: &str = "learning_curve.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const POLICY_FILE: &str = "policy.bin";
pub const ADAM_FILE: &str = "adam.bin";
pub const STATE_FILE: &str = "trainer_state.json";
/// Telemetry of the most recent evaluation episode.
pub const EVAL_TELEMETRY: &str = "eval_latest.csv";

const TRAIN_LOG_HEADER: &str =
    "step,episode_return,episode_length,termination_reason,lap_time,max_distance";
const UPDATE_LOG_HEADER: &str =
    "step,update,lr,loss,policy_loss,value_loss,entropy,approx_kl,clip_fraction,grad_norm,skipped";
pub const LEARNING_CURVE_HEADER: &str = "training_step,max_distance,lap_time,termination_reason";

/// Transitions stored `[t * n_envs + e]`.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub horizon: usize,
    pub obs: Vec<FrameStack>,
    pub raw: Vec<[f64; 2]>,
    pub log_prob: Vec<f64>,
    pub value: Vec<f64>,
    /// Reward total; on truncation it includes `gamma * V(final obs)`.
    pub reward: Vec<f64>,
    /// Episode ended after this transition (terminated or truncated).
    pub done: Vec<bool>,
    pub termination: Vec<Option<TerminationReason>>,
    pub last_values: Vec<f64>,
    pub advantage: Vec<f64>,
    pub ret: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) {
        let (adv, ret) = compute_gae(
            &self.reward,
            &self.value,
            &self.done,
            &self.last_values,
            self.n_envs,
            gamma,
            lambda,
        );
        self.advantage = adv;
        self.ret = ret;
    }
}

/// One finished training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    /// Total environment steps when the episode ended.
    pub step: u64,
    pub episode_return: f64,
    pub episode_length: u32,
    /// `None` for truncated episodes.
    pub termination: Option<TerminationReason>,
    pub lap_time: Option<f64>,
    pub max_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
struct EpisodeAccum {
    ret: f64,
    len: u32,
    max_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UpdateStats {
    pub lr: f64,
    pub loss: LossStats,
    pub grad_norm: f64,
    /// Minibatches skipped for non-finite values.
    pub skipped: usize,
    pub minibatches: usize,
}

/// One deterministic evaluation episode.
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub record: EpisodeRecord,
    pub termination: Option<TerminationReason>,
    pub truncated: bool,
    pub lap_time: Option<f64>,
    pub max_distance: f64,
    pub total_reward: f64,
    pub steps: u32,
}

/// Runs the mean action from reset until the episode ends or `max_steps`.
pub fn evaluate(env: &mut RacingEnv, net: &PolicyNet<f32>, max_steps: u32) -> Result<EvalResult> {
    env.reset();
    let mut record = EpisodeRecord::new(env.track().total_length(), env.projection().s_cl);
    let mut max_distance: f64 = 0.0;
    let mut total_reward = 0.0;
    let mut termination = None;
    let mut truncated = false;
    for _ in 0..max_steps {
        let out = net.forward(env.observation())?;
        let r = env.step(deterministic_action(&out))?;
        record.push(r.info);
        total_reward += r.reward.total;
        max_distance = max_distance.max(env.progress_total());
        if r.done() {
            termination = r.termination;
            truncated = r.truncated;
            break;
        }
    }
    let steps = record.len() as u32;
    if termination.is_none() {
        truncated = true;
    }
    record.finish(termination, truncated);
    let lap_time =
        (termination == Some(TerminationReason::Finish)).then(|| steps as f64 * env.config().ts);
    Ok(EvalResult {
        record,
        termination,
        truncated,
        lap_time,
        max_distance,
        total_reward,
        steps,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RngState {
    stream: u64,
    word_pos: String,
}

impl RngState {
    fn of(r: &ChaCha8Rng) -> Self {
        Self {
            stream: r.get_stream(),
            word_pos: r.get_word_pos().to_string(),
        }
    }

    fn restore(&self, seed: u64) -> Result<ChaCha8Rng> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(self.stream);
        let pos = self
            .word_pos
            .parse::<u128>()
            .map_err(|e| Error::Checkpoint(format!("rng position: {e}")))?;
        r.set_word_pos(pos);
        Ok(r)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainerState {
    seed: u64,
    steps_done: u64,
    updates_done: u64,
    next_eval: u64,
    envs: Vec<EnvSnapshot>,
    episodes: Vec<EpisodeAccum>,
    env_rngs: Vec<RngState>,
    shuffle_rng: RngState,
    /// Byte length of each log at checkpoint time, for truncation on resume.
    log_lengths: Vec<(String, u64)>,
}

/// Called after every update with the running totals.
#[derive(Debug, Clone)]
pub struct Progress<'a> {
    pub steps_done: u64,
    pub updates_done: u64,
    pub stats: &'a UpdateStats,
    pub episodes: &'a [EpisodeSummary],
    pub eval: Option<&'a EvalResult>,
}

pub struct Trainer {
    cfg: PpoConfig,
    seed: u64,
    net: PolicyNet<f32>,
    adam: Adam,
    envs: Vec<RacingEnv>,
    eval_env: RacingEnv,
    env_rngs: Vec<ChaCha8Rng>,
    shuffle_rng: ChaCha8Rng,
    episodes: Vec<EpisodeAccum>,
    steps_done: u64,
    updates_done: u64,
    next_eval: u64,
}

fn env_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

impl Trainer {
    pub fn new(
        cfg: PpoConfig,
        env_cfg: EnvConfig,
        track: Arc<TrackModel>,
        seed: u64,
    ) -> Result<Self> {
        Self::with_shape(cfg, env_cfg, track, seed, NetShape::default())
    }

    pub fn with_shape(
        cfg: PpoConfig,
        env_cfg: EnvConfig,
        track: Arc<TrackModel>,
        seed: u64,
        shape: NetShape,
    ) -> Result<Self> {
        cfg.validate()?;
        env_cfg.validate()?;
        let scene = Arc::new(Scene::new(track));
        let envs = (0..cfg.n_envs)
            .map(|_| RacingEnv::new(scene.clone(), env_cfg.clone()))
            .collect::<Result<Vec<_>>>()?;
        let eval_env = RacingEnv::new(scene, env_cfg)?;
        let net = PolicyNet::new(shape, seed)?;
        let adam = Adam::new(net.params().len(), cfg.adam_eps);
        Ok(Self {
            env_rngs: (0..cfg.n_envs)
                .map(|e| env_rng(seed, e as u64 + 1))
                .collect(),
            shuffle_rng: env_rng(seed, 0),
            episodes: vec![EpisodeAccum::default(); cfg.n_envs],
            next_eval: cfg.eval_interval,
            cfg,
            seed,
            net,
            adam,
            envs,
            eval_env,
            steps_done: 0,
            updates_done: 0,
        })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn net(&self) -> &PolicyNet<f32> {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut PolicyNet<f32> {
        &mut self.net
    }

    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    pub fn updates_done(&self) -> u64 {
        self.updates_done
    }

    pub fn envs(&self) -> &[RacingEnv] {
        &self.envs
    }

    fn values_of(&self, stacks: &[&FrameStack]) -> Result<Vec<f64>> {
        let mut x = Vec::new();
        batch_observations(stacks.iter().copied(), &mut x);
        Ok(self
            .net
            .forward_batch(&x, stacks.len())?
            .0
            .iter()
            .map(|o| o.value)
            .collect())
    }

    /// `rollout_horizon` steps in every environment with sampled actions.
    /// Finished episodes are reset in place and summarised.
    pub fn collect_rollout(&mut self) -> Result<(RolloutBuffer, Vec<EpisodeSummary>)> {
        let n = self.cfg.n_envs;
        let h = self.cfg.rollout_horizon;
        let mut buf = RolloutBuffer {
            n_envs: n,
            horizon: h,
            ..Default::default()
        };
        let mut finished = Vec::new();
        let mut x: Vec<f32> = Vec::new();
        for t in 0..h {
            let stacks: Vec<FrameStack> =
                self.envs.iter().map(|e| e.observation().clone()).collect();
            batch_observations(stacks.iter(), &mut x);
            let (outs, _) = self.net.forward_batch(&x, n)?;
            let sampled: Vec<(RawAction, f64)> = outs
                .iter()
                .zip(self.env_rngs.iter_mut())
                .map(|(o, rng)| sample_action(o, rng))
                .collect();
            let results: Vec<_> = self
                .envs
                .par_iter_mut()
                .zip(sampled.par_iter())
                .map(|(env, (a, _))| env.step(*a))
                .collect::<Result<_>>()?;
            let trunc: Vec<usize> = (0..n).filter(|&e| results[e].truncated).collect();
            let trunc_values = if trunc.is_empty() {
                Vec::new()
            } else {
                self.values_of(
                    &trunc
                        .iter()
                        .map(|&e| &results[e].observation)
                        .collect::<Vec<_>>(),
                )?
            };
            let step_base = self.steps_done + (t * n) as u64;
            for (e, r) in results.into_iter().enumerate() {
                let mut reward = r.reward.total;
                if let Some(k) = trunc.iter().position(|&i| i == e) {
                    reward += self.cfg.gamma * trunc_values[k];
                }
                buf.obs.push(stacks[e].clone());
                buf.raw.push(sampled[e].0.raw);
                buf.log_prob.push(sampled[e].1);
                buf.value.push(outs[e].value);
                buf.reward.push(reward);
                buf.done.push(r.done());
                buf.termination.push(r.termination);

                let acc = &mut self.episodes[e];
                acc.ret += r.reward.total;
                acc.len += 1;
                acc.max_distance = acc.max_distance.max(self.envs[e].progress_total());
                if r.done() {
                    let lap_time = (r.termination == Some(TerminationReason::Finish))
                        .then(|| acc.len as f64 * self.envs[e].config().ts);
                    finished.push(EpisodeSummary {
                        step: step_base + e as u64 + 1,
                        episode_return: acc.ret,
                        episode_length: acc.len,
                        termination: r.termination,
                        lap_time,
                        max_distance: acc.max_distance,
                    });
                    *acc = EpisodeAccum::default();
                    self.envs[e].reset();
                }
            }
        }
        let last: Vec<&FrameStack> = self.envs.iter().map(|e| e.observation()).collect();
        buf.last_values = self.values_of(&last)?;
        self.steps_done += (n * h) as u64;
        Ok((buf, finished))
    }

    /// Advantage estimation plus `epochs_per_update` passes of shuffled
    /// minibatch updates.
    pub fn update(&mut self, buf: &mut RolloutBuffer, lr: f64) -> Result<UpdateStats> {
        buf.compute_advantages(self.cfg.gamma, self.cfg.gae_lambda);
        let mut adv = buf.advantage.clone();
        normalize(&mut adv);
        let coefs = LossCoefs {
            clip_policy: self.cfg.clip_policy,
            clip_value: self.cfg.clip_value,
            vf_coef: self.cfg.vf_coef,
            entropy_coef: self.cfg.entropy_coef,
        };
        let mut idx: Vec<usize> = (0..buf.len()).collect();
        let mut stats = UpdateStats {
            lr,
            ..Default::default()
        };
        let mut x: Vec<f32> = Vec::new();
        let mut used = 0usize;
        for _ in 0..self.cfg.epochs_per_update {
            idx.shuffle(&mut self.shuffle_rng);
            for mb in idx.chunks(self.cfg.batch_size) {
                stats.minibatches += 1;
                batch_observations(mb.iter().map(|&i| &buf.obs[i]), &mut x);
                let (outs, cache) = match self.net.forward_batch(&x, mb.len()) {
                    Ok(v) => v,
                    Err(Error::NumericOverflow(_)) => {
                        stats.skipped += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let samples: Vec<LossSample> = mb
                    .iter()
                    .map(|&i| LossSample {
                        raw: buf.raw[i],
                        old_log_prob: buf.log_prob[i],
                        old_value: buf.value[i],
                        advantage: adv[i],
                        ret: buf.ret[i],
                    })
                    .collect();
                let tape = Tape::new();
                let heads = HeadVars::new(&tape, &self.net, &outs);
                let (loss, ls) = ppo_loss(&tape, &heads, &samples, &coefs);
                if !ls.total.is_finite() {
                    stats.skipped += 1;
                    continue;
                }
                let g = tape.backward(loss)?;
                let mut grad = self.net.backward(&x, &cache, &heads.gradients(&g)?)?;
                let norm = clip_grad_norm(&mut grad, self.cfg.max_grad_norm);
                if !norm.is_finite() {
                    stats.skipped += 1;
                    continue;
                }
                self.adam.apply(self.net.params_mut(), &grad, lr);
                used += 1;
                stats.grad_norm += norm;
                stats.loss.total += ls.total;
                stats.loss.policy += ls.policy;
                stats.loss.value += ls.value;
                stats.loss.entropy += ls.entropy;
                stats.loss.approx_kl += ls.approx_kl;
                stats.loss.clip_fraction += ls.clip_fraction;
            }
        }
        if used > 0 {
            let k = used as f64;
            stats.grad_norm /= k;
            let l = &mut stats.loss;
            for v in [
                &mut l.total,
                &mut l.policy,
                &mut l.value,
                &mut l.entropy,
                &mut l.approx_kl,
                &mut l.clip_fraction,
            ] {
                *v /= k;
            }
        }
        self.updates_done += 1;
        Ok(stats)
    }

    /// Deterministic episode on the dedicated evaluation environment.
    pub fn evaluate(&mut self) -> Result<EvalResult> {
        evaluate(&mut self.eval_env, &self.net, self.cfg.eval_max_steps)
    }

    /// Trains until `max_steps`, writing logs and checkpoints into `out`.
    /// Resumes from `out/checkpoint` when it exists. Returning `Break` from
    /// `on_progress` stops early without writing an extra checkpoint.
    pub fn run(
        &mut self,
        out: &Path,
        mut on_progress: impl FnMut(&Progress<'_>) -> ControlFlow<()>,
    ) -> Result<()> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let ckpt = out.join(CHECKPOINT_DIR);
        if ckpt.join(STATE_FILE).exists() {
            self.resume(out)?;
        } else {
            for (name, header) in [
                (TRAIN_LOG, TRAIN_LOG_HEADER),
                (UPDATE_LOG, UPDATE_LOG_HEADER),
                (LEARNING_CURVE, LEARNING_CURVE_HEADER),
            ] {
                let p = out.join(name);
                std::fs::write(&p, format!("{header}\n")).map_err(|e| Error::io(&p, e))?;
            }
        }
        let mut train_log = LogFile::append(&out.join(TRAIN_LOG))?;
        let mut update_log = LogFile::append(&out.join(UPDATE_LOG))?;
        let mut curve = LogFile::append(&out.join(LEARNING_CURVE))?;
        while self.steps_done < self.cfg.max_steps {
            let progress = self.steps_done as f64 / self.cfg.max_steps as f64;
            let lr = self.cfg.learning_rate(progress);
            let (mut buf, episodes) = self.collect_rollout()?;
            for ep in &episodes {
                train_log.line(&format!(
                    "{},{},{},{},{},{}",
                    ep.step,
                    ep.episode_return,
                    ep.episode_length,
                    ep.termination.map_or("Truncated", |t| t.as_str()),
                    ep.lap_time.map(|v| v.to_string()).unwrap_or_default(),
                    ep.max_distance
                ))?;
            }
            let stats = self.update(&mut buf, lr)?;
            let l = &stats.loss;
            update_log.line(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                self.steps_done,
                self.updates_done,
                lr,
                l.total,
                l.policy,
                l.value,
                l.entropy,
                l.approx_kl,
                l.clip_fraction,
                stats.grad_norm,
                stats.skipped
            ))?;
            let mut eval = None;
            if self.steps_done >= self.next_eval {
                let r = self.evaluate()?;
                curve.line(&format!(
                    "{},{},{},{}",
                    self.steps_done,
                    r.max_distance,
                    r.lap_time.map(|v| v.to_string()).unwrap_or_default(),
                    r.termination.map_or("Truncated", |t| t.as_str())
                ))?;
                if !r.record.is_empty() {
                    write_atomic(&out.join(EVAL_TELEMETRY), r.record.to_csv()?.as_bytes())?;
                }
                while self.next_eval <= self.steps_done {
                    self.next_eval += self.cfg.eval_interval;
                }
                eval = Some(r);
            }
            let done = self.steps_done >= self.cfg.max_steps;
            if done
                || self
                    .updates_done
                    .is_multiple_of(self.cfg.checkpoint_interval)
            {
                train_log.flush()?;
                update_log.flush()?;
                curve.flush()?;
                self.save_checkpoint(out)?;
            }
            let flow = on_progress(&Progress {
                steps_done: self.steps_done,
                updates_done: self.updates_done,
                stats: &stats,
                episodes: &episodes,
                eval: eval.as_ref(),
            });
            if flow.is_break() {
                break;
            }
        }
        train_log.flush()?;
        update_log.flush()?;
        curve.flush()
    }

    pub fn save_checkpoint(&self, out: &Path) -> Result<()> {
        let dir = out.join(CHECKPOINT_DIR);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut log_lengths = Vec::new();
        for name in [TRAIN_LOG, UPDATE_LOG, LEARNING_CURVE] {
            let p = out.join(name);
            let len = std::fs::metadata(&p).map(|m| m.len()).unwrap_or(0);
            log_lengths.push((name.to_string(), len));
        }
        let state = TrainerState {
            seed: self.seed,
            steps_done: self.steps_done,
            updates_done: self.updates_done,
            next_eval: self.next_eval,
            envs: self.envs.iter().map(|e| e.snapshot()).collect(),
            episodes: self.episodes.clone(),
            env_rngs: self.env_rngs.iter().map(RngState::of).collect(),
            shuffle_rng: RngState::of(&self.shuffle_rng),
            log_lengths,
        };
        let json = serde_json::to_vec(&state).map_err(|e| Error::Checkpoint(e.to_string()))?;
        write_atomic(&dir.join(POLICY_FILE), &checkpoint::encode(&self.net))?;
        write_atomic(&dir.join(ADAM_FILE), &encode_adam(&self.adam))?;
        // The state file goes last: its presence marks a complete checkpoint.
        write_atomic(&dir.join(STATE_FILE), &json)
    }

    fn resume(&mut self, out: &Path) -> Result<()> {
        let dir = out.join(CHECKPOINT_DIR);
        let sp = dir.join(STATE_FILE);
        let bytes = std::fs::read(&sp).map_err(|e| Error::io(&sp, e))?;
        let state: TrainerState = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", sp.display())))?;
        if state.seed != self.seed {
            return Err(Error::Checkpoint(format!(
                "checkpoint was written with seed {}, not {}",
                state.seed, self.seed
            )));
        }
        if state.envs.len() != self.envs.len() {
            return Err(Error::Checkpoint(
                "checkpoint holds a different number of environments".into(),
            ));
        }
        let net: PolicyNet<f32> = checkpoint::load(dir.join(POLICY_FILE))?;
        if net.shape() != self.net.shape() {
            return Err(Error::Checkpoint("checkpoint network shape differs".into()));
        }
        let ap = dir.join(ADAM_FILE);
        let adam = decode_adam(&std::fs::read(&ap).map_err(|e| Error::io(&ap, e))?)?;
        if adam.m.len() != net.params().len() {
            return Err(Error::Checkpoint(
                "optimizer state does not match the network".into(),
            ));
        }
        for (env, snap) in self.envs.iter_mut().zip(&state.envs) {
            env.restore(snap)?;
        }
        self.env_rngs = state
            .env_rngs
            .iter()
            .map(|r| r.restore(self.seed))
            .collect::<Result<_>>()?;
        self.shuffle_rng = state.shuffle_rng.restore(self.seed)?;
        self.episodes = state.episodes;
        self.steps_done = state.steps_done;
        self.updates_done = state.updates_done;
        self.next_eval = state.next_eval;
        self.net = net;
        self.adam = adam;
        for (name, len) in &state.log_lengths {
            let p = out.join(name);
            let f = OpenOptions::new()
                .write(true)
                .open(&p)
                .map_err(|e| Error::io(&p, e))?;
            f.set_len(*len).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

struct LogFile {
    path: PathBuf,
    w: BufWriter<File>,
}

impl LogFile {
    fn append(path: &Path) -> Result<Self> {
        let f = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            w: BufWriter::new(f),
        })
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.w, "{s}").map_err(|e| Error::io(&self.path, e))
    }

    fn flush(&mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

const ADAM_MAGIC: &[u8; 8] = b"GRIPADAM";

fn encode_adam(a: &Adam) -> Vec<u8> {
    let mut out = Vec::with_capacity(48 + 16 * a.m.len());
    out.extend_from_slice(ADAM_MAGIC);
    for v in [a.beta1, a.beta2, a.eps] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&a.step.to_le_bytes());
    out.extend_from_slice(&(a.m.len() as u64).to_le_bytes());
    for v in a.m.iter().chain(&a.v) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode_adam(b: &[u8]) -> Result<Adam> {
    let bad = || Error::Checkpoint("malformed optimizer state".into());
    if b.len() < 48 || &b[..8] != ADAM_MAGIC {
        return Err(bad());
    }
    let word = |i: usize| -> [u8; 8] { b[8 + 8 * i..16 + 8 * i].try_into().unwrap() };
    let n = u64::from_le_bytes(word(4)) as usize;
    if b.len() != 48 + 16 * n {
        return Err(bad());
    }
    let floats: Vec<f64> = b[48..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Adam {
        beta1: f64::from_le_bytes(word(0)),
        beta2: f64::from_le_bytes(word(1)),
        eps: f64::from_le_bytes(word(2)),
        step: u64::from_le_bytes(word(3)),
        m: floats[..n].to_vec(),
        v: floats[n..].to_vec(),
    })
}
