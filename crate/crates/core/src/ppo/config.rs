use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// PPO hyperparameters. Defaults: learning rate 2.5e-4 decaying linearly to
/// 0.5e-4, gamma 0.995, entropy 0.01, value 0.5, clip 0.2 for both policy
/// and value, 24 environments, minibatch 512.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub lr_start: f64,
    pub lr_end: f64,
    /// Total environment steps (summed over all environments).
    pub max_steps: u64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub vf_coef: f64,
    pub clip_policy: f64,
    pub clip_value: f64,
    pub n_envs: usize,
    pub batch_size: usize,
    /// Steps per environment per rollout.
    pub rollout_horizon: usize,
    pub epochs_per_update: usize,
    pub max_grad_norm: f64,
    pub adam_eps: f64,
    /// Environment steps between deterministic evaluation episodes.
    pub eval_interval: u64,
    /// Step cap of an evaluation episode.
    pub eval_max_steps: u32,
    /// Updates between checkpoints (the final state is always saved).
    pub checkpoint_interval: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            lr_start: 2.5e-4,
            lr_end: 0.5e-4,
            max_steps: 5_000_000,
            gamma: 0.995,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            vf_coef: 0.5,
            clip_policy: 0.2,
            clip_value: 0.2,
            n_envs: 24,
            batch_size: 512,
            rollout_horizon: 128,
            epochs_per_update: 4,
            max_grad_norm: 0.5,
            adam_eps: 1e-5,
            eval_interval: 10_000,
            eval_max_steps: 6000,
            checkpoint_interval: 10,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("ppo: {m}")));
        if !(self.lr_start > 0.0 && self.lr_end >= 0.0 && self.lr_end <= self.lr_start) {
            return bad("need 0 <= lr_end <= lr_start, lr_start > 0");
        }
        if !(self.clip_policy > 0.0 && self.clip_value > 0.0) {
            return bad("clip ranges must be > 0");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if self.n_envs == 0
            || self.rollout_horizon == 0
            || self.batch_size == 0
            || self.epochs_per_update == 0
        {
            return bad("n_envs, rollout_horizon, batch_size and epochs_per_update must be >= 1");
        }
        if !(self.n_envs * self.rollout_horizon).is_multiple_of(self.batch_size) {
            return bad("batch_size must divide n_envs * rollout_horizon");
        }
        if !(self.max_grad_norm > 0.0 && self.adam_eps > 0.0) {
            return bad("max_grad_norm and adam_eps must be > 0");
        }
        if self.eval_interval == 0 || self.eval_max_steps == 0 || self.checkpoint_interval == 0 {
            return bad("eval_interval, eval_max_steps and checkpoint_interval must be >= 1");
        }
        Ok(())
    }

    pub fn steps_per_update(&self) -> u64 {
        (self.n_envs * self.rollout_horizon) as u64
    }

    /// Linear decay from `lr_start` at progress 0 to `lr_end` at 1.
    pub fn learning_rate(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        self.lr_start + (self.lr_end - self.lr_start) * p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule() {
        let c = PpoConfig::default();
        assert_eq!(c.learning_rate(0.0), 2.5e-4);
        assert!((c.learning_rate(0.5) - 1.5e-4).abs() < 1e-18);
        assert!((c.learning_rate(1.0) - 0.5e-4).abs() < 1e-18);
    }

    #[test]
    fn validation() {
        assert!(PpoConfig::default().validate().is_ok());
        let c = PpoConfig {
            batch_size: 500,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = PpoConfig {
            lr_end: 1e-3,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
