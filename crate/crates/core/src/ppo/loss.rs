//! Clipped-surrogate PPO loss composed on a [`Tape`].

use crate::policy::{HeadVars, Tape, Var};

/// One transition as seen by the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSample {
    pub raw: [f64; 2],
    pub old_log_prob: f64,
    pub old_value: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossCoefs {
    pub clip_policy: f64,
    pub clip_value: f64,
    pub vf_coef: f64,
    pub entropy_coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// `-mean(min(r A, clip(r) A)) + 0.5 vf mean(max((V-R)^2, (Vc-R)^2)) - ent H`
/// with `Vc = V_old + clip(V - V_old, -cv, cv)`.
pub fn ppo_loss<'t>(
    tape: &'t Tape,
    heads: &HeadVars<'t>,
    samples: &[LossSample],
    c: &LossCoefs,
) -> (Var<'t>, LossStats) {
    let n = samples.len() as f64;
    let mut policy_terms = Vec::with_capacity(samples.len());
    let mut value_terms = Vec::with_capacity(samples.len());
    let (mut kl, mut clipped) = (0.0, 0.0);
    for (i, s) in samples.iter().enumerate() {
        let log_prob = heads.log_prob(tape, i, &s.raw);
        let log_ratio = log_prob - s.old_log_prob;
        let ratio = log_ratio.exp();
        let surr = ratio * s.advantage;
        let surr_clip = ratio.clamp(1.0 - c.clip_policy, 1.0 + c.clip_policy) * s.advantage;
        policy_terms.push(surr.min(surr_clip));
        kl += (ratio.value() - 1.0) - log_ratio.value();
        if (ratio.value() - 1.0).abs() > c.clip_policy {
            clipped += 1.0;
        }

        let v = heads.value[i];
        let v_clip = (v - s.old_value).clamp(-c.clip_value, c.clip_value) + s.old_value;
        let e1 = (v - s.ret).square();
        let e2 = (v_clip - s.ret).square();
        value_terms.push(e1.max(e2));
    }
    let policy = -(tape.sum(policy_terms) / n);
    let value = tape.sum(value_terms) / n;
    let entropy = heads.entropy(tape);
    let total = policy + value * (0.5 * c.vf_coef) - entropy * c.entropy_coef;
    let stats = LossStats {
        total: total.value(),
        policy: policy.value(),
        value: value.value(),
        entropy: entropy.value(),
        approx_kl: kl / n,
        clip_fraction: clipped / n,
    };
    (total, stats)
}
