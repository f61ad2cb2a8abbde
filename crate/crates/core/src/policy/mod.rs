//! The agent: convolutional actor-critic with diagonal Gaussian actions.

pub mod checkpoint;
pub mod linalg;
pub mod network;
pub mod tape;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub use linalg::Real;
pub use network::{
    ForwardCache, HeadGradients, Layout, NetShape, PolicyNet, LOG_STD_MAX, LOG_STD_MIN,
};
pub use tape::{Gradients, Tape, Var};

use crate::env::RawAction;
use crate::error::Result;
use crate::render::FrameStack;

/// `ln(2 pi)`
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyOutput {
    pub mean: [f64; 2],
    /// Clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub log_std: [f64; 2],
    pub value: f64,
}

impl PolicyOutput {
    /// Summed diagonal Gaussian log-density of `raw`.
    pub fn log_prob(&self, raw: &[f64; 2]) -> f64 {
        (0..2)
            .map(|i| {
                let z = (raw[i] - self.mean[i]) / self.log_std[i].exp();
                -0.5 * z * z - self.log_std[i] - 0.5 * LN_2PI
            })
            .sum()
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|l| l + 0.5 * (LN_2PI + 1.0)).sum()
    }
}

/// Draws `raw ~ N(mean, exp(log_std))` per channel.
pub fn sample_action<G: Rng + ?Sized>(out: &PolicyOutput, rng: &mut G) -> (RawAction, f64) {
    let mut raw = [0.0; 2];
    for (i, r) in raw.iter_mut().enumerate() {
        let z: f64 = StandardNormal.sample(rng);
        *r = out.mean[i] + out.log_std[i].exp() * z;
    }
    (RawAction { raw }, out.log_prob(&raw))
}

/// The mean action, used for evaluation episodes.
pub fn deterministic_action(out: &PolicyOutput) -> RawAction {
    RawAction { raw: out.mean }
}

/// Copies stacks into a `[batch, 4, 84, 84]` network input.
pub fn batch_observations<'a, R: Real>(
    stacks: impl IntoIterator<Item = &'a FrameStack>,
    out: &mut Vec<R>,
) {
    out.clear();
    for st in stacks {
        let start = out.len();
        out.resize(
            start + crate::render::STACK_DEPTH * crate::render::FRAME_PIXELS,
            R::zero(),
        );
        st.write_into(&mut out[start..], |p| R::of(p as f64));
    }
}

impl<R: Real> PolicyNet<R> {
    /// Single-observation forward pass.
    pub fn forward(&self, obs: &FrameStack) -> Result<PolicyOutput> {
        let mut x = Vec::new();
        batch_observations(std::iter::once(obs), &mut x);
        Ok(self.forward_batch(&x, 1)?.0[0])
    }
}

/// Network outputs of a batch placed on a tape as leaves.
pub struct HeadVars<'t> {
    pub mean: Vec<[Var<'t>; 2]>,
    pub value: Vec<Var<'t>>,
    /// Raw log-std parameters (leaves) and their clamped values.
    pub log_std_raw: [Var<'t>; 2],
    pub log_std: [Var<'t>; 2],
}

impl<'t> HeadVars<'t> {
    pub fn new<R: Real>(tape: &'t Tape, net: &PolicyNet<R>, outputs: &[PolicyOutput]) -> Self {
        let raw = &net.params()[net.layout().log_std.clone()];
        let log_std_raw = [tape.var(raw[0].as_f64()), tape.var(raw[1].as_f64())];
        let log_std = log_std_raw.map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
        Self {
            mean: outputs
                .iter()
                .map(|o| [tape.var(o.mean[0]), tape.var(o.mean[1])])
                .collect(),
            value: outputs.iter().map(|o| tape.var(o.value)).collect(),
            log_std_raw,
            log_std,
        }
    }

    /// Diagonal Gaussian log-density of `raw` under sample `i`.
    pub fn log_prob(&self, tape: &'t Tape, i: usize, raw: &[f64; 2]) -> Var<'t> {
        let mut acc = tape.constant(-LN_2PI);
        for c in 0..2 {
            let z = (tape.constant(raw[c]) - self.mean[i][c]) / self.log_std[c].exp();
            acc = acc - z.square() * 0.5 - self.log_std[c];
        }
        acc
    }

    pub fn entropy(&self, tape: &'t Tape) -> Var<'t> {
        tape.sum(self.log_std.iter().map(|l| *l + 0.5 * (LN_2PI + 1.0)))
    }

    /// Pulls the output gradients off the tape.
    pub fn gradients(&self, g: &Gradients) -> Result<HeadGradients> {
        let mut mean = Vec::with_capacity(self.mean.len() * 2);
        for m in &self.mean {
            mean.push(g.wrt(m[0])?);
            mean.push(g.wrt(m[1])?);
        }
        let value = self
            .value
            .iter()
            .map(|v| g.wrt(*v))
            .collect::<Result<_>>()?;
        let log_std = self
            .log_std_raw
            .iter()
            .map(|v| g.wrt(*v))
            .collect::<Result<_>>()?;
        Ok(HeadGradients {
            mean,
            value,
            log_std,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_prob_at_mode() {
        let out = PolicyOutput {
            mean: [0.3, -1.0],
            log_std: [-0.5, 0.2],
            value: 0.0,
        };
        let want = -(-0.5 + 0.2) - LN_2PI;
        assert!((out.log_prob(&out.mean) - want).abs() < 1e-12);
    }

    #[test]
    fn deterministic_action_squashes_mean() {
        let mut out = PolicyOutput {
            mean: [0.3, -0.8],
            log_std: [0.0, 0.0],
            value: 0.0,
        };
        assert_eq!(deterministic_action(&out).squashed(), [0.3, -0.8]);
        out.mean = [4.0, 0.0];
        assert_eq!(deterministic_action(&out).squashed(), [1.0, 0.0]);
        assert_eq!(deterministic_action(&out), deterministic_action(&out));
    }

    #[test]
    fn tape_log_prob_matches_closed_form() {
        let out = PolicyOutput {
            mean: [0.1, 0.4],
            log_std: [-1.0, 0.5],
            value: 0.2,
        };
        let net = PolicyNet::<f64>::new(NetShape::miniature(), 0).unwrap();
        let tape = Tape::new();
        let mut hv = HeadVars::new(&tape, &net, &[out]);
        // Override the log-std leaves with the test values.
        hv.log_std_raw = [tape.var(-1.0), tape.var(0.5)];
        hv.log_std = hv.log_std_raw;
        let raw = [0.7, -0.2];
        let lp = hv.log_prob(&tape, 0, &raw);
        assert!((lp.value() - out.log_prob(&raw)).abs() < 1e-12);
        assert!((hv.entropy(&tape).value() - out.entropy()).abs() < 1e-12);
    }
}
