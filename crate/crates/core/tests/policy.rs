use gripline_core::error::Error;
use gripline_core::policy::{
    checkpoint, sample_action, HeadGradients, HeadVars, NetShape, PolicyNet, PolicyOutput, Tape,
    LN_2PI,
};
use gripline_core::ppo::{ppo_loss, LossCoefs, LossSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_obs(shape: &NetShape, batch: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..batch * shape.input_len())
        .map(|_| rng.random::<f64>())
        .collect()
}

/// Net with non-trivial heads so every parameter influences the loss.
fn test_net(seed: u64) -> PolicyNet<f64> {
    let mut net = PolicyNet::<f64>::new(NetShape::miniature(), seed).unwrap();
    let l = net.layout().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let p = net.params_mut();
    for r in [
        l.mean_w, l.value_w, l.conv1_b, l.conv2_b, l.dense_b, l.mean_b, l.value_b,
    ] {
        for v in &mut p[r] {
            *v = rng.random_range(-0.3..0.3);
        }
    }
    p[l.log_std.start] = -0.4;
    p[l.log_std.start + 1] = 0.3;
    net
}

fn samples_for(outs: &[PolicyOutput], seed: u64) -> Vec<LossSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    outs.iter()
        .map(|o| {
            let raw = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            LossSample {
                raw,
                old_log_prob: o.log_prob(&raw) + rng.random_range(-0.05..0.05),
                old_value: o.value + rng.random_range(-0.05..0.05),
                advantage: rng.random_range(-1.0..1.0),
                ret: rng.random_range(-1.0..1.0),
            }
        })
        .collect()
}

fn loss_of(
    net: &PolicyNet<f64>,
    obs: &[f64],
    batch: usize,
    samples: &[LossSample],
    c: &LossCoefs,
) -> f64 {
    let (outs, _) = net.forward_batch(obs, batch).unwrap();
    let tape = Tape::new();
    let heads = HeadVars::new(&tape, net, &outs);
    ppo_loss(&tape, &heads, samples, c).0.value()
}

fn analytic(
    net: &PolicyNet<f64>,
    obs: &[f64],
    batch: usize,
    samples: &[LossSample],
    c: &LossCoefs,
) -> Vec<f64> {
    let (outs, cache) = net.forward_batch(obs, batch).unwrap();
    let tape = Tape::new();
    let heads = HeadVars::new(&tape, net, &outs);
    let (loss, _) = ppo_loss(&tape, &heads, samples, c);
    let g = tape.backward(loss).unwrap();
    net.backward(obs, &cache, &heads.gradients(&g).unwrap())
        .unwrap()
}

fn check_fd(
    net: &PolicyNet<f64>,
    obs: &[f64],
    batch: usize,
    samples: &[LossSample],
    c: &LossCoefs,
) {
    let grad = analytic(net, obs, batch, samples, c);
    let eps = 1e-4;
    let mut probe = net.clone();
    let mut checked = 0;
    for (name, range) in net.layout().named() {
        for i in range {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + eps;
            let up = loss_of(&probe, obs, batch, samples, c);
            probe.params_mut()[i] = orig - eps;
            let dn = loss_of(&probe, obs, batch, samples, c);
            probe.params_mut()[i] = orig;
            let fd = (up - dn) / (2.0 * eps);
            let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-4);
            assert!(
                err < 1e-3,
                "{name}[{i}]: analytic {} vs numeric {fd}",
                grad[i]
            );
            checked += 1;
        }
    }
    assert_eq!(checked, net.params().len());
}

#[test]
fn composite_loss_gradient_matches_finite_differences() {
    let net = test_net(3);
    let batch = 3;
    let obs = random_obs(net.shape(), batch, 11);
    let (outs, _) = net.forward_batch(&obs, batch).unwrap();
    let samples = samples_for(&outs, 5);
    let c = LossCoefs {
        clip_policy: 0.2,
        clip_value: 0.2,
        vf_coef: 0.5,
        entropy_coef: 0.01,
    };
    check_fd(&net, &obs, batch, &samples, &c);
}

#[test]
fn unclipped_surrogate_gradient_matches_finite_differences() {
    let net = test_net(8);
    let batch = 2;
    let obs = random_obs(net.shape(), batch, 21);
    let (outs, _) = net.forward_batch(&obs, batch).unwrap();
    let mut samples = samples_for(&outs, 9);
    for s in &mut samples {
        s.old_log_prob -= 0.5;
    }
    let c = LossCoefs {
        clip_policy: f64::INFINITY,
        clip_value: f64::INFINITY,
        vf_coef: 0.5,
        entropy_coef: 0.0,
    };
    check_fd(&net, &obs, batch, &samples, &c);
}

#[test]
fn sum_of_squared_parameters_gradient_is_twice_parameters() {
    let net = test_net(1);
    let tape = Tape::new();
    let vars: Vec<_> = net.params().iter().map(|p| tape.var(*p)).collect();
    let loss = tape.sum(vars.iter().map(|v| v.square()));
    let g = tape.backward(loss).unwrap();
    for (v, p) in vars.iter().zip(net.params()) {
        assert_eq!(g.wrt(*v).unwrap(), 2.0 * p);
    }
}

#[test]
fn actor_only_loss_leaves_value_head_untouched() {
    let net = test_net(4);
    let obs = random_obs(net.shape(), 2, 1);
    let (outs, cache) = net.forward_batch(&obs, 2).unwrap();
    let tape = Tape::new();
    let heads = HeadVars::new(&tape, &net, &outs);
    let raw = [0.2, -0.4];
    let loss = tape.sum((0..2).map(|i| heads.log_prob(&tape, i, &raw)));
    let g = tape.backward(loss).unwrap();
    let hg = heads.gradients(&g).unwrap();
    assert!(hg.value.iter().all(|v| *v == 0.0));
    let grad = net.backward(&obs, &cache, &hg).unwrap();
    let l = net.layout();
    assert!(grad[l.value_w.clone()].iter().all(|v| *v == 0.0));
    assert!(grad[l.value_b.clone()].iter().all(|v| *v == 0.0));
    assert!(grad[l.mean_w.clone()].iter().any(|v| *v != 0.0));
}

#[test]
fn zero_heads_give_zero_mean_and_value() {
    let mut net = PolicyNet::<f32>::new(NetShape::default(), 0).unwrap();
    net.zero_heads();
    let obs = vec![0.5f32; NetShape::default().input_len()];
    let (outs, _) = net.forward_batch(&obs, 1).unwrap();
    assert_eq!(outs[0].mean, [0.0, 0.0]);
    assert_eq!(outs[0].value, 0.0);
    assert_eq!(outs[0].log_std, [0.0, 0.0]);
}

#[test]
fn full_size_network_has_expected_parameter_count() {
    assert_eq!(NetShape::default().param_count(), 676_917);
    let net = PolicyNet::<f32>::new(NetShape::default(), 0).unwrap();
    assert_eq!(net.params().len(), 676_917);
}

#[test]
fn frame_order_matters() {
    let net = test_net(2);
    let sh = *net.shape();
    let obs = random_obs(&sh, 1, 3);
    let plane = sh.in_size * sh.in_size;
    let mut swapped = obs.clone();
    swapped[..plane].copy_from_slice(&obs[plane..2 * plane]);
    swapped[plane..2 * plane].copy_from_slice(&obs[..plane]);
    let a = net.forward_batch(&obs, 1).unwrap().0[0];
    let b = net.forward_batch(&swapped, 1).unwrap().0[0];
    assert_ne!(a.mean, b.mean);
}

#[test]
fn sampled_spread_matches_log_std() {
    let out = PolicyOutput {
        mean: [0.3, -0.2],
        log_std: [-1.0, 0.5],
        value: 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 100_000;
    let mut sum = [0.0; 2];
    let mut sq = [0.0; 2];
    for _ in 0..n {
        let (a, lp) = sample_action(&out, &mut rng);
        assert!((lp - out.log_prob(&a.raw)).abs() < 1e-12);
        for c in 0..2 {
            sum[c] += a.raw[c];
            sq[c] += a.raw[c] * a.raw[c];
        }
    }
    for c in 0..2 {
        let mean = sum[c] / n as f64;
        let std = (sq[c] / n as f64 - mean * mean).sqrt();
        let want = out.log_std[c].exp();
        assert!(
            (std - want).abs() / want < 0.02,
            "channel {c}: {std} vs {want}"
        );
        assert!((mean - out.mean[c]).abs() < 0.02);
    }
}

#[test]
fn log_std_at_floor_keeps_finite_densities() {
    let mut net = test_net(6);
    let l = net.layout().clone();
    net.params_mut()[l.log_std.clone()].fill(-9.0);
    let obs = random_obs(net.shape(), 1, 4);
    let out = net.forward_batch(&obs, 1).unwrap().0[0];
    assert_eq!(out.log_std, [-5.0, -5.0]);
    let far = [out.mean[0] + 0.1, out.mean[1] - 0.1];
    let lp = out.log_prob(&far);
    let z = 0.1 / (-5f64).exp();
    assert!((lp - 2.0 * (-0.5 * z * z + 5.0 - 0.5 * LN_2PI)).abs() < 1e-6 * lp.abs());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (a, lp) = sample_action(&out, &mut rng);
    assert!(lp.is_finite());
    assert!(a.squashed().iter().all(|v| v.is_finite()));
}

#[test]
fn raw_log_std_below_floor_gets_no_gradient() {
    let mut net = test_net(6);
    let l = net.layout().clone();
    net.params_mut()[l.log_std.start] = -7.0;
    let obs = random_obs(net.shape(), 1, 4);
    let (outs, cache) = net.forward_batch(&obs, 1).unwrap();
    let tape = Tape::new();
    let heads = HeadVars::new(&tape, &net, &outs);
    let g = tape.backward(heads.entropy(&tape)).unwrap();
    let grad = net
        .backward(&obs, &cache, &heads.gradients(&g).unwrap())
        .unwrap();
    assert_eq!(grad[l.log_std.start], 0.0);
    assert_eq!(grad[l.log_std.start + 1], 1.0);
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let net = PolicyNet::<f32>::new(NetShape::default(), 42).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.bin");
    checkpoint::save(&net, &path).unwrap();
    let back: PolicyNet<f32> = checkpoint::load(&path).unwrap();
    assert_eq!(net.params(), back.params());
    let obs = vec![0.25f32; NetShape::default().input_len()];
    let a = net.forward_batch(&obs, 1).unwrap().0;
    let b = back.forward_batch(&obs, 1).unwrap().0;
    assert_eq!(a, b);
}

#[test]
fn initialisation_is_seed_deterministic() {
    let a = PolicyNet::<f32>::new(NetShape::default(), 9).unwrap();
    let b = PolicyNet::<f32>::new(NetShape::default(), 9).unwrap();
    let c = PolicyNet::<f32>::new(NetShape::default(), 10).unwrap();
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
}

#[test]
fn backward_after_parameter_change_is_detached() {
    let mut net = test_net(0);
    let obs = random_obs(net.shape(), 1, 0);
    let (_, cache) = net.forward_batch(&obs, 1).unwrap();
    net.params_mut()[0] += 1.0;
    let up = HeadGradients {
        mean: vec![1.0, 1.0],
        value: vec![1.0],
        log_std: vec![0.0, 0.0],
    };
    assert!(matches!(
        net.backward(&obs, &cache, &up),
        Err(Error::DetachedGraph(_))
    ));
}

#[test]
fn f32_and_f64_forward_agree() {
    let net = test_net(12);
    let net32: PolicyNet<f32> = net.cast();
    let obs = random_obs(net.shape(), 2, 8);
    let obs32: Vec<f32> = obs.iter().map(|v| *v as f32).collect();
    let a = net.forward_batch(&obs, 2).unwrap().0;
    let b = net32.forward_batch(&obs32, 2).unwrap().0;
    for (x, y) in a.iter().zip(&b) {
        assert!((x.value - y.value).abs() < 1e-5);
        for c in 0..2 {
            assert!((x.mean[c] - y.mean[c]).abs() < 1e-5);
        }
    }
}
