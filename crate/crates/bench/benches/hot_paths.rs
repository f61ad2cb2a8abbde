use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use gripline_core::env::{EnvConfig, RacingEnv, RawAction};
use gripline_core::policy::{batch_observations, NetShape, PolicyNet};
use gripline_core::render::Scene;
use gripline_core::vehicle::{
    physics_step, ControlInputs, VehicleParams, VehicleState, PHYSICS_DT,
};
use gripline_core::TrackModel;

fn physics(c: &mut Criterion) {
    let p = VehicleParams::default();
    let mut s = VehicleState::default();
    s.vx = 30.0;
    s.wheel_omega = [30.0 / p.wheel_radius; 4];
    let inputs = ControlInputs::new(0.2, 0.4);
    c.bench_function("physics_step", |b| {
        b.iter(|| physics_step(black_box(&s), inputs, &p, PHYSICS_DT).unwrap())
    });
}

fn render(c: &mut Criterion) {
    let scene = Scene::new(Arc::new(TrackModel::bundled()));
    let mut s = VehicleState::default();
    let (x, y, yaw) = scene.track().pose_at(700.0, 1.0);
    s.x = x;
    s.y = y;
    s.yaw = yaw;
    c.bench_function("render_frame", |b| b.iter(|| scene.render(black_box(&s))));
}

fn env_step(c: &mut Criterion) {
    let scene = Arc::new(Scene::new(Arc::new(TrackModel::oval())));
    let mut env = RacingEnv::new(scene, EnvConfig::default()).unwrap();
    env.reset();
    c.bench_function("env_step", |b| {
        b.iter(|| {
            if env.is_done() {
                env.reset();
            }
            env.step(RawAction::new(0.0, 0.5)).unwrap()
        })
    });
}

fn forward(c: &mut Criterion) {
    let net = PolicyNet::<f32>::new(NetShape::default(), 0).unwrap();
    let scene = Arc::new(Scene::new(Arc::new(TrackModel::oval())));
    let mut env = RacingEnv::new(scene, EnvConfig::default()).unwrap();
    let obs = env.reset();
    let mut group = c.benchmark_group("policy_forward");
    for batch in [1usize, 24] {
        let mut flat = Vec::new();
        batch_observations(std::iter::repeat_n(&obs, batch), &mut flat);
        group.bench_function(format!("batch{batch}"), |b| {
            b.iter(|| net.forward_batch(black_box(&flat), batch).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, physics, render, env_step, forward);
criterion_main!(benches);
