use std::fs;
use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use gripline_core::config::{RunConfig, RunManifest, MANIFEST_FILE};
use gripline_core::env::{outcome_label, RacingEnv, RawAction};
use gripline_core::lap_baseline::{compare_lap, qss_profile, qss_standing};
use gripline_core::policy::{checkpoint, PolicyNet};
use gripline_core::ppo::{evaluate, CHECKPOINT_DIR, LEARNING_CURVE, POLICY_FILE};
use gripline_core::render::Scene;
use gripline_core::telemetry::{export_svg_figure, EpisodeRecord, FigureOptions, LearningCurve};
use gripline_core::vehicle::GRAVITY;
use gripline_core::{run, verify, TrackModel};
use serde::Serialize;

use crate::exit::{CliError, CliResult, Code};
use crate::{
    BaselineArgs, Command, ConfigArgs, EvalArgs, PlotArgs, RenderDumpArgs, TrackInfoArgs,
    TrainArgs, VerifyArgs,
};

pub fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Baseline(a) => baseline(a),
        Command::Plot(a) => plot(a),
        Command::TrackInfo(a) => track_info(a),
        Command::RenderDump(a) => render_dump(a),
        Command::Verify(a) => verify_cmd(a),
    }
}

impl ConfigArgs {
    fn resolve(&self, base: Option<RunConfig>) -> CliResult<RunConfig> {
        let mut cfg = match (&self.config, base) {
            (Some(p), _) => RunConfig::load(p)?,
            (None, Some(b)) => b,
            (None, None) => RunConfig::default(),
        };
        for s in &self.set {
            cfg.set(s)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(t) = &self.track {
            cfg.track = t.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn track_tag(track: &str) -> String {
    Path::new(track)
        .file_stem()
        .map_or_else(|| track.to_string(), |s| s.to_string_lossy().into_owned())
}

fn load_track(name: &str) -> CliResult<Arc<TrackModel>> {
    let cfg = RunConfig {
        track: name.to_string(),
        ..RunConfig::default()
    };
    Ok(cfg.load_track()?)
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::new(Code::Io, format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("summary serializes");
    write_file(path, format!("{text}\n").as_bytes())
}

/// Opens an output directory with a fresh manifest.
fn start_output(dir: &Path, command: &str, cfg: &RunConfig) -> CliResult<RunManifest> {
    let snap = run::snapshot_config(dir, cfg)?;
    let m = RunManifest::new(command, &snap);
    m.write(dir)?;
    Ok(m)
}

fn finish_output(dir: &Path, mut m: RunManifest, artifacts: &[&str]) -> CliResult<()> {
    m.finish(artifacts.iter().map(|s| s.to_string()));
    m.write(dir)?;
    Ok(())
}

fn train(a: TrainArgs) -> CliResult<()> {
    let cfg = a.cfg.resolve(None)?;
    let out = a.out.unwrap_or_else(|| {
        PathBuf::from("runs").join(format!("{}-seed{}", track_tag(&cfg.track), cfg.seed))
    });
    println!("run directory {}", out.display());
    let quiet = a.quiet;
    let mut stdout = std::io::stdout();
    run::train(&out, &cfg, |p| {
        if !quiet {
            let s = p.stats;
            let _ = writeln!(
                stdout,
                "step {} update {} lr {:.3e} loss {:.4} kl {:.4} clip {:.3} entropy {:.3} episodes {}",
                p.steps_done,
                p.updates_done,
                s.lr,
                s.loss.total,
                s.loss.approx_kl,
                s.loss.clip_fraction,
                s.loss.entropy,
                p.episodes.len()
            );
        }
        if let Some(e) = p.eval {
            let _ = writeln!(
                stdout,
                "eval at step {}: distance {:.1} m, {}{}",
                p.steps_done,
                e.max_distance,
                outcome_label(e.termination),
                e.lap_time
                    .map_or(String::new(), |t| format!(", lap {t:.2} s"))
            );
        }
        ControlFlow::Continue(())
    })?;
    println!("done; manifest {}", out.join(MANIFEST_FILE).display());
    Ok(())
}

#[derive(Serialize)]
struct LapStats {
    checkpoint: String,
    track: String,
    outcome: &'static str,
    truncated: bool,
    steps: u32,
    total_reward: f64,
    max_distance: f64,
    lap_time: Option<f64>,
    qss_lap_time: f64,
    lap_time_ratio: Option<f64>,
    /// Time lost against the QSS profile at the end of the common distance.
    final_delta_t: Option<f64>,
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let (policy, run_dir) = if a.checkpoint.is_dir() {
        let p = a.checkpoint.join(CHECKPOINT_DIR).join(POLICY_FILE);
        (p, Some(a.checkpoint.clone()))
    } else {
        (a.checkpoint.clone(), None)
    };
    if !policy.is_file() {
        return Err(CliError::new(
            Code::Checkpoint,
            format!("missing checkpoint {}", policy.display()),
        ));
    }
    let base = match &run_dir {
        Some(d) if d.join(MANIFEST_FILE).exists() => Some(RunConfig::load(&d.join(MANIFEST_FILE))?),
        _ => None,
    };
    let cfg = a.cfg.resolve(base)?;
    let net: PolicyNet<f32> = checkpoint::load(&policy)?;
    let track = cfg.load_track()?;
    let mut env = RacingEnv::new(Arc::new(Scene::new(track.clone())), cfg.env.clone())?;
    let out = a.out.unwrap_or_else(|| match &run_dir {
        Some(d) => d.join("eval"),
        None => PathBuf::from("runs").join("eval"),
    });
    let manifest = start_output(&out, "eval", &cfg)?;
    let res = evaluate(
        &mut env,
        &net,
        a.max_steps.unwrap_or(cfg.ppo.eval_max_steps),
    )?;
    let finish = cfg
        .env
        .reward
        .finish_distance
        .unwrap_or(track.finish_distance());
    let reference = qss_standing(&track, cfg.env.vehicle.mu, &cfg.env.vehicle, 0.0, finish)?;
    let delta = compare_lap(&res.record.rows, &reference)
        .ok()
        .and_then(|d| d.last().map(|x| x.1));
    res.record.write_csv(out.join("telemetry.csv"))?;
    let curve = match &run_dir {
        Some(d) if d.join(LEARNING_CURVE).exists() => {
            Some(LearningCurve::read_csv(d.join(LEARNING_CURVE))?)
        }
        _ => None,
    };
    let opts = FigureOptions {
        mu_g: Some(cfg.env.vehicle.mu * GRAVITY),
        title: format!("{} evaluation", track.name()),
        ..FigureOptions::default()
    };
    let svg = export_svg_figure(
        &res.record,
        curve.as_ref().filter(|c| !c.is_empty()),
        Some(&track),
        &opts,
    )?;
    write_file(&out.join("figure.svg"), svg.as_bytes())?;
    let stats = LapStats {
        checkpoint: policy.display().to_string(),
        track: track.name().to_string(),
        outcome: outcome_label(res.termination),
        truncated: res.truncated,
        steps: res.steps,
        total_reward: res.total_reward,
        max_distance: res.max_distance,
        lap_time: res.lap_time,
        qss_lap_time: reference.lap_time,
        lap_time_ratio: res.lap_time.map(|t| t / reference.lap_time),
        final_delta_t: delta,
    };
    write_json(&out.join("lap.json"), &stats)?;
    println!(
        "{}: {} after {} steps, distance {:.1} m, reward {:.2}",
        stats.track, stats.outcome, stats.steps, stats.max_distance, stats.total_reward
    );
    match stats.lap_time {
        Some(t) => println!(
            "lap {t:.3} s, QSS {:.3} s, ratio {:.3}",
            reference.lap_time,
            t / reference.lap_time
        ),
        None => println!("no lap; QSS reference {:.3} s", reference.lap_time),
    }
    finish_output(&out, manifest, &["telemetry.csv", "figure.svg", "lap.json"])?;
    println!("wrote {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct BaselineSummary {
    track: String,
    mu: f64,
    kind: &'static str,
    distance: f64,
    lap_time: f64,
    max_gg_radius: f64,
}

fn baseline(a: BaselineArgs) -> CliResult<()> {
    let cfg = a.cfg.resolve(None)?;
    let track = cfg.load_track()?;
    let mu = a.mu.unwrap_or(cfg.env.vehicle.mu);
    let profile = if a.flying {
        qss_profile(&track, mu, &cfg.env.vehicle)?
    } else {
        let d = cfg
            .env
            .reward
            .finish_distance
            .unwrap_or(track.finish_distance());
        qss_standing(&track, mu, &cfg.env.vehicle, 0.0, d)?
    };
    let out = a.out.unwrap_or_else(|| {
        PathBuf::from("runs").join(format!("baseline-{}", track_tag(&cfg.track)))
    });
    let manifest = start_output(&out, "baseline", &cfg)?;
    write_file(&out.join("profile.csv"), profile.to_csv().as_bytes())?;
    let summary = BaselineSummary {
        track: track.name().to_string(),
        mu,
        kind: if a.flying { "flying" } else { "standing" },
        distance: profile.length(),
        lap_time: profile.lap_time,
        max_gg_radius: profile.max_gg_radius(),
    };
    write_json(&out.join("baseline.json"), &summary)?;
    finish_output(&out, manifest, &["profile.csv", "baseline.json"])?;
    println!(
        "{} {} lap over {:.1} m at mu {mu}: {:.3} s",
        summary.track, summary.kind, summary.distance, summary.lap_time
    );
    Ok(())
}

fn plot(a: PlotArgs) -> CliResult<()> {
    let rec = EpisodeRecord::read_csv(&a.telemetry)?;
    let curve = a.curve.as_ref().map(LearningCurve::read_csv).transpose()?;
    let track = a.track.as_deref().map(load_track).transpose()?;
    let opts = FigureOptions {
        mu_g: Some(a.mu * GRAVITY),
        title: a
            .telemetry
            .file_stem()
            .map_or_else(String::new, |s| s.to_string_lossy().into_owned()),
        ..FigureOptions::default()
    };
    let svg = export_svg_figure(&rec, curve.as_ref(), track.as_deref(), &opts)?;
    let out = a
        .out
        .unwrap_or_else(|| a.telemetry.parent().unwrap_or(Path::new(".")).to_path_buf());
    fs::create_dir_all(&out)
        .map_err(|e| CliError::new(Code::Io, format!("{}: {e}", out.display())))?;
    let name = format!(
        "{}.svg",
        a.telemetry
            .file_stem()
            .map_or("figure".into(), |s| s.to_string_lossy().into_owned())
    );
    write_file(&out.join(&name), svg.as_bytes())?;
    println!("wrote {}", out.join(name).display());
    Ok(())
}

#[derive(Serialize)]
struct TrackInfo {
    name: String,
    length: f64,
    samples: usize,
    spacing: f64,
    finish_distance: f64,
    half_width_min: f64,
    half_width_max: f64,
    curvature_min: f64,
    curvature_max: f64,
}

fn track_info(a: TrackInfoArgs) -> CliResult<()> {
    let t = load_track(&a.track)?;
    if a.json {
        let (wmin, wmax) = t.half_width_extrema();
        let (kmin, kmax) = t.curvature_extrema();
        let info = TrackInfo {
            name: t.name().to_string(),
            length: t.total_length(),
            samples: t.len(),
            spacing: t.spacing(),
            finish_distance: t.finish_distance(),
            half_width_min: wmin,
            half_width_max: wmax,
            curvature_min: kmin,
            curvature_max: kmax,
        };
        println!(
            "{}",
            serde_json::to_string_pretty(&info).expect("info serializes")
        );
    } else {
        print!("{}", t.summary());
    }
    Ok(())
}

fn render_dump(a: RenderDumpArgs) -> CliResult<()> {
    let cfg = a.cfg.resolve(None)?;
    let track = cfg.load_track()?;
    let out = a
        .out
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("frames-{}", track_tag(&cfg.track))));
    let manifest = start_output(&out, "render-dump", &cfg)?;
    let mut env = RacingEnv::new(Arc::new(Scene::new(track)), cfg.env.clone())?;
    let mut names = Vec::new();
    let mut write = |k: u32, env: &RacingEnv| -> CliResult<()> {
        let name = format!("frame_{k:04}.pgm");
        env.observation().newest().write_pgm(out.join(&name))?;
        names.push(name);
        Ok(())
    };
    env.reset();
    write(0, &env)?;
    for k in 1..=a.frames {
        let r = env.step(RawAction::new(a.steer, a.throttle))?;
        write(k, &env)?;
        if r.done() {
            println!(
                "episode ended after {k} steps ({})",
                outcome_label(r.termination)
            );
            break;
        }
    }
    let artifacts: Vec<&str> = names.iter().map(String::as_str).collect();
    finish_output(&out, manifest, &artifacts)?;
    println!("wrote {} frames to {}", names.len(), out.display());
    Ok(())
}

fn verify_cmd(a: VerifyArgs) -> CliResult<()> {
    let mut reports = Vec::new();
    for r in verify::quick_suite() {
        println!("{}", r.line());
        reports.push(r);
    }
    let long = if a.long {
        verify::long_suite(&a.runs, &mut |m| eprintln!("  {m}"))
    } else {
        verify::long_skipped("training-backed; run with --long")
    };
    for r in long {
        println!("{}", r.line());
        reports.push(r);
    }
    reports.sort_by_key(|r| r.id);
    if let Some(p) = &a.report {
        let text: String = reports.iter().map(|r| r.to_string()).collect();
        write_file(p, text.as_bytes())?;
    }
    let failed: Vec<u8> = reports
        .iter()
        .filter(|r| r.status == verify::Status::Fail)
        .map(|r| r.id)
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::new(
            Code::VerifyFailed,
            format!("criteria {failed:?} failed"),
        ))
    }
}
