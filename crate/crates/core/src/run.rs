//! Run directories: manifest first, then training with resume.

use std::fs;
use std::ops::ControlFlow;
use std::path::Path;

use crate::config::{RunConfig, RunManifest, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::ppo::{Progress, Trainer, CHECKPOINT_DIR, LEARNING_CURVE, TRAIN_LOG, UPDATE_LOG};

/// Name of the copied track file inside a run directory.
pub const TRACK_COPY: &str = "track.trk";

/// Copies a file-based track into `dir` and returns the config as it must
/// be recorded there. Built-in tracks are recorded by name.
pub fn snapshot_config(dir: &Path, cfg: &RunConfig) -> Result<RunConfig> {
    let mut snap = cfg.clone();
    if matches!(cfg.track.as_str(), "oval" | "bundled") {
        return Ok(snap);
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let src = Path::new(&cfg.track);
    let dst = dir.join(TRACK_COPY);
    let bytes = fs::read(src).map_err(|e| Error::io(src, e))?;
    match fs::read(&dst) {
        Ok(old) if old == bytes => {}
        Ok(_) if dir.join(MANIFEST_FILE).exists() => {
            return Err(Error::Config(format!(
                "{} differs from the run's track",
                src.display()
            )));
        }
        _ => fs::write(&dst, &bytes).map_err(|e| Error::io(&dst, e))?,
    }
    snap.track = TRACK_COPY.into();
    Ok(snap)
}

/// Writes the manifest for a new run, or checks that an existing run in
/// `dir` was started with the same config.
pub fn open_run(dir: &Path, command: &str, cfg: &RunConfig) -> Result<RunManifest> {
    let snap = snapshot_config(dir, cfg)?;
    if dir.join(MANIFEST_FILE).exists() {
        let m = RunManifest::read(dir)?;
        if m.config != snap {
            return Err(Error::Config(format!(
                "{} belongs to a run with a different config",
                dir.display()
            )));
        }
        return Ok(m);
    }
    let m = RunManifest::new(command, &snap);
    m.write(dir)?;
    Ok(m)
}

/// Trains into `dir`, resuming from its checkpoint when one exists. A run
/// that already reached `max_steps` returns immediately.
pub fn train(
    dir: &Path,
    cfg: &RunConfig,
    on_progress: impl FnMut(&Progress<'_>) -> ControlFlow<()>,
) -> Result<RunManifest> {
    let mut manifest = open_run(dir, "train", cfg)?;
    let mut trainer = Trainer::new(
        cfg.ppo.clone(),
        cfg.env.clone(),
        cfg.load_track()?,
        cfg.seed,
    )?;
    trainer.run(dir, on_progress)?;
    if trainer.steps_done() >= cfg.ppo.max_steps && manifest.finished_at.is_none() {
        manifest.finish(
            [
                TRAIN_LOG,
                UPDATE_LOG,
                LEARNING_CURVE,
                CHECKPOINT_DIR,
                crate::ppo::EVAL_TELEMETRY,
            ]
            .into_iter()
            .map(String::from),
        );
        manifest.write(dir)?;
    }
    Ok(manifest)
}
