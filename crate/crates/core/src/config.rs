//! Run configuration (TOML), dotted-name overrides and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::ppo::PpoConfig;
use crate::track::TrackModel;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "gripline-run v1";
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything a training or evaluation run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// `oval`, `bundled`, or a track file path. Relative paths resolve
    /// against the directory of the file the config was loaded from.
    pub track: String,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            track: "oval".into(),
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.track.trim().is_empty() {
            return Err(Error::Config("track must not be empty".into()));
        }
        self.env.validate()?;
        self.ppo.validate()
    }

    /// Loads a TOML config, or the config snapshot of a run manifest when the
    /// file ends in `.json`. Relative track paths are made absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            RunManifest::from_json(&text)?.config
        } else {
            Self::from_toml_str(&text)?
        };
        if !is_builtin(&cfg.track) {
            let t = Path::new(&cfg.track);
            if t.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.track = base.join(t).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    /// Sets one field by dotted name, e.g. `ppo.max_steps=20000` or
    /// `env.vehicle.mu=1.0`. The value is read as TOML; bare words are
    /// strings. Unknown names are an error.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let mut root = toml::Value::try_from(&*self).expect("config serializes");
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = slot
                .as_table_mut()
                .and_then(|t| t.get_mut(part))
                .ok_or_else(|| Error::Config(format!("unknown config field `{key}`")))?;
        }
        *slot = coerce(slot, raw.trim())
            .ok_or_else(|| Error::Config(format!("`{key}`: cannot use `{}` here", raw.trim())))?;
        let next: Self = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn load_track(&self) -> Result<Arc<TrackModel>> {
        Ok(Arc::new(match self.track.as_str() {
            "oval" => TrackModel::oval(),
            "bundled" => TrackModel::bundled(),
            p => TrackModel::load(p)?,
        }))
    }
}

fn is_builtin(track: &str) -> bool {
    matches!(track, "oval" | "bundled")
}

fn coerce(old: &toml::Value, raw: &str) -> Option<toml::Value> {
    use toml::Value;
    let parsed = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"));
    let v = match (old, parsed) {
        (Value::Float(_), Some(Value::Integer(i))) => Value::Float(i as f64),
        (Value::String(_), Some(Value::String(s))) => Value::String(s),
        (Value::String(_), _) => Value::String(raw.to_string()),
        (_, Some(v)) => v,
        (_, None) => return None,
    };
    (std::mem::discriminant(&v) == std::mem::discriminant(old)).then_some(v)
}

/// Self-describing record of a run directory, written before any work starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    pub code_version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: Option<u64>,
    /// Output files relative to the run directory.
    pub artifacts: Vec<String>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            command: command.into(),
            code_version: CODE_VERSION.into(),
            seed: config.seed,
            config: config.clone(),
            started_at: unix_now(),
            finished_at: None,
            artifacts: Vec::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Config(format!(
                "manifest: unsupported format `{}`",
                m.format
            )));
        }
        m.config.validate()?;
        Ok(m)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let p = dir.join(MANIFEST_FILE);
        Self::from_json(&fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)
    }

    /// Writes `manifest.json` into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    pub fn finish(&mut self, artifacts: impl IntoIterator<Item = String>) {
        self.finished_at = Some(unix_now());
        self.artifacts.extend(artifacts);
        self.artifacts.sort();
        self.artifacts.dedup();
    }
}
