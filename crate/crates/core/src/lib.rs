pub mod config;
pub mod env;
pub mod error;
pub mod lap_baseline;
pub mod policy;
pub mod ppo;
pub mod proving_ground;
pub mod render;
pub mod run;
pub mod telemetry;
pub mod track;
pub mod vehicle;
pub mod verify;

pub use config::{RunConfig, RunManifest};
pub use error::{Error, Result};
pub use track::{TrackModel, TrackProjection};
