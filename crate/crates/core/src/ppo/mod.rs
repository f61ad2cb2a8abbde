//! Proximal policy optimisation over parallel racing environments.

pub mod adam;
pub mod config;
pub mod gae;
pub mod loss;
pub mod trainer;

pub use adam::{clip_grad_norm, Adam};
pub use config::PpoConfig;
pub use gae::{compute_gae, normalize};
pub use loss::{ppo_loss, LossCoefs, LossSample, LossStats};
pub use trainer::{
    evaluate, EpisodeSummary, EvalResult, Progress, RolloutBuffer, Trainer, UpdateStats,
    CHECKPOINT_DIR, EVAL_TELEMETRY, LEARNING_CURVE, POLICY_FILE, TRAIN_LOG, UPDATE_LOG,
};
