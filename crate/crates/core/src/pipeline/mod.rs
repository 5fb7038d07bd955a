//! Training, checkpoints and closed-loop evaluation.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod train;

pub use checkpoint::{checkpoint_path, Checkpoint, Model, ModelSpec, TrainingInfo};
pub use config::{ModelKind, TrainConfig};
pub use eval::{
    compare, held_out_events, integrate_learned, rmse, write_comparison, ChannelRmse, Comparison, EvalReport,
    EvalSettings, EventTrace, Metric, ReportSeeds,
};
pub use train::{smooth, train, LossRecord, TrainOutcome, LOSS_HISTORY_FILE};
