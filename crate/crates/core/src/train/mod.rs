//! Dataset splitting, losses and metrics, the training loop and evaluation.

mod data;
mod eval;
mod metrics;
mod trainer;

pub use data::{split_dataset, Dataset, Sample, Split};
pub use eval::{evaluate, EvalReport};
pub use metrics::{magnitude_consistency_loss, percentiles, relative_l2, ChannelErrors, Percentiles};
pub use trainer::{train, EpochRecord, MagnitudeLoss, Schedule, StopReason, TrainOutcome, TrainReport};
