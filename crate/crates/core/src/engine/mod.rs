//! The alternating deep-clustering loop: cluster features, route labels, train.

mod run;
mod sampler;
mod train;

pub use run::{
    bootstrap_encoders, run_deep_clustering, run_deep_clustering_with, DcIterationRecord, DcRunResult,
    EncoderRecord, FitSummary,
};
pub use sampler::{make_epoch_sampler, HoldoutSplit};
pub use train::{extract_features, train_on_pseudo_labels, TrainOutcome};
pub(crate) use train::{predict, train_rows};
