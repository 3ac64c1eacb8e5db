//! Dataset ingestion, splits, synthetic data, training schedules,
//! evaluation runs and reports.

mod config;
mod evaluate;
mod features;
mod manifest;
mod noise;
mod pipeline;
mod report;
mod synth;
mod train;

pub use config::{
    derive_seed, Condition, DataSection, EnhancementSection, EvalSection, LabelMode, LabelsSection,
    RunConfig, SpeakerIdSection,
};
pub use evaluate::{evaluate_run, load_checkpoints, LoadedModels};
pub use features::FeatureExtractor;
pub use manifest::{load_manifest, split_dataset, DatasetManifest, ManifestRow, SplitSpec};
pub use noise::{NoiseBank, NoiseHalf, NoiseSegment};
pub use pipeline::{
    clean_features, load_waveforms, prepare, run_all, run_evaluate, run_train_enh, run_train_id,
    write_report, WorkDir,
};
pub use report::{
    emit_plot_data, mean_report, parse_plot_data, MetricsReport, PlotPoint, ReportRow,
};
pub use report::{Delta, RunMetadata};
pub use synth::{synth_dataset, SynthSpec, SynthSummary, VoiceParams, NOISE_KINDS};
pub use train::{
    epoch_means, initial_id_loss, label_training_set, train_enh, train_id, EnhOutcome, IdOutcome,
    LossRecord,
};

use thiserror::Error;

use crate::dsp::DspError;
use crate::kernel::{CheckpointError, KernelError};
use crate::mlt::LabelError;
use crate::models::ModelError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Divergence {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("config hash mismatch: {what} was produced by {found}, expected {expected}")]
    HashMismatch {
        what: String,
        expected: String,
        found: String,
    },
    #[error("frozen speaker-ID parameters changed during enhancement training")]
    FrozenParametersChanged,
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

impl HarnessError {
    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        HarnessError::Io(path.display().to_string(), err)
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::HashMismatch { .. } => 2,
            HarnessError::Data(_) | HarnessError::Dsp(_) | HarnessError::Label(_) => 3,
            HarnessError::Divergence { .. } => 4,
            HarnessError::Model(ModelError::Kernel(KernelError::NonFiniteGradient(_))) => 4,
            HarnessError::Model(ModelError::Config(_) | ModelError::Metadata(_)) => 2,
            HarnessError::Checkpoint(_) => 3,
            _ => 1,
        }
    }
}

impl From<KernelError> for HarnessError {
    fn from(e: KernelError) -> Self {
        HarnessError::Model(ModelError::Kernel(e))
    }
}
