//! The ratio-mask enhancement network, the 1-D convolutional speaker-ID
//! network, and their composition.

mod enhancement;
mod speaker_id;

pub use enhancement::{EnhOutput, EnhancementNet, EnhancementNetConfig, ENHANCEMENT_LAYERS};
pub use speaker_id::{SidOutput, SpeakerIdNet, SpeakerIdNetConfig, SID_KERNELS, SID_STRIDES};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{CheckpointError, KernelError, Real, Tape, Tensor, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
}

/// Metadata block written into every network checkpoint so it can be
/// rebuilt without the run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "network", rename_all = "snake_case")]
pub enum NetworkMeta {
    Enhancement(EnhancementNetConfig),
    SpeakerId(SpeakerIdNetConfig),
}

impl NetworkMeta {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        serde_json::from_str(s).map_err(|e| ModelError::Metadata(e.to_string()))
    }
}

pub struct ComposedOutput {
    pub mask: Var,
    pub enhanced: Var,
    pub sid: SidOutput,
}

/// Enhancement followed by identification on a `[bins, frames]` input.
/// Gradients flow back through the mask into the enhancement network.
pub fn compose<'a, T: Real>(
    enh: &'a EnhancementNet<T>,
    sid: &'a SpeakerIdNet<T>,
    tape: &mut Tape<'a, T>,
    input: Tensor<T>,
) -> Result<ComposedOutput, ModelError> {
    let shape = input.shape().to_vec();
    if shape.len() != 2 || shape[0] != sid.config().n_bins {
        return Err(ModelError::Config(format!(
            "composed input {shape:?} does not match the speaker-ID net's {} bins",
            sid.config().n_bins
        )));
    }
    let x = tape.input(input.reshape(&[1, shape[0], shape[1]])?);
    let EnhOutput { mask, enhanced } = enh.forward(tape, x)?;
    let flat = tape.reshape(enhanced, &shape)?;
    let sid_out = sid.forward(tape, flat)?;
    Ok(ComposedOutput {
        mask,
        enhanced,
        sid: sid_out,
    })
}
