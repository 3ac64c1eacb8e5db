use super::HarnessError;
use crate::dsp::{compress, fix_length, CropMode, FrameSpec, Spectrogram, Stft, Waveform};
use crate::kernel::{Real, Tensor};

/// Magnitude STFT, power-law compression and length fixing, as fed to the
/// networks.
pub struct FeatureExtractor {
    spec: FrameSpec,
    stft: Stft,
}

impl FeatureExtractor {
    pub fn new(spec: FrameSpec) -> Result<Self, HarnessError> {
        Ok(Self {
            stft: Stft::new(spec)?,
            spec,
        })
    }

    pub fn spec(&self) -> &FrameSpec {
        &self.spec
    }

    /// Compressed spectrogram of the whole waveform.
    pub fn compressed(&self, wave: &Waveform) -> Result<Spectrogram, HarnessError> {
        let mag = self.stft.magnitude(wave)?;
        Ok(compress(&mag, self.spec.compression_exponent)?)
    }

    /// Crops or tiles a compressed spectrogram to the target frame count.
    pub fn fixed<T: Real>(
        &self,
        s: &Spectrogram,
        mode: CropMode,
        seed: u64,
    ) -> Result<Tensor<T>, HarnessError> {
        Ok(fix_length(s, self.spec.target_frames, mode, seed)?.to_tensor())
    }

    pub fn features<T: Real>(
        &self,
        wave: &Waveform,
        mode: CropMode,
        seed: u64,
    ) -> Result<Tensor<T>, HarnessError> {
        self.fixed(&self.compressed(wave)?, mode, seed)
    }
}
