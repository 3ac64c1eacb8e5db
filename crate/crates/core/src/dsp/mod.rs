//! Audio ingestion, compressed magnitude spectrograms and SNR-controlled
//! noise mixing.

mod mix;
mod stft;
mod wav;

pub use mix::{mix_at_snr, mix_components, Mixture};
pub use stft::{
    compress, fix_length, stft_magnitude, CropMode, FrameSpec, Spectrogram, Stft, WindowKind,
};
pub use wav::{load_wav, write_wav};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("audio file not found: {0}")]
    MissingFile(PathBuf),
    #[error("{path}: not a RIFF/WAVE file ({detail})")]
    NotWav { path: PathBuf, detail: String },
    #[error("{path}: unsupported encoding ({detail}); expected 16-bit integer PCM")]
    UnsupportedEncoding { path: PathBuf, detail: String },
    #[error("{path}: sample-rate mismatch: expected {expected} Hz, found {found} Hz")]
    SampleRateMismatch {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{path}: expected mono audio, found {found} channels")]
    ChannelCount { path: PathBuf, found: u16 },
    #[error("audio i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("waveform has {samples} samples, shorter than one {window}-sample window")]
    TooShort { samples: usize, window: usize },
    #[error("invalid frame spec: {0}")]
    InvalidFrameSpec(String),
    #[error("negative spectrogram entry {value} at bin {bin}, frame {frame}")]
    NegativeEntry {
        value: f64,
        bin: usize,
        frame: usize,
    },
    #[error("spectrogram has no frames")]
    EmptySpectrogram,
    #[error("{0} signal is silent; SNR is undefined")]
    Silent(&'static str),
    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("empty waveform")]
    EmptyWaveform,
}

/// Mono PCM audio with samples nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean squared amplitude.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }
}

pub(crate) fn mean_power(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64
}
