use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{DspError, Waveform};
use crate::kernel::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hamming,
    Hann,
    Rectangular,
}

impl WindowKind {
    /// Symmetric window of `len` samples.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        if len == 1 {
            return vec![1.0];
        }
        let denom = (len - 1) as f64;
        (0..len)
            .map(|n| {
                let phase = 2.0 * PI * n as f64 / denom;
                match self {
                    WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
                    WindowKind::Hann => 0.5 - 0.5 * phase.cos(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

/// Framing and compression parameters of the spectral front end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameSpec {
    pub sample_rate: u32,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub fft_size: usize,
    pub window: WindowKind,
    pub compression_exponent: f64,
    pub target_frames: usize,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            window_ms: 25.0,
            hop_ms: 10.0,
            fft_size: 512,
            window: WindowKind::Hamming,
            compression_exponent: 0.3,
            target_frames: 298,
        }
    }
}

impl FrameSpec {
    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn window_len(&self) -> usize {
        (self.window_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.hop_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    /// `floor((len - window) / hop) + 1`, or `None` when `len` is shorter
    /// than one window.
    pub fn frame_count(&self, len: usize) -> Option<usize> {
        let win = self.window_len();
        (len >= win).then(|| (len - win) / self.hop_len() + 1)
    }

    pub fn validate(&self) -> Result<(), DspError> {
        let bad = |m: String| Err(DspError::InvalidFrameSpec(m));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if !(self.hop_ms > 0.0 && self.hop_ms <= self.window_ms) {
            return bad(format!(
                "need 0 < hop_ms <= window_ms, got {} / {}",
                self.hop_ms, self.window_ms
            ));
        }
        if self.hop_len() == 0 {
            return bad("hop is shorter than one sample".into());
        }
        if self.fft_size < 2 || self.fft_size % 2 != 0 {
            return bad(format!(
                "fft_size must be even and >= 2, got {}",
                self.fft_size
            ));
        }
        if self.window_len() > self.fft_size {
            return bad(format!(
                "window of {} samples exceeds fft_size {}",
                self.window_len(),
                self.fft_size
            ));
        }
        if !(self.compression_exponent > 0.0 && self.compression_exponent <= 1.0) {
            return bad(format!(
                "compression_exponent must be in (0, 1], got {}",
                self.compression_exponent
            ));
        }
        if self.target_frames == 0 {
            return bad("target_frames must be at least 1".into());
        }
        Ok(())
    }
}

/// Non-negative `n_bins x n_frames` matrix stored bin-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    values: Vec<f64>,
    n_bins: usize,
    n_frames: usize,
    pub spec: FrameSpec,
}

impl Spectrogram {
    pub fn new(
        values: Vec<f64>,
        n_bins: usize,
        n_frames: usize,
        spec: FrameSpec,
    ) -> Result<Self, DspError> {
        if n_frames == 0 {
            return Err(DspError::EmptySpectrogram);
        }
        if n_bins != spec.n_bins() || values.len() != n_bins * n_frames {
            return Err(DspError::InvalidFrameSpec(format!(
                "{} values do not form {n_bins} x {n_frames} under a {}-bin spec",
                values.len(),
                spec.n_bins()
            )));
        }
        Ok(Self {
            values,
            n_bins,
            n_frames,
            spec,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.values[bin * self.n_frames + frame]
    }

    pub fn frame(&self, frame: usize) -> Vec<f64> {
        (0..self.n_bins).map(|b| self.get(b, frame)).collect()
    }

    /// `[n_bins, n_frames]` tensor for the networks.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::new(
            vec![self.n_bins, self.n_frames],
            self.values.iter().map(|&v| T::of(v)).collect(),
        )
        .expect("spectrogram dimensions are positive")
    }

    fn with_frames(&self, frames: impl Iterator<Item = usize> + Clone) -> Self {
        let n_frames = frames.clone().count();
        let mut values = Vec::with_capacity(self.n_bins * n_frames);
        for b in 0..self.n_bins {
            let row = &self.values[b * self.n_frames..(b + 1) * self.n_frames];
            values.extend(frames.clone().map(|f| row[f]));
        }
        Self {
            values,
            n_bins: self.n_bins,
            n_frames,
            spec: self.spec,
        }
    }
}

/// Reusable FFT plan and window for one [`FrameSpec`].
pub struct Stft {
    spec: FrameSpec,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(spec: FrameSpec) -> Result<Self, DspError> {
        spec.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(spec.fft_size);
        Ok(Self {
            spec,
            window: spec.window.coefficients(spec.window_len()),
            fft,
        })
    }

    /// Magnitude spectrum of each windowed, zero-padded frame.
    pub fn magnitude(&self, wave: &Waveform) -> Result<Spectrogram, DspError> {
        let spec = self.spec;
        let win = spec.window_len();
        let hop = spec.hop_len();
        let n_frames = spec.frame_count(wave.len()).ok_or(DspError::TooShort {
            samples: wave.len(),
            window: win,
        })?;
        let n_bins = spec.n_bins();
        let mut values = vec![0.0; n_bins * n_frames];
        let mut buf = vec![Complex::new(0.0, 0.0); spec.fft_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for f in 0..n_frames {
            let frame = &wave.samples[f * hop..f * hop + win];
            for (slot, (&s, &w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
                *slot = Complex::new(s * w, 0.0);
            }
            buf[win..]
                .iter_mut()
                .for_each(|c| *c = Complex::new(0.0, 0.0));
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for b in 0..n_bins {
                values[b * n_frames + f] = buf[b].norm();
            }
        }
        Spectrogram::new(values, n_bins, n_frames, spec)
    }
}

pub fn stft_magnitude(wave: &Waveform, spec: FrameSpec) -> Result<Spectrogram, DspError> {
    Stft::new(spec)?.magnitude(wave)
}

/// Raises every entry to `exponent`.
pub fn compress(s: &Spectrogram, exponent: f64) -> Result<Spectrogram, DspError> {
    if !(exponent > 0.0 && exponent <= 1.0) {
        return Err(DspError::InvalidFrameSpec(format!(
            "compression exponent must be in (0, 1], got {exponent}"
        )));
    }
    if let Some(i) = s.values.iter().position(|&v| !(v >= 0.0)) {
        return Err(DspError::NegativeEntry {
            value: s.values[i],
            bin: i / s.n_frames,
            frame: i % s.n_frames,
        });
    }
    Ok(Spectrogram {
        values: s.values.iter().map(|v| v.powf(exponent)).collect(),
        ..s.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CropMode {
    TrainRandomCrop,
    EvalCenterCrop,
}

/// Brings `s` to exactly `target` frames. Longer inputs are cropped (random
/// seeded offset for training, centered for evaluation); shorter inputs are
/// tiled in order and the prefix kept.
pub fn fix_length(
    s: &Spectrogram,
    target: usize,
    mode: CropMode,
    seed: u64,
) -> Result<Spectrogram, DspError> {
    let n = s.n_frames;
    if n == 0 {
        return Err(DspError::EmptySpectrogram);
    }
    if target == 0 {
        return Err(DspError::InvalidFrameSpec(
            "target_frames must be at least 1".into(),
        ));
    }
    if n == target {
        return Ok(s.clone());
    }
    if n < target {
        return Ok(s.with_frames((0..target).map(move |i| i % n)));
    }
    let start = match mode {
        CropMode::EvalCenterCrop => (n - target) / 2,
        CropMode::TrainRandomCrop => ChaCha8Rng::seed_from_u64(seed).gen_range(0..=n - target),
    };
    Ok(s.with_frames(start..start + target))
}
