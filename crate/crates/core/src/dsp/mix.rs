use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{mean_power, DspError, Waveform};

/// A mixture together with the scaled noise that went into it.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub mixture: Waveform,
    /// `gain * noise_segment`, the exact additive component.
    pub noise: Vec<f64>,
    pub gain: f64,
    pub offset: usize,
}

/// Adds `noise` to `clean` so that the clean-to-noise power ratio equals
/// `snr_db`. The noise segment starts at a seeded random offset and wraps
/// around when shorter than `clean`. `snr_db = +inf` returns `clean`
/// unchanged.
pub fn mix_at_snr(
    clean: &Waveform,
    noise: &Waveform,
    snr_db: f64,
    offset_seed: u64,
) -> Result<Waveform, DspError> {
    Ok(mix_components(clean, noise, snr_db, offset_seed)?.mixture)
}

pub fn mix_components(
    clean: &Waveform,
    noise: &Waveform,
    snr_db: f64,
    offset_seed: u64,
) -> Result<Mixture, DspError> {
    if clean.sample_rate != noise.sample_rate {
        return Err(DspError::RateMismatch(clean.sample_rate, noise.sample_rate));
    }
    if clean.is_empty() {
        return Err(DspError::EmptyWaveform);
    }
    if snr_db == f64::INFINITY {
        return Ok(Mixture {
            mixture: clean.clone(),
            noise: vec![0.0; clean.len()],
            gain: 0.0,
            offset: 0,
        });
    }
    if noise.is_empty() {
        return Err(DspError::EmptyWaveform);
    }
    let p_clean = clean.power();
    if !(p_clean > 0.0) {
        return Err(DspError::Silent("clean"));
    }
    let offset = ChaCha8Rng::seed_from_u64(offset_seed).gen_range(0..noise.len());
    let segment: Vec<f64> = (0..clean.len())
        .map(|i| noise.samples[(offset + i) % noise.len()])
        .collect();
    let p_noise = mean_power(&segment);
    if !(p_noise > 0.0) {
        return Err(DspError::Silent("noise"));
    }
    let gain = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled: Vec<f64> = segment.iter().map(|n| gain * n).collect();
    let samples = clean
        .samples
        .iter()
        .zip(&scaled)
        .map(|(c, n)| c + n)
        .collect();
    Ok(Mixture {
        mixture: Waveform::new(samples, clean.sample_rate),
        noise: scaled,
        gain,
        offset,
    })
}
