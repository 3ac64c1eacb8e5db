use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::derive_seed;
use super::manifest::{load_manifest, write_rows, DatasetManifest, ManifestRow};
use super::HarnessError;
use crate::dsp::{write_wav, Waveform};

pub const NOISE_KINDS: [&str; 5] = ["white", "babble", "volvo", "factory", "gun"];

const F0_BASE_HZ: f64 = 90.0;
const F0_RATIO: f64 = 1.04;
const F0_JITTER: f64 = 0.012;
const MAX_HARMONIC_HZ: f64 = 7500.0;
const TABLE_LEN: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_speakers: usize,
    pub utts_per_speaker: usize,
    pub duration_s: f64,
    pub seed: u64,
    pub sample_rate: u32,
    pub noise_duration_s: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_speakers: 20,
            utts_per_speaker: 40,
            duration_s: 3.0,
            seed: 1,
            sample_rate: 16000,
            noise_duration_s: 20.0,
        }
    }
}

/// Fixed per-speaker generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceParams {
    pub speaker: String,
    pub f0_hz: f64,
    /// Relative gain of harmonics 1, 2, ...
    pub harmonic_gains: Vec<f64>,
    /// `(center Hz, bandwidth Hz, gain)` of the envelope peaks.
    pub formants: Vec<(f64, f64, f64)>,
}

impl VoiceParams {
    fn random(speaker: String, f0_hz: f64, rng: &mut impl Rng) -> Self {
        let tilt = rng.gen_range(0.6..1.4);
        let n = (MAX_HARMONIC_HZ / f0_hz).floor().max(1.0) as usize;
        let harmonic_gains = (1..=n)
            .map(|h| (h as f64).powf(-tilt) * rng.gen_range(0.5..1.5))
            .collect();
        let formants = [(300.0, 900.0), (900.0, 2500.0), (2200.0, 3800.0)]
            .iter()
            .map(|&(lo, hi)| {
                (
                    rng.gen_range(lo..hi),
                    rng.gen_range(80.0..250.0),
                    rng.gen_range(0.5..1.0),
                )
            })
            .collect();
        Self {
            speaker,
            f0_hz,
            harmonic_gains,
            formants,
        }
    }

    fn envelope(&self, freq: f64) -> f64 {
        0.05 + self
            .formants
            .iter()
            .map(|&(c, bw, g)| g * (-(freq - c).powi(2) / (2.0 * bw * bw)).exp())
            .sum::<f64>()
    }

    /// One utterance: jittered pitch with slow vibrato, random harmonic
    /// phases, a syllable-rate amplitude envelope and a low noise floor.
    fn utterance(&self, samples: usize, sample_rate: u32, rng: &mut impl Rng) -> Vec<f64> {
        let sr = sample_rate as f64;
        let f0 = self.f0_hz * (1.0 + rng.gen_range(-F0_JITTER..F0_JITTER));
        let table = self.wavetable(f0, rng);
        let (vib_rate, vib_phase) = (rng.gen_range(3.0..6.0), rng.gen_range(0.0..2.0 * PI));
        let (syl_rate, syl_phase) = (rng.gen_range(2.0..4.0), rng.gen_range(0.0..PI));
        let level = rng.gen_range(0.035..0.07);
        let mut theta = rng.gen_range(0.0..2.0 * PI);
        let mut out = Vec::with_capacity(samples);
        for n in 0..samples {
            let t = n as f64 / sr;
            let f = f0 * (1.0 + 0.005 * (2.0 * PI * vib_rate * t + vib_phase).sin());
            theta = (theta + 2.0 * PI * f / sr) % (2.0 * PI);
            let pos = theta / (2.0 * PI) * TABLE_LEN as f64;
            let (i, frac) = (pos.floor() as usize % TABLE_LEN, pos.fract());
            let v = table[i] * (1.0 - frac) + table[(i + 1) % TABLE_LEN] * frac;
            let amp = 0.55 + 0.45 * (PI * syl_rate * t + syl_phase).sin().abs();
            let floor: f64 = rng.sample(StandardNormal);
            out.push(level * (amp * v + 0.01 * floor));
        }
        out
    }

    /// One pitch period with unit RMS.
    fn wavetable(&self, f0: f64, rng: &mut impl Rng) -> Vec<f64> {
        let comps: Vec<(f64, f64, f64)> = self
            .harmonic_gains
            .iter()
            .enumerate()
            .map(|(k, g)| {
                let h = (k + 1) as f64;
                (h, g * self.envelope(h * f0), rng.gen_range(0.0..2.0 * PI))
            })
            .take_while(|&(h, _, _)| h * f0 < MAX_HARMONIC_HZ)
            .collect();
        let mut table: Vec<f64> = (0..TABLE_LEN)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / TABLE_LEN as f64;
                comps
                    .iter()
                    .map(|&(h, g, ph)| g * (h * th + ph).sin())
                    .sum()
            })
            .collect();
        let rms = (table.iter().map(|v| v * v).sum::<f64>() / TABLE_LEN as f64).sqrt();
        table.iter_mut().for_each(|v| *v /= rms.max(1e-12));
        table
    }
}

#[derive(Debug, Clone)]
pub struct SynthSummary {
    pub manifest: DatasetManifest,
    pub manifest_path: PathBuf,
    pub voices: Vec<VoiceParams>,
    pub noise_files: BTreeMap<String, PathBuf>,
}

/// Writes `wav/<speaker>/<utt>.wav`, `noise/<kind>.wav`, `manifest.csv`
/// (paths relative to `out_dir`) and `voices.json`.
pub fn synth_dataset(
    spec: &SynthSpec,
    out_dir: impl AsRef<Path>,
) -> Result<SynthSummary, HarnessError> {
    let out = out_dir.as_ref();
    if spec.num_speakers < 2 || spec.utts_per_speaker < 2 {
        return Err(HarnessError::Config(
            "synthetic data needs at least 2 speakers and 2 utterances each".into(),
        ));
    }
    if !(spec.duration_s > 0.0 && spec.noise_duration_s > 0.0) {
        return Err(HarnessError::Config("durations must be positive".into()));
    }
    let voices = speaker_voices(spec);
    let samples = (spec.duration_s * spec.sample_rate as f64).round() as usize;
    let width = spec.utts_per_speaker.to_string().len().max(3);

    let mut rows = Vec::new();
    for (s, v) in voices.iter().enumerate() {
        let dir = out.join("wav").join(&v.speaker);
        std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        for u in 0..spec.utts_per_speaker {
            let utt_id = format!("{}_u{u:0width$}", v.speaker);
            rows.push((
                s,
                u,
                ManifestRow {
                    wav_path: PathBuf::from("wav")
                        .join(&v.speaker)
                        .join(format!("{utt_id}.wav")),
                    utt_id,
                    speaker: v.speaker.clone(),
                },
            ));
        }
    }
    rows.par_iter().try_for_each(|(s, u, row)| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &format!("utt/{s}/{u}")));
        let wave = Waveform::new(
            voices[*s].utterance(samples, spec.sample_rate, &mut rng),
            spec.sample_rate,
        );
        write_wav(out.join(&row.wav_path), &wave).map_err(HarnessError::from)
    })?;
    let rows: Vec<ManifestRow> = rows.into_iter().map(|(_, _, r)| r).collect();
    let manifest_path = out.join("manifest.csv");
    write_rows(&manifest_path, &rows)?;

    let noise_dir = out.join("noise");
    std::fs::create_dir_all(&noise_dir).map_err(|e| HarnessError::io(&noise_dir, e))?;
    let mut noise_files = BTreeMap::new();
    for kind in NOISE_KINDS {
        let wave = synth_noise(kind, spec)?;
        let path = noise_dir.join(format!("{kind}.wav"));
        write_wav(&path, &wave)?;
        noise_files.insert(kind.to_string(), path);
    }

    let voices_path = out.join("voices.json");
    let json = serde_json::to_string_pretty(&voices).expect("voices serialize");
    std::fs::write(&voices_path, json).map_err(|e| HarnessError::io(&voices_path, e))?;

    Ok(SynthSummary {
        manifest: load_manifest(&manifest_path)?,
        manifest_path,
        voices,
        noise_files,
    })
}

/// Speakers take F0 slots on a geometric grid in a seeded order, so any
/// two fundamentals differ by at least `F0_RATIO`.
fn speaker_voices(spec: &SynthSpec) -> Vec<VoiceParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "voices"));
    let mut slots: Vec<usize> = (0..spec.num_speakers).collect();
    slots.shuffle(&mut rng);
    let width = (spec.num_speakers - 1).to_string().len().max(2);
    slots
        .iter()
        .enumerate()
        .map(|(s, &slot)| {
            let f0 = F0_BASE_HZ * F0_RATIO.powi(slot as i32);
            VoiceParams::random(format!("spk{s:0width$}"), f0, &mut rng)
        })
        .collect()
}

fn synth_noise(kind: &str, spec: &SynthSpec) -> Result<Waveform, HarnessError> {
    let sr = spec.sample_rate as f64;
    let n = (spec.noise_duration_s * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &format!("noise/{kind}")));
    let mut gauss = || -> f64 { rng.sample(StandardNormal) };
    let mut x: Vec<f64> = match kind {
        "white" => (0..n).map(|_| gauss()).collect(),
        "volvo" => {
            let mut y = 0.0;
            (0..n)
                .map(|_| {
                    y = 0.995 * y + gauss();
                    y
                })
                .collect()
        }
        "factory" => {
            let period = (0.4 * sr) as usize;
            let mut lp = 0.0;
            (0..n)
                .map(|i| {
                    lp = 0.7 * lp + 0.3 * gauss();
                    let k = i % period;
                    let clank = if k < (0.05 * sr) as usize {
                        4.0 * (-(k as f64) / (0.01 * sr)).exp()
                            * (2.0 * PI * 1200.0 * k as f64 / sr).sin()
                    } else {
                        0.0
                    };
                    lp + clank
                })
                .collect()
        }
        "gun" => {
            let mut level: f64 = 0.0;
            (0..n)
                .map(|_| {
                    if rng.gen_bool(2.0 / sr) {
                        level = 1.0;
                    }
                    level *= (-1.0 / (0.03 * sr)).exp();
                    let w: f64 = rng.sample(StandardNormal);
                    w * (0.05 + level)
                })
                .collect()
        }
        "babble" => {
            let mut mix = vec![0.0; n];
            for k in 0..6 {
                let f0 = rng.gen_range(95.0..230.0);
                let voice = VoiceParams::random(format!("babble{k}"), f0, &mut rng);
                let u = voice.utterance(n, spec.sample_rate, &mut rng);
                mix.iter_mut().zip(u).for_each(|(m, v)| *m += v);
            }
            mix
        }
        other => {
            return Err(HarnessError::Config(format!(
                "unknown noise kind `{other}`"
            )))
        }
    };
    let mean = x.iter().sum::<f64>() / n as f64;
    let rms = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let peak = x.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let gain = (0.1 / rms).min(0.9 / peak);
    x.iter_mut().for_each(|v| *v = (*v - mean) * gain);
    Ok(Waveform::new(x, spec.sample_rate))
}
