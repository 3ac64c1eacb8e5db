use std::collections::BTreeMap;
use std::ops::Range;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::dsp::{load_wav, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseHalf {
    /// Mixed into training utterances.
    Train,
    /// Mixed into test utterances.
    Test,
}

#[derive(Debug, Clone)]
pub struct NoiseSegment {
    pub train: Range<usize>,
    pub test: Range<usize>,
}

/// Named noise recordings, each cut into a train half and a test half.
#[derive(Debug, Clone, Default)]
pub struct NoiseBank {
    noises: BTreeMap<String, (Waveform, NoiseSegment)>,
}

impl NoiseBank {
    /// Splits each recording at its midpoint. Which half is used for
    /// training is drawn per noise from `halving_seed`.
    pub fn new(
        noises: BTreeMap<String, Waveform>,
        halving_seed: u64,
    ) -> Result<Self, HarnessError> {
        let mut out = BTreeMap::new();
        for (name, wave) in noises {
            if wave.len() < 2 {
                return Err(HarnessError::Data(format!(
                    "noise `{name}` is too short to split"
                )));
            }
            let mid = wave.len() / 2;
            let (a, b) = (0..mid, mid..wave.len());
            let first_is_train = {
                let mut h = Sha256::new();
                h.update(halving_seed.to_le_bytes());
                h.update(name.as_bytes());
                h.finalize()[0] & 1 == 0
            };
            let seg = if first_is_train {
                NoiseSegment { train: a, test: b }
            } else {
                NoiseSegment { train: b, test: a }
            };
            assert!(seg.train.end <= seg.test.start || seg.test.end <= seg.train.start);
            out.insert(name, (wave, seg));
        }
        Ok(Self { noises: out })
    }

    pub fn load(
        files: &BTreeMap<String, PathBuf>,
        sample_rate: u32,
        halving_seed: u64,
    ) -> Result<Self, HarnessError> {
        let mut noises = BTreeMap::new();
        for (name, path) in files {
            noises.insert(name.clone(), load_wav(path, sample_rate)?);
        }
        Self::new(noises, halving_seed)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.noises.keys().map(String::as_str)
    }

    pub fn segment(&self, name: &str) -> Option<&NoiseSegment> {
        self.noises.get(name).map(|(_, s)| s)
    }

    /// The samples of one half of a noise, as its own waveform.
    pub fn half(&self, name: &str, half: NoiseHalf) -> Result<Waveform, HarnessError> {
        let (wave, seg) = self.noises.get(name).ok_or_else(|| {
            HarnessError::Data(format!("noise `{name}` is not in the noise bank"))
        })?;
        let range = match half {
            NoiseHalf::Train => seg.train.clone(),
            NoiseHalf::Test => seg.test.clone(),
        };
        Ok(Waveform::new(
            wave.samples[range].to_vec(),
            wave.sample_rate,
        ))
    }
}
