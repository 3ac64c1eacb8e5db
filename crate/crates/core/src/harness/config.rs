use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::dsp::FrameSpec;
use crate::kernel::OptimizerSettings;
use crate::mlt::{LabelScheme, TopKMode};
use crate::models::EnhancementNetConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub manifest: PathBuf,
    pub work_dir: PathBuf,
    pub seed: u64,
    pub train_fraction: f64,
    pub noise_halving_seed: u64,
    /// Noise name to WAV file.
    pub noise: BTreeMap<String, PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("data/manifest.csv"),
            work_dir: PathBuf::from("work"),
            seed: 1,
            train_fraction: 0.75,
            noise_halving_seed: 7,
            noise: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// One label per speaker.
    Baseline,
    /// Speaker labels expanded over `subgroups`.
    Mlt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelsSection {
    pub mode: LabelMode,
    pub subgroups: usize,
}

impl Default for LabelsSection {
    fn default() -> Self {
        Self {
            mode: LabelMode::Mlt,
            subgroups: 2,
        }
    }
}

impl LabelsSection {
    pub fn scheme(&self, speakers: usize) -> Result<LabelScheme, HarnessError> {
        let n = match self.mode {
            LabelMode::Baseline => 1,
            LabelMode::Mlt => self.subgroups,
        };
        LabelScheme::new(speakers, n).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Short name used in reports, e.g. `baseline` or `mlt-n2`.
    pub fn model_name(&self) -> String {
        match self.mode {
            LabelMode::Baseline => "baseline".into(),
            LabelMode::Mlt => format!("mlt-n{}", self.subgroups),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeakerIdSection {
    pub conv_filters: [usize; 4],
    pub fc_dims: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for SpeakerIdSection {
    fn default() -> Self {
        Self {
            conv_filters: [1000, 1000, 1000, 1500],
            fc_dims: vec![1500],
            epochs: 50,
            batch_size: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhancementSection {
    #[serde(flatten)]
    pub net: EnhancementNetConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Noise types mixed into the training utterances, cycled per utterance.
    pub train_noise: Vec<String>,
    pub snr_db: f64,
    /// Use at most this many training utterances per speaker (0 = all).
    pub max_utterances_per_speaker: usize,
}

impl Default for EnhancementSection {
    fn default() -> Self {
        Self {
            net: EnhancementNetConfig::default(),
            epochs: 10,
            batch_size: 8,
            train_noise: vec!["white".into()],
            snr_db: 10.0,
            max_utterances_per_speaker: 0,
        }
    }
}

/// One evaluation condition: clean (`noise` absent) or a named noise at an
/// SNR, with or without the enhancement front end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    #[serde(default)]
    pub noise: Option<String>,
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub enhancement: bool,
}

impl Condition {
    pub fn clean(enhancement: bool) -> Self {
        Self {
            noise: None,
            snr_db: None,
            enhancement,
        }
    }

    pub fn noisy(noise: &str, snr_db: f64, enhancement: bool) -> Self {
        Self {
            noise: Some(noise.into()),
            snr_db: Some(snr_db),
            enhancement,
        }
    }

    pub fn noise_label(&self) -> &str {
        self.noise.as_deref().unwrap_or("clean")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub conditions: Vec<Condition>,
    pub top_k: usize,
    pub topk_mode: TopKMode,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            conditions: vec![Condition::clean(false)],
            top_k: 5,
            topk_mode: TopKMode::Alias,
        }
    }
}

/// Full run configuration, read from a TOML file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub features: FrameSpec,
    pub labels: LabelsSection,
    pub speaker_id: SpeakerIdSection,
    pub enhancement: EnhancementSection,
    pub optimizer: OptimizerSettings,
    pub eval: EvalSection,
}

impl RunConfig {
    /// Small networks and short schedules sized for a single CPU core.
    pub fn toy() -> Self {
        Self {
            speaker_id: SpeakerIdSection {
                conv_filters: [32, 32, 32, 64],
                fc_dims: vec![1500],
                epochs: 12,
                batch_size: 16,
            },
            enhancement: EnhancementSection {
                net: EnhancementNetConfig {
                    channels: 4,
                    mask_bias_init: 0.0,
                },
                epochs: 4,
                batch_size: 8,
                train_noise: vec!["white".into()],
                snr_db: 10.0,
                max_utterances_per_speaker: 8,
            },
            ..Self::default()
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Makes relative paths relative to `base` (the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.manifest);
        fix(&mut self.data.work_dir);
        self.data.noise.values_mut().for_each(fix);
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.features
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return bad(format!(
                "train_fraction must be in (0, 1), got {}",
                self.data.train_fraction
            ));
        }
        if self.labels.subgroups == 0 {
            return bad("labels.subgroups must be at least 1".into());
        }
        if self.speaker_id.batch_size == 0 || self.enhancement.batch_size == 0 {
            return bad("batch sizes must be positive".into());
        }
        if self.eval.top_k == 0 {
            return bad("eval.top_k must be positive".into());
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return bad("optimizer.learning_rate must be positive".into());
        }
        for c in &self.eval.conditions {
            match (&c.noise, c.snr_db) {
                (Some(_), None) => {
                    return bad(format!("condition `{}` needs snr_db", c.noise_label()))
                }
                (None, Some(_)) => return bad("clean condition must not set snr_db".into()),
                _ => {}
            }
        }
        Ok(())
    }

    /// SHA-256 over everything that determines the trained networks, i.e.
    /// all sections except `[eval]` and the file locations.
    pub fn hash(&self) -> [u8; 32] {
        #[derive(Serialize)]
        struct Hashed<'a> {
            seed: u64,
            train_fraction: f64,
            noise_halving_seed: u64,
            noise: Vec<&'a String>,
            features: &'a FrameSpec,
            labels: &'a LabelsSection,
            speaker_id: &'a SpeakerIdSection,
            enhancement: &'a EnhancementSection,
            optimizer: &'a OptimizerSettings,
        }
        let view = Hashed {
            seed: self.data.seed,
            train_fraction: self.data.train_fraction,
            noise_halving_seed: self.data.noise_halving_seed,
            noise: self.data.noise.keys().collect(),
            features: &self.features,
            labels: &self.labels,
            speaker_id: &self.speaker_id,
            enhancement: &self.enhancement,
            optimizer: &self.optimizer,
        };
        let json = serde_json::to_vec(&view).expect("config serializes");
        Sha256::digest(&json).into()
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash())
    }
}

/// Derives an independent seed for a named purpose from a master seed.
pub fn derive_seed(master: u64, purpose: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(purpose.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
