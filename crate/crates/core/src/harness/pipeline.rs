use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::evaluate::{evaluate_run, load_checkpoints};
use super::features::FeatureExtractor;
use super::manifest::{load_manifest, split_dataset, DatasetManifest, SplitSpec};
use super::noise::NoiseBank;
use super::report::{emit_plot_data, MetricsReport};
use super::train::{label_training_set, train_enh, train_id, LossRecord};
use super::{HarnessError, RunConfig};
use crate::dsp::{load_wav, Spectrogram, Waveform};
use crate::kernel::{read_checkpoint, write_checkpoint};
use crate::mlt::{write_label_map, LabelMapRow};
use crate::models::SpeakerIdNet;

/// File layout of a run's working directory.
#[derive(Debug, Clone)]
pub struct WorkDir {
    pub root: PathBuf,
}

impl WorkDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn train_manifest(&self) -> PathBuf {
        self.root.join("train.csv")
    }
    pub fn test_manifest(&self) -> PathBuf {
        self.root.join("test.csv")
    }
    pub fn label_map(&self) -> PathBuf {
        self.root.join("label_map.tsv")
    }
    pub fn sid_checkpoint(&self) -> PathBuf {
        self.root.join("speaker_id.ckpt")
    }
    pub fn enh_checkpoint(&self) -> PathBuf {
        self.root.join("enhancement.ckpt")
    }
    pub fn id_losses(&self) -> PathBuf {
        self.root.join("speaker_id_loss.csv")
    }
    pub fn enh_losses(&self) -> PathBuf {
        self.root.join("enhancement_loss.csv")
    }
    pub fn metrics_json(&self) -> PathBuf {
        self.root.join("metrics.json")
    }
    pub fn metrics_table(&self) -> PathBuf {
        self.root.join("metrics.txt")
    }
    pub fn plot_data(&self) -> PathBuf {
        self.root.join("plot.csv")
    }

    fn create(&self) -> Result<(), HarnessError> {
        std::fs::create_dir_all(&self.root).map_err(|e| HarnessError::io(&self.root, e))
    }
}

pub fn load_waveforms(
    manifest: &DatasetManifest,
    sample_rate: u32,
) -> Result<Vec<Waveform>, HarnessError> {
    manifest
        .rows()
        .par_iter()
        .map(|r| load_wav(&r.wav_path, sample_rate).map_err(HarnessError::from))
        .collect()
}

pub fn clean_features(
    waves: &[Waveform],
    extractor: &FeatureExtractor,
) -> Result<Vec<Spectrogram>, HarnessError> {
    waves.par_iter().map(|w| extractor.compressed(w)).collect()
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn write_losses(path: &Path, losses: &[LossRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::io(path, e.into()))?;
    for r in losses {
        w.serialize(r)
            .map_err(|e| HarnessError::io(path, e.into()))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Splits the manifest 3:1 per speaker and exports the train/test
/// manifests and the label map.
pub fn prepare(cfg: &RunConfig) -> Result<(DatasetManifest, DatasetManifest), HarnessError> {
    let dir = WorkDir::new(&cfg.data.work_dir);
    dir.create()?;
    let full = load_manifest(&cfg.data.manifest)?;
    let spec = SplitSpec {
        train_fraction: cfg.data.train_fraction,
        seed: cfg.data.seed,
        noise_halving_seed: cfg.data.noise_halving_seed,
    };
    let (train, test) = split_dataset(&full, &spec)?;
    train.write_csv(dir.train_manifest())?;
    test.write_csv(dir.test_manifest())?;
    let scheme = cfg.labels.scheme(full.num_speakers())?;
    let rows: Vec<LabelMapRow> = label_training_set(&train, &scheme)?
        .into_iter()
        .map(|l| LabelMapRow {
            speaker: train.speakers()[l.speaker].clone(),
            utt_id: l.utt_id,
            speaker_index: l.speaker,
            subgroup: l.subgroup,
            train_label: l.train_label,
        })
        .collect();
    write_label_map(dir.label_map(), &rows).map_err(|e| HarnessError::io(&dir.label_map(), e))?;
    Ok((train, test))
}

fn prepared(cfg: &RunConfig, path: PathBuf) -> Result<DatasetManifest, HarnessError> {
    if !path.exists() {
        prepare(cfg)?;
    }
    load_manifest(path)
}

pub fn run_train_id(cfg: &RunConfig) -> Result<Vec<LossRecord>, HarnessError> {
    let dir = WorkDir::new(&cfg.data.work_dir);
    let train = prepared(cfg, dir.train_manifest())?;
    let scheme = cfg.labels.scheme(train.num_speakers())?;
    let labels: Vec<usize> = label_training_set(&train, &scheme)?
        .iter()
        .map(|l| l.train_label)
        .collect();
    let waves = load_waveforms(&train, cfg.features.sample_rate)?;
    let feats = clean_features(&waves, &FeatureExtractor::new(cfg.features)?)?;
    drop(waves);
    let out = train_id(cfg, &feats, &labels, &scheme)?;
    write_checkpoint(dir.sid_checkpoint(), &out.net.to_checkpoint(cfg.hash()))?;
    write_losses(&dir.id_losses(), &out.losses)?;
    Ok(out.losses)
}

pub fn run_train_enh(cfg: &RunConfig) -> Result<Vec<LossRecord>, HarnessError> {
    let dir = WorkDir::new(&cfg.data.work_dir);
    let train = prepared(cfg, dir.train_manifest())?;
    let scheme = cfg.labels.scheme(train.num_speakers())?;
    let labeled = label_training_set(&train, &scheme)?;
    let labels: Vec<usize> = labeled.iter().map(|l| l.train_label).collect();
    let speakers: Vec<usize> = labeled.iter().map(|l| l.speaker).collect();
    let sid_path = dir.sid_checkpoint();
    let sid_bytes = std::fs::read(&sid_path).map_err(|e| HarnessError::io(&sid_path, e))?;
    let models = load_checkpoints(&sid_path, None, cfg.hash())?;
    let mut sid: SpeakerIdNet<f32> = models.sid;
    let noise = NoiseBank::load(
        &cfg.data.noise,
        cfg.features.sample_rate,
        cfg.data.noise_halving_seed,
    )?;
    let waves = load_waveforms(&train, cfg.features.sample_rate)?;
    let out = train_enh(cfg, &mut sid, &waves, &labels, &speakers, &noise)?;
    write_checkpoint(dir.enh_checkpoint(), &out.net.to_checkpoint(cfg.hash()))?;
    write_losses(&dir.enh_losses(), &out.losses)?;
    let after = std::fs::read(&sid_path).map_err(|e| HarnessError::io(&sid_path, e))?;
    if after != sid_bytes
        || read_checkpoint(&sid_path)?.to_bytes() != sid.to_checkpoint(cfg.hash()).to_bytes()
    {
        return Err(HarnessError::FrozenParametersChanged);
    }
    Ok(out.losses)
}

/// Evaluates the configured conditions and writes the JSON report, the
/// aligned table and the plot data.
pub fn run_evaluate(cfg: &RunConfig) -> Result<MetricsReport, HarnessError> {
    let dir = WorkDir::new(&cfg.data.work_dir);
    let test = prepared(cfg, dir.test_manifest())?;
    let needs_enh = cfg.eval.conditions.iter().any(|c| c.enhancement);
    let enh_path = dir.enh_checkpoint();
    let models = load_checkpoints(
        &dir.sid_checkpoint(),
        needs_enh.then_some(enh_path.as_path()),
        cfg.hash(),
    )?;
    let noise = NoiseBank::load(
        &cfg.data.noise,
        cfg.features.sample_rate,
        cfg.data.noise_halving_seed,
    )?;
    let waves = load_waveforms(&test, cfg.features.sample_rate)?;
    let report = evaluate_run(cfg, &test, &waves, &noise, &models, &cfg.eval.conditions)?;
    write_report(&report, &dir)?;
    Ok(report)
}

pub fn write_report(report: &MetricsReport, dir: &WorkDir) -> Result<(), HarnessError> {
    dir.create()?;
    write_text(&dir.metrics_json(), &report.to_json())?;
    write_text(&dir.metrics_table(), &report.to_table())?;
    write_text(&dir.plot_data(), &emit_plot_data(report)?)
}

/// prepare, train-id, train-enh (when a condition uses enhancement) and
/// evaluate.
pub fn run_all(cfg: &RunConfig) -> Result<MetricsReport, HarnessError> {
    prepare(cfg)?;
    run_train_id(cfg)?;
    if cfg.eval.conditions.iter().any(|c| c.enhancement) {
        run_train_enh(cfg)?;
    }
    run_evaluate(cfg)
}
