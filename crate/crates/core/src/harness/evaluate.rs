use std::path::Path;

use rayon::prelude::*;

use super::config::{derive_seed, Condition};
use super::features::FeatureExtractor;
use super::manifest::DatasetManifest;
use super::noise::{NoiseBank, NoiseHalf};
use super::report::{MetricsReport, ReportRow, RunMetadata};
use super::{HarnessError, RunConfig};
use crate::dsp::{mix_at_snr, CropMode, Waveform};
use crate::kernel::{read_checkpoint, Tape, Tensor};
use crate::mlt::{argmax_with_ties, topk_correct_with, EvalResult};
use crate::models::{compose, EnhancementNet, SpeakerIdNet};

pub struct LoadedModels {
    pub sid: SpeakerIdNet<f32>,
    pub enh: Option<EnhancementNet<f32>>,
    pub config_hash: [u8; 32],
}

/// Reads the checkpoints and checks that both were produced by `expected`.
pub fn load_checkpoints(
    sid: &Path,
    enh: Option<&Path>,
    expected: [u8; 32],
) -> Result<LoadedModels, HarnessError> {
    let check = |what: &Path, found: [u8; 32]| {
        if found != expected {
            return Err(HarnessError::HashMismatch {
                what: what.display().to_string(),
                expected: hex::encode(expected),
                found: hex::encode(found),
            });
        }
        Ok(())
    };
    let ckpt = read_checkpoint(sid)?;
    check(sid, ckpt.config_hash)?;
    let sid_net = SpeakerIdNet::from_checkpoint(&ckpt)?;
    let enh_net = match enh {
        Some(path) => {
            let ckpt = read_checkpoint(path)?;
            check(path, ckpt.config_hash)?;
            Some(EnhancementNet::from_checkpoint(&ckpt)?)
        }
        None => None,
    };
    Ok(LoadedModels {
        sid: sid_net,
        enh: enh_net,
        config_hash: expected,
    })
}

/// Scores every test utterance under every condition. Noisy conditions mix
/// test-half noise into the full utterance; the mixture for an utterance
/// depends only on the noise and SNR, so runs with and without enhancement
/// see the same inputs.
pub fn evaluate_run(
    cfg: &RunConfig,
    test: &DatasetManifest,
    waves: &[Waveform],
    noise: &NoiseBank,
    models: &LoadedModels,
    conditions: &[Condition],
) -> Result<MetricsReport, HarnessError> {
    if models.config_hash != cfg.hash() {
        return Err(HarnessError::HashMismatch {
            what: "checkpoints".into(),
            expected: cfg.hash_hex(),
            found: hex::encode(models.config_hash),
        });
    }
    if waves.len() != test.len() {
        return Err(HarnessError::Data(format!(
            "{} waveforms for {} test rows",
            waves.len(),
            test.len()
        )));
    }
    let scheme = cfg.labels.scheme(test.num_speakers())?;
    if scheme.num_labels() != models.sid.config().output_dim {
        return Err(HarnessError::Config(format!(
            "speaker-ID checkpoint has {} outputs, the label scheme needs {}",
            models.sid.config().output_dim,
            scheme.num_labels()
        )));
    }
    let k = cfg.eval.top_k.min(scheme.num_labels());
    let extractor = FeatureExtractor::new(cfg.features)?;
    let speakers: Vec<usize> = test.rows().iter().map(|r| test.speaker_index(r)).collect();
    let hash = hex::encode(models.config_hash);
    let model = cfg.labels.model_name();

    let mut rows = Vec::with_capacity(conditions.len());
    for cond in conditions {
        let enh = match (cond.enhancement, &models.enh) {
            (true, None) => {
                return Err(HarnessError::Data(format!(
                    "condition `{}` needs an enhancement checkpoint",
                    cond.noise_label()
                )))
            }
            (true, Some(e)) => Some(e),
            (false, _) => None,
        };
        let noise_wave = match (&cond.noise, cond.snr_db) {
            (Some(name), Some(_)) => Some(noise.half(name, NoiseHalf::Test)?),
            (None, None) => None,
            _ => {
                return Err(HarnessError::Config(
                    "noisy conditions need both noise and snr_db".into(),
                ))
            }
        };
        let outcomes = test
            .rows()
            .par_iter()
            .zip(waves)
            .zip(&speakers)
            .map(|((row, wave), &speaker)| {
                let input = match (&noise_wave, cond.snr_db) {
                    (Some(n), Some(snr)) => {
                        let seed = derive_seed(
                            cfg.data.seed,
                            &format!("eval/{}/{snr}/{}", cond.noise_label(), row.utt_id),
                        );
                        mix_at_snr(wave, n, snr, seed)?
                    }
                    _ => wave.clone(),
                };
                let x: Tensor<f32> = extractor.features(&input, CropMode::EvalCenterCrop, 0)?;
                let logits = match enh {
                    Some(e) => {
                        let mut tape = Tape::new();
                        let out = compose(e, &models.sid, &mut tape, x)?;
                        tape.value(out.sid.logits).clone()
                    }
                    None => models.sid.logits(x)?,
                };
                let (pred, tied) = argmax_with_ties(logits.data());
                let top =
                    topk_correct_with(logits.data(), speaker, k, &scheme, cfg.eval.topk_mode)?;
                Ok((speaker, scheme.is_correct(pred, speaker), tied, top))
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        let mut result = EvalResult::default();
        let mut top_hits = 0u64;
        for (speaker, correct, tied, top) in outcomes {
            result.record(speaker, correct);
            result.ties += tied as u64;
            top_hits += top as u64;
        }
        rows.push(ReportRow {
            model: model.clone(),
            noise: cond.noise_label().to_string(),
            snr_db: cond.snr_db,
            enhancement: cond.enhancement,
            accuracy_pct: 100.0 * result.accuracy(),
            top_k_pct: 100.0 * top_hits as f64 / result.total as f64,
            correct: result.correct,
            top_k_correct: top_hits,
            total: result.total,
            ties: result.ties,
            config_hash: hash.clone(),
        });
    }
    Ok(MetricsReport {
        metadata: RunMetadata {
            seed: cfg.data.seed,
            speakers: test.num_speakers(),
            test_utterances: test.len(),
            top_k: k,
            repeats: 1,
        },
        rows,
        deltas: Vec::new(),
    })
}
