use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::derive_seed;
use super::features::FeatureExtractor;
use super::manifest::DatasetManifest;
use super::noise::{NoiseBank, NoiseHalf};
use super::{HarnessError, RunConfig};
use crate::dsp::{mix_at_snr, CropMode, Spectrogram, Waveform};
use crate::kernel::{Gradients, KernelError, Optimizer, ParamStore, Tape, Tensor};
use crate::mlt::{assign_subgroups, LabelScheme, LabeledUtterance};
use crate::models::{compose, EnhancementNet, ModelError, SpeakerIdNet, SpeakerIdNetConfig};

/// Mean loss of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
}

pub struct IdOutcome {
    pub net: SpeakerIdNet<f32>,
    pub losses: Vec<LossRecord>,
}

pub struct EnhOutcome {
    pub net: EnhancementNet<f32>,
    pub losses: Vec<LossRecord>,
}

/// Mean loss per epoch, in epoch order.
pub fn epoch_means(losses: &[LossRecord]) -> Vec<f64> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    for r in losses {
        if out.len() <= r.epoch {
            out.resize(r.epoch + 1, (0.0, 0));
        }
        out[r.epoch].0 += r.loss;
        out[r.epoch].1 += 1;
    }
    out.into_iter().map(|(s, n)| s / n.max(1) as f64).collect()
}

/// Expanded labels for the rows of a training manifest, in row order.
pub fn label_training_set(
    train: &DatasetManifest,
    scheme: &LabelScheme,
) -> Result<Vec<LabeledUtterance>, HarnessError> {
    let labeled = assign_subgroups(&train.indexed(), scheme)?;
    let mut by_id: HashMap<String, LabeledUtterance> =
        labeled.into_iter().map(|l| (l.utt_id.clone(), l)).collect();
    Ok(train
        .rows()
        .iter()
        .map(|r| by_id.remove(&r.utt_id).expect("every row was labeled"))
        .collect())
}

fn divergence(epoch: usize, batch: usize, e: impl ToString) -> HarnessError {
    HarnessError::Divergence {
        epoch,
        batch,
        detail: e.to_string(),
    }
}

/// Sums per-sample gradients in sample order, averages, and takes one step.
fn apply_batch(
    params: &mut ParamStore<f32>,
    opt: &mut Optimizer<f32>,
    results: Vec<(f64, Gradients<f32>)>,
    epoch: usize,
    batch: usize,
) -> Result<f64, HarnessError> {
    let n = results.len();
    let mut total = 0.0;
    params.zero_grad();
    for (loss, grads) in &results {
        if !loss.is_finite() {
            return Err(divergence(epoch, batch, format!("loss is {loss}")));
        }
        total += loss;
        params.accumulate(grads);
    }
    params.scale_grads(1.0 / n as f32);
    match opt.step(params) {
        Ok(()) => Ok(total / n as f64),
        Err(KernelError::NonFiniteGradient(name)) => Err(divergence(
            epoch,
            batch,
            format!("non-finite gradient in {name}"),
        )),
        Err(e) => Err(e.into()),
    }
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        seed,
        &format!("order/{epoch}"),
    )));
    order
}

/// Mini-batch training of the speaker-ID network on clean compressed
/// spectrograms. Per-sample gradients may be computed in parallel but are
/// always summed in sample order, so results do not depend on the thread
/// count.
pub fn train_id(
    cfg: &RunConfig,
    features: &[Spectrogram],
    labels: &[usize],
    scheme: &LabelScheme,
) -> Result<IdOutcome, HarnessError> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(HarnessError::Data(format!(
            "{} feature maps for {} labels",
            features.len(),
            labels.len()
        )));
    }
    let extractor = FeatureExtractor::new(cfg.features)?;
    let seed = derive_seed(cfg.data.seed, "speaker_id");
    let net_cfg = SpeakerIdNetConfig::for_scheme(
        cfg.features.n_bins(),
        cfg.speaker_id.conv_filters,
        cfg.speaker_id.fc_dims.clone(),
        scheme,
    );
    let mut net = SpeakerIdNet::<f32>::new(net_cfg, derive_seed(seed, "init"))?;
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut losses = Vec::new();
    for epoch in 0..cfg.speaker_id.epochs {
        let order = epoch_order(features.len(), seed, epoch);
        for (batch, idx) in order.chunks(cfg.speaker_id.batch_size).enumerate() {
            let results = {
                let net = &net;
                idx.par_iter()
                    .map(|&i| {
                        let x = extractor.fixed(
                            &features[i],
                            CropMode::TrainRandomCrop,
                            derive_seed(seed, &format!("crop/{epoch}/{i}")),
                        )?;
                        sid_step(net, x, labels[i])
                    })
                    .collect::<Result<Vec<_>, HarnessError>>()?
            };
            let loss = apply_batch(net.params_mut(), &mut opt, results, epoch, batch)?;
            losses.push(LossRecord { epoch, batch, loss });
        }
    }
    Ok(IdOutcome { net, losses })
}

fn sid_step(
    net: &SpeakerIdNet<f32>,
    x: Tensor<f32>,
    label: usize,
) -> Result<(f64, Gradients<f32>), HarnessError> {
    let mut tape = Tape::new();
    let input = tape.input(x);
    let out = net.forward(&mut tape, input)?;
    let loss = tape.softmax_cross_entropy(out.logits, label)?;
    let value = tape.value(loss).data()[0] as f64;
    Ok((value, tape.backward(loss)?))
}

/// Cross-entropy of the first mini-batch at initialization, before any
/// update.
pub fn initial_id_loss(
    cfg: &RunConfig,
    features: &[Spectrogram],
    labels: &[usize],
    scheme: &LabelScheme,
) -> Result<f64, HarnessError> {
    let extractor = FeatureExtractor::new(cfg.features)?;
    let seed = derive_seed(cfg.data.seed, "speaker_id");
    let net_cfg = SpeakerIdNetConfig::for_scheme(
        cfg.features.n_bins(),
        cfg.speaker_id.conv_filters,
        cfg.speaker_id.fc_dims.clone(),
        scheme,
    );
    let net = SpeakerIdNet::<f32>::new(net_cfg, derive_seed(seed, "init"))?;
    let order = epoch_order(features.len(), seed, 0);
    let idx = &order[..cfg.speaker_id.batch_size.min(order.len())];
    let losses = idx
        .par_iter()
        .map(|&i| {
            let x = extractor.fixed(
                &features[i],
                CropMode::TrainRandomCrop,
                derive_seed(seed, &format!("crop/0/{i}")),
            )?;
            Ok(sid_step(&net, x, labels[i])?.0)
        })
        .collect::<Result<Vec<f64>, HarnessError>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Trains the enhancement network through the composed model with the
/// speaker-ID network frozen. Training inputs are the given utterances mixed
/// with train-half noise at the configured SNR; a fresh noise offset is
/// drawn every epoch. The speaker-ID checkpoint bytes are compared before
/// and after.
pub fn train_enh(
    cfg: &RunConfig,
    sid: &mut SpeakerIdNet<f32>,
    waves: &[Waveform],
    labels: &[usize],
    speakers: &[usize],
    noise: &NoiseBank,
) -> Result<EnhOutcome, HarnessError> {
    if waves.len() != labels.len() || waves.len() != speakers.len() || waves.is_empty() {
        return Err(HarnessError::Data(
            "enhancement training set is empty or inconsistent".into(),
        ));
    }
    let ecfg = &cfg.enhancement;
    if ecfg.train_noise.is_empty() {
        return Err(HarnessError::Config(
            "enhancement.train_noise is empty".into(),
        ));
    }
    let noises = ecfg
        .train_noise
        .iter()
        .map(|n| noise.half(n, NoiseHalf::Train))
        .collect::<Result<Vec<_>, _>>()?;

    let mut chosen = Vec::new();
    let mut per_speaker: HashMap<usize, usize> = HashMap::new();
    for (i, &s) in speakers.iter().enumerate() {
        let c = per_speaker.entry(s).or_default();
        if ecfg.max_utterances_per_speaker == 0 || *c < ecfg.max_utterances_per_speaker {
            *c += 1;
            chosen.push(i);
        }
    }

    let hash = cfg.hash();
    let before = sid.to_checkpoint(hash).to_bytes();
    sid.params_mut().set_frozen(true);
    let extractor = FeatureExtractor::new(cfg.features)?;
    let seed = derive_seed(cfg.data.seed, "enhancement");
    let mut enh = EnhancementNet::<f32>::new(ecfg.net, derive_seed(seed, "init"))?;
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut losses = Vec::new();
    let result = (|| -> Result<(), HarnessError> {
        for epoch in 0..ecfg.epochs {
            let order = epoch_order(chosen.len(), seed, epoch);
            for (batch, idx) in order.chunks(ecfg.batch_size).enumerate() {
                let results = {
                    let (enh, sid) = (&enh, &*sid);
                    idx.par_iter()
                        .map(|&k| {
                            let i = chosen[k];
                            let mix_seed = derive_seed(seed, &format!("mix/{epoch}/{i}"));
                            let noisy = mix_at_snr(
                                &waves[i],
                                &noises[i % noises.len()],
                                ecfg.snr_db,
                                mix_seed,
                            )?;
                            let x =
                                extractor.features(&noisy, CropMode::TrainRandomCrop, mix_seed)?;
                            let mut tape = Tape::new();
                            let out = compose(enh, sid, &mut tape, x)?;
                            let loss = tape.softmax_cross_entropy(out.sid.logits, labels[i])?;
                            let value = tape.value(loss).data()[0] as f64;
                            Ok((value, tape.backward(loss).map_err(ModelError::from)?))
                        })
                        .collect::<Result<Vec<_>, HarnessError>>()?
                };
                let loss = apply_batch(enh.params_mut(), &mut opt, results, epoch, batch)?;
                losses.push(LossRecord { epoch, batch, loss });
            }
        }
        Ok(())
    })();
    sid.params_mut().set_frozen(false);
    result?;
    if sid.to_checkpoint(hash).to_bytes() != before {
        return Err(HarnessError::FrozenParametersChanged);
    }
    Ok(EnhOutcome { net: enh, losses })
}
