//! Multi-label training: subgroup assignment, label expansion and
//! alias-aware evaluation.
//!
//! With `C` speakers split into `N` subgroups, utterances of speaker `s` in
//! subgroup `m` are trained against label `s + C * m`. At test time a
//! predicted label counts as correct when it is any of the speaker's `N`
//! aliases `{s, s + C, ..., s + C * (N - 1)}`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("label scheme needs at least 2 speakers, got {0}")]
    TooFewSpeakers(usize),
    #[error("label scheme needs at least 1 subgroup")]
    NoSubgroups,
    #[error("speaker {speaker} out of range for {speakers} speakers")]
    SpeakerOutOfRange { speaker: usize, speakers: usize },
    #[error("subgroup {subgroup} out of range for {subgroups} subgroups")]
    SubgroupOutOfRange { subgroup: usize, subgroups: usize },
    #[error("label {label} out of range for {labels} expanded labels")]
    LabelOutOfRange { label: usize, labels: usize },
    #[error("speaker {speaker} has {count} utterances, fewer than the {subgroups} subgroups")]
    SpeakerTooSmall {
        speaker: usize,
        count: usize,
        subgroups: usize,
    },
    #[error("no predictions to evaluate")]
    EmptyPredictions,
    #[error("top-k needs 1 <= k <= {labels}, got {k}")]
    InvalidK { k: usize, labels: usize },
    #[error("expected {expected} logits, got {actual}")]
    LogitCount { expected: usize, actual: usize },
}

/// `C` speakers, each split into `N` subgroups, giving `N * C` labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    speakers: usize,
    subgroups: usize,
}

impl LabelScheme {
    pub fn new(speakers: usize, subgroups: usize) -> Result<Self, LabelError> {
        if speakers < 2 {
            return Err(LabelError::TooFewSpeakers(speakers));
        }
        if subgroups < 1 {
            return Err(LabelError::NoSubgroups);
        }
        Ok(Self {
            speakers,
            subgroups,
        })
    }

    pub fn speakers(&self) -> usize {
        self.speakers
    }

    pub fn subgroups(&self) -> usize {
        self.subgroups
    }

    /// Size of the expanded label space, `N * C`.
    pub fn num_labels(&self) -> usize {
        self.speakers * self.subgroups
    }

    pub fn expand_label(&self, speaker: usize, subgroup: usize) -> Result<usize, LabelError> {
        if speaker >= self.speakers {
            return Err(LabelError::SpeakerOutOfRange {
                speaker,
                speakers: self.speakers,
            });
        }
        if subgroup >= self.subgroups {
            return Err(LabelError::SubgroupOutOfRange {
                subgroup,
                subgroups: self.subgroups,
            });
        }
        Ok(speaker + self.speakers * subgroup)
    }

    pub fn base_speaker(&self, label: usize) -> Result<usize, LabelError> {
        self.check_label(label)?;
        Ok(label % self.speakers)
    }

    pub fn subgroup_of(&self, label: usize) -> Result<usize, LabelError> {
        self.check_label(label)?;
        Ok(label / self.speakers)
    }

    /// All `N` labels that stand for `speaker`.
    pub fn aliases(&self, speaker: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.subgroups).map(move |m| speaker + self.speakers * m)
    }

    /// Whether `predicted` is one of `speaker`'s aliases. Labels outside the
    /// expanded space are never correct.
    pub fn is_correct(&self, predicted: usize, speaker: usize) -> bool {
        predicted < self.num_labels() && predicted % self.speakers == speaker
    }

    fn check_label(&self, label: usize) -> Result<(), LabelError> {
        if label >= self.num_labels() {
            return Err(LabelError::LabelOutOfRange {
                label,
                labels: self.num_labels(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledUtterance {
    pub utt_id: String,
    pub speaker: usize,
    pub subgroup: usize,
    pub train_label: usize,
}

/// Splits each speaker's utterances round-robin into the scheme's subgroups
/// and attaches the expanded training label.
///
/// Utterances are ordered by speaker, then by `utt_id`; within a speaker the
/// `j`-th utterance goes to subgroup `j mod N`. Every speaker therefore
/// appears in every subgroup, and a speaker's subgroup sizes differ by at
/// most one.
pub fn assign_subgroups(
    utterances: &[(String, usize)],
    scheme: &LabelScheme,
) -> Result<Vec<LabeledUtterance>, LabelError> {
    let mut by_speaker: Vec<Vec<&str>> = vec![Vec::new(); scheme.speakers()];
    for (utt, speaker) in utterances {
        let list = by_speaker
            .get_mut(*speaker)
            .ok_or(LabelError::SpeakerOutOfRange {
                speaker: *speaker,
                speakers: scheme.speakers(),
            })?;
        list.push(utt);
    }
    let mut out = Vec::with_capacity(utterances.len());
    for (speaker, utts) in by_speaker.iter_mut().enumerate() {
        if utts.len() < scheme.subgroups() {
            return Err(LabelError::SpeakerTooSmall {
                speaker,
                count: utts.len(),
                subgroups: scheme.subgroups(),
            });
        }
        utts.sort_unstable();
        for (j, utt) in utts.iter().enumerate() {
            let subgroup = j % scheme.subgroups();
            out.push(LabeledUtterance {
                utt_id: utt.to_string(),
                speaker,
                subgroup,
                train_label: scheme.expand_label(speaker, subgroup)?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: u64,
    pub total: u64,
}

/// Outcome of an evaluation. Counts, not ratios, so results from shards can
/// be merged.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalResult {
    pub correct: u64,
    pub total: u64,
    pub per_speaker: BTreeMap<usize, Tally>,
    /// Predictions whose top score was shared by more than one label.
    pub ties: u64,
}

impl EvalResult {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    pub fn record(&mut self, speaker: usize, correct: bool) {
        let t = self.per_speaker.entry(speaker).or_default();
        t.total += 1;
        self.total += 1;
        if correct {
            t.correct += 1;
            self.correct += 1;
        }
    }

    pub fn merge(&mut self, other: &EvalResult) {
        self.correct += other.correct;
        self.total += other.total;
        self.ties += other.ties;
        for (speaker, t) in &other.per_speaker {
            let mine = self.per_speaker.entry(*speaker).or_default();
            mine.correct += t.correct;
            mine.total += t.total;
        }
    }
}

/// Scores `(predicted_label, true_speaker)` pairs under the alias rule.
pub fn evaluate(
    predictions: &[(usize, usize)],
    scheme: &LabelScheme,
) -> Result<EvalResult, LabelError> {
    if predictions.is_empty() {
        return Err(LabelError::EmptyPredictions);
    }
    let mut result = EvalResult::default();
    for &(predicted, speaker) in predictions {
        scheme.check_label(predicted)?;
        if speaker >= scheme.speakers() {
            return Err(LabelError::SpeakerOutOfRange {
                speaker,
                speakers: scheme.speakers(),
            });
        }
        result.record(speaker, scheme.is_correct(predicted, speaker));
    }
    Ok(result)
}

/// Index of the largest score (lowest index on ties) and whether a tie
/// occurred.
pub fn argmax_with_ties<T: PartialOrd + Copy>(scores: &[T]) -> (usize, bool) {
    let mut best = 0;
    let mut tied = false;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
            tied = false;
        } else if v == scores[best] {
            tied = true;
        }
    }
    (best, tied)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopKMode {
    /// A hit if any of the `k` best labels aliases the true speaker.
    #[default]
    Alias,
    /// Non-standard extension: take each speaker's best alias score, rank
    /// speakers, and check the true speaker is among the best `k`.
    Collapse,
}

/// Labels sorted by descending score, ties by ascending label.
fn ranked<T: PartialOrd + Copy>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Per-speaker maximum over the speaker's alias logits.
pub fn collapse_scores<T: PartialOrd + Copy>(
    logits: &[T],
    scheme: &LabelScheme,
) -> Result<Vec<T>, LabelError> {
    check_logits(logits, scheme)?;
    Ok((0..scheme.speakers())
        .map(|s| {
            scheme
                .aliases(s)
                .map(|l| logits[l])
                .fold(logits[s], |a, b| if b > a { b } else { a })
        })
        .collect())
}

fn check_logits<T>(logits: &[T], scheme: &LabelScheme) -> Result<(), LabelError> {
    if logits.len() != scheme.num_labels() {
        return Err(LabelError::LogitCount {
            expected: scheme.num_labels(),
            actual: logits.len(),
        });
    }
    Ok(())
}

pub fn topk_correct<T: PartialOrd + Copy>(
    logits: &[T],
    speaker: usize,
    k: usize,
    scheme: &LabelScheme,
) -> Result<bool, LabelError> {
    topk_correct_with(logits, speaker, k, scheme, TopKMode::Alias)
}

pub fn topk_correct_with<T: PartialOrd + Copy>(
    logits: &[T],
    speaker: usize,
    k: usize,
    scheme: &LabelScheme,
    mode: TopKMode,
) -> Result<bool, LabelError> {
    check_logits(logits, scheme)?;
    if k == 0 || k > scheme.num_labels() {
        return Err(LabelError::InvalidK {
            k,
            labels: scheme.num_labels(),
        });
    }
    Ok(match mode {
        TopKMode::Alias => ranked(logits)
            .into_iter()
            .take(k)
            .any(|l| scheme.is_correct(l, speaker)),
        TopKMode::Collapse => {
            let per_speaker = collapse_scores(logits, scheme)?;
            ranked(&per_speaker)
                .into_iter()
                .take(k)
                .any(|s| s == speaker)
        }
    })
}

/// One audit row of the label map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapRow {
    pub utt_id: String,
    pub speaker: String,
    pub speaker_index: usize,
    pub subgroup: usize,
    pub train_label: usize,
}

const LABEL_MAP_HEADER: &str = "utt_id\tspeaker\tspeaker_index\tsubgroup\ttrain_label";

/// Writes the label map as tab-separated text with a header row.
pub fn write_label_map(path: impl AsRef<Path>, rows: &[LabelMapRow]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{LABEL_MAP_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.utt_id, r.speaker, r.speaker_index, r.subgroup, r.train_label
        )?;
    }
    out.flush()
}

pub fn read_label_map(path: impl AsRef<Path>) -> std::io::Result<Vec<LabelMapRow>> {
    let bad = |line: usize, msg: &str| {
        std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("label map line {line}: {msg}"),
        )
    };
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != LABEL_MAP_HEADER {
                return Err(bad(1, "unexpected header"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(bad(i + 1, "expected 5 fields"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad(i + 1, "bad integer"));
        rows.push(LabelMapRow {
            utt_id: f[0].to_string(),
            speaker: f[1].to_string(),
            speaker_index: num(f[2])?,
            subgroup: num(f[3])?,
            train_label: num(f[4])?,
        });
    }
    Ok(rows)
}
