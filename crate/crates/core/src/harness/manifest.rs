use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::derive_seed;
use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub utt_id: String,
    pub wav_path: PathBuf,
    pub speaker: String,
}

/// Validated list of utterances. Speakers are densified in sorted order of
/// their names, so a manifest and its splits agree on indices.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    rows: Vec<ManifestRow>,
    speakers: Vec<String>,
}

impl DatasetManifest {
    /// Validates rows: non-empty, unique ids, at least two utterances per
    /// speaker. File existence is checked by [`load_manifest`].
    pub fn from_rows(rows: Vec<ManifestRow>) -> Result<Self, HarnessError> {
        if rows.is_empty() {
            return Err(HarnessError::Data("empty manifest".into()));
        }
        let mut seen = HashSet::new();
        for r in &rows {
            if !seen.insert(r.utt_id.as_str()) {
                return Err(HarnessError::Data(format!(
                    "duplicate utt_id `{}`",
                    r.utt_id
                )));
            }
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &rows {
            *counts.entry(&r.speaker).or_default() += 1;
        }
        if let Some((spk, _)) = counts.iter().find(|(_, &n)| n < 2) {
            return Err(HarnessError::Data(format!(
                "speaker `{spk}` has only one utterance"
            )));
        }
        let speakers = counts.keys().map(|s| s.to_string()).collect();
        Ok(Self { rows, speakers })
    }

    pub fn rows(&self) -> &[ManifestRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Speaker names in index order.
    pub fn speakers(&self) -> &[String] {
        &self.speakers
    }

    pub fn num_speakers(&self) -> usize {
        self.speakers.len()
    }

    pub fn speaker_index(&self, row: &ManifestRow) -> usize {
        self.speakers
            .binary_search(&row.speaker)
            .expect("row speaker is registered")
    }

    /// `(utt_id, speaker index)` for every row.
    pub fn indexed(&self) -> Vec<(String, usize)> {
        self.rows
            .iter()
            .map(|r| (r.utt_id.clone(), self.speaker_index(r)))
            .collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.speakers.len()];
        for r in &self.rows {
            c[self.speaker_index(r)] += 1;
        }
        c
    }

    fn subset(&self, rows: Vec<ManifestRow>) -> Self {
        Self {
            rows,
            speakers: self.speakers.clone(),
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        write_rows(path.as_ref(), &self.rows)
    }
}

pub(crate) fn write_rows(path: &Path, rows: &[ManifestRow]) -> Result<(), HarnessError> {
    let to_io = |e: csv::Error| HarnessError::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    for r in rows {
        w.serialize(r).map_err(to_io)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Reads a `utt_id,wav_path,speaker` CSV. Relative WAV paths are resolved
/// against the manifest's directory, stored as absolute paths, and must
/// exist.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, HarnessError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(HarnessError::Data(format!(
            "manifest {} not found",
            path.display()
        )));
    }
    let abs = std::path::absolute(path).map_err(|e| HarnessError::io(path, e))?;
    let base = abs.parent().unwrap_or(Path::new("/"));
    let mut reader = csv::Reader::from_path(path).map_err(|e| HarnessError::io(path, e.into()))?;
    let headers = reader
        .headers()
        .map_err(|e| HarnessError::Data(e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(HarnessError::Data("empty manifest".into()));
    }
    if headers.iter().collect::<Vec<_>>() != ["utt_id", "wav_path", "speaker"] {
        return Err(HarnessError::Data(format!(
            "{}: expected header utt_id,wav_path,speaker",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for rec in reader.deserialize::<ManifestRow>() {
        let mut row = rec.map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
        if row.wav_path.is_relative() {
            row.wav_path = base.join(&row.wav_path);
        }
        rows.push(row);
    }
    let manifest = DatasetManifest::from_rows(rows)?;
    if let Some(r) = manifest.rows.iter().find(|r| !r.wav_path.is_file()) {
        return Err(HarnessError::Data(format!(
            "utterance `{}`: missing file {}",
            r.utt_id,
            r.wav_path.display()
        )));
    }
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub noise_halving_seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.75,
            seed: 1,
            noise_halving_seed: 7,
        }
    }
}

/// Per-speaker seeded shuffle, then `ceil(n * train_fraction)` utterances
/// to train and the rest to test. Rows keep their manifest order.
pub fn split_dataset(
    m: &DatasetManifest,
    spec: &SplitSpec,
) -> Result<(DatasetManifest, DatasetManifest), HarnessError> {
    let mut by_speaker: Vec<Vec<usize>> = vec![Vec::new(); m.num_speakers()];
    for (i, r) in m.rows.iter().enumerate() {
        by_speaker[m.speaker_index(r)].push(i);
    }
    let mut is_train = vec![false; m.len()];
    for (s, idx) in by_speaker.iter_mut().enumerate() {
        let n = idx.len();
        let n_train = (n as f64 * spec.train_fraction).ceil() as usize;
        if n_train == 0 || n_train >= n {
            return Err(HarnessError::Data(format!(
                "speaker `{}` has {n} utterances, too few for a {} train fraction",
                m.speakers[s], spec.train_fraction
            )));
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &format!("split/{}", m.speakers[s])));
        idx.shuffle(&mut rng);
        for &i in &idx[..n_train] {
            is_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (r, t) in m.rows.iter().zip(is_train) {
        if t { &mut train } else { &mut test }.push(r.clone());
    }
    Ok((m.subset(train), m.subset(test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(spec: &[(&str, usize)]) -> Vec<ManifestRow> {
        spec.iter()
            .flat_map(|&(spk, n)| {
                (0..n).map(move |i| ManifestRow {
                    utt_id: format!("{spk}-{i}"),
                    wav_path: PathBuf::from(format!("{spk}/{i}.wav")),
                    speaker: spk.to_string(),
                })
            })
            .collect()
    }

    #[test]
    fn counts_and_indices() {
        let m = DatasetManifest::from_rows(rows(&[("bob", 4), ("alice", 4)])).unwrap();
        assert_eq!(m.num_speakers(), 2);
        assert_eq!(m.counts(), vec![4, 4]);
        assert_eq!(m.speakers(), ["alice", "bob"]);
        assert_eq!(m.speaker_index(&m.rows()[0]), 1);
    }

    #[test]
    fn validation_errors() {
        let err = DatasetManifest::from_rows(vec![]).unwrap_err();
        assert!(err.to_string().contains("empty manifest"));
        let mut r = rows(&[("a", 3)]);
        r[2].utt_id = "a-0".into();
        assert!(DatasetManifest::from_rows(r)
            .unwrap_err()
            .to_string()
            .contains("`a-0`"));
        let err = DatasetManifest::from_rows(rows(&[("a", 3), ("b", 1)])).unwrap_err();
        assert!(err.to_string().contains("`b`"));
    }

    #[test]
    fn split_four_gives_three_one() {
        let m = DatasetManifest::from_rows(rows(&[("a", 4), ("b", 8)])).unwrap();
        let (tr, te) = split_dataset(&m, &SplitSpec::default()).unwrap();
        assert_eq!(tr.counts(), vec![3, 6]);
        assert_eq!(te.counts(), vec![1, 2]);
        let (tr2, te2) = split_dataset(&m, &SplitSpec::default()).unwrap();
        assert_eq!((tr, te), (tr2, te2));
    }

    #[test]
    fn split_rejects_small_speaker() {
        let m = DatasetManifest::from_rows(rows(&[("a", 4), ("b", 3)])).unwrap();
        assert!(matches!(
            split_dataset(&m, &SplitSpec::default()),
            Err(HarnessError::Data(_))
        ));
    }

    #[test]
    fn split_is_a_partition() {
        let m = DatasetManifest::from_rows(rows(&[("a", 9), ("b", 13), ("c", 4)])).unwrap();
        for seed in 0..5 {
            let spec = SplitSpec {
                seed,
                ..SplitSpec::default()
            };
            let (tr, te) = split_dataset(&m, &spec).unwrap();
            let mut ids: Vec<_> = tr
                .rows()
                .iter()
                .chain(te.rows())
                .map(|r| r.utt_id.clone())
                .collect();
            assert_eq!(ids.len(), m.len());
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), m.len());
            assert!(te.counts().iter().all(|&c| c > 0));
        }
    }
}
