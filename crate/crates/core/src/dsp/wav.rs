use std::path::Path;

use super::{DspError, Waveform};

/// Reads a mono 16-bit PCM WAV file recorded at `expected_rate`.
pub fn load_wav(path: impl AsRef<Path>, expected_rate: u32) -> Result<Waveform, DspError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(DspError::MissingFile(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| classify(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(DspError::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: format!("{:?} {}-bit", spec.sample_format, spec.bits_per_sample),
        });
    }
    if spec.channels != 1 {
        return Err(DspError::ChannelCount {
            path: path.to_path_buf(),
            found: spec.channels,
        });
    }
    if spec.sample_rate != expected_rate {
        return Err(DspError::SampleRateMismatch {
            path: path.to_path_buf(),
            expected: expected_rate,
            found: spec.sample_rate,
        });
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| classify(path, e))?;
    Ok(Waveform::new(samples, spec.sample_rate))
}

fn classify(path: &Path, err: hound::Error) -> DspError {
    match err {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::NotFound => {
            DspError::MissingFile(path.to_path_buf())
        }
        hound::Error::IoError(e) => DspError::Io(e),
        hound::Error::Unsupported => DspError::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: "compressed or extensible format".into(),
        },
        other => DspError::NotWav {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    }
}

/// Writes mono 16-bit PCM. Samples outside [-1, 1) are clipped.
pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform) -> Result<(), DspError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let path = path.as_ref();
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| classify(path, e))?;
    for &s in &wave.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(|e| classify(path, e))?;
    }
    writer.finalize().map_err(|e| classify(path, e))?;
    Ok(())
}
