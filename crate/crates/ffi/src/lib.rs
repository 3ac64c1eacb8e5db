//! C ABI for label algebra, feature extraction, noise mixing and
//! speaker-ID inference.
//!
//! Every fallible function returns an [`SmltStatus`]. On failure a message
//! is kept per thread and can be read with [`smlt_last_error`]. Objects are
//! opaque handles created by `*_new`/`*_load` functions and released with
//! the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use speaker_mlt::dsp::{load_wav, mix_at_snr, CropMode, DspError, FrameSpec, Waveform};
use speaker_mlt::harness::FeatureExtractor;
use speaker_mlt::kernel::{read_checkpoint, Tensor};
use speaker_mlt::mlt::{evaluate, LabelError, LabelScheme};
use speaker_mlt::models::SpeakerIdNet;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmltStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Data = 4,
    Model = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Speaker count and subgroup count of a multi-label scheme.
pub struct SmltLabelScheme(LabelScheme);

/// Compressed spectrogram, `bins x frames`, bin-major `f32`.
pub struct SmltFeatures(Tensor<f32>);

/// Speaker-ID network restored from a checkpoint.
pub struct SmltSpeakerId(SpeakerIdNet<f32>);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

struct Failure(SmltStatus, String);

impl From<LabelError> for Failure {
    fn from(e: LabelError) -> Self {
        Failure(SmltStatus::InvalidArgument, e.to_string())
    }
}

impl From<DspError> for Failure {
    fn from(e: DspError) -> Self {
        let status = match e {
            DspError::MissingFile(_) | DspError::Io(_) => SmltStatus::Io,
            _ => SmltStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SmltStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SmltStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SmltStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(SmltStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    non_null(p, "path")?;
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure(SmltStatus::InvalidArgument, "path is not UTF-8".into()))
}

unsafe fn write_out(values: &[f32], out: *mut f32, capacity: usize, written: *mut usize) -> Result<(), Failure> {
    if !written.is_null() {
        *written = values.len();
    }
    if capacity < values.len() {
        return Err(Failure(
            SmltStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} needed", values.len()),
        ));
    }
    non_null(out, "output buffer")?;
    std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn smlt_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smlt_label_scheme_new(speakers: usize, subgroups: usize, out: *mut *mut SmltLabelScheme) -> SmltStatus {
    guard(|| {
        non_null(out, "out")?;
        let scheme = LabelScheme::new(speakers, subgroups)?;
        *out = Box::into_raw(Box::new(SmltLabelScheme(scheme)));
        Ok(())
    })
}

/// # Safety
/// `scheme` must be null or a handle from [`smlt_label_scheme_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn smlt_label_scheme_free(scheme: *mut SmltLabelScheme) {
    if !scheme.is_null() {
        drop(Box::from_raw(scheme));
    }
}

/// Number of expanded labels, or 0 for a null handle.
///
/// # Safety
/// `scheme` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smlt_label_scheme_num_labels(scheme: *const SmltLabelScheme) -> usize {
    scheme.as_ref().map_or(0, |s| s.0.num_labels())
}

/// # Safety
/// `scheme` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn smlt_expand_label(
    scheme: *const SmltLabelScheme,
    speaker: usize,
    subgroup: usize,
    out: *mut usize,
) -> SmltStatus {
    guard(|| {
        non_null(scheme, "scheme")?;
        non_null(out, "out")?;
        *out = (*scheme).0.expand_label(speaker, subgroup)?;
        Ok(())
    })
}

/// # Safety
/// `scheme` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn smlt_base_speaker(scheme: *const SmltLabelScheme, label: usize, out: *mut usize) -> SmltStatus {
    guard(|| {
        non_null(scheme, "scheme")?;
        non_null(out, "out")?;
        *out = (*scheme).0.base_speaker(label)?;
        Ok(())
    })
}

/// Writes 1 to `out` when `predicted` is one of `speaker`'s aliases, else 0.
///
/// # Safety
/// `scheme` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn smlt_is_correct(
    scheme: *const SmltLabelScheme,
    predicted: usize,
    speaker: usize,
    out: *mut i32,
) -> SmltStatus {
    guard(|| {
        non_null(scheme, "scheme")?;
        non_null(out, "out")?;
        *out = (*scheme).0.is_correct(predicted, speaker) as i32;
        Ok(())
    })
}

/// Scores `n` predictions against their true speakers under the alias rule.
///
/// # Safety
/// `predicted` and `speakers` must point to `n` values; the outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn smlt_evaluate(
    scheme: *const SmltLabelScheme,
    predicted: *const usize,
    speakers: *const usize,
    n: usize,
    out_correct: *mut u64,
    out_total: *mut u64,
) -> SmltStatus {
    guard(|| {
        non_null(scheme, "scheme")?;
        non_null(predicted, "predicted")?;
        non_null(speakers, "speakers")?;
        non_null(out_correct, "out_correct")?;
        non_null(out_total, "out_total")?;
        let p = std::slice::from_raw_parts(predicted, n);
        let s = std::slice::from_raw_parts(speakers, n);
        let pairs: Vec<(usize, usize)> = p.iter().copied().zip(s.iter().copied()).collect();
        let r = evaluate(&pairs, &(*scheme).0)?;
        *out_correct = r.correct;
        *out_total = r.total;
        Ok(())
    })
}

fn extract(wave: &Waveform) -> Result<SmltFeatures, Failure> {
    let spec = FrameSpec {
        sample_rate: wave.sample_rate,
        ..FrameSpec::default()
    };
    let ex = FeatureExtractor::new(spec).map_err(|e| Failure(SmltStatus::InvalidArgument, e.to_string()))?;
    ex.features(wave, CropMode::EvalCenterCrop, 0)
        .map(SmltFeatures)
        .map_err(|e| Failure(SmltStatus::Data, e.to_string()))
}

/// Compressed, center-cropped features of a 16 kHz mono 16-bit WAV file with
/// the default frame settings.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn smlt_features_from_wav(path: *const c_char, out: *mut *mut SmltFeatures) -> SmltStatus {
    guard(|| {
        non_null(out, "out")?;
        let wave = load_wav(path_arg(path)?, FrameSpec::default().sample_rate)?;
        *out = Box::into_raw(Box::new(extract(&wave)?));
        Ok(())
    })
}

/// Same as [`smlt_features_from_wav`] for samples already in memory.
///
/// # Safety
/// `samples` must point to `n` values and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn smlt_features_from_samples(
    samples: *const f32,
    n: usize,
    sample_rate: u32,
    out: *mut *mut SmltFeatures,
) -> SmltStatus {
    guard(|| {
        non_null(samples, "samples")?;
        non_null(out, "out")?;
        let data = std::slice::from_raw_parts(samples, n).iter().map(|&v| v as f64).collect();
        *out = Box::into_raw(Box::new(extract(&Waveform::new(data, sample_rate))?));
        Ok(())
    })
}

/// # Safety
/// `features` must be a live handle; the outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn smlt_features_shape(features: *const SmltFeatures, bins: *mut usize, frames: *mut usize) -> SmltStatus {
    guard(|| {
        non_null(features, "features")?;
        non_null(bins, "bins")?;
        non_null(frames, "frames")?;
        let shape = (*features).0.shape();
        *bins = shape[0];
        *frames = shape[1];
        Ok(())
    })
}

/// Pointer to `bins * frames` bin-major values, valid until the handle is freed.
///
/// # Safety
/// `features` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smlt_features_data(features: *const SmltFeatures) -> *const f32 {
    features.as_ref().map_or(std::ptr::null(), |f| f.0.data().as_ptr())
}

/// # Safety
/// `features` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smlt_features_free(features: *mut SmltFeatures) {
    if !features.is_null() {
        drop(Box::from_raw(features));
    }
}

/// Loads a speaker-ID checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn smlt_speaker_id_load(path: *const c_char, out: *mut *mut SmltSpeakerId) -> SmltStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = path_arg(path)?;
        let ckpt = read_checkpoint(&path).map_err(|e| Failure(SmltStatus::Io, e.to_string()))?;
        let net = SpeakerIdNet::from_checkpoint(&ckpt).map_err(|e| Failure(SmltStatus::Model, e.to_string()))?;
        *out = Box::into_raw(Box::new(SmltSpeakerId(net)));
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smlt_speaker_id_free(net: *mut SmltSpeakerId) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Size of the logit vector, or 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smlt_speaker_id_output_dim(net: *const SmltSpeakerId) -> usize {
    net.as_ref().map_or(0, |n| n.0.config().output_dim)
}

/// Size of the embedding vector, or 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn smlt_speaker_id_embedding_dim(net: *const SmltSpeakerId) -> usize {
    net.as_ref().map_or(0, |n| n.0.config().embedding_dim())
}

/// Writes the logits for `features` into `out` (capacity `len`). `written`
/// (optional) receives the number of values required.
///
/// # Safety
/// Handles must be live; `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn smlt_speaker_id_logits(
    net: *const SmltSpeakerId,
    features: *const SmltFeatures,
    out: *mut f32,
    len: usize,
    written: *mut usize,
) -> SmltStatus {
    guard(|| {
        non_null(net, "net")?;
        non_null(features, "features")?;
        let logits = (*net)
            .0
            .logits((*features).0.clone())
            .map_err(|e| Failure(SmltStatus::InvalidArgument, e.to_string()))?;
        write_out(logits.data(), out, len, written)
    })
}

/// Writes the speaker embedding for `features` into `out`.
///
/// # Safety
/// Handles must be live; `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn smlt_speaker_id_embedding(
    net: *const SmltSpeakerId,
    features: *const SmltFeatures,
    out: *mut f32,
    len: usize,
    written: *mut usize,
) -> SmltStatus {
    guard(|| {
        non_null(net, "net")?;
        non_null(features, "features")?;
        let emb = (*net)
            .0
            .extract_embedding((*features).0.clone())
            .map_err(|e| Failure(SmltStatus::InvalidArgument, e.to_string()))?;
        write_out(emb.data(), out, len, written)
    })
}

/// Mixes `noise` into `clean` at `snr_db` and writes `n_clean` samples to
/// `out`. The noise start offset is drawn from `seed` and wraps around.
///
/// # Safety
/// `clean` and `out` must hold `n_clean` values, `noise` `n_noise` values.
#[no_mangle]
pub unsafe extern "C" fn smlt_mix_at_snr(
    clean: *const f32,
    n_clean: usize,
    noise: *const f32,
    n_noise: usize,
    sample_rate: u32,
    snr_db: f64,
    seed: u64,
    out: *mut f32,
) -> SmltStatus {
    guard(|| {
        non_null(clean, "clean")?;
        non_null(noise, "noise")?;
        non_null(out, "out")?;
        let to_wave = |p: *const f32, n: usize| {
            Waveform::new(std::slice::from_raw_parts(p, n).iter().map(|&v| v as f64).collect(), sample_rate)
        };
        let mixed = mix_at_snr(&to_wave(clean, n_clean), &to_wave(noise, n_noise), snr_db, seed)?;
        for (i, v) in mixed.samples.iter().enumerate() {
            *out.add(i) = *v as f32;
        }
        Ok(())
    })
}
