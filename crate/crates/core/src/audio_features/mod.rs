//! Video-synchronised audio descriptors.
//!
//! Each video frame owns an audio frame spanning the previous, current and
//! next video frame periods. Low-level descriptors (LLDs) are computed over
//! 60 ms windows with a 10 ms hop, and the first two windows of every audio
//! frame are concatenated so the per-frame vector length does not depend on
//! the audio sample rate.

mod descriptors;
mod precomputed;

use std::path::Path;

use thiserror::Error;

pub use descriptors::{window_descriptors, FALLBACK_DESCRIPTORS, LOG_ENERGY_FLOOR};
pub use precomputed::{ingest_precomputed, read_lld_vectors, write_lld_csv, write_lld_vectors};

pub const WINDOW_SECONDS: f64 = 0.060;
pub const HOP_SECONDS: f64 = 0.010;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("non-finite audio sample at index {0}")]
    NonFinite(usize),
    #[error("fps must be positive and finite, got {0}")]
    BadFps(f64),
    #[error("need at least one video frame")]
    NoVideoFrames,
    #[error("track of {samples} samples is shorter than one video frame ({needed} samples)")]
    TrackTooShort { samples: usize, needed: usize },
    #[error("audio ends before video frame {0}")]
    AudioEndsBeforeFrame(usize),
    #[error("audio frame of {samples} samples is shorter than one {window}-sample window")]
    FrameShorterThanWindow { samples: usize, window: usize },
    #[error("need at least 2 LLD windows, got {0}")]
    TooFewWindows(usize),
    #[error("fewer than 2 LLD rows available for video frame {frame}")]
    FrameNotCovered { frame: usize },
    #[error("row {row}: non-numeric cell '{cell}'")]
    NonNumeric { row: usize, cell: String },
    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("LLD file has no descriptor columns")]
    NoDescriptors,
    #[error("LLD vector length {found} differs from {expected}")]
    MixedDimension { expected: usize, found: usize },
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Mono audio signal with samples nominally in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioTrack {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioTrack {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Reads a PCM WAV file, averaging channels to mono.
    pub fn read_wav(path: &Path) -> Result<Self, AudioError> {
        let mut reader = hound::WavReader::open(path)?;
        let spec = reader.spec();
        let channels = spec.channels.max(1) as usize;
        let raw: Vec<f64> = match spec.sample_format {
            hound::SampleFormat::Int => {
                let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
                reader.samples::<i32>().map(|s| s.map(|v| v as f64 / scale)).collect::<Result<_, _>>()?
            }
            hound::SampleFormat::Float => {
                reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>()?
            }
        };
        let samples = raw.chunks(channels).map(|c| c.iter().sum::<f64>() / channels as f64).collect();
        Self::new(samples, spec.sample_rate)
    }

    /// Writes 16-bit mono PCM.
    pub fn write_wav(&self, path: &Path) -> Result<(), AudioError> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec)?;
        for &s in &self.samples {
            w.write_sample(quantize_i16(s))?;
        }
        w.finalize()?;
        Ok(())
    }
}

pub fn quantize_i16(s: f64) -> i16 {
    (s.clamp(-1.0, 1.0) * 32767.0).round() as i16
}

/// Audio belonging to one video frame: `[start, end)` in track samples.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioFrame {
    pub center_video_frame: usize,
    pub start: usize,
    pub end: usize,
    pub samples: Vec<f64>,
}

impl AudioFrame {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

fn samples_per_period(rate: u32, fps: f64) -> f64 {
    rate as f64 / fps
}

/// Nominal (unclamped) first sample of the audio frame for video frame `k`.
fn nominal_start(k: usize, period: f64) -> i64 {
    ((k as f64 - 1.0) * period + 1e-9).floor() as i64
}

/// Splits `track` into one audio frame per video frame. Frame `k` covers
/// video frames `k−1..=k+1`, clamped to the track; nothing is padded.
pub fn build_audio_frames(
    track: &AudioTrack,
    fps: f64,
    n_video_frames: usize,
) -> Result<Vec<AudioFrame>, AudioError> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(AudioError::BadFps(fps));
    }
    if n_video_frames == 0 {
        return Err(AudioError::NoVideoFrames);
    }
    let period = samples_per_period(track.sample_rate, fps);
    let needed = period.ceil() as usize;
    if track.len() < needed {
        return Err(AudioError::TrackTooShort { samples: track.len(), needed });
    }
    let span = (3.0 * period).round() as i64;
    let len = track.len() as i64;
    (0..n_video_frames)
        .map(|k| {
            let nominal = nominal_start(k, period);
            let start = nominal.max(0);
            let end = (nominal + span).min(len);
            if start >= len {
                return Err(AudioError::AudioEndsBeforeFrame(k));
            }
            let (start, end) = (start as usize, end as usize);
            Ok(AudioFrame { center_video_frame: k, start, end, samples: track.samples[start..end].to_vec() })
        })
        .collect()
}

/// Window and hop lengths in samples for `rate`.
pub fn window_geometry(rate: u32) -> (usize, usize) {
    let r = rate as f64;
    ((WINDOW_SECONDS * r).round() as usize, (HOP_SECONDS * r).round() as usize)
}

/// Row-major `n_windows × D` descriptor matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct LldMatrix {
    dim: usize,
    values: Vec<f64>,
}

impl LldMatrix {
    pub fn new(dim: usize, values: Vec<f64>) -> Self {
        assert!(dim > 0 && values.len() % dim == 0, "ragged LLD matrix");
        Self { dim, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
}

/// Number of full windows in `len` samples; partial trailing windows are dropped.
pub fn window_count(len: usize, window: usize, hop: usize) -> usize {
    if len < window {
        0
    } else {
        (len - window) / hop + 1
    }
}

/// Fallback descriptors for every full window of `samples`.
pub fn extract_llds(samples: &[f64], rate: u32) -> Result<LldMatrix, AudioError> {
    let (window, hop) = window_geometry(rate);
    let n = window_count(samples.len(), window, hop);
    if n == 0 {
        return Err(AudioError::FrameShorterThanWindow { samples: samples.len(), window });
    }
    let mut values = Vec::with_capacity(n * FALLBACK_DESCRIPTORS);
    for w in 0..n {
        values.extend_from_slice(&window_descriptors(&samples[w * hop..w * hop + window], rate));
    }
    Ok(LldMatrix::new(FALLBACK_DESCRIPTORS, values))
}

/// Fixed-length per-video-frame audio descriptor: two concatenated LLD rows.
#[derive(Clone, Debug, PartialEq)]
pub struct LldVector {
    values: Vec<f64>,
}

impl LldVector {
    pub fn new(values: Vec<f64>) -> Result<Self, AudioError> {
        if values.is_empty() || values.len() % 2 != 0 {
            return Err(AudioError::MixedDimension { expected: 2 * (values.len() / 2).max(1), found: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Descriptors per window.
    pub fn descriptors(&self) -> usize {
        self.values.len() / 2
    }
}

/// Concatenates LLD rows 0 and 1.
pub fn select_first_two(llds: &LldMatrix) -> Result<LldVector, AudioError> {
    if llds.n_rows() < 2 {
        return Err(AudioError::TooFewWindows(llds.n_rows()));
    }
    let mut v = llds.row(0).to_vec();
    v.extend_from_slice(llds.row(1));
    LldVector::new(v)
}

/// First sample of the two-window analysis region for `frame`.
///
/// The region starts at the frame start. Boundary frames shorter than two
/// windows read forward into real neighbouring audio, and at the end of the
/// track the region is shifted back so it stays inside the signal.
pub fn analysis_start(frame: &AudioFrame, track_len: usize, rate: u32) -> Result<usize, AudioError> {
    let (window, hop) = window_geometry(rate);
    let need = window + hop;
    if track_len < need {
        return Err(AudioError::FrameShorterThanWindow { samples: track_len, window: need });
    }
    Ok(frame.start.min(track_len - need))
}

/// Per-video-frame fallback LLD vectors for a whole track.
pub fn fallback_vectors(
    track: &AudioTrack,
    fps: f64,
    n_video_frames: usize,
) -> Result<Vec<LldVector>, AudioError> {
    let (window, hop) = window_geometry(track.sample_rate);
    build_audio_frames(track, fps, n_video_frames)?
        .iter()
        .map(|f| {
            let a = analysis_start(f, track.len(), track.sample_rate)?;
            let m = extract_llds(&track.samples[a..a + window + hop], track.sample_rate)?;
            select_first_two(&m)
        })
        .collect()
}

/// Checks every vector has the same length.
pub fn check_uniform_dimension(vectors: &[LldVector]) -> Result<usize, AudioError> {
    let Some(first) = vectors.first() else { return Ok(0) };
    for v in vectors {
        if v.len() != first.len() {
            return Err(AudioError::MixedDimension { expected: first.len(), found: v.len() });
        }
    }
    Ok(first.len())
}
