//! Datasets on disk, the image corruption model, a seeded synthetic
//! audiovisual dataset and the training batch stream.

mod batch;
mod image;
mod manifest;
mod noise;
mod synth;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::audio_features::AudioError;

pub use batch::{frame_seed, Batch, BatchIter, FrameDataset, LldSource, EVAL_EPOCH};
pub use image::{psnr, Image, CHANNELS};
pub use manifest::{load_clip, load_manifest, save_manifest, ClipEntry, ClipRecord, DatasetManifest};
pub use noise::{
    corrupt, corrupt_with_record, downsample_upsample, gaussian_blur, ApplyProbability, CorruptionRecord,
    NoiseSpec,
};
pub use synth::{
    decode_valence, generate_synthetic_dataset, render_frame, subject_styles, SubjectStyle, SynthConfig,
};

pub const TRAIN_SPLIT: &str = "train";
pub const VAL_SPLIT: &str = "val";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("png {0}: {1}")]
    Png(String, String),
    #[error("manifest json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("clip '{clip}': missing file {path}")]
    MissingFile { clip: String, path: PathBuf },
    #[error("clip '{clip}': {reason}")]
    MalformedClip { clip: String, reason: String },
    #[error("duplicate clip id '{0}'")]
    DuplicateClip(String),
    #[error("clip '{clip}': audio: {source}")]
    ClipAudio { clip: String, source: AudioError },
    #[error("split '{0}' has no frames")]
    EmptySplit(String),
    #[error("batch size must be at least 2, got {0}")]
    BatchTooSmall(usize),
    #[error("invalid noise spec: {0}")]
    InvalidNoiseSpec(String),
    #[error("invalid synthetic dataset config: {0}")]
    InvalidSynthConfig(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_owned(), source }
    }

    pub(crate) fn malformed(clip: &str, reason: impl Into<String>) -> Self {
        Self::MalformedClip { clip: clip.to_owned(), reason: reason.into() }
    }
}
