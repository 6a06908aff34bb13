use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::Image;
use super::manifest::{load_clip, ClipRecord, DatasetManifest};
use super::noise::{corrupt, NoiseSpec};
use super::DataError;
use crate::affect_metrics::AffectEstimate;
use crate::audio_features::{
    check_uniform_dimension, fallback_vectors, ingest_precomputed, read_lld_vectors, LldVector,
};

/// Epoch index used for evaluation streams, which are never shuffled.
pub const EVAL_EPOCH: u64 = u64::MAX;

/// Where per-frame audio vectors come from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "dir")]
pub enum LldSource {
    /// Built-in six-descriptor extractor run on the clip audio.
    #[default]
    Fallback,
    /// Per-frame vector files `<dir>/<clip_id>.csv` as written by the
    /// feature command.
    Vectors(PathBuf),
    /// Raw descriptor tables `<dir>/<clip_id>.csv` (timestamp + columns).
    Precomputed(PathBuf),
}

impl LldSource {
    pub fn vectors_for(&self, clip: &ClipRecord) -> Result<Vec<LldVector>, DataError> {
        let wrap = |source| DataError::ClipAudio { clip: clip.clip_id.clone(), source };
        let n = clip.frames.len();
        let file = |dir: &PathBuf| -> Result<PathBuf, DataError> {
            let p = dir.join(format!("{}.csv", clip.clip_id));
            if p.is_file() {
                Ok(p)
            } else {
                Err(DataError::MissingFile { clip: clip.clip_id.clone(), path: p })
            }
        };
        let vectors = match self {
            LldSource::Fallback => fallback_vectors(&clip.audio, clip.fps, n).map_err(wrap)?,
            LldSource::Vectors(dir) => read_lld_vectors(&file(dir)?).map_err(wrap)?,
            LldSource::Precomputed(dir) => ingest_precomputed(&file(dir)?, clip.fps, n).map_err(wrap)?,
        };
        if vectors.len() != n {
            return Err(DataError::malformed(
                &clip.clip_id,
                format!("{} audio vectors for {n} frames", vectors.len()),
            ));
        }
        Ok(vectors)
    }
}

/// All frames of one split held in memory with their audio vectors.
#[derive(Clone, Debug)]
pub struct FrameDataset {
    split: String,
    clips: Vec<ClipRecord>,
    llds: Vec<Vec<LldVector>>,
    index: Vec<(usize, usize)>,
    lld_len: usize,
    image_size: (usize, usize),
}

impl FrameDataset {
    pub fn load(manifest: &DatasetManifest, split: &str, source: &LldSource) -> Result<Self, DataError> {
        let mut clips = Vec::new();
        let mut llds = Vec::new();
        for entry in manifest.clips_in(split) {
            let clip = load_clip(&manifest.root, entry)?;
            llds.push(source.vectors_for(&clip)?);
            clips.push(clip);
        }
        Self::from_clips(split, clips, llds)
    }

    pub fn from_clips(split: &str, clips: Vec<ClipRecord>, llds: Vec<Vec<LldVector>>) -> Result<Self, DataError> {
        let index: Vec<(usize, usize)> =
            clips.iter().enumerate().flat_map(|(c, clip)| (0..clip.frames.len()).map(move |f| (c, f))).collect();
        if index.is_empty() {
            return Err(DataError::EmptySplit(split.to_owned()));
        }
        let all: Vec<LldVector> = llds.iter().flatten().cloned().collect();
        let lld_len = check_uniform_dimension(&all)?;
        let first = &clips[index[0].0].frames[0];
        let image_size = (first.height(), first.width());
        for clip in &clips {
            if clip.frames.iter().any(|f| (f.height(), f.width()) != image_size) {
                return Err(DataError::malformed(&clip.clip_id, "frame size differs from the rest of the split"));
            }
        }
        Ok(Self { split: split.to_owned(), clips, llds, index, lld_len, image_size })
    }

    pub fn split(&self) -> &str {
        &self.split
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn lld_len(&self) -> usize {
        self.lld_len
    }

    /// `(height, width)` of every frame.
    pub fn image_size(&self) -> (usize, usize) {
        self.image_size
    }

    pub fn clips(&self) -> &[ClipRecord] {
        &self.clips
    }

    /// Audio vectors of every frame in index order.
    pub fn lld_vectors(&self) -> Vec<LldVector> {
        self.index.iter().map(|&(c, f)| self.llds[c][f].clone()).collect()
    }

    pub fn labels(&self) -> Vec<AffectEstimate> {
        self.index.iter().map(|&(c, f)| self.clips[c].labels[f]).collect()
    }

    /// Shuffled training stream for one epoch.
    pub fn batches<'a>(
        &'a self,
        batch_size: usize,
        seed: u64,
        epoch: u64,
        noise: &'a NoiseSpec,
    ) -> Result<BatchIter<'a>, DataError> {
        if batch_size < 2 {
            return Err(DataError::BatchTooSmall(batch_size));
        }
        let mut order: Vec<usize> = (0..self.index.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(epoch))));
        Ok(BatchIter { ds: self, order, pos: 0, batch_size, seed, epoch, noise })
    }

    /// Unshuffled stream in manifest order with a fixed corruption draw.
    pub fn eval_batches<'a>(
        &'a self,
        batch_size: usize,
        seed: u64,
        noise: &'a NoiseSpec,
    ) -> Result<BatchIter<'a>, DataError> {
        if batch_size == 0 {
            return Err(DataError::BatchTooSmall(0));
        }
        let order = (0..self.index.len()).collect();
        Ok(BatchIter { ds: self, order, pos: 0, batch_size, seed, epoch: EVAL_EPOCH, noise })
    }
}

/// One minibatch: noisy inputs, clean targets, audio vectors and labels.
#[derive(Clone, Debug)]
pub struct Batch {
    pub noisy: Vec<Image>,
    pub clean: Vec<Image>,
    pub lld: Vec<LldVector>,
    pub labels: Vec<AffectEstimate>,
    /// `(clip_id, frame index)` of each sample.
    pub keys: Vec<(String, usize)>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub struct BatchIter<'a> {
    ds: &'a FrameDataset,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    noise: &'a NoiseSpec,
}

impl BatchIter<'_> {
    pub fn n_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let mut b = Batch { noisy: vec![], clean: vec![], lld: vec![], labels: vec![], keys: vec![] };
        for &i in &self.order[self.pos..end] {
            let (c, f) = self.ds.index[i];
            let clip = &self.ds.clips[c];
            let clean = &clip.frames[f];
            b.noisy.push(corrupt(clean, self.noise, frame_seed(self.seed, self.epoch, &clip.clip_id, f)));
            b.clean.push(clean.clone());
            b.lld.push(self.ds.llds[c][f].clone());
            b.labels.push(clip.labels[f]);
            b.keys.push((clip.clip_id.clone(), f));
        }
        self.pos = end;
        Some(b)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Corruption seed of one frame in one epoch.
pub fn frame_seed(seed: u64, epoch: u64, clip_id: &str, frame: usize) -> u64 {
    // FNV-1a of the clip id
    let clip_hash = clip_id
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    splitmix64(seed ^ splitmix64(epoch ^ splitmix64(clip_hash ^ splitmix64(frame as u64))))
}
