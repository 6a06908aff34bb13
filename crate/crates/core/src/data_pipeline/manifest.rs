use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::image::Image;
use super::DataError;
use crate::affect_metrics::AffectEstimate;
use crate::audio_features::AudioTrack;

/// One clip as listed in a manifest. Paths are relative to the manifest root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipEntry {
    pub id: String,
    pub subject: String,
    pub fps: f64,
    pub n_frames: usize,
    /// Frame file pattern with a `%06d` placeholder for the frame index.
    pub frame_pattern: String,
    pub audio: String,
    pub labels: String,
    pub split: String,
}

impl ClipEntry {
    pub fn frame_path(&self, root: &Path, index: usize) -> PathBuf {
        root.join(self.frame_pattern.replace("%06d", &format!("{index:06}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    /// Relative roots are resolved against the manifest file's directory.
    pub root: PathBuf,
    pub clips: Vec<ClipEntry>,
}

impl DatasetManifest {
    pub fn clips_in<'a>(&'a self, split: &'a str) -> impl Iterator<Item = &'a ClipEntry> + 'a {
        self.clips.iter().filter(move |c| c.split == split)
    }

    pub fn splits(&self) -> BTreeSet<&str> {
        self.clips.iter().map(|c| c.split.as_str()).collect()
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.clips.iter().map(|c| c.subject.as_str()).collect()
    }

    pub fn total_frames(&self, split: &str) -> usize {
        self.clips_in(split).map(|c| c.n_frames).sum()
    }

    /// Checks ids, fields and that every referenced file exists.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen = BTreeSet::new();
        for c in &self.clips {
            if !seen.insert(c.id.as_str()) {
                return Err(DataError::DuplicateClip(c.id.clone()));
            }
            if !(c.fps.is_finite() && c.fps > 0.0) {
                return Err(DataError::malformed(&c.id, format!("fps must be positive, got {}", c.fps)));
            }
            if c.n_frames == 0 {
                return Err(DataError::malformed(&c.id, "clip has no frames"));
            }
            if !c.frame_pattern.contains("%06d") {
                return Err(DataError::malformed(&c.id, "frame_pattern lacks %06d"));
            }
            let mut files = vec![self.root.join(&c.audio), self.root.join(&c.labels)];
            files.extend((0..c.n_frames).map(|k| c.frame_path(&self.root, k)));
            if let Some(missing) = files.into_iter().find(|p| !p.is_file()) {
                return Err(DataError::MissingFile { clip: c.id.clone(), path: missing });
            }
        }
        Ok(())
    }
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), DataError> {
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(path, text + "\n").map_err(|e| DataError::io(path, e))
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let mut m: DatasetManifest = serde_json::from_str(&text)?;
    if m.root.is_relative() {
        let base = path.parent().unwrap_or(Path::new("."));
        m.root = base.join(&m.root);
    }
    m.validate()?;
    Ok(m)
}

/// A fully loaded clip.
#[derive(Clone, Debug)]
pub struct ClipRecord {
    pub clip_id: String,
    pub subject_id: String,
    pub fps: f64,
    pub frames: Vec<Image>,
    pub audio: AudioTrack,
    pub labels: Vec<AffectEstimate>,
}

pub fn load_clip(root: &Path, entry: &ClipEntry) -> Result<ClipRecord, DataError> {
    let frames = (0..entry.n_frames)
        .map(|k| Image::read_png(&entry.frame_path(root, k)))
        .collect::<Result<Vec<_>, _>>()?;
    let (h, w) = (frames[0].height(), frames[0].width());
    if let Some(k) = frames.iter().position(|f| (f.height(), f.width()) != (h, w)) {
        return Err(DataError::malformed(&entry.id, format!("frame {k} differs in size")));
    }
    let audio = AudioTrack::read_wav(&root.join(&entry.audio))
        .map_err(|source| DataError::ClipAudio { clip: entry.id.clone(), source })?;
    let labels = read_labels(&root.join(&entry.labels), &entry.id)?;
    if labels.len() != entry.n_frames {
        return Err(DataError::malformed(
            &entry.id,
            format!("{} labels for {} frames", labels.len(), entry.n_frames),
        ));
    }
    Ok(ClipRecord {
        clip_id: entry.id.clone(),
        subject_id: entry.subject.clone(),
        fps: entry.fps,
        frames,
        audio,
        labels,
    })
}

pub(crate) const LABELS_HEADER: [&str; 3] = ["frame", "valence", "arousal"];

pub(crate) fn write_labels(path: &Path, labels: &[AffectEstimate]) -> Result<(), DataError> {
    let mut out = LABELS_HEADER.join(",");
    out.push('\n');
    for (k, l) in labels.iter().enumerate() {
        out.push_str(&format!("{k},{},{}\n", l.valence, l.arousal));
    }
    fs::write(path, out).map_err(|e| DataError::io(path, e))
}

fn read_labels(path: &Path, clip: &str) -> Result<Vec<AffectEstimate>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
    if header != LABELS_HEADER {
        return Err(DataError::malformed(clip, format!("label header {header:?}")));
    }
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = i + 2;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite() && v.abs() <= 1.0);
        match (cells.as_slice(), cells.get(0).and_then(|s| s.parse::<usize>().ok())) {
            ([_, v, a], Some(frame)) if frame == labels.len() => match (parse(v), parse(a)) {
                (Some(v), Some(a)) => labels.push(AffectEstimate::new(v, a)),
                _ => return Err(DataError::malformed(clip, format!("labels row {row}: value outside [-1, 1]"))),
            },
            _ => return Err(DataError::malformed(clip, format!("labels row {row}: malformed '{line}'"))),
        }
    }
    Ok(labels)
}
