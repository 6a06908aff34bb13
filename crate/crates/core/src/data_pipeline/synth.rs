//! Seeded synthetic audiovisual affect dataset.
//!
//! Each frame shows a flat-shaded face on a textured, flickering background.
//! Valence bends the mouth arc and sets the voice pitch; arousal opens the
//! eyes, drives the background flicker amplitude and the voice loudness.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::image::{Image, CHANNELS};
use super::manifest::{save_manifest, write_labels, ClipEntry, DatasetManifest};
use super::{DataError, TRAIN_SPLIT, VAL_SPLIT};
use crate::affect_metrics::AffectEstimate;
use crate::audio_features::AudioTrack;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub clips_per_subject: usize,
    pub frames_per_clip: usize,
    pub image_size: usize,
    pub fps: f64,
    pub audio_rate: u32,
    pub seed: u64,
    /// Fraction of subjects held out as the validation split.
    pub val_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 10,
            clips_per_subject: 2,
            frames_per_clip: 50,
            image_size: 64,
            fps: 25.0,
            audio_rate: 16000,
            seed: 0,
            val_fraction: 0.2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSynthConfig(m));
        if self.n_subjects == 0 || self.clips_per_subject == 0 || self.frames_per_clip == 0 {
            return bad("subject, clip and frame counts must be at least 1".into());
        }
        if self.image_size < 16 {
            return bad(format!("image_size must be at least 16, got {}", self.image_size));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if self.audio_rate < 2000 {
            return bad(format!("audio_rate must be at least 2000 Hz, got {}", self.audio_rate));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction must lie in [0, 1), got {}", self.val_fraction));
        }
        // two 60 ms analysis windows one hop apart
        if (self.frames_per_clip as f64 / self.fps) < 0.07 {
            return bad("clips must last at least 70 ms for audio descriptors".into());
        }
        Ok(())
    }

    fn n_samples(&self) -> usize {
        (self.frames_per_clip as f64 * self.audio_rate as f64 / self.fps).round() as usize
    }
}

/// Per-subject appearance and voice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectStyle {
    pub subject: String,
    /// Face centre offset from the image centre, in pixels.
    pub face_offset: [f64; 2],
    pub skin: [f32; 3],
    pub lip: [f32; 3],
    pub eye: [f32; 3],
    pub background: [f32; 3],
    /// `(cycles_x, cycles_y, phase)` of two background texture gratings.
    pub texture: [[f64; 3]; 2],
    pub base_f0: f64,
    pub f0_range: f64,
    pub gain: f64,
}

const TEXTURE_AMPLITUDE: f64 = 0.04;

/// Face geometry at a given image size.
struct Geometry {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    mouth_y: f64,
    mouth_half_len: f64,
    sag_max: f64,
    lip_half_width: f64,
    eye_dx: f64,
    eye_y: f64,
    eye_half_w: f64,
    scale: f64,
}

impl Geometry {
    fn new(style: &SubjectStyle, size: usize) -> Self {
        let s = size as f64;
        let scale = s / 64.0;
        let cx = s / 2.0 + style.face_offset[0] * scale;
        let cy = s / 2.0 + style.face_offset[1] * scale;
        Self {
            cx,
            cy,
            rx: 0.30 * s,
            ry: 0.38 * s,
            mouth_y: cy + 0.18 * s,
            mouth_half_len: 0.14 * s,
            sag_max: 0.07 * s,
            lip_half_width: if size >= 32 { 2.0 } else { 1.0 },
            eye_dx: 0.13 * s,
            eye_y: cy - 0.10 * s,
            eye_half_w: 0.07 * s,
            scale,
        }
    }

    /// Vertical mouth-arc centre at column `x`: corners rise for positive
    /// valence.
    fn mouth_center(&self, x: f64, valence: f64) -> Option<f64> {
        let u = (x - self.cx) / self.mouth_half_len;
        (u.abs() <= 1.0).then(|| self.mouth_y - self.sag_max * valence * u * u)
    }

    fn in_face(&self, x: f64, y: f64) -> bool {
        ((x - self.cx) / self.rx).powi(2) + ((y - self.cy) / self.ry).powi(2) <= 1.0
    }

    fn eye_half_height(&self, arousal: f64) -> f64 {
        self.scale * (2.75 + 1.25 * arousal)
    }
}

/// Background flicker amplitude: `bg · (1 ± amp)` on alternating frames.
fn flicker_amplitude(arousal: f64) -> f64 {
    0.04 + 0.03 * arousal
}

pub fn render_frame(style: &SubjectStyle, size: usize, label: AffectEstimate, frame_index: usize) -> Image {
    let g = Geometry::new(style, size);
    let mut img = Image::new(size, size);
    let sign = if frame_index % 2 == 0 { 1.0 } else { -1.0 };
    let flicker = 1.0 + flicker_amplitude(label.arousal) * sign;
    let eye_h = g.eye_half_height(label.arousal);
    let s = size as f64;
    for y in 0..size {
        for x in 0..size {
            let (xf, yf) = (x as f64, y as f64);
            let color: [f64; 3] = if g.in_face(xf, yf) {
                let mut c = style.skin.map(f64::from);
                for ex in [g.cx - g.eye_dx, g.cx + g.eye_dx] {
                    let d = (((xf - ex) / g.eye_half_w).powi(2) + ((yf - g.eye_y) / eye_h).powi(2)).sqrt();
                    let alpha = ((1.0 - d) * eye_h.min(g.eye_half_w) + 0.5).clamp(0.0, 1.0);
                    blend(&mut c, style.eye, alpha);
                }
                if let Some(yc) = g.mouth_center(xf, label.valence) {
                    let alpha = (1.0 - (yf - yc).abs() / g.lip_half_width).max(0.0);
                    blend(&mut c, style.lip, alpha);
                }
                c
            } else {
                let tex: f64 = style
                    .texture
                    .iter()
                    .map(|[fx, fy, ph]| TEXTURE_AMPLITUDE * (2.0 * PI * (fx * xf / s + fy * yf / s) + ph).sin())
                    .sum();
                style.background.map(|b| (b as f64 + tex) * flicker)
            };
            for (c, v) in color.iter().enumerate() {
                img.set(c, y, x, *v as f32);
            }
        }
    }
    img.clamp01();
    img
}

fn blend(c: &mut [f64; 3], target: [f32; 3], alpha: f64) {
    for (v, t) in c.iter_mut().zip(target) {
        *v = *v * (1.0 - alpha) + t as f64 * alpha;
    }
}

/// Recovers valence from a clean frame by measuring the mouth arc: per column
/// the lip-colour centroid is located, then `y = A + B·u²` is fitted and
/// `v = −B / sag_max`.
pub fn decode_valence(image: &Image, style: &SubjectStyle) -> f64 {
    let size = image.width();
    let g = Geometry::new(style, size);
    let dir: Vec<f64> = (0..CHANNELS).map(|c| (style.lip[c] - style.skin[c]) as f64).collect();
    let norm2: f64 = dir.iter().map(|d| d * d).sum();
    let y_lo = (g.mouth_y - g.sag_max - g.lip_half_width).floor().max(0.0) as usize;
    let y_hi = ((g.mouth_y + g.sag_max + g.lip_half_width).ceil() as usize).min(size - 1);
    let (mut s_u2, mut s_u4, mut s_y, mut s_yu2, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for x in 0..size {
        let u = (x as f64 - g.cx) / g.mouth_half_len;
        if u.abs() > 0.95 {
            continue;
        }
        let (mut w, mut wy) = (0.0, 0.0);
        for y in (y_lo..=y_hi).filter(|&y| g.in_face(x as f64, y as f64)) {
            let alpha = (0..CHANNELS)
                .map(|c| (image.get(c, y, x) - style.skin[c]) as f64 * dir[c])
                .sum::<f64>()
                / norm2;
            let alpha = alpha.clamp(0.0, 1.0);
            w += alpha;
            wy += alpha * y as f64;
        }
        if w <= 0.0 {
            continue;
        }
        let yc = wy / w;
        let u2 = u * u;
        s_u2 += u2;
        s_u4 += u2 * u2;
        s_y += yc;
        s_yu2 += yc * u2;
        n += 1.0;
    }
    let det = n * s_u4 - s_u2 * s_u2;
    if n < 3.0 || det.abs() < 1e-12 {
        return 0.0;
    }
    let b = (n * s_yu2 - s_u2 * s_y) / det;
    (-b / g.sag_max).clamp(-1.0, 1.0)
}

fn jitter(rng: &mut ChaCha8Rng, center: [f32; 3], spread: f32) -> [f32; 3] {
    center.map(|c| (c + rng.gen_range(-spread..=spread)).clamp(0.0, 1.0))
}

/// Appearance and voice of every subject, derived from the seed alone.
pub fn subject_styles(config: &SynthConfig) -> Vec<SubjectStyle> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5717_1e00_0001);
    (0..config.n_subjects)
        .map(|i| SubjectStyle {
            subject: subject_id(i),
            face_offset: [rng.gen_range(-2.0..=2.0), rng.gen_range(-2.0..=2.0)],
            skin: jitter(&mut rng, [0.80, 0.62, 0.50], 0.08),
            lip: jitter(&mut rng, [0.60, 0.15, 0.20], 0.05),
            eye: jitter(&mut rng, [0.10, 0.10, 0.15], 0.05),
            background: [rng.gen_range(0.2..0.6), rng.gen_range(0.2..0.6), rng.gen_range(0.2..0.6)],
            texture: [
                [rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0), rng.gen_range(0.0..2.0 * PI)],
                [rng.gen_range(0.5..3.0), rng.gen_range(-3.0..-0.5), rng.gen_range(0.0..2.0 * PI)],
            ],
            base_f0: rng.gen_range(110.0..150.0),
            f0_range: 30.0,
            gain: rng.gen_range(0.7..1.0),
        })
        .collect()
}

fn subject_id(i: usize) -> String {
    format!("s{i:02}")
}

/// Smooth mean-reverting walk in `[-1, 1]` with reflecting bounds.
fn label_walk(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let step = Normal::new(0.0, 0.04).expect("valid sigma");
    let mut x: f64 = rng.gen_range(-0.7..0.7);
    let mut vel = 0.0;
    (0..n)
        .map(|_| {
            let out = x;
            vel = 0.85 * vel + step.sample(rng);
            x += vel;
            if x > 1.0 {
                x = 2.0 - x;
                vel = -vel;
            } else if x < -1.0 {
                x = -2.0 - x;
                vel = -vel;
            }
            x = x.clamp(-1.0, 1.0);
            out
        })
        .collect()
}

fn synth_audio(
    rng: &mut ChaCha8Rng,
    style: &SubjectStyle,
    labels: &[AffectEstimate],
    config: &SynthConfig,
) -> Vec<f64> {
    let rate = config.audio_rate as f64;
    let hiss = Normal::new(0.0, 0.003).expect("valid sigma");
    let mut phase = 0.0;
    (0..config.n_samples())
        .map(|i| {
            let pos = (i as f64 / rate * config.fps).min((labels.len() - 1) as f64);
            let k = pos.floor() as usize;
            let frac = pos - k as f64;
            let next = labels[(k + 1).min(labels.len() - 1)];
            let v = labels[k].valence * (1.0 - frac) + next.valence * frac;
            let a = labels[k].arousal * (1.0 - frac) + next.arousal * frac;
            let f0 = style.base_f0 + style.f0_range * v;
            let amp = style.gain * (0.05 + 0.25 * (a + 1.0) / 2.0);
            phase = (phase + 2.0 * PI * f0 / rate) % (2.0 * PI);
            amp * (phase.sin() + 0.3 * (2.0 * phase).sin()) + hiss.sample(rng)
        })
        .collect()
}

/// Writes the dataset under `out_dir` (frames, WAV, labels, `manifest.json`)
/// and returns its manifest with `root = out_dir`.
pub fn generate_synthetic_dataset(config: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest, DataError> {
    config.validate()?;
    let styles = subject_styles(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_subjects;
    let n_val = if n < 2 { 0 } else { ((n as f64 * config.val_fraction).round() as usize).clamp(1, n - 1) };
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let val: Vec<usize> = order[..n_val].to_vec();

    let mut clips = Vec::new();
    for (si, style) in styles.iter().enumerate() {
        for ci in 0..config.clips_per_subject {
            let id = format!("{}_c{ci:02}", style.subject);
            let rel = format!("clips/{id}");
            let dir = out_dir.join(&rel);
            fs::create_dir_all(&dir).map_err(|e| DataError::io(&dir, e))?;
            let v = label_walk(&mut rng, config.frames_per_clip);
            let a = label_walk(&mut rng, config.frames_per_clip);
            let labels: Vec<AffectEstimate> = v.iter().zip(&a).map(|(&v, &a)| AffectEstimate::new(v, a)).collect();
            for (k, l) in labels.iter().enumerate() {
                render_frame(style, config.image_size, *l, k).write_png(&dir.join(format!("frame_{k:06}.png")))?;
            }
            let samples = synth_audio(&mut rng, style, &labels, config);
            AudioTrack::new(samples, config.audio_rate)?.write_wav(&dir.join("audio.wav"))?;
            write_labels(&dir.join("labels.csv"), &labels)?;
            clips.push(ClipEntry {
                id,
                subject: style.subject.clone(),
                fps: config.fps,
                n_frames: config.frames_per_clip,
                frame_pattern: format!("{rel}/frame_%06d.png"),
                audio: format!("{rel}/audio.wav"),
                labels: format!("{rel}/labels.csv"),
                split: if val.contains(&si) { VAL_SPLIT } else { TRAIN_SPLIT }.to_owned(),
            });
        }
    }
    let stored = DatasetManifest { root: ".".into(), clips };
    save_manifest(&stored, &out_dir.join("manifest.json"))?;
    Ok(DatasetManifest { root: out_dir.to_owned(), ..stored })
}
