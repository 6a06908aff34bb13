use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::image::{Image, CHANNELS};
use super::DataError;

/// Per-corruption application probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApplyProbability {
    pub blur: f64,
    pub downsample: f64,
    pub noise: f64,
    pub color: f64,
}

impl Default for ApplyProbability {
    fn default() -> Self {
        Self::all(0.5)
    }
}

impl ApplyProbability {
    pub fn all(p: f64) -> Self {
        Self { blur: p, downsample: p, noise: p, color: p }
    }
}

/// Ranges for the four image artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub blur_sigma_range: [f64; 2],
    pub gauss_noise_sigma_range: [f64; 2],
    pub downsample_factor_set: Vec<usize>,
    pub color_scale_range: [f64; 2],
    pub apply_probability: ApplyProbability,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            blur_sigma_range: [0.5, 2.0],
            gauss_noise_sigma_range: [0.01, 0.08],
            downsample_factor_set: vec![2, 4],
            color_scale_range: [0.6, 1.2],
            apply_probability: ApplyProbability::default(),
        }
    }
}

impl NoiseSpec {
    /// A spec that never changes its input.
    pub fn identity() -> Self {
        Self { apply_probability: ApplyProbability::all(0.0), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |what: &str| Err(DataError::InvalidNoiseSpec(what.to_owned()));
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(self.blur_sigma_range) || self.blur_sigma_range[0] < 0.0 {
            return bad("blur_sigma_range must be ordered and nonnegative");
        }
        if !ordered(self.gauss_noise_sigma_range) || self.gauss_noise_sigma_range[0] < 0.0 {
            return bad("gauss_noise_sigma_range must be ordered and nonnegative");
        }
        if !ordered(self.color_scale_range) || self.color_scale_range[0] < 0.0 {
            return bad("color_scale_range must be ordered and nonnegative");
        }
        if self.downsample_factor_set.is_empty() || self.downsample_factor_set.contains(&0) {
            return bad("downsample_factor_set must be nonempty with factors >= 1");
        }
        let p = self.apply_probability;
        if [p.blur, p.downsample, p.noise, p.color].iter().any(|v| !(0.0..=1.0).contains(v)) {
            return bad("apply probabilities must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Which corruptions were drawn for one image, with their parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRecord {
    pub blur_sigma: Option<f64>,
    pub downsample_factor: Option<usize>,
    pub noise_sigma: Option<f64>,
    pub color_scale: Option<[f64; 3]>,
}

impl CorruptionRecord {
    /// True when nothing that can alter pixels was applied.
    pub fn is_identity(&self) -> bool {
        self.blur_sigma.map_or(true, |s| s == 0.0)
            && self.downsample_factor.map_or(true, |f| f == 1)
            && self.noise_sigma.map_or(true, |s| s == 0.0)
            && self.color_scale.map_or(true, |c| c.iter().all(|&v| v == 1.0))
    }
}

/// Blur, downsample with re-upsampling, additive Gaussian noise and
/// per-channel colour scaling, each drawn independently, then clamping.
pub fn corrupt(image: &Image, spec: &NoiseSpec, seed: u64) -> Image {
    corrupt_with_record(image, spec, seed).0
}

pub fn corrupt_with_record(image: &Image, spec: &NoiseSpec, seed: u64) -> (Image, CorruptionRecord) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = spec.apply_probability;
    // Every decision and parameter is drawn up front so the stream layout does
    // not depend on which stages fire.
    let blur_on = rng.gen::<f64>() < p.blur;
    let blur_sigma = uniform(&mut rng, spec.blur_sigma_range);
    let down_on = rng.gen::<f64>() < p.downsample;
    let factor = spec.downsample_factor_set[rng.gen_range(0..spec.downsample_factor_set.len().max(1))];
    let noise_on = rng.gen::<f64>() < p.noise;
    let noise_sigma = uniform(&mut rng, spec.gauss_noise_sigma_range);
    let color_on = rng.gen::<f64>() < p.color;
    let scales = [
        uniform(&mut rng, spec.color_scale_range),
        uniform(&mut rng, spec.color_scale_range),
        uniform(&mut rng, spec.color_scale_range),
    ];

    let mut record = CorruptionRecord::default();
    let mut out = image.clone();
    if blur_on {
        out = gaussian_blur(&out, blur_sigma);
        record.blur_sigma = Some(blur_sigma);
    }
    if down_on {
        out = downsample_upsample(&out, factor);
        record.downsample_factor = Some(factor);
    }
    if noise_on {
        for v in out.data_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += (noise_sigma * z) as f32;
        }
        record.noise_sigma = Some(noise_sigma);
    }
    if color_on {
        for (c, &s) in scales.iter().enumerate() {
            for v in out.plane_mut(c) {
                *v *= s as f32;
            }
        }
        record.color_scale = Some(scales);
    }
    out.clamp01();
    (out, record)
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    let u: f64 = rng.gen();
    r[0] + (r[1] - r[0]) * u
}

/// Separable Gaussian blur with radius `ceil(3σ)` and edge clamping.
pub fn gaussian_blur(image: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return image.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f32> =
        (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp() as f32).collect();
    let sum: f32 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);
    let (h, w) = (image.height(), image.width());
    let mut tmp = Image::new(h, w);
    let mut out = Image::new(h, w);
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    for c in 0..CHANNELS {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (i, k) in kernel.iter().enumerate() {
                    acc += k * image.get(c, y, clampi(x as isize + i as isize - radius, w));
                }
                tmp.set(c, y, x, acc);
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (i, k) in kernel.iter().enumerate() {
                    acc += k * tmp.get(c, clampi(y as isize + i as isize - radius, h), x);
                }
                out.set(c, y, x, acc);
            }
        }
    }
    out
}

/// Box-average downsampling by `factor` followed by bilinear upsampling
/// (half-pixel centres) back to the original size.
pub fn downsample_upsample(image: &Image, factor: usize) -> Image {
    if factor <= 1 {
        return image.clone();
    }
    let (h, w) = (image.height(), image.width());
    let (sh, sw) = (h.div_ceil(factor), w.div_ceil(factor));
    let mut small = Image::new(sh, sw);
    for c in 0..CHANNELS {
        for sy in 0..sh {
            for sx in 0..sw {
                let (y0, y1) = (sy * factor, ((sy + 1) * factor).min(h));
                let (x0, x1) = (sx * factor, ((sx + 1) * factor).min(w));
                let mut acc = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        acc += image.get(c, y, x);
                    }
                }
                small.set(c, sy, sx, acc / ((y1 - y0) * (x1 - x0)) as f32);
            }
        }
    }
    let mut out = Image::new(h, w);
    let src = |dst: usize, n_small: usize| {
        let s = ((dst as f32 + 0.5) / factor as f32 - 0.5).clamp(0.0, (n_small - 1) as f32);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_small - 1);
        (i0, i1, s - i0 as f32)
    };
    for c in 0..CHANNELS {
        for y in 0..h {
            let (y0, y1, fy) = src(y, sh);
            for x in 0..w {
                let (x0, x1, fx) = src(x, sw);
                let top = small.get(c, y0, x0) * (1.0 - fx) + small.get(c, y0, x1) * fx;
                let bottom = small.get(c, y1, x0) * (1.0 - fx) + small.get(c, y1, x1) * fx;
                out.set(c, y, x, top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    out
}
