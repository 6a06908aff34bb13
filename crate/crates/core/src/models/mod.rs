//! The denoising auto-encoder generator (AEG) and the conditional
//! discriminator (CD) with its audio-plane adapter and latent injection.

mod aeg;
mod layers;
mod cd;
mod checkpoint;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_features::LldVector;
use crate::data_pipeline::Image;
use crate::nn::{Graph, Real, Tensor, Var};

pub use aeg::{Aeg, AegOutput};
pub use cd::{Cd, CdInputs, CdOutput, LldNorm};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

/// Every stage uses 4×4 kernels, stride 2, padding 1 (halving or doubling).
pub const KERNEL: usize = 4;
pub const STRIDE: usize = 2;
pub const PAD: usize = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("{what}: expected shape {expected:?}, got {got:?}")]
    Shape { what: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("latent injection: trunk is {trunk:?} but z is {z:?} spatially")]
    SpatialMismatch { trunk: (usize, usize), z: (usize, usize) },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint io {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub(crate) fn shape_err(what: &str, expected: &[usize], got: &[usize]) -> ModelError {
    ModelError::Shape { what: what.to_owned(), expected: expected.to_vec(), got: got.to_vec() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AegSpec {
    pub image_size: usize,
    pub image_channels: usize,
    /// Output channels of each stride-2 encoder stage; the last stage's
    /// activation is the latent code.
    pub encoder_channels: Vec<usize>,
    pub norm_eps: f64,
}

impl Default for AegSpec {
    fn default() -> Self {
        Self { image_size: 64, image_channels: 3, encoder_channels: vec![32, 64, 64], norm_eps: 1e-5 }
    }
}

impl AegSpec {
    pub fn latent_shape(&self) -> [usize; 3] {
        let s = self.image_size >> self.encoder_channels.len();
        [*self.encoder_channels.last().unwrap_or(&0), s, s]
    }

    /// Decoder output channels, mirroring the encoder.
    pub fn decoder_channels(&self) -> Vec<usize> {
        let mut chans: Vec<usize> = self.encoder_channels.iter().rev().skip(1).copied().collect();
        chans.push(self.image_channels);
        chans
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let stages = self.encoder_channels.len();
        if stages == 0 || self.encoder_channels.contains(&0) || self.image_channels == 0 {
            return Err(ModelError::InvalidSpec("AEG needs at least one stage and nonzero channels".into()));
        }
        if self.image_size == 0 || self.image_size % (1 << stages) != 0 || self.image_size >> stages < 1 {
            return Err(ModelError::InvalidSpec(format!(
                "AEG image size {} is not divisible by 2^{stages}",
                self.image_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdSpec {
    pub image_size: usize,
    pub image_channels: usize,
    /// Append the noisy input image as extra channels.
    pub append_noisy: bool,
    pub lld_len: usize,
    /// Stride-2 stages before the latent code is concatenated.
    pub trunk_channels: Vec<usize>,
    pub z_channels: usize,
    /// Stride-2 stages between injection and the patch head; they must reach
    /// 4×4 so the patch head emits 2×2.
    pub post_channels: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for CdSpec {
    fn default() -> Self {
        Self {
            image_size: 64,
            image_channels: 3,
            append_noisy: false,
            lld_len: 12,
            trunk_channels: vec![64, 128, 128],
            z_channels: 64,
            post_channels: vec![256],
            leaky_slope: 0.2,
        }
    }
}

impl CdSpec {
    /// Image channels plus the audio plane (plus the noisy copy if enabled).
    pub fn input_channels(&self) -> usize {
        self.image_channels * if self.append_noisy { 2 } else { 1 } + 1
    }

    pub fn injection_size(&self) -> usize {
        self.image_size >> self.trunk_channels.len()
    }

    pub fn injected_channels(&self) -> usize {
        self.trunk_channels.last().copied().unwrap_or(self.input_channels()) + self.z_channels
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidSpec(m));
        if self.trunk_channels.is_empty() || self.trunk_channels.contains(&0) || self.post_channels.contains(&0) {
            return bad("CD trunk needs at least one stage and nonzero channels".into());
        }
        if self.lld_len == 0 || self.z_channels == 0 || self.image_channels == 0 {
            return bad("CD lld_len, z_channels and image_channels must be nonzero".into());
        }
        let down = self.trunk_channels.len() + self.post_channels.len();
        if self.image_size % (1 << down) != 0 || self.image_size >> down != 4 {
            return bad(format!(
                "CD image size {} must reach 4x4 after {down} stride-2 stages for a 2x2 patch map",
                self.image_size
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub aeg: AegSpec,
    pub cd: CdSpec,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { aeg: AegSpec::default(), cd: CdSpec::default() }
    }
}

impl ModelSpec {
    /// A minimal 8×8 instance for gradient audits.
    pub fn tiny(lld_len: usize) -> Self {
        Self {
            aeg: AegSpec { image_size: 8, image_channels: 3, encoder_channels: vec![4], norm_eps: 1e-5 },
            cd: CdSpec {
                image_size: 8,
                image_channels: 3,
                append_noisy: false,
                lld_len,
                trunk_channels: vec![4],
                z_channels: 4,
                post_channels: vec![],
                leaky_slope: 0.2,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.aeg.validate()?;
        self.cd.validate()?;
        if self.aeg.image_size != self.cd.image_size || self.aeg.image_channels != self.cd.image_channels {
            return Err(ModelError::InvalidSpec("AEG and CD image shapes differ".into()));
        }
        let [zc, zh, zw] = self.aeg.latent_shape();
        if zc != self.cd.z_channels {
            return Err(ModelError::InvalidSpec(format!("z has {zc} channels, CD expects {}", self.cd.z_channels)));
        }
        let inj = self.cd.injection_size();
        if (zh, zw) != (inj, inj) {
            return Err(ModelError::SpatialMismatch { trunk: (inj, inj), z: (zh, zw) });
        }
        Ok(())
    }
}

/// The AEG and CD together.
#[derive(Clone, Debug)]
pub struct Model<T: Real> {
    pub spec: ModelSpec,
    pub aeg: Aeg<T>,
    pub cd: Cd<T>,
}

impl<T: Real> Model<T> {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let aeg = Aeg::new(spec.aeg.clone(), &mut rng)?;
        let cd = Cd::new(spec.cd.clone(), &mut rng)?;
        Ok(Self { spec, aeg, cd })
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model { spec: self.spec.clone(), aeg: self.aeg.cast(), cd: self.cd.cast() }
    }
}

/// Channel-wise concatenation of trunk features and the latent code. The
/// spatial sizes must agree; nothing is resampled.
pub fn inject_latent<T: Real>(g: &mut Graph<T>, trunk: Var, z: Var) -> Result<Var, ModelError> {
    let (ts, zs) = (g.value(trunk).shape().to_vec(), g.value(z).shape().to_vec());
    if ts.len() != 4 || zs.len() != 4 || ts[0] != zs[0] {
        return Err(shape_err("latent injection batch", &ts, &zs));
    }
    if (ts[2], ts[3]) != (zs[2], zs[3]) {
        return Err(ModelError::SpatialMismatch { trunk: (ts[2], ts[3]), z: (zs[2], zs[3]) });
    }
    Ok(g.concat_channels(trunk, z))
}

/// Stacks images into `[N, C, H, W]`.
pub fn images_to_tensor<T: Real>(images: &[Image]) -> Tensor<T> {
    let (h, w) = images.first().map_or((0, 0), |i| (i.height(), i.width()));
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        assert_eq!((img.height(), img.width()), (h, w), "images in a batch must share a size");
        data.extend(img.data().iter().map(|&v| T::from_f64_lossy(v as f64)));
    }
    Tensor::from_vec(&[images.len(), crate::data_pipeline::CHANNELS, h, w], data)
}

/// Splits `[N, 3, H, W]` back into images.
pub fn tensor_to_images<T: Real>(t: &Tensor<T>) -> Vec<Image> {
    let (n, c, h, w) = t.dims4();
    assert_eq!(c, crate::data_pipeline::CHANNELS, "expected RGB tensor");
    t.data()
        .chunks(c * h * w)
        .take(n)
        .map(|chunk| Image::from_planar(h, w, chunk.iter().map(|&v| T::to_f64_lossy(v) as f32).collect()))
        .collect()
}

/// Stacks audio vectors into `[N, L]`.
pub fn llds_to_tensor<T: Real>(llds: &[LldVector]) -> Tensor<T> {
    let l = llds.first().map_or(0, LldVector::len);
    let mut data = Vec::with_capacity(llds.len() * l);
    for v in llds {
        assert_eq!(v.len(), l, "audio vectors in a batch must share a length");
        data.extend(v.values().iter().map(|&x| T::from_f64_lossy(x)));
    }
    Tensor::from_vec(&[llds.len(), l], data)
}

/// One parameter tensor in a summary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub entries: Vec<ParamEntry>,
    pub aeg_total: usize,
    pub cd_total: usize,
}

impl ParamSummary {
    pub fn total(&self) -> usize {
        self.aeg_total + self.cd_total
    }
}

fn conv_entries(prefix: &str, cin: usize, cout: usize, transpose: bool, norm: bool) -> Vec<ParamEntry> {
    let k = KERNEL;
    let w = if transpose { vec![cin, cout, k, k] } else { vec![cout, cin, k, k] };
    let mut v = vec![
        ParamEntry { name: format!("{prefix}.weight"), count: cin * cout * k * k, shape: w },
        ParamEntry { name: format!("{prefix}.bias"), shape: vec![cout], count: cout },
    ];
    if norm {
        v.push(ParamEntry { name: format!("{prefix}.norm.gamma"), shape: vec![cout], count: cout });
        v.push(ParamEntry { name: format!("{prefix}.norm.beta"), shape: vec![cout], count: cout });
    }
    v
}

fn dense_entries(prefix: &str, din: usize, dout: usize) -> Vec<ParamEntry> {
    vec![
        ParamEntry { name: format!("{prefix}.weight"), shape: vec![dout, din], count: din * dout },
        ParamEntry { name: format!("{prefix}.bias"), shape: vec![dout], count: dout },
    ]
}

/// Parameter names, shapes and counts derived from the spec alone.
pub fn param_summary(spec: &ModelSpec) -> ParamSummary {
    let mut aeg = Vec::new();
    let mut cin = spec.aeg.image_channels;
    for (i, &c) in spec.aeg.encoder_channels.iter().enumerate() {
        aeg.extend(conv_entries(&format!("aeg.enc{i}"), cin, c, false, true));
        cin = c;
    }
    let dec = spec.aeg.decoder_channels();
    for (i, &c) in dec.iter().enumerate() {
        aeg.extend(conv_entries(&format!("aeg.dec{i}"), cin, c, true, i + 1 < dec.len()));
        cin = c;
    }
    let cd_spec = &spec.cd;
    let mut cd = dense_entries("cd.audio", cd_spec.lld_len, cd_spec.image_size * cd_spec.image_size);
    let mut cin = cd_spec.input_channels();
    for (i, &c) in cd_spec.trunk_channels.iter().enumerate() {
        cd.extend(conv_entries(&format!("cd.trunk{i}"), cin, c, false, false));
        cin = c;
    }
    let injected = cd_spec.injected_channels();
    cin = injected;
    for (i, &c) in cd_spec.post_channels.iter().enumerate() {
        cd.extend(conv_entries(&format!("cd.post{i}"), cin, c, false, false));
        cin = c;
    }
    cd.extend(conv_entries("cd.patch", cin, 1, false, false));
    cd.extend(dense_entries("cd.affect", injected, 2));
    let aeg_total = aeg.iter().map(|e| e.count).sum();
    let cd_total = cd.iter().map(|e| e.count).sum();
    aeg.extend(cd);
    ParamSummary { entries: aeg, aeg_total, cd_total }
}
