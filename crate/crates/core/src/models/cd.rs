use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{ConvLayer, DenseLayer};
use super::{inject_latent, shape_err, CdSpec, ModelError};
use crate::audio_features::LldVector;
use crate::nn::{Bound, Graph, ParamStore, Real, Tensor, Var};

/// Fixed per-descriptor standardisation applied before the audio adapter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LldNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl LldNorm {
    pub fn identity(len: usize) -> Self {
        Self { mean: vec![0.0; len], std: vec![1.0; len] }
    }

    /// Mean and population standard deviation per component; constant
    /// components get unit scale.
    pub fn fit(vectors: &[LldVector]) -> Self {
        let len = vectors.first().map_or(0, LldVector::len);
        let n = vectors.len().max(1) as f64;
        let mut mean = vec![0.0; len];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v.values()) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; len];
        for v in vectors {
            for ((s, x), m) in var.iter_mut().zip(v.values()).zip(&mean) {
                *s += (x - m) * (x - m) / n;
            }
        }
        let std = var.into_iter().map(|s| if s.sqrt() > 1e-12 { s.sqrt() } else { 1.0 }).collect();
        Self { mean, std }
    }
}

/// Multimodal conditional discriminator: RGB plus audio plane through a
/// LeakyReLU trunk, latent code concatenated at the injection stage, then a
/// 2×2 patch head and a bounded affect head.
#[derive(Clone, Debug)]
pub struct Cd<T: Real> {
    spec: CdSpec,
    params: ParamStore<T>,
    lld_norm: LldNorm,
    audio: DenseLayer,
    trunk: Vec<ConvLayer>,
    post: Vec<ConvLayer>,
    patch: ConvLayer,
    affect: DenseLayer,
}

#[derive(Clone, Copy, Debug)]
pub struct CdInputs {
    /// `[N, C, H, W]` image judged by the discriminator.
    pub image: Var,
    /// Noisy input appended as extra channels when the spec asks for it.
    pub noisy: Option<Var>,
    /// Standardised audio vectors `[N, L]`.
    pub lld: Var,
    /// Latent code `[N, C_z, H_z, W_z]`; zeros when the latent path is off.
    pub z: Var,
    /// When false the audio plane is a constant zero channel.
    pub audio_on: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct CdOutput {
    /// Raw patch scores `[N, 1, 2, 2]`.
    pub patch: Var,
    /// `[N, 2]` valence and arousal in `[-1, 1]`.
    pub affect: Var,
    /// `[N, 1, H, W]`.
    pub plane: Var,
}

impl<T: Real> Cd<T> {
    pub fn new(spec: CdSpec, rng: &mut impl Rng) -> Result<Self, ModelError> {
        spec.validate()?;
        let slope = spec.leaky_slope;
        let mut params = ParamStore::new();
        let plane = spec.image_size * spec.image_size;
        let audio = DenseLayer::new(&mut params, "cd.audio", spec.lld_len, plane, rng);
        let mut cin = spec.input_channels();
        let mut trunk = Vec::new();
        for (i, &c) in spec.trunk_channels.iter().enumerate() {
            trunk.push(ConvLayer::new(&mut params, &format!("cd.trunk{i}"), cin, c, false, false, slope, rng));
            cin = c;
        }
        cin = spec.injected_channels();
        let mut post = Vec::new();
        for (i, &c) in spec.post_channels.iter().enumerate() {
            post.push(ConvLayer::new(&mut params, &format!("cd.post{i}"), cin, c, false, false, slope, rng));
            cin = c;
        }
        let patch = ConvLayer::new(&mut params, "cd.patch", cin, 1, false, false, 1.0, rng);
        let affect = DenseLayer::new(&mut params, "cd.affect", spec.injected_channels(), 2, rng);
        let lld_norm = LldNorm::identity(spec.lld_len);
        Ok(Self { spec, params, lld_norm, audio, trunk, post, patch, affect })
    }

    pub fn spec(&self) -> &CdSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn lld_norm(&self) -> &LldNorm {
        &self.lld_norm
    }

    pub fn set_lld_norm(&mut self, norm: LldNorm) -> Result<(), ModelError> {
        if norm.mean.len() != self.spec.lld_len || norm.std.len() != self.spec.lld_len {
            return Err(shape_err("audio standardisation", &[self.spec.lld_len], &[norm.mean.len()]));
        }
        self.lld_norm = norm;
        Ok(())
    }

    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        self.params.bind(g, trainable)
    }

    /// Standardised `[N, L]` tensor for a batch of audio vectors.
    pub fn prepare_lld(&self, llds: &[LldVector]) -> Result<Tensor<T>, ModelError> {
        let l = self.spec.lld_len;
        let mut data = Vec::with_capacity(llds.len() * l);
        for v in llds {
            if v.len() != l {
                return Err(shape_err("audio vector", &[l], &[v.len()]));
            }
            for ((x, m), s) in v.values().iter().zip(&self.lld_norm.mean).zip(&self.lld_norm.std) {
                data.push(T::from_f64_lossy((x - m) / s));
            }
        }
        Ok(Tensor::from_vec(&[llds.len(), l], data))
    }

    /// `tanh(W·lld + b)` reshaped row-major to one `H×W` channel.
    pub fn audio_plane_graph(&self, g: &mut Graph<T>, p: &Bound, lld: Var) -> Result<Var, ModelError> {
        let shape = g.value(lld).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.spec.lld_len {
            return Err(shape_err("audio vector batch", &[shape.first().copied().unwrap_or(0), self.spec.lld_len], &shape));
        }
        let dense = self.audio.apply(g, p, lld);
        let bounded = g.tanh(dense);
        let s = self.spec.image_size;
        Ok(g.reshape(bounded, &[shape[0], 1, s, s]))
    }

    /// Audio plane for one vector, `[1, 1, H, W]`.
    pub fn audio_to_plane(&self, lld: &LldVector) -> Result<Tensor<T>, ModelError> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let x = g.constant(self.prepare_lld(std::slice::from_ref(lld))?);
        let plane = self.audio_plane_graph(&mut g, &p, x)?;
        Ok(g.value(plane).clone())
    }

    fn check4(&self, g: &Graph<T>, v: Var, what: &str, c: usize, size: usize) -> Result<usize, ModelError> {
        let s = g.value(v).shape();
        let n = s.first().copied().unwrap_or(0);
        if s != [n, c, size, size] || n == 0 {
            return Err(shape_err(what, &[n, c, size, size], s));
        }
        Ok(n)
    }

    pub fn forward_graph(&self, g: &mut Graph<T>, p: &Bound, inputs: CdInputs) -> Result<CdOutput, ModelError> {
        let s = &self.spec;
        let n = self.check4(g, inputs.image, "CD image", s.image_channels, s.image_size)?;
        let inj = s.injection_size();
        let zn = self.check4(g, inputs.z, "latent code", s.z_channels, inj).or_else(|e| {
            // report spatial disagreement distinctly from channel errors
            let zs = g.value(inputs.z).shape();
            if zs.len() == 4 && zs[1] == s.z_channels && (zs[2], zs[3]) != (inj, inj) {
                Err(ModelError::SpatialMismatch { trunk: (inj, inj), z: (zs[2], zs[3]) })
            } else {
                Err(e)
            }
        })?;
        if zn != n {
            return Err(shape_err("latent batch", &[n], &[zn]));
        }
        let plane = if inputs.audio_on {
            self.audio_plane_graph(g, p, inputs.lld)?
        } else {
            g.constant(Tensor::zeros(&[n, 1, s.image_size, s.image_size]))
        };
        let mut x = inputs.image;
        match (s.append_noisy, inputs.noisy) {
            (true, Some(noisy)) => {
                self.check4(g, noisy, "noisy image", s.image_channels, s.image_size)?;
                x = g.concat_channels(x, noisy);
            }
            (true, None) => return Err(ModelError::InvalidSpec("CD expects the noisy image as input".into())),
            (false, _) => {}
        }
        x = g.concat_channels(x, plane);
        for layer in &self.trunk {
            let y = layer.apply(g, p, x, 0.0);
            x = g.leaky_relu(y, s.leaky_slope);
        }
        let injected = inject_latent(g, x, inputs.z)?;
        let pooled = g.global_avg_pool(injected);
        let affect_raw = self.affect.apply(g, p, pooled);
        let affect = g.tanh(affect_raw);
        let mut h = injected;
        for layer in &self.post {
            let y = layer.apply(g, p, h, 0.0);
            h = g.leaky_relu(y, s.leaky_slope);
        }
        let patch = self.patch.apply(g, p, h, 0.0);
        Ok(CdOutput { patch, affect, plane })
    }

    /// Inference: `(patch [N,1,2,2], affect [N,2])`.
    pub fn forward(
        &self,
        image: &Tensor<T>,
        noisy: Option<&Tensor<T>>,
        llds: &[LldVector],
        z: &Tensor<T>,
        audio_on: bool,
    ) -> Result<(Tensor<T>, Tensor<T>), ModelError> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let inputs = CdInputs {
            image: g.constant(image.clone()),
            noisy: noisy.map(|t| g.constant(t.clone())),
            lld: g.constant(self.prepare_lld(llds)?),
            z: g.constant(z.clone()),
            audio_on,
        };
        let out = self.forward_graph(&mut g, &p, inputs)?;
        Ok((g.value(out.patch).clone(), g.value(out.affect).clone()))
    }

    pub fn cast<U: Real>(&self) -> Cd<U> {
        Cd {
            spec: self.spec.clone(),
            params: self.params.cast(),
            lld_norm: self.lld_norm.clone(),
            audio: self.audio.clone(),
            trunk: self.trunk.clone(),
            post: self.post.clone(),
            patch: self.patch.clone(),
            affect: self.affect.clone(),
        }
    }
}
