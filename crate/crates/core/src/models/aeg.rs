use rand::Rng;

use super::layers::ConvLayer;
use super::{shape_err, AegSpec, ModelError};
use crate::nn::{Bound, Graph, ParamStore, Real, Tensor, Var};

/// Mirrored conv / transposed-conv auto-encoder. The decoder sees only the
/// bottleneck activation.
#[derive(Clone, Debug)]
pub struct Aeg<T: Real> {
    spec: AegSpec,
    params: ParamStore<T>,
    encoder: Vec<ConvLayer>,
    decoder: Vec<ConvLayer>,
}

#[derive(Clone, Copy, Debug)]
pub struct AegOutput {
    pub image: Var,
    pub z: Var,
}

impl<T: Real> Aeg<T> {
    pub fn new(spec: AegSpec, rng: &mut impl Rng) -> Result<Self, ModelError> {
        spec.validate()?;
        let mut params = ParamStore::new();
        let mut cin = spec.image_channels;
        let mut encoder = Vec::new();
        for (i, &c) in spec.encoder_channels.iter().enumerate() {
            encoder.push(ConvLayer::new(&mut params, &format!("aeg.enc{i}"), cin, c, false, true, 0.0, rng));
            cin = c;
        }
        let dec = spec.decoder_channels();
        let mut decoder = Vec::new();
        for (i, &c) in dec.iter().enumerate() {
            let last = i + 1 == dec.len();
            decoder.push(ConvLayer::new(&mut params, &format!("aeg.dec{i}"), cin, c, true, !last, 0.0, rng));
            cin = c;
        }
        Ok(Self { spec, params, encoder, decoder })
    }

    pub fn spec(&self) -> &AegSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        self.params.bind(g, trainable)
    }

    pub fn check_input(&self, x: &Tensor<T>) -> Result<(), ModelError> {
        let s = &self.spec;
        let expected = [x.shape().first().copied().unwrap_or(0), s.image_channels, s.image_size, s.image_size];
        if x.shape() != expected || expected[0] == 0 {
            return Err(shape_err("AEG input", &expected, x.shape()));
        }
        Ok(())
    }

    pub fn encode(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        self.encoder.iter().fold(x, |h, layer| {
            let y = layer.apply(g, p, h, self.spec.norm_eps);
            g.relu(y)
        })
    }

    pub fn decode(&self, g: &mut Graph<T>, p: &Bound, z: Var) -> Var {
        let mut h = z;
        for (i, layer) in self.decoder.iter().enumerate() {
            let y = layer.apply(g, p, h, self.spec.norm_eps);
            h = if i + 1 == self.decoder.len() { g.sigmoid(y) } else { g.relu(y) };
        }
        h
    }

    /// Denoised image in `[0, 1]` and the latent code.
    pub fn forward_graph(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> AegOutput {
        let z = self.encode(g, p, x);
        AegOutput { image: self.decode(g, p, z), z }
    }

    /// Inference on a batch `[N, C, H, W]`: `(clean estimate, z)`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>), ModelError> {
        self.check_input(x)?;
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let xv = g.constant(x.clone());
        let out = self.forward_graph(&mut g, &p, xv);
        Ok((g.value(out.image).clone(), g.value(out.z).clone()))
    }

    /// Decodes a given latent code `[N, C_z, H_z, W_z]`.
    pub fn decode_tensor(&self, z: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
        let [c, h, w] = self.spec.latent_shape();
        let expected = [z.shape().first().copied().unwrap_or(0), c, h, w];
        if z.shape() != expected {
            return Err(shape_err("latent code", &expected, z.shape()));
        }
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let zv = g.constant(z.clone());
        let out = self.decode(&mut g, &p, zv);
        Ok(g.value(out).clone())
    }

    pub fn cast<U: Real>(&self) -> Aeg<U> {
        Aeg {
            spec: self.spec.clone(),
            params: self.params.cast(),
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
        }
    }
}
