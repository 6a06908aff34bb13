use rand::Rng;

use super::{KERNEL, PAD, STRIDE};
use crate::nn::{Bound, Graph, ParamId, ParamStore, Real, Var};

/// A 4×4 stride-2 (transposed) convolution with optional instance norm.
#[derive(Clone, Debug)]
pub(crate) struct ConvLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub norm: Option<(ParamId, ParamId)>,
    pub transpose: bool,
}

impl ConvLayer {
    /// He-normal weights for a (leaky) rectifier, zero bias, unit gamma.
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        params: &mut ParamStore<T>,
        prefix: &str,
        cin: usize,
        cout: usize,
        transpose: bool,
        norm: bool,
        slope: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let k2 = KERNEL * KERNEL;
        // a transposed stride-2 conv sees a quarter of its kernel per output
        let fan_in = if transpose { cin * k2 / (STRIDE * STRIDE) } else { cin * k2 };
        let std = (2.0 / ((1.0 + slope * slope) * fan_in as f64)).sqrt();
        let shape = if transpose { [cin, cout, KERNEL, KERNEL] } else { [cout, cin, KERNEL, KERNEL] };
        let w = params.push_normal(format!("{prefix}.weight"), &shape, std, rng);
        let b = params.push_const(format!("{prefix}.bias"), &[cout], 0.0);
        let norm = norm.then(|| {
            (
                params.push_const(format!("{prefix}.norm.gamma"), &[cout], 1.0),
                params.push_const(format!("{prefix}.norm.beta"), &[cout], 0.0),
            )
        });
        Self { w, b, norm, transpose }
    }

    /// Convolution (and normalisation) without the activation.
    pub fn apply<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var, eps: f64) -> Var {
        let (w, b) = (p.var(self.w), p.var(self.b));
        let y = if self.transpose { g.conv_transpose2d(x, w, b, STRIDE, PAD) } else { g.conv2d(x, w, b, STRIDE, PAD) };
        match self.norm {
            Some((gamma, beta)) => g.instance_norm(y, p.var(gamma), p.var(beta), eps),
            None => y,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct DenseLayer {
    pub w: ParamId,
    pub b: ParamId,
}

impl DenseLayer {
    /// Glorot-normal weights, zero bias.
    pub fn new<T: Real>(params: &mut ParamStore<T>, prefix: &str, din: usize, dout: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / (din + dout) as f64).sqrt();
        let w = params.push_normal(format!("{prefix}.weight"), &[dout, din], std, rng);
        let b = params.push_const(format!("{prefix}.bias"), &[dout], 0.0);
        Self { w, b }
    }

    pub fn apply<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        g.linear(x, p.var(self.w), p.var(self.b))
    }
}
