//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation eagerly; [`Graph::backward`] walks the
//! tape in reverse. Nodes whose inputs never require gradients are skipped.

use super::scalar::Real;
use super::tensor::{
    conv2d_backward, conv2d_forward, conv_transpose2d_backward, conv_transpose2d_forward, Tensor,
};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    ConvTranspose2d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    InstanceNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    LeakyRelu { x: Var, slope: T },
    Tanh { x: Var },
    Sigmoid { x: Var },
    Linear { x: Var, w: Var, b: Var },
    ConcatChannels { a: Var, b: Var },
    Reshape { x: Var },
    GlobalAvgPool { x: Var },
    L1Mean { a: Var, b: Var },
    /// Scalar function of `x` whose gradient was computed alongside its value.
    ScalarFn { x: Var, grad: Tensor<T> },
    WeightedSum { terms: Vec<(Var, T)> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let y = conv2d_forward(self.value(x), self.value(w), self.value(b), stride, pad);
        self.push(y, Op::Conv2d { x, w, b, stride, pad }, &[x, w, b])
    }

    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let y = conv_transpose2d_forward(self.value(x), self.value(w), self.value(b), stride, pad);
        self.push(y, Op::ConvTranspose2d { x, w, b, stride, pad }, &[x, w, b])
    }

    /// Per-sample, per-channel normalization with a learned affine map.
    pub fn instance_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (n, c, h, w) = xv.dims4();
        let plane = h * w;
        let eps = T::from_f64_lossy(eps);
        let count = T::from_usize(plane).unwrap();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut inv_std = vec![T::zero(); n * c];
        let mut out = vec![T::zero(); xv.len()];
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        for i in 0..n * c {
            let src = &xv.data()[i * plane..(i + 1) * plane];
            let mean = src.iter().copied().sum::<T>() / count;
            let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
            let is = (var + eps).sqrt().recip();
            inv_std[i] = is;
            let ch = i % c;
            for j in 0..plane {
                let xh = (src[j] - mean) * is;
                xhat[i * plane + j] = xh;
                out[i * plane + j] = g[ch] * xh + bt[ch];
            }
        }
        let y = Tensor::from_vec(xv.shape(), out);
        self.push(y, Op::InstanceNorm { x, gamma, beta, xhat, inv_std }, &[x, gamma, beta])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let slope = T::from_f64_lossy(slope);
        let y = self.value(x).map(|v| if v > T::zero() { v } else { v * slope });
        self.push(y, Op::LeakyRelu { x, slope }, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| v.tanh());
        self.push(y, Op::Tanh { x }, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = self.value(x).map(sigmoid);
        self.push(y, Op::Sigmoid { x }, &[x])
    }

    /// `y = x·Wᵀ + b` with `x: [N,in]`, `w: [out,in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (n, din) = (xv.shape()[0], xv.shape()[1]);
        let dout = wv.shape()[0];
        assert_eq!(wv.shape(), &[dout, din], "linear weight shape");
        let mut out = Vec::with_capacity(n * dout);
        for _ in 0..n {
            out.extend_from_slice(bv.data());
        }
        T::gemm(n, din, dout, T::one(), xv.data(), din as isize, 1, wv.data(), 1, din as isize, T::one(), &mut out, dout as isize, 1);
        self.push(Tensor::from_vec(&[n, dout], out), Op::Linear { x, w, b }, &[x, w, b])
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (n, ca, h, w) = av.dims4();
        let (nb, cb, hb, wb) = bv.dims4();
        assert_eq!((n, h, w), (nb, hb, wb), "concat_channels spatial mismatch");
        let plane = h * w;
        let mut out = Vec::with_capacity(n * (ca + cb) * plane);
        for i in 0..n {
            out.extend_from_slice(&av.data()[i * ca * plane..(i + 1) * ca * plane]);
            out.extend_from_slice(&bv.data()[i * cb * plane..(i + 1) * cb * plane]);
        }
        self.push(Tensor::from_vec(&[n, ca + cb, h, w], out), Op::ConcatChannels { a, b }, &[a, b])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let y = self.value(x).clone().reshape(shape);
        self.push(y, Op::Reshape { x }, &[x])
    }

    /// `[N,C,H,W] -> [N,C]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (n, c, h, w) = xv.dims4();
        let count = T::from_usize(h * w).unwrap();
        let out = xv.data().chunks(h * w).map(|p| p.iter().copied().sum::<T>() / count).collect();
        self.push(Tensor::from_vec(&[n, c], out), Op::GlobalAvgPool { x }, &[x])
    }

    /// Mean absolute difference over all elements.
    pub fn l1_mean(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "l1_mean shape mismatch");
        let s: T = av.data().iter().zip(bv.data()).map(|(&p, &q)| (p - q).abs()).sum();
        let y = Tensor::scalar(s / T::from_usize(av.len()).unwrap());
        self.push(y, Op::L1Mean { a, b }, &[a, b])
    }

    /// Attaches a scalar function of `x` given its value and `d value / d x`.
    pub fn scalar_fn(&mut self, x: Var, value: T, grad: Tensor<T>) -> Var {
        assert_eq!(grad.shape(), self.value(x).shape(), "scalar_fn gradient shape");
        self.push(Tensor::scalar(value), Op::ScalarFn { x, grad }, &[x])
    }

    /// `Σ cᵢ·xᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let terms: Vec<(Var, T)> = terms.iter().map(|&(v, c)| (v, T::from_f64_lossy(c))).collect();
        let s = terms.iter().map(|&(v, c)| self.value(v).item() * c).sum();
        let parents: Vec<Var> = terms.iter().map(|t| t.0).collect();
        self.push(Tensor::scalar(s), Op::WeightedSum { terms }, &parents)
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.value(loss).len(), 1, "backward requires a scalar loss");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else { continue };
            let acc = |v: Var, g: Tensor<T>, grads: &mut Vec<Option<Tensor<T>>>| {
                if !self.nodes[v.0].requires_grad {
                    return;
                }
                match grads[v.0].as_mut() {
                    Some(existing) => existing.add_assign(&g),
                    None => grads[v.0] = Some(g),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(dy);
                    continue;
                }
                &Op::Conv2d { x, w, b, stride, pad } => {
                    let want_dx = self.nodes[x.0].requires_grad;
                    let (dx, dw, db) =
                        conv2d_backward(self.value(x), self.value(w), &dy, stride, pad, want_dx);
                    if let Some(dx) = dx {
                        acc(x, dx, &mut grads);
                    }
                    acc(w, dw, &mut grads);
                    acc(b, db, &mut grads);
                }
                &Op::ConvTranspose2d { x, w, b, stride, pad } => {
                    let want_dx = self.nodes[x.0].requires_grad;
                    let (dx, dw, db) = conv_transpose2d_backward(
                        self.value(x),
                        self.value(w),
                        &dy,
                        stride,
                        pad,
                        want_dx,
                    );
                    if let Some(dx) = dx {
                        acc(x, dx, &mut grads);
                    }
                    acc(w, dw, &mut grads);
                    acc(b, db, &mut grads);
                }
                Op::InstanceNorm { x, gamma, beta, xhat, inv_std } => {
                    let (n, c, h, w) = node.value.dims4();
                    let plane = h * w;
                    let count = T::from_usize(plane).unwrap();
                    let g = self.value(*gamma).data();
                    let mut dgamma = vec![T::zero(); c];
                    let mut dbeta = vec![T::zero(); c];
                    let mut dx = vec![T::zero(); n * c * plane];
                    for i in 0..n * c {
                        let ch = i % c;
                        let dyp = &dy.data()[i * plane..(i + 1) * plane];
                        let xh = &xhat[i * plane..(i + 1) * plane];
                        let mut sum_dy = T::zero();
                        let mut sum_dy_xh = T::zero();
                        for j in 0..plane {
                            sum_dy = sum_dy + dyp[j];
                            sum_dy_xh = sum_dy_xh + dyp[j] * xh[j];
                        }
                        dgamma[ch] = dgamma[ch] + sum_dy_xh;
                        dbeta[ch] = dbeta[ch] + sum_dy;
                        let scale = g[ch] * inv_std[i];
                        let (m1, m2) = (sum_dy / count, sum_dy_xh / count);
                        for j in 0..plane {
                            dx[i * plane + j] = scale * (dyp[j] - m1 - xh[j] * m2);
                        }
                    }
                    acc(*x, Tensor::from_vec(node.value.shape(), dx), &mut grads);
                    acc(*gamma, Tensor::from_vec(&[c], dgamma), &mut grads);
                    acc(*beta, Tensor::from_vec(&[c], dbeta), &mut grads);
                }
                &Op::LeakyRelu { x, slope } => {
                    let xv = self.value(x).data();
                    let d = dy
                        .data()
                        .iter()
                        .zip(xv)
                        .map(|(&g, &v)| if v > T::zero() { g } else { g * slope })
                        .collect();
                    acc(x, Tensor::from_vec(dy.shape(), d), &mut grads);
                }
                &Op::Tanh { x } => {
                    let d = dy
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(&g, &y)| g * (T::one() - y * y))
                        .collect();
                    acc(x, Tensor::from_vec(dy.shape(), d), &mut grads);
                }
                &Op::Sigmoid { x } => {
                    let d = dy
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(&g, &y)| g * y * (T::one() - y))
                        .collect();
                    acc(x, Tensor::from_vec(dy.shape(), d), &mut grads);
                }
                &Op::Linear { x, w, b } => {
                    let (xv, wv) = (self.value(x), self.value(w));
                    let (n, din) = (xv.shape()[0], xv.shape()[1]);
                    let dout = wv.shape()[0];
                    let mut dw = vec![T::zero(); dout * din];
                    // dW = dYᵀ · X
                    T::gemm(dout, n, din, T::one(), dy.data(), 1, dout as isize, xv.data(), din as isize, 1, T::zero(), &mut dw, din as isize, 1);
                    let mut db = vec![T::zero(); dout];
                    for row in dy.data().chunks(dout) {
                        for (a, &g) in db.iter_mut().zip(row) {
                            *a = *a + g;
                        }
                    }
                    if self.nodes[x.0].requires_grad {
                        let mut dx = vec![T::zero(); n * din];
                        T::gemm(n, dout, din, T::one(), dy.data(), dout as isize, 1, wv.data(), din as isize, 1, T::zero(), &mut dx, din as isize, 1);
                        acc(x, Tensor::from_vec(&[n, din], dx), &mut grads);
                    }
                    acc(w, Tensor::from_vec(&[dout, din], dw), &mut grads);
                    acc(b, Tensor::from_vec(&[dout], db), &mut grads);
                }
                &Op::ConcatChannels { a, b } => {
                    let (n, ca, h, w) = self.value(a).dims4();
                    let cb = self.value(b).dims4().1;
                    let plane = h * w;
                    let mut da = Vec::with_capacity(n * ca * plane);
                    let mut dbv = Vec::with_capacity(n * cb * plane);
                    for i in 0..n {
                        let base = i * (ca + cb) * plane;
                        da.extend_from_slice(&dy.data()[base..base + ca * plane]);
                        dbv.extend_from_slice(&dy.data()[base + ca * plane..base + (ca + cb) * plane]);
                    }
                    acc(a, Tensor::from_vec(&[n, ca, h, w], da), &mut grads);
                    acc(b, Tensor::from_vec(&[n, cb, h, w], dbv), &mut grads);
                }
                &Op::Reshape { x } => {
                    let shape = self.value(x).shape().to_vec();
                    acc(x, dy.reshape(&shape), &mut grads);
                }
                &Op::GlobalAvgPool { x } => {
                    let (n, c, h, w) = self.value(x).dims4();
                    let count = T::from_usize(h * w).unwrap();
                    let mut d = Vec::with_capacity(n * c * h * w);
                    for &g in dy.data() {
                        d.extend(std::iter::repeat(g / count).take(h * w));
                    }
                    acc(x, Tensor::from_vec(&[n, c, h, w], d), &mut grads);
                }
                &Op::L1Mean { a, b } => {
                    let (av, bv) = (self.value(a), self.value(b));
                    let scale = dy.item() / T::from_usize(av.len()).unwrap();
                    let da: Vec<T> = av
                        .data()
                        .iter()
                        .zip(bv.data())
                        .map(|(&p, &q)| signum0(p - q) * scale)
                        .collect();
                    let dbv: Vec<T> = da.iter().map(|&v| -v).collect();
                    acc(a, Tensor::from_vec(av.shape(), da), &mut grads);
                    acc(b, Tensor::from_vec(bv.shape(), dbv), &mut grads);
                }
                Op::ScalarFn { x, grad } => {
                    let s = dy.item();
                    acc(*x, grad.map(|g| g * s), &mut grads);
                }
                Op::WeightedSum { terms } => {
                    let s = dy.item();
                    for &(v, c) in terms {
                        acc(v, Tensor::scalar(c * s), &mut grads);
                    }
                }
            }
        }
        Gradients { grads }
    }
}

fn signum0<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

pub fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    /// Builds a small graph touching every op and returns the scalar loss.
    fn build(g: &mut Graph<f64>, leaves: &[Tensor<f64>]) -> (Var, Vec<Var>) {
        let vars: Vec<Var> = leaves.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let (x, cw, cb, gam, bet, tw, tb, lw, lb, z) =
            (vars[0], vars[1], vars[2], vars[3], vars[4], vars[5], vars[6], vars[7], vars[8], vars[9]);
        let h = g.conv2d(x, cw, cb, 2, 1); // [2,3,4,4]
        let h = g.instance_norm(h, gam, bet, 1e-5);
        let h = g.leaky_relu(h, 0.2);
        let h2 = g.conv_transpose2d(h, tw, tb, 2, 1); // [2,2,8,8]
        let s = g.sigmoid(h2);
        let cat = g.concat_channels(h, z); // [2,5,4,4]
        let pooled = g.global_avg_pool(cat); // [2,5]
        let lin = g.linear(pooled, lw, lb); // [2,2]
        let t = g.tanh(lin);
        let flat = g.reshape(t, &[4]);
        let fv = g.value(flat).clone();
        let val: f64 = fv.data().iter().map(|v| v * v).sum();
        let sq = g.scalar_fn(flat, val, fv.map(|v| 2.0 * v));
        let target = g.constant(Tensor::full(&[2, 2, 8, 8], 0.3));
        let l1 = g.l1_mean(s, target);
        let loss = g.weighted_sum(&[(sq, 0.7), (l1, 1.3)]);
        (loss, vars)
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let shapes: [&[usize]; 10] = [
            &[2, 2, 8, 8],
            &[3, 2, 4, 4],
            &[3],
            &[3],
            &[3],
            &[3, 2, 4, 4],
            &[2],
            &[2, 5],
            &[2],
            &[2, 2, 4, 4],
        ];
        let leaves: Vec<Tensor<f64>> = shapes.iter().map(|s| rand_tensor(&mut rng, s)).collect();
        let mut g = Graph::new();
        let (loss, vars) = build(&mut g, &leaves);
        let grads = g.backward(loss);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for (li, leaf) in leaves.iter().enumerate() {
            let analytic = grads.get(vars[li]).expect("leaf gradient");
            for j in (0..leaf.len()).step_by(3) {
                let eval = |delta: f64| {
                    let mut ls = leaves.clone();
                    ls[li].data_mut()[j] += delta;
                    let mut g2 = Graph::new();
                    let (l, _) = build(&mut g2, &ls);
                    g2.value(l).item()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic.data()[j];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-4);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-5, "max relative error {worst}");
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::full(&[1, 1, 2, 2], 1.0));
        let b = g.leaf(Tensor::full(&[1, 1, 2, 2], 0.5), true);
        let l = g.l1_mean(a, b);
        let grads = g.backward(l);
        assert!(grads.get(a).is_none());
        assert_eq!(grads.get(b).unwrap().data(), &[-0.25; 4]);
    }
}
