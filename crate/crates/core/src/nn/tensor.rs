use std::fmt;

use super::scalar::Real;

/// Dense row-major tensor. Image batches use NCHW layout.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor<{}>{:?}", T::NAME, self.shape)
    }
}

impl<T: Real> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match {} elements",
            data.len()
        );
        Self { shape: shape.to_vec(), data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len(), "bad reshape");
        self.shape = shape.to_vec();
        self
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }

    /// Dimensions of an NCHW tensor.
    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        assert_eq!(self.shape.len(), 4, "expected NCHW tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1], self.shape[2], self.shape[3])
    }
}

/// Geometry of a square-kernel 2D convolution over one `C×H×W` image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeom {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Option<Self> {
        if stride == 0 || kernel == 0 || height + 2 * pad < kernel || width + 2 * pad < kernel {
            return None;
        }
        Some(Self {
            channels,
            height,
            width,
            kernel,
            stride,
            pad,
            out_height: (height + 2 * pad - kernel) / stride + 1,
            out_width: (width + 2 * pad - kernel) / stride + 1,
        })
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_height * self.out_width
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Unfolds one image into a `(C·k·k) × (OH·OW)` patch matrix.
    pub fn im2col<T: Real>(&self, image: &[T], col: &mut [T]) {
        let (k, s, p) = (self.kernel, self.stride, self.pad as isize);
        let cols = self.col_cols();
        for c in 0..self.channels {
            let plane = &image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    for oy in 0..self.out_height {
                        let iy = (oy * s + ki) as isize - p;
                        let line = &mut dst[oy * self.out_width..(oy + 1) * self.out_width];
                        if iy < 0 || iy >= self.height as isize {
                            line.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.width..(iy as usize + 1) * self.width];
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * s + kj) as isize - p;
                            *v = if ix < 0 || ix >= self.width as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`ConvGeom::im2col`]: accumulates patch values back into the image.
    pub fn col2im<T: Real>(&self, col: &[T], image: &mut [T]) {
        let (k, s, p) = (self.kernel, self.stride, self.pad as isize);
        let cols = self.col_cols();
        for c in 0..self.channels {
            let plane =
                &mut image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src = &col[row * cols..(row + 1) * cols];
                    for oy in 0..self.out_height {
                        let iy = (oy * s + ki) as isize - p;
                        if iy < 0 || iy >= self.height as isize {
                            continue;
                        }
                        let dst =
                            &mut plane[iy as usize * self.width..(iy as usize + 1) * self.width];
                        let line = &src[oy * self.out_width..(oy + 1) * self.out_width];
                        for (ox, &v) in line.iter().enumerate() {
                            let ix = (ox * s + kj) as isize - p;
                            if ix >= 0 && ix < self.width as isize {
                                dst[ix as usize] = dst[ix as usize] + v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `y = conv(x, w) + b` with `x: [N,C,H,W]`, `w: [O,C,k,k]`, `b: [O]`.
pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Tensor<T> {
    let (n, c, h, wd) = x.dims4();
    let (o, k) = (w.shape()[0], w.shape()[2]);
    assert_eq!(w.shape(), &[o, c, k, k], "conv weight shape");
    let g = ConvGeom::new(c, h, wd, k, stride, pad).expect("conv geometry");
    let l = g.col_cols();
    let mut out = vec![T::zero(); n * o * l];
    let mut col = vec![T::zero(); g.col_rows() * l];
    for i in 0..n {
        g.im2col(&x.data()[i * g.image_len()..(i + 1) * g.image_len()], &mut col);
        let dst = &mut out[i * o * l..(i + 1) * o * l];
        for (oc, chunk) in dst.chunks_mut(l).enumerate() {
            chunk.fill(b.data()[oc]);
        }
        T::gemm(o, g.col_rows(), l, T::one(), w.data(), g.col_rows() as isize, 1, &col, l as isize, 1, T::one(), dst, l as isize, 1);
    }
    Tensor::from_vec(&[n, o, g.out_height, g.out_width], out)
}

/// Gradients of [`conv2d_forward`]. `dx` is skipped when not requested.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    pad: usize,
    want_dx: bool,
) -> (Option<Tensor<T>>, Tensor<T>, Tensor<T>) {
    let (n, c, h, wd) = x.dims4();
    let (o, k) = (w.shape()[0], w.shape()[2]);
    let g = ConvGeom::new(c, h, wd, k, stride, pad).expect("conv geometry");
    let (l, rows) = (g.col_cols(), g.col_rows());
    let mut dw = vec![T::zero(); w.len()];
    let mut db = vec![T::zero(); o];
    let mut dx = want_dx.then(|| vec![T::zero(); x.len()]);
    let mut col = vec![T::zero(); rows * l];
    let mut dcol = vec![T::zero(); rows * l];
    for i in 0..n {
        let dyi = &dy.data()[i * o * l..(i + 1) * o * l];
        for (oc, chunk) in dyi.chunks(l).enumerate() {
            db[oc] = db[oc] + chunk.iter().copied().sum::<T>();
        }
        g.im2col(&x.data()[i * g.image_len()..(i + 1) * g.image_len()], &mut col);
        // dW += dY_i · col^T
        T::gemm(o, l, rows, T::one(), dyi, l as isize, 1, &col, 1, l as isize, T::one(), &mut dw, rows as isize, 1);
        if let Some(dx) = dx.as_mut() {
            // dcol = W^T · dY_i
            T::gemm(rows, o, l, T::one(), w.data(), 1, rows as isize, dyi, l as isize, 1, T::zero(), &mut dcol, l as isize, 1);
            g.col2im(&dcol, &mut dx[i * g.image_len()..(i + 1) * g.image_len()]);
        }
    }
    (
        dx.map(|d| Tensor::from_vec(x.shape(), d)),
        Tensor::from_vec(w.shape(), dw),
        Tensor::from_vec(&[o], db),
    )
}

/// Output geometry of a transposed convolution: the conv that maps the
/// output back onto the input grid.
pub fn conv_transpose_geom(
    out_channels: usize,
    in_h: usize,
    in_w: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Option<ConvGeom> {
    let oh = ((in_h - 1) * stride + kernel).checked_sub(2 * pad)?;
    let ow = ((in_w - 1) * stride + kernel).checked_sub(2 * pad)?;
    let g = ConvGeom::new(out_channels, oh, ow, kernel, stride, pad)?;
    (g.out_height == in_h && g.out_width == in_w).then_some(g)
}

/// Transposed convolution with `x: [N,Cin,H,W]`, `w: [Cin,Cout,k,k]`, `b: [Cout]`.
pub fn conv_transpose2d_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Tensor<T> {
    let (n, cin, h, wd) = x.dims4();
    let (cout, k) = (w.shape()[1], w.shape()[2]);
    assert_eq!(w.shape(), &[cin, cout, k, k], "conv_transpose weight shape");
    let g = conv_transpose_geom(cout, h, wd, k, stride, pad).expect("conv_transpose geometry");
    let (l, rows) = (h * wd, g.col_rows());
    let out_len = g.image_len();
    let mut out = vec![T::zero(); n * out_len];
    let mut col = vec![T::zero(); rows * l];
    for i in 0..n {
        let xi = &x.data()[i * cin * l..(i + 1) * cin * l];
        // col = W^T · x_i, W viewed as Cin × (Cout·k·k)
        T::gemm(rows, cin, l, T::one(), w.data(), 1, rows as isize, xi, l as isize, 1, T::zero(), &mut col, l as isize, 1);
        let dst = &mut out[i * out_len..(i + 1) * out_len];
        for (oc, chunk) in dst.chunks_mut(g.height * g.width).enumerate() {
            chunk.fill(b.data()[oc]);
        }
        g.col2im(&col, dst);
    }
    Tensor::from_vec(&[n, cout, g.height, g.width], out)
}

pub fn conv_transpose2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    pad: usize,
    want_dx: bool,
) -> (Option<Tensor<T>>, Tensor<T>, Tensor<T>) {
    let (n, cin, h, wd) = x.dims4();
    let (cout, k) = (w.shape()[1], w.shape()[2]);
    let g = conv_transpose_geom(cout, h, wd, k, stride, pad).expect("conv_transpose geometry");
    let (l, rows) = (h * wd, g.col_rows());
    let out_len = g.image_len();
    let mut dw = vec![T::zero(); w.len()];
    let mut db = vec![T::zero(); cout];
    let mut dx = want_dx.then(|| vec![T::zero(); x.len()]);
    let mut dcol = vec![T::zero(); rows * l];
    for i in 0..n {
        let dyi = &dy.data()[i * out_len..(i + 1) * out_len];
        for (oc, chunk) in dyi.chunks(g.height * g.width).enumerate() {
            db[oc] = db[oc] + chunk.iter().copied().sum::<T>();
        }
        g.im2col(dyi, &mut dcol);
        let xi = &x.data()[i * cin * l..(i + 1) * cin * l];
        // dW += x_i · dcol^T
        T::gemm(cin, l, rows, T::one(), xi, l as isize, 1, &dcol, 1, l as isize, T::one(), &mut dw, rows as isize, 1);
        if let Some(dx) = dx.as_mut() {
            T::gemm(cin, rows, l, T::one(), w.data(), rows as isize, 1, &dcol, l as isize, 1, T::zero(), &mut dx[i * cin * l..(i + 1) * cin * l], l as isize, 1);
        }
    }
    (
        dx.map(|d| Tensor::from_vec(x.shape(), d)),
        Tensor::from_vec(w.shape(), dw),
        Tensor::from_vec(&[cout], db),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: &[usize], scale: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|i| ((i * 7 % 11) as f64 - 5.0) * scale).collect())
    }

    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, s: usize, p: usize) -> Tensor<f64> {
        let (n, c, h, wd) = x.dims4();
        let (o, k) = (w.shape()[0], w.shape()[2]);
        let oh = (h + 2 * p - k) / s + 1;
        let ow = (wd + 2 * p - k) / s + 1;
        let mut out = Tensor::zeros(&[n, o, oh, ow]);
        for i in 0..n {
            for oc in 0..o {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = b.data()[oc];
                        for ic in 0..c {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let iy = (y * s + ki) as isize - p as isize;
                                    let ix = (xx * s + kj) as isize - p as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        acc += x.data()[((i * c + ic) * h + iy as usize) * wd + ix as usize]
                                            * w.data()[((oc * c + ic) * k + ki) * k + kj];
                                    }
                                }
                            }
                        }
                        out.data_mut()[((i * o + oc) * oh + y) * ow + xx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_loops() {
        let x = ramp(&[2, 3, 8, 8], 0.1);
        let w = ramp(&[4, 3, 4, 4], 0.05);
        let b = ramp(&[4], 0.3);
        let fast = conv2d_forward(&x, &w, &b, 2, 1);
        let slow = naive_conv(&x, &w, &b, 2, 1);
        assert_eq!(fast.shape(), &[2, 4, 4, 4]);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_transpose_is_adjoint_of_conv() {
        // <conv(x), y> == <x, convT(y)> for bias-free weights shared between both.
        let x = ramp(&[1, 3, 8, 8], 0.1);
        let w = ramp(&[5, 3, 4, 4], 0.05);
        let y = ramp(&[1, 5, 4, 4], 0.2);
        let zero5 = Tensor::zeros(&[5]);
        let zero3 = Tensor::zeros(&[3]);
        let cx = conv2d_forward(&x, &w, &zero5, 2, 1);
        // Transposed conv with weight [Cin=5, Cout=3, k, k] is the same buffer.
        let wt = w.clone().reshape(&[5, 3, 4, 4]);
        let ty = conv_transpose2d_forward(&y, &wt, &zero3, 2, 1);
        assert_eq!(ty.shape(), &[1, 3, 8, 8]);
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(ty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn transpose_geometry_doubles_size() {
        let g = conv_transpose_geom(3, 8, 8, 4, 2, 1).unwrap();
        assert_eq!((g.height, g.width), (16, 16));
    }
}
