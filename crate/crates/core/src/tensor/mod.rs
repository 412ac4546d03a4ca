//! Dense NCHW tensors and the forward operators used by every network stage.
//!
//! All operators are pure: they borrow their inputs and return a freshly
//! allocated tensor. Convolution reductions accumulate in `f64`.

mod weights;

pub use weights::{WeightLoader, WeightStore, WEIGHT_MAGIC};

use crate::error::{contract, Result};
use crate::scalar::Scalar;

/// Shape `(batch, channels, height, width)`.
pub type Shape = [usize; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        contract!(
            shape.iter().all(|&d| d >= 1),
            "tensor dims must be >= 1, got {shape:?}"
        );
        let len: usize = shape.iter().product();
        contract!(
            len == data.len(),
            "shape {shape:?} needs {len} values, got {}",
            data.len()
        );
        Ok(Self { shape, data })
    }

    pub fn full(shape: Shape, value: T) -> Self {
        assert!(shape.iter().all(|&d| d >= 1), "tensor dims must be >= 1");
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, T::zero())
    }

    /// Builds a tensor by evaluating `f(n, c, y, x)` at every index.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let [n, c, h, w] = shape;
        let mut data = Vec::with_capacity(n * c * h * w);
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(b, ch, y, x));
                    }
                }
            }
        }
        assert!(shape.iter().all(|&d| d >= 1), "tensor dims must be >= 1");
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }
    pub fn batch(&self) -> usize {
        self.shape[0]
    }
    pub fn channels(&self) -> usize {
        self.shape[1]
    }
    pub fn height(&self) -> usize {
        self.shape[2]
    }
    pub fn width(&self) -> usize {
        self.shape[3]
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

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.offset(n, c, y, x)]
    }

    /// One `(height, width)` plane.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let hw = self.shape[2] * self.shape[3];
        let start = self.offset(n, c, 0, 0);
        &self.data[start..start + hw]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element type conversion (e.g. `f32` weights into an `f64` network).
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::narrow(v.widen())).collect(),
        }
    }

    /// Zero-pads on the bottom and right up to `(h, w)`.
    pub fn pad_to(&self, h: usize, w: usize) -> Result<Self> {
        let [n, c, ih, iw] = self.shape;
        contract!(
            h >= ih && w >= iw,
            "pad_to({h}, {w}) smaller than input {:?}",
            self.shape
        );
        if (h, w) == (ih, iw) {
            return Ok(self.clone());
        }
        let mut out = Self::zeros([n, c, h, w]);
        for b in 0..n {
            for ch in 0..c {
                for y in 0..ih {
                    let src = self.offset(b, ch, y, 0);
                    let dst = out.offset(b, ch, y, 0);
                    out.data[dst..dst + iw].copy_from_slice(&self.data[src..src + iw]);
                }
            }
        }
        Ok(out)
    }
}

/// Convolution weights `(out_c, in_c, kh, kw)` with per-output-channel bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(weight: Tensor<T>, bias: Vec<T>, stride: usize, padding: usize) -> Result<Self> {
        let [oc, _, kh, kw] = weight.shape();
        contract!(
            kh % 2 == 1 && kw % 2 == 1,
            "kernel must have odd size, got {kh}x{kw}"
        );
        contract!(
            bias.len() == oc,
            "bias length {} does not match {oc} output channels",
            bias.len()
        );
        contract!(stride >= 1, "stride must be positive");
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    /// Stride-1 convolution that preserves spatial size.
    pub fn same(weight: Tensor<T>, bias: Vec<T>) -> Result<Self> {
        let pad = weight.height() / 2;
        Self::new(weight, bias, 1, pad)
    }

    pub fn zeros(out_c: usize, in_c: usize, k: usize) -> Self {
        Self::same(Tensor::zeros([out_c, in_c, k, k]), vec![T::zero(); out_c])
            .expect("odd kernel")
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }
    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }
    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.shape()[2], self.weight.shape()[3])
    }
}

/// Direct 2-D cross-correlation (no kernel flip).
pub fn conv2d<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>> {
    let [n, ic, ih, iw] = input.shape();
    let [oc, wic, kh, kw] = params.weight.shape();
    contract!(
        ic == wic,
        "conv2d: input {:?} has {ic} channels but weight {:?} expects {wic}",
        input.shape(),
        params.weight.shape()
    );
    let (s, p) = (params.stride, params.padding);
    contract!(
        ih + 2 * p >= kh && iw + 2 * p >= kw,
        "conv2d: kernel {kh}x{kw} larger than padded input {:?}",
        input.shape()
    );
    let oh = (ih + 2 * p - kh) / s + 1;
    let ow = (iw + 2 * p - kw) / s + 1;

    let mut out = Vec::with_capacity(n * oc * oh * ow);
    let mut acc = vec![0f64; oh * ow];
    for b in 0..n {
        for o in 0..oc {
            acc.fill(params.bias[o].widen());
            for c in 0..ic {
                let plane = input.plane(b, c);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = params.weight.at(o, c, ky, kx);
                        if wv == T::zero() {
                            continue;
                        }
                        let wv = wv.widen();
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= ih as isize {
                                continue;
                            }
                            let row = &plane[iy as usize * iw..(iy as usize + 1) * iw];
                            let dst = &mut acc[oy * ow..(oy + 1) * ow];
                            for (ox, a) in dst.iter_mut().enumerate() {
                                let ix = (ox * s + kx) as isize - p as isize;
                                if ix >= 0 && (ix as usize) < iw {
                                    *a += wv * row[ix as usize].widen();
                                }
                            }
                        }
                    }
                }
            }
            out.extend(acc.iter().map(|&v| T::narrow(v)));
        }
    }
    Tensor::new([n, oc, oh, ow], out)
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn sigmoid<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(sigmoid_scalar)
}

#[inline]
pub fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    // split by sign so exp never overflows
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Fixed-statistics batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub eps: T,
}

impl<T: Scalar> BatchNorm<T> {
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            eps: T::zero(),
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        batchnorm_infer(
            input, &self.mean, &self.var, &self.gamma, &self.beta, self.eps,
        )
    }
}

pub fn batchnorm_infer<T: Scalar>(
    input: &Tensor<T>,
    mean: &[T],
    var: &[T],
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> Result<Tensor<T>> {
    let c = input.channels();
    contract!(
        [mean.len(), var.len(), gamma.len(), beta.len()]
            .iter()
            .all(|&l| l == c),
        "batchnorm: parameter lengths ({}, {}, {}, {}) do not match {c} channels",
        mean.len(),
        var.len(),
        gamma.len(),
        beta.len()
    );
    contract!(
        var.iter().all(|&v| v >= T::zero()) && eps >= T::zero(),
        "batchnorm: variance and eps must be non-negative"
    );
    let mut out = input.clone();
    let hw = input.height() * input.width();
    for (i, chunk) in out.data.chunks_mut(hw).enumerate() {
        let ch = i % c;
        let scale = gamma[ch] / (var[ch] + eps).sqrt();
        for v in chunk.iter_mut() {
            *v = (*v - mean[ch]) * scale + beta[ch];
        }
    }
    Ok(out)
}

/// Bilinear resize with half-pixel centers (align-corners off).
pub fn resize_bilinear<T: Scalar>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Tensor<T> {
    assert!(out_h >= 1 && out_w >= 1, "resize target must be >= 1x1");
    let [n, c, ih, iw] = input.shape();
    if (ih, iw) == (out_h, out_w) {
        return input.clone();
    }
    let taps = |out_len: usize, in_len: usize| -> Vec<(usize, usize, T)> {
        let scale = in_len as f64 / out_len as f64;
        (0..out_len)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
                let i0 = (src.floor() as usize).min(in_len - 1);
                let i1 = (i0 + 1).min(in_len - 1);
                (i0, i1, T::narrow(src - i0 as f64))
            })
            .collect()
    };
    let ys = taps(out_h, ih);
    let xs = taps(out_w, iw);

    let mut data = Vec::with_capacity(n * c * out_h * out_w);
    for b in 0..n {
        for ch in 0..c {
            let plane = input.plane(b, ch);
            for &(y0, y1, ly) in &ys {
                for &(x0, x1, lx) in &xs {
                    // a + l(b - a) form keeps constant fields exact
                    let (a, bb) = (plane[y0 * iw + x0], plane[y0 * iw + x1]);
                    let (cc, d) = (plane[y1 * iw + x0], plane[y1 * iw + x1]);
                    let top = a + lx * (bb - a);
                    let bottom = cc + lx * (d - cc);
                    data.push(top + ly * (bottom - top));
                }
            }
        }
    }
    Tensor {
        shape: [n, c, out_h, out_w],
        data,
    }
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    contract!(
        a.shape() == b.shape(),
        "add: shape mismatch {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
    Ok(Tensor {
        shape: a.shape,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| x + y).collect(),
    })
}

/// 2x2 max pooling with stride 2.
pub fn maxpool2<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.shape();
    contract!(
        h % 2 == 0 && w % 2 == 0,
        "maxpool2 needs even spatial dims, got {:?}",
        input.shape()
    );
    let (oh, ow) = (h / 2, w / 2);
    let mut data = Vec::with_capacity(n * c * oh * ow);
    for b in 0..n {
        for ch in 0..c {
            let p = input.plane(b, ch);
            for y in 0..oh {
                for x in 0..ow {
                    let i = 2 * y * w + 2 * x;
                    data.push(p[i].max(p[i + 1]).max(p[i + w]).max(p[i + w + 1]));
                }
            }
        }
    }
    Tensor::new([n, c, oh, ow], data)
}
