use std::fmt;

use crate::activations::{act_derivative, forward_slice, ActivationKind, ActivationParams};
use crate::error::{Error, Result};
use crate::nn::loss::softmax_forward;
use crate::tensor::{add_bias_in_place, gemm, Scalar, Tensor, Trans};

/// Gradients produced by one layer's backward pass.
#[derive(Clone, Debug)]
pub struct LayerGrads<T> {
    pub grad_input: Tensor<T>,
    /// `(d_weight, d_bias)` for parameterized layers.
    pub params: Option<(Tensor<T>, Tensor<T>)>,
}

fn missing_cache(layer: &str) -> Error {
    Error::State(format!("{layer} backward called without a cached forward"))
}

fn check_grad_shape<T: Scalar>(op: &'static str, grad: &Tensor<T>, expected: &[usize]) -> Result<()> {
    if grad.shape() != expected {
        return Err(Error::State(format!(
            "{op}: upstream gradient shape {:?} does not match the cached forward output {:?}",
            grad.shape(),
            expected
        )));
    }
    Ok(())
}

/// Fully connected layer: `z = a · W + b`, weight `[in, out]`.
#[derive(Clone, Debug)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros([inputs, outputs]),
            bias: Tensor::zeros([outputs]),
            cache: None,
        }
    }

    pub fn from_params(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.rank() != 2 || bias.rank() != 1 || weight.shape()[1] != bias.shape()[0] {
            return Err(Error::dim("Dense::from_params", weight.shape(), bias.shape()));
        }
        Ok(Self {
            weight,
            bias,
            cache: None,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&mut self, input: Tensor<T>) -> Result<Tensor<T>> {
        if input.rank() != 2 || input.shape()[1] != self.inputs() {
            return Err(Error::dim("dense_forward", input.shape(), self.weight.shape()));
        }
        let batch = input.shape()[0];
        let mut z = Tensor::zeros([batch, self.outputs()]);
        gemm(
            Trans::No,
            Trans::No,
            batch,
            self.inputs(),
            self.outputs(),
            input.data(),
            self.weight.data(),
            z.data_mut(),
            false,
        );
        add_bias_in_place(&mut z, &self.bias)?;
        self.cache = Some(input);
        Ok(z)
    }

    pub fn backward(&self, grad_z: &Tensor<T>) -> Result<LayerGrads<T>> {
        let input = self.cache.as_ref().ok_or_else(|| missing_cache("dense"))?;
        let (batch, n_in, n_out) = (input.shape()[0], self.inputs(), self.outputs());
        check_grad_shape("dense_backward", grad_z, &[batch, n_out])?;

        let mut d_weight = Tensor::zeros([n_in, n_out]);
        gemm(
            Trans::Yes,
            Trans::No,
            n_in,
            batch,
            n_out,
            input.data(),
            grad_z.data(),
            d_weight.data_mut(),
            false,
        );

        let mut d_bias = Tensor::zeros([n_out]);
        for row in grad_z.data().chunks_exact(n_out.max(1)) {
            for (d, &g) in d_bias.data_mut().iter_mut().zip(row) {
                *d += g;
            }
        }

        let mut grad_input = Tensor::zeros([batch, n_in]);
        gemm(
            Trans::No,
            Trans::Yes,
            batch,
            n_out,
            n_in,
            grad_z.data(),
            self.weight.data(),
            grad_input.data_mut(),
            false,
        );

        Ok(LayerGrads {
            grad_input,
            params: Some((d_weight, d_bias)),
        })
    }
}

/// 2-D cross-correlation over `[batch, channels, height, width]` inputs.
/// Weight `[out_ch, in_ch, kh, kw]`, bias `[out_ch]`.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
    cache: Option<Tensor<T>>,
}

/// Spatial geometry of one convolution call.
#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.ho * self.wo
    }
}

fn conv_extent(input: usize, kernel: usize, stride: usize, pad: usize, axis: &str) -> Result<usize> {
    let padded = input + 2 * pad;
    if stride == 0 {
        return Err(Error::Config("conv stride must be at least 1".into()));
    }
    if padded < kernel || !(padded - kernel).is_multiple_of(stride) {
        return Err(Error::Config(format!(
            "conv {axis}: ({input} + 2*{pad} - {kernel}) / {stride} + 1 is not a positive integer"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let plane = g.col_cols();
    for ci in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((ci * g.kh + ki) * g.kw + kj) * plane;
                for oy in 0..g.ho {
                    let dst = &mut cols[row + oy * g.wo..row + (oy + 1) * g.wo];
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &x[(ci * g.h + iy as usize) * g.w..(ci * g.h + iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *d = if ix >= 0 && ix < g.w as isize {
                            src[ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(cols: &[T], g: &ConvGeom, x: &mut [T]) {
    let plane = g.col_cols();
    for ci in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((ci * g.kh + ki) * g.kw + kj) * plane;
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let base = (ci * g.h + iy as usize) * g.w;
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            x[base + ix as usize] += cols[row + oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(in_ch: usize, out_ch: usize, kernel: (usize, usize), stride: usize, padding: usize) -> Self {
        Self {
            weight: Tensor::zeros([out_ch, in_ch, kernel.0, kernel.1]),
            bias: Tensor::zeros([out_ch]),
            stride,
            padding,
            cache: None,
        }
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

    /// Output `[out_ch, h', w']` for a per-sample `[in_ch, h, w]` input.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let g = self.geometry(input)?;
        Ok(vec![self.out_channels(), g.ho, g.wo])
    }

    fn geometry(&self, sample: &[usize]) -> Result<ConvGeom> {
        if sample.len() != 3 || sample[0] != self.in_channels() {
            return Err(Error::dim("conv2d_forward", sample, self.weight.shape()));
        }
        let (kh, kw) = self.kernel();
        Ok(ConvGeom {
            c: sample[0],
            h: sample[1],
            w: sample[2],
            kh,
            kw,
            stride: self.stride,
            pad: self.padding,
            ho: conv_extent(sample[1], kh, self.stride, self.padding, "height")?,
            wo: conv_extent(sample[2], kw, self.stride, self.padding, "width")?,
        })
    }

    pub fn forward(&mut self, input: Tensor<T>) -> Result<Tensor<T>> {
        if input.rank() != 4 {
            return Err(Error::dim("conv2d_forward", input.shape(), self.weight.shape()));
        }
        let g = self.geometry(&input.shape()[1..])?;
        let batch = input.shape()[0];
        let out_ch = self.out_channels();
        let (rows, plane) = (g.col_rows(), g.col_cols());
        let mut out = Tensor::zeros([batch, out_ch, g.ho, g.wo]);
        let mut cols = vec![T::zero(); rows * plane];
        let in_stride = input.stride0();
        for b in 0..batch {
            let x = &input.data()[b * in_stride..(b + 1) * in_stride];
            let y = &mut out.data_mut()[b * out_ch * plane..(b + 1) * out_ch * plane];
            im2col(x, &g, &mut cols);
            gemm(
                Trans::No,
                Trans::No,
                out_ch,
                rows,
                plane,
                self.weight.data(),
                &cols,
                y,
                false,
            );
            for (o, chunk) in y.chunks_exact_mut(plane).enumerate() {
                let bias = self.bias.data()[o];
                chunk.iter_mut().for_each(|v| *v += bias);
            }
        }
        self.cache = Some(input);
        Ok(out)
    }

    pub fn backward(&self, grad_out: &Tensor<T>) -> Result<LayerGrads<T>> {
        let input = self.cache.as_ref().ok_or_else(|| missing_cache("conv2d"))?;
        let g = self.geometry(&input.shape()[1..])?;
        let batch = input.shape()[0];
        let out_ch = self.out_channels();
        check_grad_shape("conv2d_backward", grad_out, &[batch, out_ch, g.ho, g.wo])?;
        let (rows, plane) = (g.col_rows(), g.col_cols());

        let mut d_weight = Tensor::zeros(self.weight.shape().to_vec());
        let mut d_bias = Tensor::zeros([out_ch]);
        let mut grad_input = Tensor::zeros(input.shape().to_vec());
        let mut cols = vec![T::zero(); rows * plane];
        let mut d_cols = vec![T::zero(); rows * plane];
        let in_stride = input.stride0();
        for b in 0..batch {
            let x = &input.data()[b * in_stride..(b + 1) * in_stride];
            let gy = &grad_out.data()[b * out_ch * plane..(b + 1) * out_ch * plane];
            im2col(x, &g, &mut cols);
            gemm(
                Trans::No,
                Trans::Yes,
                out_ch,
                plane,
                rows,
                gy,
                &cols,
                d_weight.data_mut(),
                true,
            );
            for (o, chunk) in gy.chunks_exact(plane).enumerate() {
                d_bias.data_mut()[o] += chunk.iter().copied().sum();
            }
            gemm(
                Trans::Yes,
                Trans::No,
                rows,
                out_ch,
                plane,
                self.weight.data(),
                gy,
                &mut d_cols,
                false,
            );
            col2im_add(
                &d_cols,
                &g,
                &mut grad_input.data_mut()[b * in_stride..(b + 1) * in_stride],
            );
        }
        Ok(LayerGrads {
            grad_input,
            params: Some((d_weight, d_bias)),
        })
    }
}

/// Max pooling with floor semantics: trailing rows/columns that do not fill
/// a whole window are dropped.
#[derive(Clone, Debug)]
pub struct MaxPool2d {
    pub pool: (usize, usize),
    pub stride: usize,
    cache: Option<PoolCache>,
}

#[derive(Clone, Debug)]
struct PoolCache {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    /// Flat input offset of each output element's maximum.
    argmax: Vec<usize>,
}

impl MaxPool2d {
    pub fn new(pool: (usize, usize), stride: usize) -> Self {
        Self {
            pool,
            stride,
            cache: None,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        if input.len() != 3 {
            return Err(Error::dim("maxpool_forward", input, &[0, 0, 0]));
        }
        let (ph, pw) = self.pool;
        if self.stride == 0 || ph == 0 || pw == 0 {
            return Err(Error::Config("pool window and stride must be at least 1".into()));
        }
        if ph > input[1] || pw > input[2] {
            return Err(Error::Config(format!(
                "pool window {ph}x{pw} larger than input {}x{}",
                input[1], input[2]
            )));
        }
        Ok(vec![
            input[0],
            (input[1] - ph) / self.stride + 1,
            (input[2] - pw) / self.stride + 1,
        ])
    }

    /// Argmax offsets recorded by the last forward, if any.
    pub fn cached_argmax(&self) -> Option<&[usize]> {
        self.cache.as_ref().map(|c| c.argmax.as_slice())
    }

    pub fn forward<T: Scalar>(&mut self, input: Tensor<T>) -> Result<Tensor<T>> {
        if input.rank() != 4 {
            return Err(Error::dim("maxpool_forward", input.shape(), &[0, 0, 0, 0]));
        }
        let shape = input.shape();
        let out_sample = self.output_shape(&shape[1..])?;
        let (batch, ch, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let (ho, wo) = (out_sample[1], out_sample[2]);
        let (ph, pw) = self.pool;
        let mut out = Tensor::zeros([batch, ch, ho, wo]);
        let mut argmax = Vec::with_capacity(batch * ch * ho * wo);
        let x = input.data();
        let y = out.data_mut();
        let mut k = 0;
        for plane in 0..batch * ch {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let (y0, x0) = (oy * self.stride, ox * self.stride);
                    let mut best = base + y0 * w + x0;
                    for dy in 0..ph {
                        for dx in 0..pw {
                            let idx = base + (y0 + dy) * w + x0 + dx;
                            if x[idx] > x[best] {
                                best = idx;
                            }
                        }
                    }
                    y[k] = x[best];
                    argmax.push(best);
                    k += 1;
                }
            }
        }
        self.cache = Some(PoolCache {
            input_shape: input.shape().to_vec(),
            output_shape: out.shape().to_vec(),
            argmax,
        });
        Ok(out)
    }

    pub fn backward<T: Scalar>(&self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_cache("maxpool"))?;
        check_grad_shape("maxpool_backward", grad_out, &cache.output_shape)?;
        let mut grad_in = Tensor::zeros(cache.input_shape.clone());
        let gi = grad_in.data_mut();
        for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
            gi[idx] += g;
        }
        Ok(grad_in)
    }
}

/// `[batch, d1, d2, ...]` to `[batch, d1*d2*...]`.
#[derive(Clone, Debug, Default)]
pub struct Flatten {
    cache: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward<T: Scalar>(&mut self, input: Tensor<T>) -> Result<Tensor<T>> {
        let shape = input.shape().to_vec();
        let batch = shape[0];
        let rest: usize = shape[1..].iter().product();
        self.cache = Some(shape);
        input.reshape([batch, rest])
    }

    pub fn backward<T: Scalar>(&self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self.cache.as_ref().ok_or_else(|| missing_cache("flatten"))?;
        grad.clone().reshape(shape.clone()).map_err(|_| {
            Error::State(format!(
                "flatten_backward: gradient {:?} does not match cached input {:?}",
                grad.shape(),
                shape
            ))
        })
    }
}

/// Elementwise activation layer.
#[derive(Clone, Debug)]
pub struct Activation<T> {
    pub kind: ActivationKind,
    pub params: ActivationParams,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Activation<T> {
    pub fn new(kind: ActivationKind) -> Self {
        Self::with_params(kind, ActivationParams::default())
    }

    pub fn with_params(kind: ActivationKind, params: ActivationParams) -> Self {
        Self {
            kind,
            params,
            cache: None,
        }
    }

    /// Pre-activation input of the last forward.
    pub fn cached_input(&self) -> Option<&Tensor<T>> {
        self.cache.as_ref()
    }

    pub fn forward(&mut self, input: Tensor<T>) -> Result<Tensor<T>> {
        let mut out = Tensor::zeros(input.shape().to_vec());
        forward_slice(self.kind, input.data(), out.data_mut(), &self.params);
        self.cache = Some(input);
        Ok(out)
    }

    pub fn backward(&self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let z = self.cache.as_ref().ok_or_else(|| missing_cache("activation"))?;
        check_grad_shape("activation_backward", grad, z.shape())?;
        let mut out = grad.clone();
        for (g, &x) in out.data_mut().iter_mut().zip(z.data()) {
            *g *= act_derivative(self.kind, x, &self.params);
        }
        Ok(out)
    }
}

/// Row-wise softmax over `[batch, K]`.
#[derive(Clone, Debug)]
pub struct Softmax<T> {
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Default for Softmax<T> {
    fn default() -> Self {
        Self { cache: None }
    }
}

impl<T: Scalar> Softmax<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Output of the last forward.
    pub fn cached_output(&self) -> Option<&Tensor<T>> {
        self.cache.as_ref()
    }

    pub fn forward(&mut self, input: Tensor<T>) -> Result<Tensor<T>> {
        let p = softmax_forward(&input)?;
        self.cache = Some(p.clone());
        Ok(p)
    }

    /// Full Jacobian-vector product; the training path uses the fused
    /// softmax + cross-entropy gradient instead.
    pub fn backward(&self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let p = self.cache.as_ref().ok_or_else(|| missing_cache("softmax"))?;
        check_grad_shape("softmax_backward", grad, p.shape())?;
        let k = p.shape()[1];
        let mut out = Tensor::zeros(p.shape().to_vec());
        for ((o, pr), gr) in out
            .data_mut()
            .chunks_exact_mut(k)
            .zip(p.data().chunks_exact(k))
            .zip(grad.data().chunks_exact(k))
        {
            let dot: T = pr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
            for ((o, &pi), &gi) in o.iter_mut().zip(pr).zip(gr) {
                *o = pi * (gi - dot);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub enum Layer<T> {
    Dense(Dense<T>),
    Conv2d(Conv2d<T>),
    MaxPool2d(MaxPool2d),
    Flatten(Flatten),
    Activation(Activation<T>),
    Softmax(Softmax<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn dense(inputs: usize, outputs: usize) -> Self {
        Layer::Dense(Dense::new(inputs, outputs))
    }

    /// Square-kernel convolution.
    pub fn conv(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Layer::Conv2d(Conv2d::new(in_ch, out_ch, (kernel, kernel), stride, padding))
    }

    pub fn max_pool(size: usize, stride: usize) -> Self {
        Layer::MaxPool2d(MaxPool2d::new((size, size), stride))
    }

    pub fn flatten() -> Self {
        Layer::Flatten(Flatten::new())
    }

    pub fn activation(kind: ActivationKind) -> Self {
        Layer::Activation(Activation::new(kind))
    }

    pub fn softmax() -> Self {
        Layer::Softmax(Softmax::new())
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense(d) => {
                if input != [d.inputs()] {
                    return Err(Error::dim("dense", input, d.weight.shape()));
                }
                Ok(vec![d.outputs()])
            }
            Layer::Conv2d(c) => c.output_shape(input),
            Layer::MaxPool2d(p) => p.output_shape(input),
            Layer::Flatten(_) => Ok(vec![input.iter().product()]),
            Layer::Activation(_) => Ok(input.to_vec()),
            Layer::Softmax(_) => {
                if input.len() != 1 {
                    return Err(Error::dim("softmax", input, &[0]));
                }
                Ok(input.to_vec())
            }
        }
    }

    pub fn forward(&mut self, input: Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Dense(l) => l.forward(input),
            Layer::Conv2d(l) => l.forward(input),
            Layer::MaxPool2d(l) => l.forward(input),
            Layer::Flatten(l) => l.forward(input),
            Layer::Activation(l) => l.forward(input),
            Layer::Softmax(l) => l.forward(input),
        }
    }

    pub fn backward(&self, grad: &Tensor<T>) -> Result<LayerGrads<T>> {
        let plain = |grad_input| LayerGrads {
            grad_input,
            params: None,
        };
        match self {
            Layer::Dense(l) => l.backward(grad),
            Layer::Conv2d(l) => l.backward(grad),
            Layer::MaxPool2d(l) => l.backward(grad).map(plain),
            Layer::Flatten(l) => l.backward(grad).map(plain),
            Layer::Activation(l) => l.backward(grad).map(plain),
            Layer::Softmax(l) => l.backward(grad).map(plain),
        }
    }

    /// `(weight, bias)` for Dense and Conv2d.
    pub fn params(&self) -> Option<(&Tensor<T>, &Tensor<T>)> {
        match self {
            Layer::Dense(l) => Some((&l.weight, &l.bias)),
            Layer::Conv2d(l) => Some((&l.weight, &l.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Tensor<T>, &mut Tensor<T>)> {
        match self {
            Layer::Dense(l) => Some((&mut l.weight, &mut l.bias)),
            Layer::Conv2d(l) => Some((&mut l.weight, &mut l.bias)),
            _ => None,
        }
    }

    pub fn clear_cache(&mut self) {
        match self {
            Layer::Dense(l) => l.cache = None,
            Layer::Conv2d(l) => l.cache = None,
            Layer::MaxPool2d(l) => l.cache = None,
            Layer::Flatten(l) => l.cache = None,
            Layer::Activation(l) => l.cache = None,
            Layer::Softmax(l) => l.cache = None,
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, Layer::Conv2d(_))
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, Layer::Dense(_))
    }
}

impl<T: Scalar> fmt::Display for Layer<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layer::Dense(d) => write!(f, "Dense({}, {})", d.inputs(), d.outputs()),
            Layer::Conv2d(c) => {
                let (kh, kw) = c.kernel();
                write!(
                    f,
                    "Conv2D({}->{}, {kh}x{kw}, stride {}, pad {})",
                    c.in_channels(),
                    c.out_channels(),
                    c.stride,
                    c.padding
                )
            }
            Layer::MaxPool2d(p) => write!(f, "MaxPool2D({}x{}, stride {})", p.pool.0, p.pool.1, p.stride),
            Layer::Flatten(_) => f.write_str("Flatten"),
            Layer::Activation(a) => write!(f, "Activation({})", a.kind),
            Layer::Softmax(_) => f.write_str("Softmax"),
        }
    }
}
