//! The layer zoo: parameterized and parameter-free primitives with exact
//! reverse-mode derivatives.

use std::fmt;

use crate::error::{Error, Result};
use crate::nn::conv::{self, Geometry};
use crate::nn::params::{GradientMap, ParamRef, ParamStore};
use crate::tensor::{gemm, Mat, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Parameter-free description of a layer, written in the architecture-table
/// notation when displayed (`CONV-(N20,K5x5,S1)`).
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv {
        out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    },
    TransposedConv {
        out: usize,
        k: usize,
        stride: usize,
        pad: usize,
    },
    Dense {
        out: usize,
    },
    BatchNorm,
    PRelu,
    MaxPool {
        window: usize,
    },
    Sigmoid,
    Tanh,
    Softmax,
    Reshape(Vec<usize>),
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv { out, k, stride, .. } => write!(f, "CONV-(N{out},K{k}x{k},S{stride})"),
            LayerSpec::TransposedConv { out, k, stride, .. } => {
                write!(f, "FCONV-(N{out},K{k}x{k},S{stride})")
            }
            LayerSpec::Dense { out } => write!(f, "FC-(N{out})"),
            LayerSpec::BatchNorm => f.write_str("BN"),
            LayerSpec::PRelu => f.write_str("PReLU"),
            LayerSpec::MaxPool { window } => write!(f, "POOL-(MAX,{window})"),
            LayerSpec::Sigmoid => f.write_str("Sigmoid"),
            LayerSpec::Tanh => f.write_str("TanH"),
            LayerSpec::Softmax => f.write_str("Softmax"),
            LayerSpec::Reshape(s) => write!(f, "Reshape{s:?}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    /// `out x in x k x k` for convolution, `in x out x k x k` for the
    /// transposed form (the adjoint reuses the forward kernel's layout).
    pub weight: ParamRef,
    pub bias: ParamRef,
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub in_features: usize,
    pub out_features: usize,
    /// `out x in`
    pub weight: ParamRef,
    pub bias: ParamRef,
}

#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    pub channels: usize,
    pub gamma: ParamRef,
    pub beta: ParamRef,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PReluLayer {
    pub channels: usize,
    pub slope: ParamRef,
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv(ConvLayer),
    TransposedConv(ConvLayer),
    Dense(DenseLayer),
    BatchNorm(BatchNormLayer),
    PRelu(PReluLayer),
    MaxPool { window: usize },
    Sigmoid,
    Tanh,
    Softmax,
    Reshape(Vec<usize>),
}

/// Values saved by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub enum Cache {
    Conv {
        geom: Geometry,
        cols: Vec<f64>,
        in_shape: Vec<usize>,
    },
    TransposedConv {
        geom: Geometry,
        input: Vec<f64>,
        in_shape: Vec<usize>,
    },
    Dense {
        input: Tensor,
        in_shape: Vec<usize>,
    },
    BatchNorm {
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    PRelu {
        input: Tensor,
    },
    MaxPool {
        argmax: Vec<usize>,
        in_shape: Vec<usize>,
    },
    Output(Tensor),
    Reshape {
        in_shape: Vec<usize>,
    },
}

/// Batch statistics observed by a train-mode BatchNorm, applied to the
/// running estimates by the owning network.
#[derive(Debug, Clone)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// `(outer, channels, inner)` view of an `[N, C, ...]` tensor.
fn channel_view(x: &Tensor, op: &'static str, channels: usize) -> Result<(usize, usize)> {
    if x.rank() < 2 || x.shape()[1] != channels {
        return Err(Error::shape(
            op,
            format!("expected [N, {channels}, ...], got {:?}", x.shape()),
        ));
    }
    Ok((x.shape()[0], x.shape()[2..].iter().product()))
}

fn spatial(x: &Tensor, op: &'static str, channels: usize) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [n, c, h, w] if c == channels => Ok((n, h, w)),
        [n, c] if c == channels => Ok((n, 1, 1)),
        _ => Err(Error::shape(
            op,
            format!("expected [N, {channels}, H, W], got {:?}", x.shape()),
        )),
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "Conv",
            Layer::TransposedConv(_) => "TransposedConv",
            Layer::Dense(_) => "Dense",
            Layer::BatchNorm(_) => "BatchNorm",
            Layer::PRelu(_) => "PReLU",
            Layer::MaxPool { .. } => "MaxPool",
            Layer::Sigmoid => "Sigmoid",
            Layer::Tanh => "Tanh",
            Layer::Softmax => "Softmax",
            Layer::Reshape(_) => "Reshape",
        }
    }

    pub fn params(&self) -> Vec<&ParamRef> {
        match self {
            Layer::Conv(c) | Layer::TransposedConv(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::BatchNorm(b) => vec![&b.gamma, &b.beta],
            Layer::PRelu(p) => vec![&p.slope],
            _ => vec![],
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |op: &'static str, want: String| {
            Err(Error::shape(op, format!("expected {want}, got per-sample {input:?}")))
        };
        match self {
            Layer::Conv(c) => match *input {
                [ch, h, w] if ch == c.in_ch => {
                    let g = Geometry::for_conv("conv2d", ch, h, w, c.k, c.stride, c.pad)?;
                    Ok(vec![c.out_ch, g.oh, g.ow])
                }
                _ => bad("conv2d", format!("[{}, H, W]", c.in_ch)),
            },
            Layer::TransposedConv(c) => {
                let (h, w) = match *input {
                    [ch, h, w] if ch == c.in_ch => (h, w),
                    [ch] if ch == c.in_ch => (1, 1),
                    _ => return bad("transposed_conv2d", format!("[{}, H, W]", c.in_ch)),
                };
                let g = Geometry::for_transposed(
                    "transposed_conv2d",
                    c.out_ch,
                    h,
                    w,
                    c.k,
                    c.stride,
                    c.pad,
                )?;
                Ok(vec![c.out_ch, g.h, g.w])
            }
            Layer::Dense(d) => {
                if input.iter().product::<usize>() != d.in_features {
                    return bad("dense", format!("{} features", d.in_features));
                }
                Ok(vec![d.out_features])
            }
            Layer::BatchNorm(BatchNormLayer { channels, .. })
            | Layer::PRelu(PReluLayer { channels, .. }) => {
                if input.first() != Some(channels) {
                    return bad(self.kind(), format!("{channels} channels"));
                }
                Ok(input.to_vec())
            }
            Layer::MaxPool { window } => match *input {
                [c, h, w] if h % window == 0 && w % window == 0 => {
                    Ok(vec![c, h / window, w / window])
                }
                _ => bad("max_pool", format!("[C, H, W] divisible by {window}")),
            },
            Layer::Sigmoid | Layer::Tanh => Ok(input.to_vec()),
            Layer::Softmax => {
                if input.is_empty() {
                    return bad("softmax", "a non-scalar".into());
                }
                Ok(input.to_vec())
            }
            Layer::Reshape(shape) => {
                if shape.iter().product::<usize>() != input.iter().product::<usize>() {
                    return bad("reshape", format!("{} values", shape.iter().product::<usize>()));
                }
                Ok(shape.clone())
            }
        }
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor,
        train: bool,
    ) -> Result<(Tensor, Cache, Option<BnStats>)> {
        let n = x.batch();
        match self {
            Layer::Conv(c) => {
                let (_, h, w) = spatial(x, "conv2d", c.in_ch)?;
                let g = Geometry::for_conv("conv2d", c.in_ch, h, w, c.k, c.stride, c.pad)?;
                let (out, cols) = conv::conv_forward(
                    &g,
                    n,
                    x.data(),
                    store.slot(c.weight.slot).data(),
                    store.slot(c.bias.slot).data(),
                    c.out_ch,
                );
                let y = Tensor::new([n, c.out_ch, g.oh, g.ow], out)?;
                let cache = Cache::Conv {
                    geom: g,
                    cols,
                    in_shape: x.shape().to_vec(),
                };
                Ok((y, cache, None))
            }
            Layer::TransposedConv(c) => {
                let (_, h, w) = spatial(x, "transposed_conv2d", c.in_ch)?;
                let g = Geometry::for_transposed(
                    "transposed_conv2d",
                    c.out_ch,
                    h,
                    w,
                    c.k,
                    c.stride,
                    c.pad,
                )?;
                let out = conv::tconv_forward(
                    &g,
                    n,
                    x.data(),
                    c.in_ch,
                    store.slot(c.weight.slot).data(),
                    store.slot(c.bias.slot).data(),
                );
                let y = Tensor::new([n, c.out_ch, g.h, g.w], out)?;
                let cache = Cache::TransposedConv {
                    geom: g,
                    input: x.data().to_vec(),
                    in_shape: x.shape().to_vec(),
                };
                Ok((y, cache, None))
            }
            Layer::Dense(d) => {
                if x.rank() < 1 || x.item_len() != d.in_features {
                    return Err(Error::shape(
                        "dense",
                        format!(
                            "input {:?} flattens to {} features, layer expects {}",
                            x.shape(),
                            x.item_len(),
                            d.in_features
                        ),
                    ));
                }
                let mut out = Vec::with_capacity(n * d.out_features);
                let b = store.slot(d.bias.slot).data();
                for _ in 0..n {
                    out.extend_from_slice(b);
                }
                gemm(
                    Mat::new(x.data(), n, d.in_features),
                    Mat::new(store.slot(d.weight.slot).data(), d.out_features, d.in_features).t(),
                    1.0,
                    &mut out,
                );
                let y = Tensor::new([n, d.out_features], out)?;
                let flat = x.clone().reshape([n, d.in_features])?;
                Ok((
                    y,
                    Cache::Dense {
                        input: flat,
                        in_shape: x.shape().to_vec(),
                    },
                    None,
                ))
            }
            Layer::BatchNorm(b) => b.forward(store, x, train),
            Layer::PRelu(p) => {
                let (outer, inner) = channel_view(x, "prelu", p.channels)?;
                let a = store.slot(p.slope.slot).data();
                let mut y = x.clone();
                let data = y.data_mut();
                for o in 0..outer {
                    for (c, &ac) in a.iter().enumerate() {
                        let base = (o * p.channels + c) * inner;
                        for v in &mut data[base..base + inner] {
                            if *v < 0.0 {
                                *v *= ac;
                            }
                        }
                    }
                }
                Ok((y, Cache::PRelu { input: x.clone() }, None))
            }
            Layer::MaxPool { window } => {
                let win = *window;
                let (c, h, w) = match *x.shape() {
                    [_, c, h, w] if h % win == 0 && w % win == 0 => (c, h, w),
                    _ => {
                        return Err(Error::shape(
                            "max_pool",
                            format!("{:?} not divisible by window {win}", x.shape()),
                        ))
                    }
                };
                let (oh, ow) = (h / win, w / win);
                let mut out = vec![0.0; n * c * oh * ow];
                let mut argmax = vec![0usize; out.len()];
                let src = x.data();
                for plane in 0..n * c {
                    let base = plane * h * w;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best = base + oy * win * w + ox * win;
                            for dy in 0..win {
                                for dx in 0..win {
                                    let i = base + (oy * win + dy) * w + ox * win + dx;
                                    // strict: first row-major maximum wins ties
                                    if src[i] > src[best] {
                                        best = i;
                                    }
                                }
                            }
                            let o = (plane * oh + oy) * ow + ox;
                            out[o] = src[best];
                            argmax[o] = best;
                        }
                    }
                }
                let y = Tensor::new([n, c, oh, ow], out)?;
                Ok((
                    y,
                    Cache::MaxPool {
                        argmax,
                        in_shape: x.shape().to_vec(),
                    },
                    None,
                ))
            }
            Layer::Sigmoid => {
                let y = x.map(sigmoid);
                Ok((y.clone(), Cache::Output(y), None))
            }
            Layer::Tanh => {
                let y = x.map(f64::tanh);
                Ok((y.clone(), Cache::Output(y), None))
            }
            Layer::Softmax => {
                let y = softmax_last(x)?;
                Ok((y.clone(), Cache::Output(y), None))
            }
            Layer::Reshape(shape) => {
                let mut full = vec![n];
                full.extend_from_slice(shape);
                let y = x.clone().reshape(full)?;
                Ok((
                    y,
                    Cache::Reshape {
                        in_shape: x.shape().to_vec(),
                    },
                    None,
                ))
            }
        }
    }

    /// Accumulates parameter gradients into `grads` (when `want_params`) and
    /// returns the input gradient when `want_input` is set.
    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &Cache,
        upstream: &Tensor,
        grads: &mut GradientMap,
        want_params: bool,
        want_input: bool,
    ) -> Result<Option<Tensor>> {
        let mismatch = || Error::Usage(format!("{} backward given a foreign cache", self.kind()));
        match (self, cache) {
            (Layer::Conv(c), Cache::Conv { geom, cols, in_shape }) => {
                let n = in_shape[0];
                let w = store.slot(c.weight.slot);
                let mut dw = Tensor::zeros(w.shape());
                let mut db = Tensor::zeros([c.out_ch]);
                let dx = conv::conv_backward(
                    geom,
                    n,
                    cols,
                    w.data(),
                    c.out_ch,
                    upstream.data(),
                    want_params.then_some((dw.data_mut(), db.data_mut())),
                    want_input,
                );
                if want_params {
                    grads.accumulate(&c.weight.id, dw)?;
                    grads.accumulate(&c.bias.id, db)?;
                }
                dx.map(|d| Tensor::new(in_shape.clone(), d)).transpose()
            }
            (Layer::TransposedConv(c), Cache::TransposedConv { geom, input, in_shape }) => {
                let n = in_shape[0];
                let w = store.slot(c.weight.slot);
                let mut dw = Tensor::zeros(w.shape());
                let mut db = Tensor::zeros([c.out_ch]);
                let dx = conv::tconv_backward(
                    geom,
                    n,
                    input,
                    c.in_ch,
                    w.data(),
                    upstream.data(),
                    want_params.then_some((dw.data_mut(), db.data_mut())),
                    want_input,
                );
                if want_params {
                    grads.accumulate(&c.weight.id, dw)?;
                    grads.accumulate(&c.bias.id, db)?;
                }
                dx.map(|d| Tensor::new(in_shape.clone(), d)).transpose()
            }
            (Layer::Dense(d), Cache::Dense { input, in_shape }) => {
                let n = input.batch();
                let up = upstream.data();
                if want_params {
                    let mut dw = Tensor::zeros([d.out_features, d.in_features]);
                    gemm(
                        Mat::new(up, n, d.out_features).t(),
                        Mat::new(input.data(), n, d.in_features),
                        0.0,
                        dw.data_mut(),
                    );
                    let mut db = Tensor::zeros([d.out_features]);
                    for row in up.chunks(d.out_features) {
                        for (b, v) in db.data_mut().iter_mut().zip(row) {
                            *b += v;
                        }
                    }
                    grads.accumulate(&d.weight.id, dw)?;
                    grads.accumulate(&d.bias.id, db)?;
                }
                if !want_input {
                    return Ok(None);
                }
                let mut dx = vec![0.0; n * d.in_features];
                gemm(
                    Mat::new(up, n, d.out_features),
                    Mat::new(store.slot(d.weight.slot).data(), d.out_features, d.in_features),
                    0.0,
                    &mut dx,
                );
                Ok(Some(Tensor::new(in_shape.clone(), dx)?))
            }
            (Layer::BatchNorm(b), Cache::BatchNorm { xhat, inv_std, train }) => {
                b.backward(store, xhat, inv_std, *train, upstream, grads, want_params, want_input)
            }
            (Layer::PRelu(p), Cache::PRelu { input }) => {
                let (outer, inner) = channel_view(input, "prelu", p.channels)?;
                let a = store.slot(p.slope.slot).data();
                let x = input.data();
                let up = upstream.data();
                let mut da = Tensor::zeros([p.channels]);
                let mut dx = vec![0.0; x.len()];
                for o in 0..outer {
                    for c in 0..p.channels {
                        let base = (o * p.channels + c) * inner;
                        let mut acc = 0.0;
                        for i in base..base + inner {
                            if x[i] < 0.0 {
                                acc += up[i] * x[i];
                                dx[i] = up[i] * a[c];
                            } else {
                                dx[i] = up[i];
                            }
                        }
                        da.data_mut()[c] += acc;
                    }
                }
                if want_params {
                    grads.accumulate(&p.slope.id, da)?;
                }
                Ok(want_input.then(|| Tensor::new(input.shape(), dx)).transpose()?)
            }
            (Layer::MaxPool { .. }, Cache::MaxPool { argmax, in_shape }) => {
                if !want_input {
                    return Ok(None);
                }
                let mut dx = Tensor::zeros(in_shape.clone());
                let d = dx.data_mut();
                for (&i, &g) in argmax.iter().zip(upstream.data()) {
                    d[i] += g;
                }
                Ok(Some(dx))
            }
            (Layer::Sigmoid, Cache::Output(y)) => {
                Ok(want_input.then(|| y.zip_map(upstream, |s, g| g * s * (1.0 - s))).transpose()?)
            }
            (Layer::Tanh, Cache::Output(y)) => {
                Ok(want_input.then(|| y.zip_map(upstream, |t, g| g * (1.0 - t * t))).transpose()?)
            }
            (Layer::Softmax, Cache::Output(y)) => {
                if !want_input {
                    return Ok(None);
                }
                let k = *y.shape().last().unwrap_or(&1);
                let mut dx = y.clone();
                for (row, up) in dx.data_mut().chunks_mut(k).zip(upstream.data().chunks(k)) {
                    let s: f64 = row.iter().zip(up).map(|(p, g)| p * g).sum();
                    for (p, g) in row.iter_mut().zip(up) {
                        *p *= g - s;
                    }
                }
                Ok(Some(dx))
            }
            (Layer::Reshape(_), Cache::Reshape { in_shape }) => {
                Ok(want_input.then(|| upstream.clone().reshape(in_shape.clone())).transpose()?)
            }
            _ => Err(mismatch()),
        }
    }
}

impl BatchNormLayer {
    fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor,
        train: bool,
    ) -> Result<(Tensor, Cache, Option<BnStats>)> {
        let ch = self.channels;
        let (outer, inner) = channel_view(x, "batch_norm", ch)?;
        if train && outer < 2 {
            return Err(Error::Config(
                "batch_norm: train mode needs a batch of at least 2 (single-sample variance is zero)"
                    .into(),
            ));
        }
        let gamma = store.slot(self.gamma.slot).data();
        let beta = store.slot(self.beta.slot).data();
        let src = x.data();
        let m = (outer * inner) as f64;
        let (mean, var) = if train {
            let mut mean = vec![0.0; ch];
            let mut var = vec![0.0; ch];
            for c in 0..ch {
                let mut s = 0.0;
                for o in 0..outer {
                    let base = (o * ch + c) * inner;
                    s += src[base..base + inner].iter().sum::<f64>();
                }
                let mu = s / m;
                let mut q = 0.0;
                for o in 0..outer {
                    let base = (o * ch + c) * inner;
                    q += src[base..base + inner]
                        .iter()
                        .map(|v| (v - mu) * (v - mu))
                        .sum::<f64>();
                }
                mean[c] = mu;
                var[c] = q / m;
            }
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = vec![0.0; src.len()];
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for c in 0..ch {
                let base = (o * ch + c) * inner;
                for i in base..base + inner {
                    let h = (src[i] - mean[c]) * inv_std[c];
                    xhat[i] = h;
                    out[i] = gamma[c] * h + beta[c];
                }
            }
        }
        let y = Tensor::new(x.shape(), out)?;
        let stats = train.then(|| {
            // running variance tracks the unbiased estimate
            let corr = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
            BnStats {
                mean,
                var: var.iter().map(|v| v * corr).collect(),
            }
        });
        Ok((y, Cache::BatchNorm { xhat, inv_std, train }, stats))
    }

    fn backward(
        &self,
        store: &ParamStore,
        xhat: &[f64],
        inv_std: &[f64],
        train: bool,
        upstream: &Tensor,
        grads: &mut GradientMap,
        want_params: bool,
        want_input: bool,
    ) -> Result<Option<Tensor>> {
        let ch = self.channels;
        let (outer, inner) = channel_view(upstream, "batch_norm", ch)?;
        let gamma = store.slot(self.gamma.slot).data();
        let up = upstream.data();
        let m = (outer * inner) as f64;
        let mut dgamma = Tensor::zeros([ch]);
        let mut dbeta = Tensor::zeros([ch]);
        for c in 0..ch {
            let (mut sg, mut sb) = (0.0, 0.0);
            for o in 0..outer {
                let base = (o * ch + c) * inner;
                for i in base..base + inner {
                    sg += up[i] * xhat[i];
                    sb += up[i];
                }
            }
            dgamma.data_mut()[c] = sg;
            dbeta.data_mut()[c] = sb;
        }
        if want_params {
            grads.accumulate(&self.gamma.id, dgamma.clone())?;
            grads.accumulate(&self.beta.id, dbeta.clone())?;
        }
        if !want_input {
            return Ok(None);
        }
        let mut dx = vec![0.0; up.len()];
        for c in 0..ch {
            let k = gamma[c] * inv_std[c];
            // sum(dxhat) = gamma * dbeta, sum(dxhat * xhat) = gamma * dgamma
            let (s1, s2) = (dbeta.data()[c], dgamma.data()[c]);
            for o in 0..outer {
                let base = (o * ch + c) * inner;
                for i in base..base + inner {
                    dx[i] = if train {
                        k * (up[i] - s1 / m - xhat[i] * s2 / m)
                    } else {
                        k * up[i]
                    };
                }
            }
        }
        Ok(Some(Tensor::new(upstream.shape(), dx)?))
    }

    pub(crate) fn apply_stats(&mut self, stats: &BnStats) {
        for c in 0..self.channels {
            self.running_mean[c] =
                BN_MOMENTUM * self.running_mean[c] + (1.0 - BN_MOMENTUM) * stats.mean[c];
            self.running_var[c] =
                BN_MOMENTUM * self.running_var[c] + (1.0 - BN_MOMENTUM) * stats.var[c];
        }
    }
}

/// Softmax over the last axis with max subtraction.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let k = *x
        .shape()
        .last()
        .ok_or_else(|| Error::shape("softmax", "scalar input"))?;
    let mut y = x.clone();
    for row in y.data_mut().chunks_mut(k) {
        let mx = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(y)
}
