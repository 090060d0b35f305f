//! Layer sequences grouped into blocks.
//!
//! A block is one row of an architecture table (`FCONV-(N512,K3x3,S2), BN,
//! PReLU`); weight sharing between networks is declared per block.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::nn::layer::{BatchNormLayer, BnStats, Cache, ConvLayer, DenseLayer, Layer, LayerSpec, PReluLayer};
use crate::nn::params::{GradientMap, ParamId, ParamRef, ParamStore};
use crate::rng::Rng64;
use crate::tensor::Tensor;

/// Initialization constants, recorded in run metadata.
pub const INIT_STD: f64 = 0.02;
pub const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

#[derive(Debug, Clone)]
pub struct Block {
    pub label: String,
    pub layers: Vec<Layer>,
}

impl Block {
    pub fn params(&self) -> impl Iterator<Item = &ParamRef> {
        self.layers.iter().flat_map(|l| l.params())
    }
}

#[derive(Debug, Clone)]
pub struct Network {
    name: String,
    input_shape: Vec<usize>,
    blocks: Vec<Block>,
    mode: Mode,
    cached: Option<Trace>,
}

/// Saved activations of one forward pass over a contiguous block range.
#[derive(Debug, Clone)]
pub struct Trace {
    blocks: Range<usize>,
    caches: Vec<Vec<Cache>>,
    output_shape: Vec<usize>,
}

impl Trace {
    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    /// Branch taken by every piecewise-linear unit: the sign of each PReLU
    /// input and the winner of each max-pool window. Two passes with equal
    /// patterns lie on the same smooth piece.
    pub fn branch_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for cache in self.caches.iter().flatten() {
            match cache {
                Cache::PRelu { input } => out.extend(input.data().iter().map(|&v| usize::from(v > 0.0))),
                Cache::MaxPool { argmax, .. } => out.extend(argmax),
                _ => {}
            }
        }
        out
    }
}

impl Network {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Block] {
        &mut self.blocks
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn params(&self) -> impl Iterator<Item = &ParamRef> {
        self.blocks.iter().flat_map(Block::params)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.params().map(|p| p.id.clone()).collect()
    }

    /// Per-sample output shape after the first `upto` blocks.
    pub fn shape_after(&self, upto: usize) -> Result<Vec<usize>> {
        let mut s = self.input_shape.clone();
        for b in &self.blocks[..upto] {
            for l in &b.layers {
                s = l.output_shape(&s)?;
            }
        }
        Ok(s)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        self.shape_after(self.blocks.len())
    }

    /// Human-readable block/shape chain.
    pub fn describe(&self) -> Result<String> {
        let mut out = format!("{} input {:?}\n", self.name, self.input_shape);
        let mut s = self.input_shape.clone();
        for (i, b) in self.blocks.iter().enumerate() {
            for l in &b.layers {
                s = l.output_shape(&s)?;
            }
            out.push_str(&format!("  {:>2} {:<45} -> {:?}\n", i + 1, b.label, s));
        }
        Ok(out)
    }

    fn check_input(&self, x: &Tensor, start: usize) -> Result<()> {
        let want = self.shape_after(start)?;
        if x.rank() == 0 || x.shape()[1..] != want[..] {
            return Err(Error::shape(
                "network forward",
                format!("{} block {} expects [N, {:?}], got {:?}", self.name, start + 1, want, x.shape()),
            ));
        }
        Ok(())
    }

    fn run(
        &self,
        store: &ParamStore,
        x: &Tensor,
        blocks: Range<usize>,
        train: bool,
    ) -> Result<(Tensor, Trace, Vec<(usize, usize, BnStats)>)> {
        self.check_input(x, blocks.start)?;
        let mut caches = Vec::with_capacity(blocks.len());
        let mut stats = Vec::new();
        let mut cur = x.clone();
        for bi in blocks.clone() {
            let mut bc = Vec::with_capacity(self.blocks[bi].layers.len());
            for (li, layer) in self.blocks[bi].layers.iter().enumerate() {
                let (y, cache, st) = layer.forward(store, &cur, train)?;
                if let Some(st) = st {
                    stats.push((bi, li, st));
                }
                bc.push(cache);
                cur = y;
            }
            caches.push(bc);
        }
        let trace = Trace {
            blocks,
            caches,
            output_shape: cur.shape().to_vec(),
        };
        Ok((cur, trace, stats))
    }

    fn apply_stats(&mut self, stats: Vec<(usize, usize, BnStats)>) {
        for (bi, li, st) in stats {
            if let Layer::BatchNorm(bn) = &mut self.blocks[bi].layers[li] {
                bn.apply_stats(&st);
            }
        }
    }

    /// Forward pass in the network's current mode. Train mode updates
    /// BatchNorm running statistics.
    pub fn forward(&mut self, store: &ParamStore, x: &Tensor) -> Result<(Tensor, Trace)> {
        self.forward_blocks(store, x, 0..self.blocks.len())
    }

    pub fn forward_blocks(
        &mut self,
        store: &ParamStore,
        x: &Tensor,
        blocks: Range<usize>,
    ) -> Result<(Tensor, Trace)> {
        let train = self.mode == Mode::Train;
        let (y, trace, stats) = self.run(store, x, blocks, train)?;
        self.apply_stats(stats);
        Ok((y, trace))
    }

    /// Forward pass that never touches running statistics. In train mode
    /// BatchNorm still normalizes with batch statistics.
    pub fn forward_pure(&self, store: &ParamStore, x: &Tensor) -> Result<(Tensor, Trace)> {
        let (y, t, _) = self.run(store, x, 0..self.blocks.len(), self.mode == Mode::Train)?;
        Ok((y, t))
    }

    /// Inference-mode forward pass (BatchNorm uses running statistics).
    pub fn infer(&self, store: &ParamStore, x: &Tensor) -> Result<(Tensor, Trace)> {
        self.infer_blocks(store, x, 0..self.blocks.len())
    }

    pub fn infer_blocks(
        &self,
        store: &ParamStore,
        x: &Tensor,
        blocks: Range<usize>,
    ) -> Result<(Tensor, Trace)> {
        let (y, t, _) = self.run(store, x, blocks, false)?;
        Ok((y, t))
    }

    /// Reverse-mode pass: parameter gradients for every layer in the traced
    /// range plus the gradient with respect to the traced input.
    pub fn backward(
        &self,
        store: &ParamStore,
        trace: &Trace,
        upstream: &Tensor,
    ) -> Result<(GradientMap, Tensor)> {
        let (g, dx) = self.backward_impl(store, trace, upstream, true, true)?;
        Ok((g, dx.expect("input gradient requested")))
    }

    /// Input gradient only; no parameter gradients are formed.
    pub fn backward_input(&self, store: &ParamStore, trace: &Trace, upstream: &Tensor) -> Result<Tensor> {
        let (_, dx) = self.backward_impl(store, trace, upstream, false, true)?;
        Ok(dx.expect("input gradient requested"))
    }

    /// As [`Network::backward`] without propagating into the input.
    pub fn backward_params(
        &self,
        store: &ParamStore,
        trace: &Trace,
        upstream: &Tensor,
    ) -> Result<GradientMap> {
        Ok(self.backward_impl(store, trace, upstream, true, false)?.0)
    }

    fn backward_impl(
        &self,
        store: &ParamStore,
        trace: &Trace,
        upstream: &Tensor,
        want_params: bool,
        want_input: bool,
    ) -> Result<(GradientMap, Option<Tensor>)> {
        if upstream.shape() != trace.output_shape.as_slice() {
            return Err(Error::shape(
                "backward",
                format!(
                    "upstream {:?} does not match forward output {:?}",
                    upstream.shape(),
                    trace.output_shape
                ),
            ));
        }
        if trace.blocks.end > self.blocks.len() || trace.caches.len() != trace.blocks.len() {
            return Err(Error::Usage(format!("trace does not belong to {}", self.name)));
        }
        let mut grads = GradientMap::new();
        let mut g = upstream.clone();
        let first_layer = (trace.blocks.start, 0);
        for (bi, caches) in trace.blocks.clone().zip(&trace.caches).rev() {
            let layers = &self.blocks[bi].layers;
            if layers.len() != caches.len() {
                return Err(Error::Usage(format!("trace does not belong to {}", self.name)));
            }
            for (li, (layer, cache)) in layers.iter().zip(caches).enumerate().rev() {
                let need = want_input || (bi, li) != first_layer;
                match layer.backward(store, cache, &g, &mut grads, want_params, need)? {
                    Some(dx) => g = dx,
                    None => return Ok((grads, None)),
                }
            }
        }
        Ok((grads, Some(g)))
    }

    /// Forward pass whose trace is kept inside the network for a later
    /// [`Network::backward_cached`].
    pub fn forward_cached(&mut self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let (y, t) = self.forward(store, x)?;
        self.cached = Some(t);
        Ok(y)
    }

    pub fn backward_cached(
        &self,
        store: &ParamStore,
        upstream: &Tensor,
    ) -> Result<(GradientMap, Tensor)> {
        let t = self.cached.as_ref().ok_or_else(|| {
            Error::Usage(format!("{}: backward called without a cached forward pass", self.name))
        })?;
        self.backward(store, t, upstream)
    }

    pub fn clear_cache(&mut self) {
        self.cached = None;
    }

    /// Copies BatchNorm running statistics from a structurally identical network.
    pub fn copy_running_stats(&mut self, other: &Network) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (la, lb) in a.layers.iter_mut().zip(&b.layers) {
                if let (Layer::BatchNorm(x), Layer::BatchNorm(y)) = (la, lb) {
                    x.running_mean.clone_from(&y.running_mean);
                    x.running_var.clone_from(&y.running_var);
                }
            }
        }
    }

    /// Named non-parameter state (BatchNorm running statistics) for checkpoints.
    pub fn running_stats(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (bi, b) in self.blocks.iter().enumerate() {
            for (li, l) in b.layers.iter().enumerate() {
                if let Layer::BatchNorm(bn) = l {
                    let base = format!("{}.b{}.{}", self.name, bi + 1, li);
                    out.push((format!("{base}.running_mean"), Tensor::from_fn([bn.channels], |i| bn.running_mean[i])));
                    out.push((format!("{base}.running_var"), Tensor::from_fn([bn.channels], |i| bn.running_var[i])));
                }
            }
        }
        out
    }

    pub fn set_running_stat(&mut self, name: &str, value: &Tensor) -> Result<bool> {
        for (bi, b) in self.blocks.iter_mut().enumerate() {
            for (li, l) in b.layers.iter_mut().enumerate() {
                if let Layer::BatchNorm(bn) = l {
                    let base = format!("{}.b{}.{}", self.name, bi + 1, li);
                    let target = if name == format!("{base}.running_mean") {
                        &mut bn.running_mean
                    } else if name == format!("{base}.running_var") {
                        &mut bn.running_var
                    } else {
                        continue;
                    };
                    if value.len() != target.len() {
                        return Err(Error::shape("set_running_stat", format!("{name}: {:?}", value.shape())));
                    }
                    target.copy_from_slice(value.data());
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }
}

/// Builds a [`Network`] block by block, registering parameters in a shared
/// store and validating the shape chain as it goes.
pub struct NetBuilder<'a> {
    name: String,
    store: &'a mut ParamStore,
    rng: &'a mut Rng64,
    input_shape: Vec<usize>,
    shape: Vec<usize>,
    blocks: Vec<Block>,
    alias_queue: Vec<usize>,
}

impl<'a> NetBuilder<'a> {
    pub fn new(
        name: impl Into<String>,
        input_shape: impl Into<Vec<usize>>,
        store: &'a mut ParamStore,
        rng: &'a mut Rng64,
    ) -> Self {
        let input_shape = input_shape.into();
        NetBuilder {
            name: name.into(),
            store,
            rng,
            shape: input_shape.clone(),
            input_shape,
            blocks: Vec::new(),
            alias_queue: Vec::new(),
        }
    }

    pub fn current_shape(&self) -> &[usize] {
        &self.shape
    }

    /// Appends a block of freshly initialized layers.
    pub fn block(&mut self, specs: &[LayerSpec]) -> Result<&mut Self> {
        self.push_block(specs, None)
    }

    /// Appends a block whose parameters alias the slots of `shared`, which
    /// must have been built from the same specs at the same input shape.
    pub fn shared_block(&mut self, specs: &[LayerSpec], shared: &Block) -> Result<&mut Self> {
        self.push_block(specs, Some(shared))
    }

    fn push_block(&mut self, specs: &[LayerSpec], shared: Option<&Block>) -> Result<&mut Self> {
        let bi = self.blocks.len() + 1;
        let label = specs
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        if let Some(sb) = shared {
            if sb.label != label || sb.layers.len() != specs.len() {
                return Err(Error::Config(format!(
                    "{} block {bi}: cannot share with structurally different block `{}`",
                    self.name, sb.label
                )));
            }
        }
        let mut layers = Vec::with_capacity(specs.len());
        for (li, spec) in specs.iter().enumerate() {
            let prefix = format!("{}.b{bi}.{li}", self.name);
            self.alias_queue = shared
                .map(|b| b.layers[li].params().iter().map(|p| p.slot).collect())
                .unwrap_or_default();
            let layer = self.make_layer(spec, &prefix)?;
            self.shape = layer.output_shape(&self.shape).map_err(|e| {
                Error::Config(format!("{} block {bi} ({label}): {e}", self.name))
            })?;
            layers.push(layer);
        }
        self.blocks.push(Block { label, layers });
        Ok(self)
    }

    /// Registers a parameter, or aliases the next queued partner slot when
    /// building a shared block (no random draws are consumed then).
    fn param(
        &mut self,
        prefix: &str,
        name: &str,
        shape: &[usize],
        init: impl FnOnce(&mut Rng64) -> Tensor,
    ) -> Result<ParamRef> {
        let id = ParamId::new(format!("{prefix}.{name}"));
        if self.alias_queue.is_empty() {
            let value = init(self.rng);
            return self.store.register(id, value);
        }
        let slot = self.alias_queue.remove(0);
        if self.store.slot(slot).shape() != shape {
            return Err(Error::Config(format!(
                "tied parameter {id} has shape {shape:?}, partner has {:?}",
                self.store.slot(slot).shape()
            )));
        }
        self.store.alias(id, slot)
    }

    fn make_layer(&mut self, spec: &LayerSpec, prefix: &str) -> Result<Layer> {
        let shape = self.shape.clone();
        let channels = || -> Result<usize> {
            shape.first().copied().ok_or_else(|| {
                Error::Config(format!("{prefix}: {spec} applied to a scalar"))
            })
        };
        Ok(match *spec {
            LayerSpec::Conv { out, k, stride, pad } | LayerSpec::TransposedConv { out, k, stride, pad } => {
                let in_ch = channels()?;
                let transposed = matches!(spec, LayerSpec::TransposedConv { .. });
                let wshape = if transposed { [in_ch, out, k, k] } else { [out, in_ch, k, k] };
                let weight = self.param(prefix, "weight", &wshape, |r| Tensor::randn(wshape, INIT_STD, r))?;
                let bias = self.param(prefix, "bias", &[out], |_| Tensor::zeros([out]))?;
                let c = ConvLayer { in_ch, out_ch: out, k, stride, pad, weight, bias };
                if transposed {
                    Layer::TransposedConv(c)
                } else {
                    Layer::Conv(c)
                }
            }
            LayerSpec::Dense { out } => {
                let inf: usize = self.shape.iter().product();
                let weight = self.param(prefix, "weight", &[out, inf], |r| Tensor::randn([out, inf], INIT_STD, r))?;
                let bias = self.param(prefix, "bias", &[out], |_| Tensor::zeros([out]))?;
                Layer::Dense(DenseLayer { in_features: inf, out_features: out, weight, bias })
            }
            LayerSpec::BatchNorm => {
                let c = channels()?;
                let gamma = self.param(prefix, "gamma", &[c], |_| Tensor::full([c], 1.0))?;
                let beta = self.param(prefix, "beta", &[c], |_| Tensor::zeros([c]))?;
                Layer::BatchNorm(BatchNormLayer {
                    channels: c,
                    gamma,
                    beta,
                    running_mean: vec![0.0; c],
                    running_var: vec![1.0; c],
                })
            }
            LayerSpec::PRelu => {
                let c = channels()?;
                let slope = self.param(prefix, "slope", &[c], |_| Tensor::full([c], PRELU_INIT))?;
                Layer::PRelu(PReluLayer { channels: c, slope })
            }
            LayerSpec::MaxPool { window } => Layer::MaxPool { window },
            LayerSpec::Sigmoid => Layer::Sigmoid,
            LayerSpec::Tanh => Layer::Tanh,
            LayerSpec::Softmax => Layer::Softmax,
            LayerSpec::Reshape(ref s) => Layer::Reshape(s.clone()),
        })
    }

    pub fn build(self) -> Network {
        Network {
            name: self.name,
            input_shape: self.input_shape,
            blocks: self.blocks,
            mode: Mode::Train,
            cached: None,
        }
    }
}
