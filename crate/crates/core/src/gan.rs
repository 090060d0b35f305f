//! A single generator/discriminator pair and its alternating update.
//!
//! The discriminator `f` maps an image to the probability that it is real;
//! the generator `g` maps uniform noise to images. The value function is
//! `V = mean[-log f(x)] + mean[-log(1 - f(g(z)))]`, minimized by `f` and
//! maximized by `g`.

use crate::error::{Error, Result};
use crate::nn::{GradientMap, Network, ParamStore, Trace};
use crate::optim::Adam;
use crate::rng::{uniform_sym, Rng64};
use crate::tensor::Tensor;

/// Probabilities entering a logarithm are clamped to `[CLAMP, 1 - CLAMP]`.
pub const CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSpec {
    pub dim: usize,
}

impl NoiseSpec {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("noise dimension must be positive".into()));
        }
        Ok(NoiseSpec { dim })
    }
}

/// `n` draws from the uniform distribution on `[-1, 1]^d`.
pub fn sample_z(spec: NoiseSpec, n: usize, rng: &mut Rng64) -> Tensor {
    Tensor::from_fn([n, spec.dim], |_| uniform_sym(rng))
}

/// Generator objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GenLoss {
    /// Ascend `mean[-log(1 - f(g(z)))]`.
    #[default]
    Minimax,
    /// Descend `mean[-log f(g(z))]`.
    NonSaturating,
}

impl GenLoss {
    pub fn as_str(self) -> &'static str {
        match self {
            GenLoss::Minimax => "minimax",
            GenLoss::NonSaturating => "nonsaturating",
        }
    }
}

impl std::str::FromStr for GenLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimax" => Ok(GenLoss::Minimax),
            "nonsaturating" => Ok(GenLoss::NonSaturating),
            _ => Err(Error::Config(format!("unknown generator loss `{s}` (expected minimax or nonsaturating)"))),
        }
    }
}

fn clamp(p: f64) -> (f64, bool) {
    let c = p.clamp(CLAMP, 1.0 - CLAMP);
    (c, c == p)
}

fn probabilities(out: &Tensor, what: &str) -> Result<()> {
    if out.rank() != 2 || out.shape()[1] != 1 || out.is_empty() {
        return Err(Error::shape(
            "gan_value",
            format!("{what}: expected discriminator output [N, 1], got {:?}", out.shape()),
        ));
    }
    Ok(())
}

/// `mean[-log p]` over real outputs plus `mean[-log(1-p)]` over fake outputs.
pub fn value_from_outputs(real: &Tensor, fake: &Tensor) -> Result<f64> {
    probabilities(real, "real")?;
    probabilities(fake, "fake")?;
    let r: f64 = real.data().iter().map(|&p| -clamp(p).0.ln()).sum::<f64>() / real.len() as f64;
    let f: f64 = fake.data().iter().map(|&p| -(1.0 - clamp(p).0).ln()).sum::<f64>() / fake.len() as f64;
    Ok(r + f)
}

/// Gradients of the value with respect to the real and fake outputs.
/// Clamped entries get zero gradient.
pub fn value_grads(real: &Tensor, fake: &Tensor) -> (Tensor, Tensor) {
    let nr = real.len() as f64;
    let nf = fake.len() as f64;
    let dr = real.map(|p| match clamp(p) {
        (c, true) => -1.0 / (nr * c),
        _ => 0.0,
    });
    let df = fake.map(|p| match clamp(p) {
        (c, true) => 1.0 / (nf * (1.0 - c)),
        _ => 0.0,
    });
    (dr, df)
}

/// Generator loss (to be descended) and its gradient with respect to `f(g(z))`.
pub fn generator_loss(fake: &Tensor, loss: GenLoss) -> (f64, Tensor) {
    let n = fake.len() as f64;
    match loss {
        GenLoss::Minimax => {
            let v = fake.data().iter().map(|&p| (1.0 - clamp(p).0).ln()).sum::<f64>() / n;
            let d = fake.map(|p| match clamp(p) {
                (c, true) => -1.0 / (n * (1.0 - c)),
                _ => 0.0,
            });
            (v, d)
        }
        GenLoss::NonSaturating => {
            let v = fake.data().iter().map(|&p| -clamp(p).0.ln()).sum::<f64>() / n;
            let d = fake.map(|p| match clamp(p) {
                (c, true) => -1.0 / (n * c),
                _ => 0.0,
            });
            (v, d)
        }
    }
}

/// Discriminator gradients and the value on one real and one fake batch.
pub(crate) fn discriminator_grads(
    store: &ParamStore,
    f: &mut Network,
    x: &Tensor,
    fake: &Tensor,
) -> Result<(GradientMap, f64)> {
    let (real_out, real_trace) = f.forward(store, x)?;
    let (fake_out, fake_trace) = f.forward(store, fake)?;
    let value = value_from_outputs(&real_out, &fake_out)?;
    let (dr, df) = value_grads(&real_out, &fake_out);
    let mut grads = f.backward_params(store, &real_trace, &dr)?;
    grads.merge(f.backward_params(store, &fake_trace, &df)?)?;
    Ok((grads, value))
}

/// Generator gradients through the (already updated) discriminator, reusing
/// the generator's forward trace.
pub(crate) fn generator_grads(
    store: &ParamStore,
    f: &Network,
    g: &Network,
    g_trace: &Trace,
    fake: &Tensor,
    loss: GenLoss,
) -> Result<GradientMap> {
    let (out, trace) = f.forward_pure(store, fake)?;
    probabilities(&out, "fake")?;
    let (_, dout) = generator_loss(&out, loss);
    let dfake = f.backward_input(store, &trace, &dout)?;
    g.backward_params(store, g_trace, &dfake)
}

#[derive(Debug, Clone)]
pub struct Gan {
    pub store: ParamStore,
    pub g: Network,
    pub f: Network,
    pub noise: NoiseSpec,
    /// Incremented on every discriminator update.
    pub f_version: u64,
    pub g_version: u64,
}

/// One entry of a step's ordering log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    DiscriminatorGradient { f_version: u64 },
    DiscriminatorUpdate { f_version: u64 },
    GeneratorGradient { f_version: u64 },
    GeneratorUpdate { g_version: u64 },
}

#[derive(Debug, Clone)]
pub struct StepLog {
    /// Value on this step's batches before any update.
    pub value: f64,
    pub events: Vec<StepEvent>,
}

impl Gan {
    pub fn new(store: ParamStore, g: Network, f: Network, noise: NoiseSpec) -> Self {
        Gan { store, g, f, noise, f_version: 0, g_version: 0 }
    }

    pub fn value(&self, x: &Tensor, z: &Tensor) -> Result<f64> {
        gan_value(&self.store, &self.f, &self.g, x, z)
    }
}

/// Value of the game on the given batches. Networks run in their current
/// mode without touching running statistics.
pub fn gan_value(store: &ParamStore, f: &Network, g: &Network, x: &Tensor, z: &Tensor) -> Result<f64> {
    if x.batch() == 0 || z.batch() == 0 {
        return Err(Error::Config("gan_value needs non-empty batches".into()));
    }
    let (fake, _) = g.forward_pure(store, z)?;
    let (real_out, _) = f.forward_pure(store, x)?;
    let (fake_out, _) = f.forward_pure(store, &fake)?;
    value_from_outputs(&real_out, &fake_out)
}

/// Step 1: descend the value in the discriminator. Step 2: ascend it in the
/// generator against the updated discriminator.
pub fn gan_train_step(
    gan: &mut Gan,
    x: &Tensor,
    z: &Tensor,
    opt_f: &mut Adam,
    opt_g: &mut Adam,
    loss: GenLoss,
) -> Result<StepLog> {
    let mut events = Vec::with_capacity(4);
    let (fake, g_trace) = gan.g.forward(&gan.store, z)?;
    let (dgrads, value) = discriminator_grads(&gan.store, &mut gan.f, x, &fake)?;
    events.push(StepEvent::DiscriminatorGradient { f_version: gan.f_version });
    opt_f.step_map(&mut gan.store, &dgrads)?;
    gan.f_version += 1;
    events.push(StepEvent::DiscriminatorUpdate { f_version: gan.f_version });

    let ggrads = generator_grads(&gan.store, &gan.f, &gan.g, &g_trace, &fake, loss)?;
    events.push(StepEvent::GeneratorGradient { f_version: gan.f_version });
    opt_g.step_map(&mut gan.store, &ggrads)?;
    gan.g_version += 1;
    events.push(StepEvent::GeneratorUpdate { g_version: gan.g_version });
    Ok(StepLog { value, events })
}
