//! Conditional GAN baseline: one generator taking `(z, c)` with a domain bit
//! `c`, one discriminator with a three-way softmax over
//! {synthesized, real domain 1, real domain 2}.
//!
//! The discriminator minimizes the summed mean cross-entropies of the three
//! groups; the generator minimizes the cross-entropy of its outputs toward
//! the real class of the requested domain.

use crate::cogan::train::{sample_batch, RunRngs, TrainConfig};
use crate::cogan::{ArchPreset, PresetName};
use crate::datasets::{DomainPair, Transform};
use crate::error::{Error, Result};
use crate::evaluation::{mean_agreement, AgreementRecord};
use crate::gan::{sample_z, NoiseSpec, CLAMP};
use crate::nn::{GradientMap, NetBuilder, Network, ParamStore};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{stream, Rng64, Stream};
use crate::tensor::Tensor;

pub const FAKE: usize = 0;

#[derive(Debug, Clone)]
pub struct ConditionalGan {
    pub store: ParamStore,
    pub g: Network,
    pub f: Network,
    pub noise: NoiseSpec,
    pub opt_f: Adam,
    pub opt_g: Adam,
    pub iteration: u64,
}

pub fn build_conditional(preset: &ArchPreset, adam: AdamConfig, rng: &mut Rng64) -> Result<ConditionalGan> {
    if preset.name != PresetName::ConditionalDigit {
        return Err(Error::Config(format!("conditional baseline needs the conditional-digit preset, got {}", preset.name)));
    }
    let mut store = ParamStore::new();
    let mut b = NetBuilder::new("g", vec![preset.generator_input()], &mut store, rng);
    for specs in &preset.generator {
        b.block(specs)?;
    }
    let g = b.build();
    let mut b = NetBuilder::new("f", preset.image_shape.to_vec(), &mut store, rng);
    for specs in &preset.discriminator {
        b.block(specs)?;
    }
    let f = b.build();
    Ok(ConditionalGan {
        store,
        g,
        f,
        noise: NoiseSpec::new(preset.z_dim)?,
        opt_f: Adam::new(adam),
        opt_g: Adam::new(adam),
        iteration: 0,
    })
}

/// `[z | c]` with the domain bit in the last column.
pub fn with_condition(z: &Tensor, c: f64) -> Result<Tensor> {
    let n = z.batch();
    let d = z.item_len();
    let mut data = Vec::with_capacity(n * (d + 1));
    for i in 0..n {
        data.extend_from_slice(z.item(i));
        data.push(c);
    }
    Tensor::new([n, d + 1], data)
}

/// Mean of `-log p[class]` over rows and its gradient with respect to `p`.
pub fn cross_entropy(probs: &Tensor, class: usize) -> (f64, Tensor) {
    let k = probs.item_len();
    let n = probs.batch() as f64;
    let mut grad = Tensor::zeros(probs.shape());
    let mut loss = 0.0;
    for (row, g) in probs.data().chunks(k).zip(grad.data_mut().chunks_mut(k)) {
        let p = row[class];
        let c = p.clamp(CLAMP, 1.0 - CLAMP);
        loss -= c.ln();
        if c == p {
            g[class] = -1.0 / (n * c);
        }
    }
    (loss / n, grad)
}

fn disc_term(m: &mut ConditionalGan, x: &Tensor, class: usize) -> Result<(f64, GradientMap)> {
    let (p, t) = m.f.forward(&m.store, x)?;
    let (loss, d) = cross_entropy(&p, class);
    Ok((loss, m.f.backward_params(&m.store, &t, &d)?))
}

/// One alternating step on real batches from both domains and shared noise
/// rendered for both values of the domain bit. Returns the discriminator loss.
pub fn conditional_train_step(m: &mut ConditionalGan, x1: &Tensor, x2: &Tensor, z: &Tensor) -> Result<f64> {
    if x1.batch() != z.batch() || x2.batch() != z.batch() {
        return Err(Error::Config("conditional step needs equal batch sizes".into()));
    }
    let inputs = [with_condition(z, 0.0)?, with_condition(z, 1.0)?];
    let mut fakes = Vec::with_capacity(2);
    for inp in &inputs {
        fakes.push(m.g.forward(&m.store, inp)?);
    }

    let mut grads = GradientMap::new();
    let mut loss = 0.0;
    // fakes of both domains form one group
    let both = Tensor::concat(&[&fakes[0].0, &fakes[1].0])?;
    for (x, class) in [(x1, 1), (x2, 2), (&both, FAKE)] {
        let (l, g) = disc_term(m, x, class)?;
        loss += l;
        accumulate(&mut grads, g)?;
    }
    m.opt_f.step_map(&mut m.store, &grads)?;

    let mut ggrads = GradientMap::new();
    for (c, (fake, trace)) in fakes.iter().enumerate() {
        let (p, t) = m.f.forward_pure(&m.store, fake)?;
        let (_, d) = cross_entropy(&p, c + 1);
        let dfake = m.f.backward_input(&m.store, &t, &d)?;
        accumulate(&mut ggrads, m.g.backward_params(&m.store, trace, &dfake)?)?;
    }
    m.opt_g.step_map(&mut m.store, &ggrads)?;
    m.iteration += 1;
    Ok(loss)
}

fn accumulate(into: &mut GradientMap, from: GradientMap) -> Result<()> {
    for (id, g) in from {
        into.accumulate(&id, g)?;
    }
    Ok(())
}

/// Outputs for `c = 0` and `c = 1` on the same noise, inference mode.
pub fn generate_conditional_pair(m: &ConditionalGan, z: &Tensor) -> Result<(Tensor, Tensor)> {
    let (a, _) = m.g.infer(&m.store, &with_condition(z, 0.0)?)?;
    let (b, _) = m.g.infer(&m.store, &with_condition(z, 1.0)?)?;
    Ok((a, b))
}

pub fn conditional_agreement(m: &ConditionalGan, truth: Transform, n_pairs: usize, rng: &mut Rng64) -> Result<f64> {
    mean_agreement(n_pairs, truth, |n| {
        let z = sample_z(m.noise, n, rng);
        generate_conditional_pair(m, &z)
    })
}

/// Trains the conditional baseline once per seed and reports the best
/// checkpoint of each run (`k` and `l` are recorded as 0).
pub fn conditional_baseline_run(
    task: &str,
    preset: &ArchPreset,
    pair: &DomainPair,
    train: &TrainConfig,
    adam: AdamConfig,
    seeds: &[u64],
    n_pairs: usize,
) -> Result<Vec<AgreementRecord>> {
    let data = pair.marginals();
    let mut out = Vec::new();
    for &seed in seeds {
        let mut m = build_conditional(preset, adam, &mut stream(seed, Stream::Init))?;
        let mut rngs = RunRngs::new(seed);
        let mut best: Option<(u64, f64)> = None;
        for i in 1..=train.iterations {
            let x1 = sample_batch(data.x1, train.batch, &mut rngs.data)?;
            let x2 = sample_batch(data.x2, train.batch, &mut rngs.data)?;
            let z = sample_z(m.noise, train.batch, &mut rngs.noise);
            let loss = conditional_train_step(&mut m, &x1, &x2, &z)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("conditional loss diverged at iteration {i}")));
            }
            if (train.checkpoint_every > 0 && i % train.checkpoint_every == 0) || i == train.iterations {
                let r = conditional_agreement(&m, pair.truth(), n_pairs, &mut stream(seed, Stream::Eval))?;
                if best.is_none_or(|(_, b)| r > b) {
                    best = Some((i, r));
                }
            }
        }
        let (iteration, ratio) = best.ok_or_else(|| Error::Config("training ran zero iterations".into()))?;
        out.push(AgreementRecord { task: task.to_string(), k: 0, l: 0, seed, iteration, n_pairs, ratio });
    }
    Ok(out)
}
