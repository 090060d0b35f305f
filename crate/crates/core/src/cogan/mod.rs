//! Coupled GANs: two generator/discriminator pairs whose generators share
//! their first `k` blocks and whose discriminators share their last `l`.
//!
//! Tied parameters occupy one storage slot viewed under two ids, so they
//! cannot drift apart. Gradients arriving at the two views are replaced by
//! their mean before the (shared) optimizer update.

pub mod checkpoint;
pub mod preset;
pub mod train;

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use crate::error::{Error, Result};
use crate::gan::{discriminator_grads, gan_value, generator_grads, GenLoss, NoiseSpec};
use crate::nn::{GradientMap, Mode, NetBuilder, Network, ParamId, ParamStore};
use crate::optim::{Adam, AdamConfig};
use crate::rng::Rng64;
use crate::tensor::Tensor;

pub use preset::{ArchPreset, PresetName};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TieGroup {
    pub a: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TieRegistry {
    groups: Vec<TieGroup>,
}

impl TieRegistry {
    /// Pairs the parameters of `blocks` in `n1` with those of the same
    /// blocks in `n2`.
    fn pair_blocks(&mut self, store: &ParamStore, n1: &Network, n2: &Network, blocks: Range<usize>) -> Result<()> {
        for bi in blocks {
            let pa: Vec<_> = n1.blocks()[bi].params().collect();
            let pb: Vec<_> = n2.blocks()[bi].params().collect();
            if pa.len() != pb.len() {
                return Err(Error::Config(format!("block {} of {} and {} differ", bi + 1, n1.name(), n2.name())));
            }
            for (a, b) in pa.into_iter().zip(pb) {
                if store.slot(a.slot).shape() != store.slot(b.slot).shape() {
                    return Err(Error::Config(format!("tied parameters {} and {} differ in shape", a.id, b.id)));
                }
                self.groups.push(TieGroup { a: a.id.clone(), b: b.id.clone() });
            }
        }
        let mut seen = BTreeSet::new();
        for g in &self.groups {
            if !seen.insert(&g.a) || !seen.insert(&g.b) {
                return Err(Error::Config(format!("parameter in more than one tie group: {} / {}", g.a, g.b)));
            }
        }
        Ok(())
    }

    pub fn groups(&self) -> &[TieGroup] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Merges two per-network gradient maps, replacing each tied pair by
    /// `(g_a + g_b) / 2` under both ids. Returns the merged map and the
    /// averaged gradients keyed by the first id of each group.
    pub fn average(&self, g1: GradientMap, g2: GradientMap) -> Result<(GradientMap, GradientMap)> {
        let mut merged = g1;
        merged.merge(g2)?;
        let mut averaged = GradientMap::new();
        for TieGroup { a, b } in &self.groups {
            let (Some(ga), Some(gb)) = (merged.get(a), merged.get(b)) else { continue };
            let mut mean = ga.zip_map(gb, |x, y| x + y)?;
            mean.scale(0.5);
            merged.insert(a.clone(), mean.clone());
            merged.insert(b.clone(), mean.clone());
            averaged.insert(a.clone(), mean);
        }
        Ok((merged, averaged))
    }
}

/// A tie group whose two parameters disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct TieDiscrepancy {
    pub a: String,
    pub b: String,
    pub max_abs_diff: f64,
}

#[derive(Debug, Clone)]
pub struct CoGan {
    pub preset: ArchPreset,
    pub k: usize,
    pub l: usize,
    pub store: ParamStore,
    pub g1: Network,
    pub g2: Network,
    pub f1: Network,
    pub f2: Network,
    pub ties: TieRegistry,
    pub noise: NoiseSpec,
    pub opt_d: Adam,
    pub opt_g: Adam,
    pub gen_loss: GenLoss,
    pub iteration: u64,
    /// Keep the averaged shared gradients of each step in the step log.
    pub log_shared: bool,
}

#[derive(Debug, Clone, Default)]
pub struct CoganStepLog {
    /// Value on this step's batches before the update.
    pub value: f64,
    pub shared_d: Option<GradientMap>,
    pub shared_g: Option<GradientMap>,
}

fn build_net(
    name: &str,
    input: Vec<usize>,
    blocks: &[Vec<crate::nn::LayerSpec>],
    shared: Option<(&Network, Range<usize>)>,
    store: &mut ParamStore,
    rng: &mut Rng64,
) -> Result<Network> {
    let mut b = NetBuilder::new(name, input, store, rng);
    for (bi, specs) in blocks.iter().enumerate() {
        match &shared {
            Some((partner, range)) if range.contains(&bi) => {
                b.shared_block(specs, &partner.blocks()[bi])?;
            }
            _ => {
                b.block(specs)?;
            }
        }
    }
    Ok(b.build())
}

/// Builds the four networks. Tied parameters are initialized once; every
/// other parameter gets its own draw from `rng`.
pub fn build_cogan(preset: &ArchPreset, k: usize, l: usize, adam: AdamConfig, rng: &mut Rng64) -> Result<CoGan> {
    preset.check_sharing(k, l)?;
    let mut store = ParamStore::new();
    let zin = vec![preset.generator_input()];
    let img = preset.image_shape.to_vec();
    let g1 = build_net("g1", zin.clone(), &preset.generator, None, &mut store, rng)?;
    let g2 = build_net("g2", zin, &preset.generator, Some((&g1, 0..k)), &mut store, rng)?;
    if g1.output_shape()? != img {
        return Err(Error::Config(format!(
            "preset {} generator produces {:?}, images are {:?}",
            preset.name,
            g1.output_shape()?,
            img
        )));
    }
    let n = preset.discriminator.len();
    let f1 = build_net("f1", img.clone(), &preset.discriminator, None, &mut store, rng)?;
    let f2 = build_net("f2", img, &preset.discriminator, Some((&f1, n - l..n)), &mut store, rng)?;
    let mut ties = TieRegistry::default();
    ties.pair_blocks(&store, &g1, &g2, 0..k)?;
    ties.pair_blocks(&store, &f1, &f2, n - l..n)?;
    Ok(CoGan {
        preset: preset.clone(),
        k,
        l,
        store,
        g1,
        g2,
        f1,
        f2,
        ties,
        noise: NoiseSpec::new(preset.z_dim)?,
        opt_d: Adam::new(adam),
        opt_g: Adam::new(adam),
        gen_loss: GenLoss::Minimax,
        iteration: 0,
        log_shared: false,
    })
}

impl CoGan {
    /// Number of distinct trainable scalars (tied parameters counted once).
    pub fn param_count(&self) -> usize {
        self.store.scalar_count()
    }

    pub fn networks(&self) -> [&Network; 4] {
        [&self.g1, &self.g2, &self.f1, &self.f2]
    }

    /// Every parameter under every id, tied ones duplicated.
    pub fn snapshot(&self) -> BTreeMap<String, Tensor> {
        self.store
            .ids()
            .map(|(id, slot)| (id.to_string(), self.store.slot(slot).clone()))
            .collect()
    }

    /// Tie groups whose two parameters are not bitwise equal.
    pub fn verify_ties(&self) -> Vec<TieDiscrepancy> {
        verify_ties_in(&self.ties, &self.snapshot())
    }

    /// Sum of the two per-domain values on shared noise.
    pub fn value(&self, x1: &Tensor, x2: &Tensor, z: &Tensor) -> Result<f64> {
        cogan_value(self, x1, x2, z)
    }

    pub fn set_mode(&mut self, mode: Mode) {
        for n in [&mut self.g1, &mut self.g2, &mut self.f1, &mut self.f2] {
            n.set_mode(mode);
        }
    }
}

/// Checks tie groups against a per-id tensor map, e.g. one read back from
/// a checkpoint. Missing tensors are reported with an infinite difference.
pub fn verify_ties_in(ties: &TieRegistry, tensors: &BTreeMap<String, Tensor>) -> Vec<TieDiscrepancy> {
    let mut out = Vec::new();
    for TieGroup { a, b } in ties.groups() {
        let diff = match (tensors.get(a.as_str()), tensors.get(b.as_str())) {
            (Some(x), Some(y)) if x.bit_eq(y) => continue,
            (Some(x), Some(y)) => x.max_abs_diff(y).unwrap_or(f64::INFINITY),
            _ => f64::INFINITY,
        };
        out.push(TieDiscrepancy { a: a.to_string(), b: b.to_string(), max_abs_diff: diff });
    }
    out
}

pub fn cogan_value(model: &CoGan, x1: &Tensor, x2: &Tensor, z: &Tensor) -> Result<f64> {
    let v1 = gan_value(&model.store, &model.f1, &model.g1, x1, z)?;
    let v2 = gan_value(&model.store, &model.f2, &model.g2, x2, z)?;
    Ok(v1 + v2)
}

/// One iteration of the coupled update: discriminator gradients for both
/// domains, tied-gradient averaging, discriminator update, then generator
/// gradients against the updated discriminators, averaging and update.
pub fn cogan_train_step(model: &mut CoGan, x1: &Tensor, x2: &Tensor, z: &Tensor) -> Result<CoganStepLog> {
    let n = z.batch();
    if x1.batch() != n || x2.batch() != n || n == 0 {
        return Err(Error::Config(format!(
            "batch sizes must match and be non-zero: x1 {}, x2 {}, z {}",
            x1.batch(),
            x2.batch(),
            n
        )));
    }
    let store = &model.store;
    let (fake1, t1) = model.g1.forward(store, z)?;
    let (fake2, t2) = model.g2.forward(store, z)?;
    let (d1, v1) = discriminator_grads(store, &mut model.f1, x1, &fake1)?;
    let (d2, v2) = discriminator_grads(store, &mut model.f2, x2, &fake2)?;
    let (dgrads, shared_d) = model.ties.average(d1, d2)?;
    model.opt_d.step_map(&mut model.store, &dgrads)?;

    let store = &model.store;
    let gg1 = generator_grads(store, &model.f1, &model.g1, &t1, &fake1, model.gen_loss)?;
    let gg2 = generator_grads(store, &model.f2, &model.g2, &t2, &fake2, model.gen_loss)?;
    let (ggrads, shared_g) = model.ties.average(gg1, gg2)?;
    model.opt_g.step_map(&mut model.store, &ggrads)?;
    model.iteration += 1;

    let log = model.log_shared;
    Ok(CoganStepLog {
        value: v1 + v2,
        shared_d: log.then_some(shared_d),
        shared_g: log.then_some(shared_g),
    })
}

/// Renders `z` (`[d]` or `[N, d]`) through both generators with BatchNorm
/// running statistics.
pub fn generate_pair(model: &CoGan, z: &Tensor) -> Result<(Tensor, Tensor)> {
    let d = model.preset.generator_input();
    let z = match z.shape() {
        [n] if *n == d => z.clone().reshape([1, d])?,
        [_, n] if *n == d => z.clone(),
        s => return Err(Error::shape("generate_pair", format!("noise {s:?}, generator expects [N, {d}]"))),
    };
    let (a, _) = model.g1.infer(&model.store, &z)?;
    let (b, _) = model.g2.infer(&model.store, &z)?;
    Ok((a, b))
}
