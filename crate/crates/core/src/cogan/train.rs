//! Minibatch training loop over two unpaired image sets.

use rand::Rng;

use crate::cogan::{cogan_train_step, CoGan};
use crate::datasets::Marginals;
use crate::error::{Error, Result};
use crate::gan::sample_z;
use crate::rng::{stream, Rng64, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch: usize,
    /// Record the step value every this many iterations.
    pub log_every: u64,
    /// Call the checkpoint hook every this many iterations (0 = never).
    pub checkpoint_every: u64,
}

/// Data and noise streams of one run.
#[derive(Debug, Clone)]
pub struct RunRngs {
    pub data: Rng64,
    pub noise: Rng64,
}

impl RunRngs {
    pub fn new(seed: u64) -> Self {
        RunRngs { data: stream(seed, Stream::Data), noise: stream(seed, Stream::Noise) }
    }
}

/// `n` rows drawn uniformly with replacement.
pub fn sample_batch(images: &Tensor, n: usize, rng: &mut Rng64) -> Result<Tensor> {
    let total = images.batch();
    if total == 0 {
        return Err(Error::Config("cannot sample from an empty image set".into()));
    }
    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..total)).collect();
    Ok(images.select(&rows))
}

/// Runs `cfg.iterations` coupled steps. Returns `(iteration, value)` rows at
/// the logging interval; `on_checkpoint` sees the model after every
/// checkpoint interval and after the last step.
pub fn train(
    model: &mut CoGan,
    data: Marginals<'_>,
    cfg: &TrainConfig,
    rngs: &mut RunRngs,
    mut on_checkpoint: impl FnMut(&CoGan) -> Result<()>,
) -> Result<Vec<(u64, f64)>> {
    let mut log = Vec::new();
    for i in 1..=cfg.iterations {
        let x1 = sample_batch(data.x1, cfg.batch, &mut rngs.data)?;
        let x2 = sample_batch(data.x2, cfg.batch, &mut rngs.data)?;
        let z = sample_z(model.noise, cfg.batch, &mut rngs.noise);
        let step = cogan_train_step(model, &x1, &x2, &z)?;
        if !step.value.is_finite() {
            return Err(Error::Numeric(format!("value diverged at iteration {}", model.iteration)));
        }
        let it = model.iteration;
        if cfg.log_every > 0 && it % cfg.log_every == 0 {
            log.push((it, step.value));
        }
        if (cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0) || i == cfg.iterations {
            on_checkpoint(model)?;
        }
    }
    Ok(log)
}
