//! Grid over the number of shared generator (`k`) and discriminator (`l`)
//! blocks, several seeds per cell, best checkpoint per trial.

use crate::cogan::train::{train, RunRngs, TrainConfig};
use crate::cogan::{build_cogan, ArchPreset, CoGan};
use crate::datasets::DomainPair;
use crate::error::{Error, Result};
use crate::evaluation::{pixel_agreement, AgreementRecord};
use crate::gan::GenLoss;
use crate::optim::AdamConfig;
use crate::rng::{stream, Stream};

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub task: String,
    pub preset: ArchPreset,
    pub k_values: Vec<usize>,
    pub l_values: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Agreement is measured at every `checkpoint_every` iterations and at the end.
    pub train: TrainConfig,
    pub adam: AdamConfig,
    pub gen_loss: GenLoss,
    pub n_pairs: usize,
}

/// Outcome of one training run: the best checkpoint's record, every
/// checkpoint's `(iteration, ratio)`, the value log and the final model.
#[derive(Debug, Clone)]
pub struct Trial {
    pub best: AgreementRecord,
    pub checkpoints: Vec<(u64, f64)>,
    pub values: Vec<(u64, f64)>,
    pub model: CoGan,
}

/// Trains one coupled model and evaluates it at every checkpoint. The
/// evaluation noise is the same at every checkpoint of a run.
pub fn train_and_evaluate(cfg: &SweepConfig, k: usize, l: usize, seed: u64, pair: &DomainPair) -> Result<Trial> {
    let mut model = build_cogan(&cfg.preset, k, l, cfg.adam, &mut stream(seed, Stream::Init))?;
    model.gen_loss = cfg.gen_loss;
    let mut rngs = RunRngs::new(seed);
    let truth = pair.truth();
    let mut checkpoints = Vec::new();
    let values = train(&mut model, pair.marginals(), &cfg.train, &mut rngs, |m| {
        let ratio = pixel_agreement(m, truth, cfg.n_pairs, &mut stream(seed, Stream::Eval))?;
        checkpoints.push((m.iteration, ratio));
        Ok(())
    })?;
    let &(iteration, ratio) = checkpoints
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .ok_or_else(|| Error::Config("training ran zero iterations".into()))?;
    let best = AgreementRecord { task: cfg.task.clone(), k, l, seed, iteration, n_pairs: cfg.n_pairs, ratio };
    Ok(Trial { best, checkpoints, values, model })
}

/// Best-checkpoint record for every `(k, l, seed)`, in grid order.
/// `progress` is called after each trial.
pub fn run_sweep(cfg: &SweepConfig, pair: &DomainPair, mut progress: impl FnMut(&AgreementRecord)) -> Result<Vec<AgreementRecord>> {
    if cfg.k_values.is_empty() || cfg.l_values.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Config("sweep grid and seed list must be non-empty".into()));
    }
    let mut out = Vec::new();
    for &k in &cfg.k_values {
        for &l in &cfg.l_values {
            cfg.preset.check_sharing(k, l)?;
            for &seed in &cfg.seeds {
                let trial = train_and_evaluate(cfg, k, l, seed, pair)?;
                progress(&trial.best);
                out.push(trial.best);
            }
        }
    }
    Ok(out)
}
