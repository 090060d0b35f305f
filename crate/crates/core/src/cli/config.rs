//! Run configuration: a flat JSON object whose keys override a profile.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cogan::train::TrainConfig;
use crate::cogan::{ArchPreset, PresetName};
use crate::datasets::{Style, Transform};
use crate::error::{Error, Result};
use crate::gan::GenLoss;
use crate::inversion::InversionConfig;
use crate::optim::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Profile {
    /// Full-width networks, batch 128, 25000 iterations.
    #[default]
    Paper,
    /// Quarter-width generators, batch 64, 3000 iterations.
    Desk,
}

/// Keys accepted in a configuration file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub task: Option<String>,
    pub transform: Option<String>,
    pub preset: Option<String>,
    pub width_divisor: Option<usize>,
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub seed: Option<u64>,
    pub data_seed: Option<u64>,
    pub iterations: Option<u64>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub gen_loss: Option<String>,
    pub log_every: Option<u64>,
    pub checkpoint_every: Option<u64>,
    pub n_pairs: Option<usize>,
    pub data: Option<String>,
    pub images_path: Option<PathBuf>,
    pub labels_path: Option<PathBuf>,
    pub synthetic_n: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub k_values: Option<Vec<usize>>,
    pub l_values: Option<Vec<usize>>,
    pub seeds: Option<Vec<u64>>,
    pub include_conditional: Option<bool>,
    pub trials: Option<usize>,
    pub source_n: Option<usize>,
    pub target_n: Option<usize>,
    pub class_weight: Option<f64>,
    pub transform_inputs: Option<usize>,
    pub restarts: Option<usize>,
    pub max_iter: Option<usize>,
    pub project: Option<bool>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Where training images come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic { n: usize },
    Idx { images: PathBuf, labels: Option<PathBuf> },
}

/// Fully resolved settings of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub profile: Profile,
    pub task: String,
    pub transform: Transform,
    pub preset: ArchPreset,
    pub k: usize,
    pub l: usize,
    pub seed: u64,
    pub data_seed: u64,
    pub train: TrainConfig,
    pub adam: AdamConfig,
    pub gen_loss: GenLoss,
    pub n_pairs: usize,
    pub data: DataSource,
    pub checkpoint: Option<PathBuf>,
    pub k_values: Vec<usize>,
    pub l_values: Vec<usize>,
    pub seeds: Vec<u64>,
    pub include_conditional: bool,
    pub trials: usize,
    pub source_n: usize,
    pub target_n: usize,
    pub target_style: Style,
    pub class_weight: f64,
    pub transform_inputs: usize,
    pub inversion: InversionConfig,
}

fn field<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Config(format!("field `{name}`: {e}")))
}

fn positive<T: PartialOrd + Default + Copy + std::fmt::Display>(name: &str, v: T) -> Result<T> {
    if v > T::default() {
        Ok(v)
    } else {
        Err(Error::Config(format!("field `{name}` must be positive, got {v}")))
    }
}

fn task_label(t: Transform) -> &'static str {
    match t {
        Transform::Edge => "A",
        Transform::Negative => "B",
        Transform::Rotate90 => "rotation",
        Transform::Identity => "identity",
    }
}

impl Resolved {
    /// Profile defaults, then file values, then `seed_override`.
    pub fn new(profile: Profile, file: &ConfigFile, seed_override: Option<u64>) -> Result<Self> {
        let (batch, iterations, divisor, n_pairs, synthetic_n) = match profile {
            Profile::Paper => (128, 25_000, 1, 10_000, 60_000),
            Profile::Desk => (64, 3_000, 4, 1_000, 10_000),
        };
        let transform: Transform = field("transform", file.transform.as_deref().unwrap_or("negative").parse())?;
        let name: PresetName = field("preset", file.preset.as_deref().unwrap_or("digit-conv").parse())?;
        let preset = field("width_divisor", ArchPreset::new(name, file.width_divisor.unwrap_or(divisor)))?;
        let k = file.k.unwrap_or(preset.default_k);
        let l = file.l.unwrap_or(preset.default_l);
        if name != PresetName::ConditionalDigit {
            field("k/l", preset.check_sharing(k, l))?;
        }
        let seed = seed_override.or(file.seed).unwrap_or(0);
        let train = TrainConfig {
            iterations: positive("iterations", file.iterations.unwrap_or(iterations))?,
            batch: positive("batch", file.batch.unwrap_or(batch))?,
            log_every: file.log_every.unwrap_or(100),
            checkpoint_every: file.checkpoint_every.unwrap_or(500),
        };
        let adam = AdamConfig {
            lr: file.lr.unwrap_or(AdamConfig::GAN.lr),
            beta1: file.beta1.unwrap_or(AdamConfig::GAN.beta1),
            beta2: file.beta2.unwrap_or(AdamConfig::GAN.beta2),
            ..AdamConfig::GAN
        };
        if !(adam.lr >= 0.0 && adam.lr.is_finite()) {
            return Err(Error::Config(format!("field `lr` must be finite and non-negative, got {}", adam.lr)));
        }
        for (n, b) in [("beta1", adam.beta1), ("beta2", adam.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("field `{n}` must lie in [0, 1), got {b}")));
            }
        }
        let gen_loss = field("gen_loss", file.gen_loss.as_deref().unwrap_or("minimax").parse())?;
        let data = match file.data.as_deref().unwrap_or("synthetic") {
            "synthetic" => DataSource::Synthetic { n: positive("synthetic_n", file.synthetic_n.unwrap_or(synthetic_n))? },
            "idx" => DataSource::Idx {
                images: file
                    .images_path
                    .clone()
                    .ok_or_else(|| Error::Config("field `images_path` is required when `data` is idx".into()))?,
                labels: file.labels_path.clone(),
            },
            other => return Err(Error::Config(format!("field `data`: expected synthetic or idx, got `{other}`"))),
        };
        let seeds = file.seeds.clone().unwrap_or_else(|| (0..3).map(|i| seed + i).collect());
        if seeds.is_empty() {
            return Err(Error::Config("field `seeds` must not be empty".into()));
        }
        let inversion = InversionConfig {
            restarts: positive("restarts", file.restarts.unwrap_or(5))?,
            max_iter: file.max_iter.unwrap_or(200),
            project: file.project.unwrap_or(true),
            ..InversionConfig::default()
        };
        Ok(Resolved {
            profile,
            task: file.task.clone().unwrap_or_else(|| task_label(transform).to_string()),
            transform,
            k_values: file.k_values.clone().unwrap_or_else(|| (1..=preset.max_k()).collect()),
            l_values: file.l_values.clone().unwrap_or_else(|| (0..preset.max_l()).collect()),
            preset,
            k,
            l,
            seed,
            data_seed: file.data_seed.unwrap_or(0),
            train,
            adam,
            gen_loss,
            n_pairs: positive("n_pairs", file.n_pairs.unwrap_or(n_pairs))?,
            data,
            checkpoint: file.checkpoint.clone(),
            seeds,
            include_conditional: file.include_conditional.unwrap_or(false),
            trials: positive("trials", file.trials.unwrap_or(5))?,
            source_n: positive("source_n", file.source_n.unwrap_or(2000))?,
            target_n: positive("target_n", file.target_n.unwrap_or(1800))?,
            target_style: Style::Compact,
            class_weight: file.class_weight.unwrap_or(1.0),
            transform_inputs: positive("transform_inputs", file.transform_inputs.unwrap_or(8))?,
            inversion,
        })
    }

    /// `key = value` lines of every resolved setting, for the run sidecar.
    pub fn describe(&self) -> Vec<(String, String)> {
        let mut v: Vec<(&str, String)> = vec![
            ("profile", format!("{:?}", self.profile).to_lowercase()),
            ("task", self.task.clone()),
            ("transform", self.transform.to_string()),
            ("preset", self.preset.name.to_string()),
            ("width_divisor", self.preset.width_divisor.to_string()),
            ("k", self.k.to_string()),
            ("l", self.l.to_string()),
            ("seed", self.seed.to_string()),
            ("data_seed", self.data_seed.to_string()),
            ("iterations", self.train.iterations.to_string()),
            ("batch", self.train.batch.to_string()),
            ("log_every", self.train.log_every.to_string()),
            ("checkpoint_every", self.train.checkpoint_every.to_string()),
            ("lr", self.adam.lr.to_string()),
            ("beta1", self.adam.beta1.to_string()),
            ("beta2", self.adam.beta2.to_string()),
            ("eps", self.adam.eps.to_string()),
            ("gen_loss", self.gen_loss.as_str().to_string()),
            ("n_pairs", self.n_pairs.to_string()),
        ];
        match &self.data {
            DataSource::Synthetic { n } => {
                v.push(("data", "synthetic".into()));
                v.push(("synthetic_n", n.to_string()));
            }
            DataSource::Idx { images, labels } => {
                v.push(("data", "idx".into()));
                v.push(("images_path", images.display().to_string()));
                if let Some(l) = labels {
                    v.push(("labels_path", l.display().to_string()));
                }
            }
        }
        v.into_iter().map(|(k, s)| (k.to_string(), s)).collect()
    }
}
