//! Command implementations behind the `cogan` binary. Every command writes
//! into its output directory and draws all randomness from the configured
//! seeds.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::adaptation::{attach_classifier, evaluate_accuracy, source_only_train, uda_train, LabeledImages, UdaTask, UnlabeledImages};
use crate::cogan::checkpoint::{expect_preset, load_model, save_model, Sidecar};
use crate::cogan::train::{train, RunRngs};
use crate::cogan::{build_cogan, generate_pair, CoGan, PresetName};
use crate::datasets::{load_idx, make_domain_pair, make_styled_corpus, DomainPair, ImageCorpus, Style};
use crate::error::{Error, Result};
use crate::evaluation::conditional::{build_conditional, conditional_baseline_run};
use crate::evaluation::sweep::{run_sweep, SweepConfig};
use crate::evaluation::{mean_std, pair_ratios, pixel_agreement, records_csv, AgreementRecord};
use crate::gan::sample_z;
use crate::imageio::{cells, emit_grid};
use crate::inversion::cross_domain_transform;
use crate::rng::{stream, Stream};
use crate::tensor::Tensor;

pub use config::{ConfigFile, DataSource, Profile, Resolved};

/// Process exit status for an error: 2 configuration, 3 I/O or malformed
/// input, 4 numeric failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Shape { .. } | Error::Usage(_) => 2,
        Error::Io { .. } | Error::Parse { .. } => 3,
        Error::Numeric(_) => 4,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

/// Training corpus for the configured data source. Synthetic corpora are
/// drawn from the data seed.
pub fn load_corpus(r: &Resolved) -> Result<ImageCorpus> {
    match &r.data {
        DataSource::Synthetic { n } => make_styled_corpus(*n, 28, Style::Centered, &mut stream(r.data_seed, Stream::Aux)),
        DataSource::Idx { images, labels } => load_idx(images, labels.as_deref()),
    }
}

/// Disjoint halves with the task transform applied to the second.
pub fn domain_pair(r: &Resolved) -> Result<DomainPair> {
    let corpus = load_corpus(r)?;
    let mut rng = stream(r.data_seed, Stream::Aux);
    rng.long_jump();
    make_domain_pair(&corpus, r.transform, &mut rng)
}

fn fresh_model(r: &Resolved, k: usize, l: usize, seed: u64) -> Result<CoGan> {
    let mut m = build_cogan(&r.preset, k, l, r.adam, &mut stream(seed, Stream::Init))?;
    m.gen_loss = r.gen_loss;
    Ok(m)
}

/// Resolved settings and the layer/shape chain of every network.
pub fn dry_run_report(r: &Resolved) -> Result<String> {
    let mut s = String::new();
    for (k, v) in r.describe() {
        let _ = writeln!(s, "{k} = {v}");
    }
    if r.preset.name == PresetName::ConditionalDigit {
        let m = build_conditional(&r.preset, r.adam, &mut stream(r.seed, Stream::Init))?;
        s.push_str(&m.g.describe()?);
        s.push_str(&m.f.describe()?);
        return Ok(s);
    }
    let m = fresh_model(r, r.k, r.l, r.seed)?;
    for net in m.networks() {
        s.push_str(&net.describe()?);
    }
    let _ = writeln!(s, "parameters {} (tie groups {})", m.param_count(), m.ties.len());
    Ok(s)
}

fn run_sidecar(r: &Resolved) -> Sidecar {
    let mut s = Sidecar::default();
    for (k, v) in r.describe() {
        s.set(&k, v);
    }
    s
}

/// Two rows of generated images: domain 1 on top, domain 2 below.
fn sample_grid(path: &Path, model: &CoGan, z: &Tensor) -> Result<()> {
    let (a, b) = generate_pair(model, z)?;
    let mut images = cells(&a)?;
    images.extend(cells(&b)?);
    emit_grid(path, &images, z.batch())
}

/// Trains one coupled model. Writes `run.meta`, `config.json`,
/// `values.csv`, a checkpoint and sample grid at every checkpoint interval
/// and `model.cog` at the end.
pub fn cmd_train(r: &Resolved, out: &Path) -> Result<PathBuf> {
    if r.preset.name == PresetName::ConditionalDigit {
        return Err(Error::Config(
            "the conditional-digit preset is trained by `sweep` with include_conditional = true".into(),
        ));
    }
    prepare_out(out)?;
    let meta = run_sidecar(r);
    write(&out.join("run.meta"), &meta.render())?;
    write(&out.join("config.json"), &materialize(r))?;
    let pair = domain_pair(r)?;
    let mut model = fresh_model(r, r.k, r.l, r.seed)?;
    let mut rngs = RunRngs::new(r.seed);
    let z_show = sample_z(model.noise, 8, &mut stream(r.seed, Stream::Eval));
    let values = train(&mut model, pair.marginals(), &r.train, &mut rngs, |m| {
        let it = m.iteration;
        save_model(&out.join(format!("checkpoint_{it:06}.cog")), m, r.seed, &meta)?;
        sample_grid(&out.join(format!("samples_{it:06}.pgm")), m, &z_show)
    })?;
    let mut csv = String::from("iteration,value\n");
    for (i, v) in &values {
        let _ = writeln!(csv, "{i},{v}");
    }
    write(&out.join("values.csv"), &csv)?;
    let path = out.join("model.cog");
    save_model(&path, &model, r.seed, &meta)?;
    Ok(path)
}

/// Every resolved setting as a configuration file, so a run can be
/// repeated without the profile flag.
pub fn materialize(r: &Resolved) -> String {
    let (data, synthetic_n, images_path, labels_path) = match &r.data {
        DataSource::Synthetic { n } => ("synthetic", Some(*n), None, None),
        DataSource::Idx { images, labels } => ("idx", None, Some(images.clone()), labels.clone()),
    };
    let f = ConfigFile {
        task: Some(r.task.clone()),
        transform: Some(r.transform.to_string()),
        preset: Some(r.preset.name.to_string()),
        width_divisor: Some(r.preset.width_divisor),
        k: Some(r.k),
        l: Some(r.l),
        seed: Some(r.seed),
        data_seed: Some(r.data_seed),
        iterations: Some(r.train.iterations),
        batch: Some(r.train.batch),
        lr: Some(r.adam.lr),
        beta1: Some(r.adam.beta1),
        beta2: Some(r.adam.beta2),
        gen_loss: Some(r.gen_loss.as_str().into()),
        log_every: Some(r.train.log_every),
        checkpoint_every: Some(r.train.checkpoint_every),
        n_pairs: Some(r.n_pairs),
        data: Some(data.into()),
        images_path,
        labels_path,
        synthetic_n,
        checkpoint: r.checkpoint.clone(),
        k_values: Some(r.k_values.clone()),
        l_values: Some(r.l_values.clone()),
        seeds: Some(r.seeds.clone()),
        include_conditional: Some(r.include_conditional),
        trials: Some(r.trials),
        source_n: Some(r.source_n),
        target_n: Some(r.target_n),
        class_weight: Some(r.class_weight),
        transform_inputs: Some(r.transform_inputs),
        restarts: Some(r.inversion.restarts),
        max_iter: Some(r.inversion.max_iter),
        project: Some(r.inversion.project),
    };
    serde_json::to_string_pretty(&f).expect("plain data serializes") + "\n"
}

fn model_for(r: &Resolved) -> Result<(CoGan, u64)> {
    match &r.checkpoint {
        Some(path) => {
            let (m, meta) = load_model(path)?;
            expect_preset(&meta, r.preset.name, path)?;
            let seed = meta.require("seed")?;
            Ok((m, seed))
        }
        None => Ok((fresh_model(r, r.k, r.l, r.seed)?, r.seed)),
    }
}

/// Pixel agreement of a checkpoint (or, without one, of an untrained
/// model). Writes `agreement.csv`.
pub fn cmd_eval(r: &Resolved, out: &Path) -> Result<AgreementRecord> {
    prepare_out(out)?;
    let (model, seed) = model_for(r)?;
    let ratio = pixel_agreement(&model, r.transform, r.n_pairs, &mut stream(r.seed, Stream::Eval))?;
    let rec = AgreementRecord {
        task: r.task.clone(),
        k: model.k,
        l: model.l,
        seed,
        iteration: model.iteration,
        n_pairs: r.n_pairs,
        ratio,
    };
    write(&out.join("agreement.csv"), &records_csv(std::slice::from_ref(&rec)))?;
    Ok(rec)
}

/// The `(k, l)` grid over all seeds, optionally followed by the
/// conditional baseline. Writes `sweep.csv`.
pub fn cmd_sweep(r: &Resolved, out: &Path, mut progress: impl FnMut(&AgreementRecord)) -> Result<Vec<AgreementRecord>> {
    prepare_out(out)?;
    let pair = domain_pair(r)?;
    let cfg = SweepConfig {
        task: r.task.clone(),
        preset: r.preset.clone(),
        k_values: r.k_values.clone(),
        l_values: r.l_values.clone(),
        seeds: r.seeds.clone(),
        train: r.train,
        adam: r.adam,
        gen_loss: r.gen_loss,
        n_pairs: r.n_pairs,
    };
    let mut records = run_sweep(&cfg, &pair, &mut progress)?;
    if r.include_conditional {
        let preset = crate::cogan::ArchPreset::new(PresetName::ConditionalDigit, r.preset.width_divisor)?;
        let task = format!("{}-conditional", r.task);
        let cond = conditional_baseline_run(&task, &preset, &pair, &r.train, r.adam, &r.seeds, r.n_pairs)?;
        cond.iter().for_each(&mut progress);
        records.extend(cond);
    }
    write(&out.join("sweep.csv"), &records_csv(&records))?;
    Ok(records)
}

/// One adaptation result row.
#[derive(Debug, Clone, PartialEq)]
pub struct UdaRecord {
    pub direction: String,
    pub trial: usize,
    pub seed: u64,
    pub accuracy: f64,
}

/// Source and target corpora of one trial.
pub fn uda_corpora(r: &Resolved, seed: u64) -> Result<(ImageCorpus, ImageCorpus)> {
    let mut rng = stream(seed, Stream::Aux);
    let a = make_styled_corpus(r.source_n, 28, Style::Centered, &mut rng)?;
    let b = make_styled_corpus(r.target_n, 28, r.target_style, &mut rng)?;
    Ok((a, b))
}

/// Joint adaptation and the source-only baseline for one direction.
/// Returns `(adapted, source_only)` accuracy on the labeled target.
pub fn uda_trial(r: &Resolved, source: &ImageCorpus, target: &ImageCorpus, seed: u64) -> Result<(f64, f64)> {
    let task = UdaTask {
        source: LabeledImages::from_corpus(source)?,
        target: UnlabeledImages::from_corpus(target),
        n_classes: 10,
    };
    let truth = target.labels().ok_or_else(|| Error::Config("target corpus has no evaluation labels".into()))?;

    let mut adapted = attach_classifier(fresh_model(r, r.k, r.l, seed)?, 10, r.adam, &mut stream(seed, Stream::Aux))?;
    adapted.class_weight = r.class_weight;
    uda_train(&mut adapted, &task, r.train.iterations, r.train.batch, &mut RunRngs::new(seed))?;
    let acc = evaluate_accuracy(&adapted, target.images(), truth, 2)?;

    let mut base = attach_classifier(fresh_model(r, r.k, r.l, seed)?, 10, r.adam, &mut stream(seed, Stream::Aux))?;
    source_only_train(&mut base, &task, r.train.iterations, r.train.batch, &mut RunRngs::new(seed))?;
    let base_acc = evaluate_accuracy(&base, target.images(), truth, 1)?;
    Ok((acc, base_acc))
}

pub fn uda_csv(records: &[UdaRecord]) -> String {
    let mut s = String::from("direction,trial,seed,accuracy\n");
    for r in records {
        let _ = writeln!(s, "{},{},{},{:.6}", r.direction, r.trial, r.seed, r.accuracy);
    }
    let mut dirs: Vec<&str> = Vec::new();
    for r in records {
        if !dirs.contains(&r.direction.as_str()) {
            dirs.push(&r.direction);
        }
    }
    for d in dirs {
        let acc: Vec<f64> = records.iter().filter(|r| r.direction == d).map(|r| r.accuracy).collect();
        let (m, sd) = mean_std(&acc);
        let _ = writeln!(s, "{d},mean,,{m:.6}");
        let _ = writeln!(s, "{d},std,,{sd:.6}");
    }
    s
}

/// Both adaptation directions over `trials` re-sampled corpora. Writes
/// `uda.csv`.
pub fn cmd_uda(r: &Resolved, out: &Path, mut progress: impl FnMut(&UdaRecord)) -> Result<Vec<UdaRecord>> {
    prepare_out(out)?;
    let mut records = Vec::new();
    for trial in 0..r.trials {
        let seed = r.seed + trial as u64;
        let (centered, compact) = uda_corpora(r, seed)?;
        for (name, src, tgt) in [("centered-to-compact", &centered, &compact), ("compact-to-centered", &compact, &centered)] {
            let (acc, base) = uda_trial(r, src, tgt, seed)?;
            for (direction, accuracy) in [(name.to_string(), acc), (format!("{name}-source-only"), base)] {
                let rec = UdaRecord { direction, trial, seed, accuracy };
                progress(&rec);
                records.push(rec);
            }
        }
    }
    write(&out.join("uda.csv"), &uda_csv(&records))?;
    Ok(records)
}

/// One row of `transform.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformRow {
    pub index: usize,
    pub final_loss: f64,
    pub restart: usize,
    pub coverage_warning: bool,
    pub agreement: f64,
}

/// Transforms generated domain-1 images into domain 2 by latent inversion.
/// Writes `transform.pgm` (one row per input: input left, result right)
/// and `transform.csv`.
pub fn cmd_transform(r: &Resolved, out: &Path) -> Result<Vec<TransformRow>> {
    let path = r
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("field `checkpoint` is required for transform".into()))?;
    prepare_out(out)?;
    let (model, meta) = load_model(path)?;
    expect_preset(&meta, r.preset.name, path)?;
    let z = sample_z(model.noise, r.transform_inputs, &mut stream(r.seed, Stream::Aux));
    let (x1, _) = model.g1.infer(&model.store, &z)?;
    let mut rng = stream(r.seed, Stream::Eval);
    let mut rows = Vec::new();
    let mut grid = Vec::new();
    let mut csv = String::from("index,final_loss,restart,coverage_warning,agreement\n");
    for (i, img) in cells(&x1)?.into_iter().enumerate() {
        let (x2, inv) = cross_domain_transform(&model, &img, &r.inversion, &mut rng)?;
        let x2 = x2.reshape(img.shape().to_vec())?;
        let mut four = vec![1];
        four.extend(img.shape());
        let agreement = pair_ratios(&img.clone().reshape(four.clone())?, &x2.clone().reshape(four)?, r.transform)?[0];
        let row = TransformRow {
            index: i,
            final_loss: inv.final_loss,
            restart: inv.restart,
            coverage_warning: inv.coverage_warning,
            agreement,
        };
        let _ = writeln!(csv, "{},{},{},{},{:.6}", i, row.final_loss, row.restart, row.coverage_warning, agreement);
        rows.push(row);
        grid.push(img);
        grid.push(x2);
    }
    emit_grid(&out.join("transform.pgm"), &grid, 2)?;
    write(&out.join("transform.csv"), &csv)?;
    Ok(rows)
}
