//! Unsupervised domain adaptation through the tied discriminator trunk.
//!
//! A softmax classifier `c` is attached to the last hidden block of the
//! discriminators. Because the trunks share their upper blocks, `c1 = c∘f1`
//! and `c2 = c∘f2` differ only in the untied lower blocks. Training
//! alternates one coupled GAN step on both domains with one supervised
//! cross-entropy step on labeled source images through `c1`; target images
//! are only ever seen unlabeled.

use rand::Rng;

use crate::cogan::train::{sample_batch, RunRngs};
use crate::cogan::{cogan_train_step, CoGan};
use crate::datasets::ImageCorpus;
use crate::error::{Error, Result};
use crate::evaluation::conditional::cross_entropy;
use crate::gan::sample_z;
use crate::nn::{LayerSpec, NetBuilder, Network};
use crate::optim::{Adam, AdamConfig};
use crate::rng::Rng64;
use crate::tensor::Tensor;

/// Images with labels (the source domain).
#[derive(Debug, Clone)]
pub struct LabeledImages {
    images: Tensor,
    labels: Vec<u8>,
}

impl LabeledImages {
    pub fn from_corpus(c: &ImageCorpus) -> Result<Self> {
        let labels = c.labels().ok_or_else(|| Error::Config("source corpus has no labels".into()))?;
        Ok(LabeledImages { images: c.images().clone(), labels: labels.to_vec() })
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

/// Images without labels (the target domain during training).
#[derive(Debug, Clone)]
pub struct UnlabeledImages(Tensor);

impl UnlabeledImages {
    /// Drops the labels; nothing downstream can recover them.
    pub fn from_corpus(c: &ImageCorpus) -> Self {
        UnlabeledImages(c.images().clone())
    }

    pub fn images(&self) -> &Tensor {
        &self.0
    }
}

#[derive(Debug, Clone)]
pub struct UdaTask {
    pub source: LabeledImages,
    pub target: UnlabeledImages,
    pub n_classes: usize,
}

#[derive(Debug, Clone)]
pub struct UdaModel {
    pub cogan: CoGan,
    pub head: Network,
    pub opt_c: Adam,
    /// Weight of the supervised step (0 disables it).
    pub class_weight: f64,
}

/// Attaches one softmax head, shared by both discriminators, after their
/// last hidden block. The last hidden block must be tied.
pub fn attach_classifier(model: CoGan, n_classes: usize, adam: AdamConfig, rng: &mut Rng64) -> Result<UdaModel> {
    if model.l < 2 {
        return Err(Error::Config(format!(
            "classifier needs the last hidden discriminator block tied (l >= 2), model has l = {}",
            model.l
        )));
    }
    let mut cogan = model;
    let hidden = cogan.f1.blocks().len() - 1;
    let feat = cogan.f1.shape_after(hidden)?;
    let mut b = NetBuilder::new("c", feat, &mut cogan.store, rng);
    b.block(&[LayerSpec::Dense { out: n_classes }, LayerSpec::Softmax])?;
    let head = b.build();
    Ok(UdaModel { cogan, head, opt_c: Adam::new(adam), class_weight: 1.0 })
}

impl UdaModel {
    fn trunk(&self, which: usize) -> Result<&Network> {
        match which {
            1 => Ok(&self.cogan.f1),
            2 => Ok(&self.cogan.f2),
            _ => Err(Error::Config(format!("domain must be 1 or 2, got {which}"))),
        }
    }

    /// Class probabilities `c_which(x)` with running statistics.
    pub fn classify(&self, x: &Tensor, which: usize) -> Result<Tensor> {
        let f = self.trunk(which)?;
        let hidden = f.blocks().len() - 1;
        let (h, _) = f.infer_blocks(&self.cogan.store, x, 0..hidden)?;
        Ok(self.head.infer(&self.cogan.store, &h)?.0)
    }

    /// One supervised step on `(x, y)` through `c1`. Returns the loss.
    pub fn classification_step(&mut self, x: &Tensor, y: &[u8]) -> Result<f64> {
        let hidden = self.cogan.f1.blocks().len() - 1;
        let store = &self.cogan.store;
        let (h, ht) = self.cogan.f1.forward_blocks(store, x, 0..hidden)?;
        let (p, pt) = self.head.forward(store, &h)?;
        let k = p.item_len();
        let n = y.len() as f64;
        let mut loss = 0.0;
        let mut dp = Tensor::zeros(p.shape());
        for (i, &label) in y.iter().enumerate() {
            let (l, d) = cross_entropy(&Tensor::new([1, k], p.item(i).to_vec())?, label as usize);
            loss += l / n;
            for (slot, v) in dp.data_mut()[i * k..(i + 1) * k].iter_mut().zip(d.data()) {
                *slot = v * self.class_weight / n;
            }
        }
        let (mut grads, dh) = self.head.backward(store, &pt, &dp)?;
        grads.merge(self.cogan.f1.backward_params(store, &ht, &dh)?)?;
        self.opt_c.step_map(&mut self.cogan.store, &grads)?;
        Ok(loss)
    }
}

/// Labeled source batch, unlabeled batches of both domains and noise for
/// one adaptation step.
pub struct UdaBatches {
    pub labeled: (Tensor, Vec<u8>),
    pub x1: Tensor,
    pub x2: Tensor,
    pub z: Tensor,
}

pub fn draw_batches(task: &UdaTask, noise: crate::gan::NoiseSpec, batch: usize, rngs: &mut RunRngs) -> Result<UdaBatches> {
    let n = task.source.labels.len();
    if n == 0 {
        return Err(Error::Config("empty source set".into()));
    }
    let rows: Vec<usize> = (0..batch).map(|_| rngs.data.random_range(0..n)).collect();
    let labeled = (task.source.images.select(&rows), rows.iter().map(|&i| task.source.labels[i]).collect());
    let x1 = sample_batch(&task.source.images, batch, &mut rngs.data)?;
    let x2 = sample_batch(task.target.images(), batch, &mut rngs.data)?;
    let z = sample_z(noise, batch, &mut rngs.noise);
    Ok(UdaBatches { labeled, x1, x2, z })
}

/// One coupled GAN step followed by one supervised step (skipped when the
/// classification weight is zero).
pub fn uda_train_step(model: &mut UdaModel, b: &UdaBatches) -> Result<f64> {
    cogan_train_step(&mut model.cogan, &b.x1, &b.x2, &b.z)?;
    if model.class_weight == 0.0 {
        return Ok(0.0);
    }
    model.classification_step(&b.labeled.0, &b.labeled.1)
}

/// Argmax accuracy of `c_which`; ties go to the lower class index.
pub fn evaluate_accuracy(model: &UdaModel, images: &Tensor, labels: &[u8], which: usize) -> Result<f64> {
    if images.batch() != labels.len() || labels.is_empty() {
        return Err(Error::Config(format!("{} images vs {} labels", images.batch(), labels.len())));
    }
    let mut correct = 0usize;
    for start in (0..labels.len()).step_by(256) {
        let rows: Vec<usize> = (start..(start + 256).min(labels.len())).collect();
        let p = model.classify(&images.select(&rows), which)?;
        for (r, &i) in rows.iter().enumerate() {
            if argmax(p.item(r)) == labels[i] as usize {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Joint training for `iterations` steps.
pub fn uda_train(model: &mut UdaModel, task: &UdaTask, iterations: u64, batch: usize, rngs: &mut RunRngs) -> Result<()> {
    for i in 0..iterations {
        let b = draw_batches(task, model.cogan.noise, batch, rngs)?;
        let loss = uda_train_step(model, &b)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("classification loss diverged at step {i}")));
        }
    }
    Ok(())
}

/// Source-only baseline: the same classifier trained on labeled source
/// images alone for the same number of supervised steps.
pub fn source_only_train(model: &mut UdaModel, task: &UdaTask, iterations: u64, batch: usize, rngs: &mut RunRngs) -> Result<()> {
    for i in 0..iterations {
        let b = draw_batches(task, model.cogan.noise, batch, rngs)?;
        let loss = model.classification_step(&b.labeled.0, &b.labeled.1)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("classification loss diverged at step {i}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lower_index_on_ties() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}
