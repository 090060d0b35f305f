//! Image corpora, domain transforms and unpaired two-domain tasks.

pub mod idx;
pub mod synthetic;
pub mod transforms;

use crate::error::{Error, Result};
use crate::rng::{permutation, Rng64};
use crate::tensor::Tensor;

pub use idx::load_idx;
pub use synthetic::{make_styled_corpus, make_synthetic_corpus, Style};
pub use transforms::{binarize, edge, negative, resize_bilinear, rotate90, Transform};

#[derive(Debug, Clone)]
pub struct ImageCorpus {
    images: Tensor,
    labels: Option<Vec<u8>>,
    /// Index of each image in the corpus it was drawn from.
    source_index: Vec<usize>,
    provenance: Vec<String>,
}

impl ImageCorpus {
    pub fn new(images: Tensor, labels: Option<Vec<u8>>, source: impl Into<String>) -> Result<Self> {
        if images.rank() != 4 || images.shape()[1] != 1 {
            return Err(Error::shape("image_corpus", format!("expected [N, 1, H, W], got {:?}", images.shape())));
        }
        if let Some(bad) = images.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("pixel value {bad} outside [0, 1]")));
        }
        if let Some(l) = &labels {
            if l.len() != images.batch() {
                return Err(Error::Config(format!("{} images but {} labels", images.batch(), l.len())));
            }
        }
        let n = images.batch();
        Ok(ImageCorpus { images, labels, source_index: (0..n).collect(), provenance: vec![source.into()] })
    }

    pub fn len(&self) -> usize {
        self.images.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn source_index(&self) -> &[usize] {
        &self.source_index
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn image_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    /// Sub-corpus of the given rows; source indices follow the rows.
    pub fn select(&self, rows: &[usize]) -> ImageCorpus {
        ImageCorpus {
            images: self.images.select(rows),
            labels: self.labels.as_ref().map(|l| rows.iter().map(|&i| l[i]).collect()),
            source_index: rows.iter().map(|&i| self.source_index[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn transformed(&self, t: Transform) -> Result<ImageCorpus> {
        let mut out = self.clone();
        out.images = t.apply(&self.images)?;
        out.provenance.push(t.to_string());
        Ok(out)
    }

    pub fn without_labels(&self) -> ImageCorpus {
        ImageCorpus { labels: None, ..self.clone() }
    }
}

/// Random halves of sizes `ceil(N/2)` and `floor(N/2)`.
pub fn split_disjoint(corpus: &ImageCorpus, rng: &mut Rng64) -> Result<(ImageCorpus, ImageCorpus)> {
    let n = corpus.len();
    if n < 2 {
        return Err(Error::Config(format!("cannot split a corpus of {n} images")));
    }
    let perm = permutation(rng, n);
    let cut = n.div_ceil(2);
    Ok((corpus.select(&perm[..cut]), corpus.select(&perm[cut..])))
}

/// Two unpaired domains: the first half as is, the second half transformed.
#[derive(Debug, Clone)]
pub struct DomainPair {
    domain1: ImageCorpus,
    domain2: ImageCorpus,
    truth: Transform,
}

/// What a trainer may see of a [`DomainPair`]: two independent image sets.
#[derive(Debug, Clone, Copy)]
pub struct Marginals<'a> {
    pub x1: &'a Tensor,
    pub x2: &'a Tensor,
}

impl DomainPair {
    pub fn marginals(&self) -> Marginals<'_> {
        Marginals { x1: self.domain1.images(), x2: self.domain2.images() }
    }

    /// The relation between domains, for evaluation only.
    pub fn truth(&self) -> Transform {
        self.truth
    }

    pub fn domain1(&self) -> &ImageCorpus {
        &self.domain1
    }

    pub fn domain2(&self) -> &ImageCorpus {
        &self.domain2
    }
}

pub fn make_domain_pair(corpus: &ImageCorpus, transform: Transform, rng: &mut Rng64) -> Result<DomainPair> {
    let (a, b) = split_disjoint(corpus, rng)?;
    Ok(DomainPair { domain1: a, domain2: b.transformed(transform)?, truth: transform })
}
