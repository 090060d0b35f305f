//! Pixel agreement between corresponding generated images, the
//! weight-sharing sweep and the conditional-GAN baseline.

pub mod conditional;
pub mod sweep;

use std::fmt::Write as _;

use crate::cogan::{generate_pair, CoGan};
use crate::datasets::{binarize, Transform};
use crate::error::{Error, Result};
use crate::gan::sample_z;
use crate::rng::Rng64;
use crate::tensor::Tensor;

pub use conditional::{build_conditional, conditional_baseline_run, conditional_train_step, ConditionalGan};
pub use sweep::{run_sweep, SweepConfig};

/// Pairs rendered per generator call during evaluation.
pub const EVAL_CHUNK: usize = 100;

/// Number of equal pixels after binarizing both images.
pub fn matching_pixels(t: &[f64], b: &[f64]) -> usize {
    t.iter().zip(b).filter(|(x, y)| binarize(**x) == binarize(**y)).count()
}

/// Per-pair count of agreeing pixels between `truth(img1)` and `img2`,
/// both binarized, and the number of pixels per image.
pub fn pair_matches(img1: &Tensor, img2: &Tensor, truth: Transform) -> Result<(Vec<usize>, usize)> {
    if img1.shape() != img2.shape() {
        return Err(Error::shape("pixel_agreement", format!("{:?} vs {:?}", img1.shape(), img2.shape())));
    }
    let t = truth.apply(img1)?;
    let per = img1.item_len();
    let counts = t.data().chunks(per).zip(img2.data().chunks(per)).map(|(a, b)| matching_pixels(a, b)).collect();
    Ok((counts, per))
}

/// Per-pair agreement ratios.
pub fn pair_ratios(img1: &Tensor, img2: &Tensor, truth: Transform) -> Result<Vec<f64>> {
    let (counts, per) = pair_matches(img1, img2, truth)?;
    Ok(counts.into_iter().map(|c| c as f64 / per as f64).collect())
}

/// Agreement over `n_pairs` noise vectors rendered through both generators
/// with running BatchNorm statistics: all agreeing pixels divided by all
/// pixels, which equals the mean per-pair ratio.
pub fn pixel_agreement(model: &CoGan, truth: Transform, n_pairs: usize, rng: &mut Rng64) -> Result<f64> {
    mean_agreement(n_pairs, truth, |n| {
        let z = sample_z(model.noise, n, rng);
        generate_pair(model, &z)
    })
}

pub(crate) fn mean_agreement(
    n_pairs: usize,
    truth: Transform,
    mut render: impl FnMut(usize) -> Result<(Tensor, Tensor)>,
) -> Result<f64> {
    if n_pairs == 0 {
        return Err(Error::Config("n_pairs must be positive".into()));
    }
    let mut matched = 0usize;
    let mut pixels = 0usize;
    let mut done = 0;
    while done < n_pairs {
        let n = EVAL_CHUNK.min(n_pairs - done);
        let (a, b) = render(n)?;
        let (counts, per) = pair_matches(&a, &b, truth)?;
        matched += counts.iter().sum::<usize>();
        pixels += per * n;
        done += n;
    }
    Ok(matched as f64 / pixels as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementRecord {
    pub task: String,
    pub k: usize,
    pub l: usize,
    pub seed: u64,
    pub iteration: u64,
    pub n_pairs: usize,
    pub ratio: f64,
}

pub const CSV_HEADER: &str = "task,k,l,seed,iteration,n_pairs,ratio";

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One row per record, then `mean` and `std` rows per `(task, k, l)` cell
/// in order of first appearance.
pub fn records_csv(records: &[AgreementRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(s, "{},{},{},{},{},{},{:.6}", r.task, r.k, r.l, r.seed, r.iteration, r.n_pairs, r.ratio);
    }
    let mut cells: Vec<(&str, usize, usize)> = Vec::new();
    for r in records {
        let key = (r.task.as_str(), r.k, r.l);
        if !cells.contains(&key) {
            cells.push(key);
        }
    }
    for (task, k, l) in cells {
        let rows: Vec<&AgreementRecord> = records.iter().filter(|r| (r.task.as_str(), r.k, r.l) == (task, k, l)).collect();
        let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
        let (m, sd) = mean_std(&ratios);
        let n = rows[0].n_pairs;
        let _ = writeln!(s, "{task},{k},{l},mean,,{n},{m:.6}");
        let _ = writeln!(s, "{task},{k},{l},std,,{n},{sd:.6}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        assert_eq!(matching_pixels(&[1.0, 0.0, 1.0, 1.0], &[1.0, 1.0, 1.0, 0.0]), 2);
        let a = Tensor::new([1, 1, 2, 2], vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        let b = Tensor::new([1, 1, 2, 2], vec![1.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(pair_ratios(&a, &b, Transform::Identity).unwrap(), vec![0.5]);
        assert_eq!(pair_ratios(&a, &a, Transform::Identity).unwrap(), vec![1.0]);
        assert_eq!(pair_ratios(&a, &a, Transform::Negative).unwrap(), vec![0.0]);
    }

    #[test]
    fn csv_layout() {
        let rec = |seed, ratio| AgreementRecord { task: "B".into(), k: 4, l: 3, seed, iteration: 500, n_pairs: 10, ratio };
        let csv = records_csv(&[rec(1, 0.8), rec(2, 0.9)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[3], "B,4,3,mean,,10,0.850000");
        assert!(lines[4].starts_with("B,4,3,std,,10,0.0707"));
    }
}
