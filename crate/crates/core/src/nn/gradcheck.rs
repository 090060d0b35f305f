//! Central finite-difference verification of reverse-mode gradients.

use crate::error::Result;
use crate::nn::network::Network;
use crate::nn::params::{GradientMap, ParamId, ParamStore};
use crate::rng::Rng64;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub id: String,
    pub coords_checked: usize,
    /// Coordinates whose perturbation moved a PReLU or max-pool unit to
    /// another branch. Finite differences are meaningless there.
    pub coords_skipped: usize,
    /// `max|g_ad - g_fd|` over checked coordinates.
    pub max_abs_diff: f64,
    /// `max(max|g_ad|, max|g_fd|)` over checked coordinates.
    pub scale: f64,
    /// `max_abs_diff / max(scale, 1e-8)`.
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checks: Vec<ParamCheck>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn failures(&self) -> Vec<&ParamCheck> {
        self.checks.iter().filter(|c| !(c.rel_error < self.tol)).collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn worst(&self) -> f64 {
        self.checks.iter().fold(0.0, |m, c| m.max(c.rel_error))
    }

    /// Relative error of the whole checked gradient vector rather than of
    /// each tensor. Tensors whose true gradient is exactly zero (a bias
    /// feeding a batch-normalized channel) are judged against the
    /// network's gradient scale instead of finite-difference noise.
    pub fn network_rel_error(&self) -> f64 {
        let diff = self.checks.iter().fold(0.0f64, |m, c| m.max(c.max_abs_diff));
        let scale = self.checks.iter().fold(1e-8f64, |m, c| m.max(c.scale));
        diff / scale
    }

    pub fn skipped(&self) -> usize {
        self.checks.iter().map(|c| c.coords_skipped).sum()
    }
}

/// Which coordinates of each parameter to probe.
#[derive(Debug, Clone, Copy)]
pub enum Coverage {
    All,
    /// At most this many coordinates per tensor, drawn without replacement.
    Sample(usize),
}

fn pick(len: usize, coverage: Coverage, rng: &mut Rng64) -> Vec<usize> {
    match coverage {
        Coverage::Sample(k) if k < len => {
            let mut chosen = rand::seq::index::sample(rng, len, k).into_vec();
            chosen.sort_unstable();
            chosen
        }
        _ => (0..len).collect(),
    }
}

fn summarize(id: String, ad: &[f64], fd: &[f64], skipped: usize) -> ParamCheck {
    let max_abs_diff = ad.iter().zip(fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = ad.iter().chain(fd).fold(0.0f64, |m, v| m.max(v.abs()));
    ParamCheck {
        id,
        coords_checked: ad.len(),
        coords_skipped: skipped,
        max_abs_diff,
        scale,
        rel_error: max_abs_diff / scale.max(1e-8),
    }
}

/// Central differences of an objective that also reports whether the
/// perturbed point lies on the same smooth piece as the unperturbed one.
#[allow(clippy::too_many_arguments)]
fn check_piecewise(
    store: &ParamStore,
    params: &[ParamId],
    analytic: &GradientMap,
    objective: impl Fn(&ParamStore) -> Result<(f64, bool)>,
    eps: f64,
    tol: f64,
    coverage: Coverage,
    rng: &mut Rng64,
) -> Result<GradCheckReport> {
    let mut work = store.clone();
    let mut checks = Vec::with_capacity(params.len());
    for id in params {
        let Some(slot) = store.slot_of(id) else { continue };
        let n = store.slot(slot).len();
        let coords = pick(n, coverage, rng);
        let zeros = Tensor::zeros(store.slot(slot).shape());
        let ad_full = analytic.get(id).unwrap_or(&zeros);
        let mut ad = Vec::with_capacity(coords.len());
        let mut fd = Vec::with_capacity(coords.len());
        let mut skipped = 0;
        for &i in &coords {
            let orig = store.slot(slot).data()[i];
            work.slot_mut(slot).data_mut()[i] = orig + eps;
            let (up, s1) = objective(&work)?;
            work.slot_mut(slot).data_mut()[i] = orig - eps;
            let (down, s2) = objective(&work)?;
            work.slot_mut(slot).data_mut()[i] = orig;
            if !(s1 && s2) {
                skipped += 1;
                continue;
            }
            fd.push((up - down) / (2.0 * eps));
            ad.push(ad_full.data()[i]);
        }
        checks.push(summarize(id.to_string(), &ad, &fd, skipped));
    }
    Ok(GradCheckReport { checks, tol })
}

/// Compares an analytic gradient map against central differences of
/// `objective` evaluated on perturbed copies of `store`.
#[allow(clippy::too_many_arguments)]
pub fn check_gradients(
    store: &ParamStore,
    params: &[ParamId],
    analytic: &GradientMap,
    objective: impl Fn(&ParamStore) -> Result<f64>,
    eps: f64,
    tol: f64,
    coverage: Coverage,
    rng: &mut Rng64,
) -> Result<GradCheckReport> {
    check_piecewise(store, params, analytic, |s| Ok((objective(s)?, true)), eps, tol, coverage, rng)
}

/// Gradient check of a whole network under a scalar loss of its output.
/// `loss` returns the value and its gradient with respect to the output.
/// Running statistics are never modified. The input gradient is reported
/// under the pseudo-id `<input>`. Coordinates whose perturbation changes
/// a PReLU sign or a max-pool winner are skipped and counted.
#[allow(clippy::too_many_arguments)]
pub fn grad_check(
    net: &Network,
    store: &ParamStore,
    input: &Tensor,
    loss: impl Fn(&Tensor) -> (f64, Tensor),
    eps: f64,
    tol: f64,
    coverage: Coverage,
    rng: &mut Rng64,
) -> Result<GradCheckReport> {
    let (y, trace) = net.forward_pure(store, input)?;
    let pattern = trace.branch_pattern();
    let (_, upstream) = loss(&y);
    let (grads, dx) = net.backward(store, &trace, &upstream)?;
    let ids = net.param_ids();
    let eval = |s: &ParamStore, x: &Tensor| -> Result<(f64, bool)> {
        let (y, t) = net.forward_pure(s, x)?;
        Ok((loss(&y).0, t.branch_pattern() == pattern))
    };
    let mut report = check_piecewise(store, &ids, &grads, |s| eval(s, input), eps, tol, coverage, rng)?;

    let coords = pick(input.len(), coverage, rng);
    let mut x = input.clone();
    let mut fd = Vec::with_capacity(coords.len());
    let mut ad = Vec::with_capacity(coords.len());
    let mut skipped = 0;
    for &i in &coords {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + eps;
        let (up, s1) = eval(store, &x)?;
        x.data_mut()[i] = orig - eps;
        let (down, s2) = eval(store, &x)?;
        x.data_mut()[i] = orig;
        if !(s1 && s2) {
            skipped += 1;
            continue;
        }
        fd.push((up - down) / (2.0 * eps));
        ad.push(dx.data()[i]);
    }
    report.checks.push(summarize("<input>".into(), &ad, &fd, skipped));
    Ok(report)
}

/// `L = sum(weights * y)`, a loss whose output gradient is `weights`.
pub fn linear_probe(weights: Tensor) -> impl Fn(&Tensor) -> (f64, Tensor) {
    move |y: &Tensor| (y.dot(&weights).expect("probe shape"), weights.clone())
}
