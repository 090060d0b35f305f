//! Cross-domain transformation by latent inversion: find `z*` minimizing
//! `||g1(z) - x1||^2`, then render `g2(z*)`.

use crate::cogan::CoGan;
use crate::error::{Error, Result};
use crate::nn::{Network, ParamStore};
use crate::optim::{lbfgs_minimize, LbfgsConfig, LbfgsStatus};
use crate::rng::{uniform_sym, Rng64};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Keep iterates in `[-1, 1]^d`.
    pub project: bool,
    /// A result is flagged as out of coverage when its loss exceeds this
    /// fraction of the image dimension.
    pub coverage_threshold: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig { restarts: 5, max_iter: 200, project: true, coverage_threshold: 0.01 }
    }
}

#[derive(Debug, Clone)]
pub struct Inversion {
    pub z: Tensor,
    pub final_loss: f64,
    /// Loss after every accepted step of the winning restart.
    pub trace: Vec<f64>,
    pub restart: usize,
    pub status: LbfgsStatus,
    /// Set when `final_loss > coverage_threshold * dim`.
    pub coverage_warning: bool,
}

fn clamp_box(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.clamp(-1.0, 1.0));
}

/// Minimizes the squared reconstruction error of `target` (one image,
/// with or without a leading batch axis) over the generator input, from
/// `restarts` uniform starting points. The lowest loss wins, ties to the
/// earlier restart.
pub fn invert_latent(
    g: &Network,
    store: &ParamStore,
    target: &Tensor,
    cfg: &InversionConfig,
    rng: &mut Rng64,
) -> Result<Inversion> {
    let out_shape = g.output_shape()?;
    let mut want = vec![1];
    want.extend(&out_shape);
    if target.len() != want.iter().product::<usize>() {
        return Err(Error::shape("invert_latent", format!("target {:?}, generator renders {:?}", target.shape(), out_shape)));
    }
    let x = target.clone().reshape(want)?;
    let d = g.input_shape().iter().product::<usize>();
    let objective = |z: &Tensor| -> Result<(f64, Tensor)> {
        let (y, trace) = g.infer(store, z)?;
        let diff = y.zip_map(&x, |a, b| a - b)?;
        let grad = g.backward_input(store, &trace, &diff.map(|v| 2.0 * v))?;
        Ok((diff.sq_norm(), grad))
    };
    let lcfg = LbfgsConfig { max_iter: cfg.max_iter, ..Default::default() };
    let mut best: Option<Inversion> = None;
    let mut failures = Vec::new();
    for r in 0..cfg.restarts.max(1) {
        let z0 = Tensor::from_fn([1, d], |_| uniform_sym(rng));
        let project: Option<&dyn Fn(&mut [f64])> = if cfg.project { Some(&clamp_box) } else { None };
        match lbfgs_minimize(objective, &z0, &lcfg, project) {
            Ok(res) if res.value.is_finite() => {
                if best.as_ref().is_none_or(|b| res.value < b.final_loss) {
                    best = Some(Inversion {
                        z: res.x,
                        final_loss: res.value,
                        trace: res.trace,
                        restart: r,
                        status: res.status,
                        coverage_warning: false,
                    });
                }
            }
            Ok(res) => failures.push(format!("restart {r}: loss {}", res.value)),
            Err(e) => failures.push(format!("restart {r}: {e}")),
        }
    }
    let mut best = best.ok_or_else(|| Error::Numeric(format!("every inversion restart failed: {}", failures.join("; "))))?;
    best.coverage_warning = best.final_loss > cfg.coverage_threshold * x.len() as f64;
    Ok(best)
}

/// `g2(z*)` for the `z*` recovered from `x1` through `g1`.
pub fn cross_domain_transform(model: &CoGan, x1: &Tensor, cfg: &InversionConfig, rng: &mut Rng64) -> Result<(Tensor, Inversion)> {
    let inv = invert_latent(&model.g1, &model.store, x1, cfg, rng)?;
    let (x2, _) = model.g2.infer(&model.store, &inv.z)?;
    Ok((x2, inv))
}
