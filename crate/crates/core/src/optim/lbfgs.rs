//! Limited-memory BFGS with the two-loop recursion and a backtracking
//! Armijo line search, optionally projected onto a convex feasible set.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    /// Number of curvature pairs kept.
    pub memory: usize,
    pub max_iter: usize,
    /// Stop once the (projected) gradient's infinity norm falls below this.
    pub tol: f64,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iter: 200,
            tol: 1e-10,
            c1: 1e-4,
            shrink: 0.5,
            max_backtracks: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    Converged,
    MaxIterations,
    /// No step satisfying sufficient decrease was found; the best iterate is returned.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Tensor,
    pub value: f64,
    /// Objective at the start point and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub status: LbfgsStatus,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `objective` (value and gradient) from `x0`. When `project` is
/// given, every trial point is projected before evaluation and stationarity
/// is measured by the projected-gradient step.
pub fn lbfgs_minimize(
    mut objective: impl FnMut(&Tensor) -> Result<(f64, Tensor)>,
    x0: &Tensor,
    config: &LbfgsConfig,
    project: Option<&dyn Fn(&mut [f64])>,
) -> Result<LbfgsResult> {
    let shape = x0.shape().to_vec();
    let mut x = x0.clone();
    if let Some(p) = project {
        p(x.data_mut());
    }
    let (mut f, g) = objective(&x)?;
    if !f.is_finite() || !g.all_finite() {
        return Err(Error::Numeric(format!("objective is not finite at the start point (value {f})")));
    }
    let mut g = g.into_data();
    let mut trace = vec![f];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.memory);
    let n = x.len();

    let stationarity = |x: &[f64], g: &[f64]| -> f64 {
        match project {
            None => inf_norm(g),
            Some(p) => {
                let mut y: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - b).collect();
                p(&mut y);
                y.iter().zip(x).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
            }
        }
    };

    let mut iterations = 0;
    let status = loop {
        if stationarity(x.data(), &g) < config.tol {
            break LbfgsStatus::Converged;
        }
        if iterations >= config.max_iter {
            break LbfgsStatus::MaxIterations;
        }

        // two-loop recursion: d = -H g
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.into_iter().map(|v| -v).collect();
        if dot(&d, &g) >= 0.0 {
            history.clear();
            d = g.iter().map(|v| -v).collect();
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..config.max_backtracks {
            let mut trial: Vec<f64> = x.data().iter().zip(&d).map(|(a, b)| a + step * b).collect();
            if let Some(p) = project {
                p(&mut trial);
            }
            let delta: Vec<f64> = trial.iter().zip(x.data()).map(|(a, b)| a - b).collect();
            let slope = dot(&g, &delta);
            let xt = Tensor::new(shape.clone(), trial)?;
            let (ft, gt) = objective(&xt)?;
            if ft.is_finite() && gt.all_finite() && ft <= f + config.c1 * slope && ft <= f {
                accepted = Some((xt, ft, gt.into_data(), delta));
                break;
            }
            step *= config.shrink;
        }
        let Some((xn, fnew, gn, s)) = accepted else {
            break LbfgsStatus::LineSearchFailed;
        };
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) && n > 0 {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        } else {
            // stale curvature pairs stall progress in non-convex regions
            history.clear();
        }
        x = xn;
        f = fnew;
        g = gn;
        trace.push(f);
        iterations += 1;
    };

    Ok(LbfgsResult {
        x,
        value: f,
        trace,
        iterations,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &Tensor) -> Result<(f64, Tensor)> {
        Ok((x.sq_norm(), x.map(|v| 2.0 * v)))
    }

    fn rosenbrock(x: &Tensor) -> Result<(f64, Tensor)> {
        let (a, b) = (x.data()[0], x.data()[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let ga = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        let gb = 200.0 * (b - a * a);
        Ok((f, Tensor::new([2], vec![ga, gb])?))
    }

    #[test]
    fn quadratic_in_few_iterations() {
        let x0 = Tensor::new([2], vec![3.0, 4.0]).unwrap();
        let r = lbfgs_minimize(sphere, &x0, &LbfgsConfig::default(), None).unwrap();
        assert!(r.iterations <= 3, "{}", r.iterations);
        assert!(r.value < 1e-16);
        assert_eq!(r.status, LbfgsStatus::Converged);
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let x0 = Tensor::new([2], vec![-1.2, 1.0]).unwrap();
        let cfg = LbfgsConfig { max_iter: 100, ..Default::default() };
        let r = lbfgs_minimize(rosenbrock, &x0, &cfg, None).unwrap();
        assert!(r.value < 1e-8, "f = {} after {} iterations ({:?})", r.value, r.iterations, r.status);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn optimal_start_returns_immediately() {
        let x0 = Tensor::zeros([3]);
        let r = lbfgs_minimize(sphere, &x0, &LbfgsConfig::default(), None).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.x, x0);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let x0 = Tensor::zeros([1]);
        let bad = |_: &Tensor| Ok((f64::NAN, Tensor::zeros([1])));
        assert!(matches!(
            lbfgs_minimize(bad, &x0, &LbfgsConfig::default(), None),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn projection_keeps_iterates_in_box() {
        // minimum of (x-3)^2 over [-1, 1] is at the boundary
        let obj = |x: &Tensor| Ok(((x.data()[0] - 3.0).powi(2), x.map(|v| 2.0 * (v - 3.0))));
        let clamp = |v: &mut [f64]| v.iter_mut().for_each(|x| *x = x.clamp(-1.0, 1.0));
        let r = lbfgs_minimize(obj, &Tensor::zeros([1]), &LbfgsConfig::default(), Some(&clamp)).unwrap();
        assert_eq!(r.x.data()[0], 1.0);
        assert_eq!(r.status, LbfgsStatus::Converged);
    }
}
