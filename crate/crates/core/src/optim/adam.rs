//! Bias-corrected Adam over parameter-store slots.
//!
//! State is keyed by storage slot, so two tied parameter ids share one pair
//! of moment estimates.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::{GradientMap, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// Learning rate 0.0002, first-moment decay 0.5, second-moment decay 0.999.
    pub const GAN: AdamConfig = AdamConfig {
        lr: 0.0002,
        beta1: 0.5,
        beta2: 0.999,
        eps: 1e-8,
    };

    pub fn with_lr(self, lr: f64) -> Self {
        AdamConfig { lr, ..self }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::GAN
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
    m: BTreeMap<usize, Tensor>,
    v: BTreeMap<usize, Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn moments(&self, slot: usize) -> Option<(&Tensor, &Tensor)> {
        Some((self.m.get(&slot)?, self.v.get(&slot)?))
    }

    /// Applies one update from per-slot gradients; `t` advances once per call.
    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<usize, Tensor>) -> Result<()> {
        for (&slot, g) in grads {
            if slot >= store.slot_count() {
                return Err(Error::Usage(format!("gradient for missing slot {slot}")));
            }
            if store.slot(slot).shape() != g.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!("slot {slot}: parameter {:?} vs gradient {:?}", store.slot(slot).shape(), g.shape()),
                ));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (&slot, g) in grads {
            let m = self.m.entry(slot).or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.v.entry(slot).or_insert_with(|| Tensor::zeros(g.shape()));
            let theta = store.slot_mut(slot).data_mut();
            for (((p, gi), mi), vi) in theta
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// As [`Adam::step`] from a per-id gradient map.
    pub fn step_map(&mut self, store: &mut ParamStore, grads: &GradientMap) -> Result<()> {
        let by_slot = grads.by_slot(store)?;
        self.step(store, &by_slot)
    }

    /// Named moment tensors and the step counter, for checkpoints.
    pub fn state(&self) -> (u64, Vec<(usize, Tensor, Tensor)>) {
        let rows = self
            .m
            .iter()
            .map(|(s, m)| (*s, m.clone(), self.v[s].clone()))
            .collect();
        (self.t, rows)
    }

    pub fn restore(&mut self, t: u64, rows: Vec<(usize, Tensor, Tensor)>) {
        self.t = t;
        self.m.clear();
        self.v.clear();
        for (s, m, v) in rows {
            self.m.insert(s, m);
            self.v.insert(s, v);
        }
    }
}
