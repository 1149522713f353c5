//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::params::{GradMap, ParamStore};
use crate::tensor::DenseArray;
use std::collections::BTreeMap;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: step count plus first/second moment estimates per parameter.
#[derive(Clone, Debug)]
pub struct OptimState {
    pub hyper: AdamParams,
    step: u64,
    first: BTreeMap<String, DenseArray>,
    second: BTreeMap<String, DenseArray>,
}

impl OptimState {
    pub fn new(hyper: AdamParams) -> Self {
        OptimState {
            hyper,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&BTreeMap<String, DenseArray>, &BTreeMap<String, DenseArray>) {
        (&self.first, &self.second)
    }

    /// Rebuilds state from checkpointed parts.
    pub fn from_parts(
        hyper: AdamParams,
        step: u64,
        first: BTreeMap<String, DenseArray>,
        second: BTreeMap<String, DenseArray>,
    ) -> Self {
        OptimState {
            hyper,
            step,
            first,
            second,
        }
    }

    /// One Adam update over every registered parameter. Gradients must cover
    /// the whole store and match shapes.
    pub fn adam_step(&mut self, store: &mut ParamStore, grads: &GradMap) -> Result<()> {
        let ids: Vec<String> = store.ids().map(String::from).collect();
        for id in &ids {
            let shape = store.get(id)?.shape().to_vec();
            let grad = grads
                .get(id)
                .ok_or_else(|| Error::invalid("adam_step", format!("missing gradient for `{id}`")))?;
            if grad.shape() != shape {
                return Err(Error::shape(
                    "adam_step",
                    format!("gradient `{id}`: {:?} vs {:?}", grad.shape(), shape),
                ));
            }
            self.first
                .entry(id.clone())
                .or_insert_with(|| DenseArray::zeros(&shape));
            self.second
                .entry(id.clone())
                .or_insert_with(|| DenseArray::zeros(&shape));
        }

        self.step += 1;
        let t = self.step as i32;
        let AdamParams {
            lr,
            beta1,
            beta2,
            eps,
        } = self.hyper;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for id in &ids {
            let grad = &grads[id];
            let m = self.first.get_mut(id).expect("seeded above");
            let v = self.second.get_mut(id).expect("seeded above");
            let mut updated = store.get(id)?.clone();
            for ((p, g), (mi, vi)) in updated
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            store.set(id, updated)?;
        }
        Ok(())
    }
}
