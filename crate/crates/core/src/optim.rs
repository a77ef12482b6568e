//! SGD with classical (heavy-ball) momentum: `v ← m·v + g + wd·p`,
//! `p ← p − lr·v`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{Network, NetworkGrads, ParamId};

#[derive(Clone, Debug)]
pub struct SgdMomentum {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: BTreeMap<ParamId, Vec<f64>>,
}

impl SgdMomentum {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: BTreeMap::new(),
        }
    }

    pub fn reset(&mut self) {
        self.velocity.clear();
    }

    pub fn velocity(&self, id: ParamId) -> Option<&[f64]> {
        self.velocity.get(&id).map(Vec::as_slice)
    }

    /// Updates one tensor in place.
    pub fn update(&mut self, id: ParamId, param: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if param.len() != grad.len() {
            return Err(Error::shape("optimizer step", param.len(), grad.len()));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {id}")));
        }
        let v = self.velocity.entry(id).or_insert_with(|| vec![0.0; param.len()]);
        for ((p, g), v) in param.iter_mut().zip(grad).zip(v.iter_mut()) {
            *v = self.momentum * *v + g + self.weight_decay * *p;
            *p -= lr * *v;
        }
        Ok(())
    }

    /// Applies one step to every tensor that has a gradient. All gradients
    /// are checked before anything is modified.
    pub fn step(&mut self, net: &mut Network, grads: &NetworkGrads, lr: f64) -> Result<()> {
        let tensors = grads.tensors();
        for (id, g) in &tensors {
            if let Some(g) = g {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of {id}")));
                }
            }
        }
        let by_id: BTreeMap<ParamId, &[f64]> = tensors.into_iter().filter_map(|(id, g)| g.map(|g| (id, g))).collect();
        let mut result = Ok(());
        net.visit_params_mut(true, |id, p| {
            if result.is_err() {
                return;
            }
            if let Some(g) = by_id.get(&id) {
                result = self.update(id, p, g, lr);
            }
        });
        result
    }
}
