use super::params::ParamStore;
use super::{NumError, Tensor};

pub const ADAM_EPS: f64 = 1e-8;

/// Bias-corrected Adam with per-parameter moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Tensor> = store
            .iter()
            .map(|(_, p)| Tensor::zeros(p.value.shape()))
            .collect();
        Self {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: ADAM_EPS,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn first_moment(&self, i: usize) -> &Tensor {
        &self.first[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor {
        &self.second[i]
    }

    /// Applies one update to every trainable entry of `store`.
    ///
    /// `grads` is aligned with the store order (see `Gradients::for_params`).
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<(), NumError> {
        if grads.len() != store.len() || self.first.len() != store.len() {
            return Err(NumError::Dimension(format!(
                "adam: {} gradients for {} parameters ({} accumulators)",
                grads.len(),
                store.len(),
                self.first.len()
            )));
        }
        for (i, (_, p)) in store.iter().enumerate() {
            if grads[i].shape() != p.value.shape() || self.first[i].shape() != p.value.shape() {
                return Err(NumError::Dimension(format!(
                    "adam: gradient shape {:?} for parameter {} {:?}",
                    grads[i].shape(),
                    p.name,
                    p.value.shape()
                )));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        let ids: Vec<_> = store.iter().map(|(id, p)| (id, p.trainable)).collect();
        for (i, (id, trainable)) in ids.into_iter().enumerate() {
            if !trainable {
                continue;
            }
            let g = grads[i].data();
            let m = self.first[i].data_mut();
            for (mv, &gv) in m.iter_mut().zip(g) {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
            }
            let v = self.second[i].data_mut();
            for (vv, &gv) in v.iter_mut().zip(g) {
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
            }
            let (m, v) = (self.first[i].data(), self.second[i].data());
            let w = store.get_mut(id).data_mut();
            for j in 0..w.len() {
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                w[j] -= self.lr * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
