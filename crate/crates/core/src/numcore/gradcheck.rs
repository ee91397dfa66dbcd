//! Central finite-difference gradient checking.
//!
//! The checker only ever calls the scalar objective, never the reverse
//! sweep, so it stays an independent reference for `Graph::backward`.

use super::params::ParamStore;
use super::Tensor;

pub const FD_STEP: f64 = 1e-4;

/// Numerical gradient of `objective` with respect to every trainable entry.
///
/// Buffers get a zero tensor.
pub fn numerical_gradients(
    store: &ParamStore,
    step: f64,
    mut objective: impl FnMut(&ParamStore) -> f64,
) -> Vec<Tensor> {
    let mut probe = store.clone();
    let mut out = Vec::with_capacity(store.len());
    for (id, p) in store.iter() {
        let mut g = Tensor::zeros(p.value.shape());
        if p.trainable {
            for j in 0..p.value.len() {
                let orig = p.value.data()[j];
                probe.get_mut(id).data_mut()[j] = orig + step;
                let up = objective(&probe);
                probe.get_mut(id).data_mut()[j] = orig - step;
                let down = objective(&probe);
                probe.get_mut(id).data_mut()[j] = orig;
                g.data_mut()[j] = (up - down) / (2.0 * step);
            }
        }
        out.push(g);
    }
    out
}

/// Numerical gradient of a scalar function of one tensor.
pub fn numerical_gradient_of(
    x: &Tensor,
    step: f64,
    mut objective: impl FnMut(&Tensor) -> f64,
) -> Tensor {
    let mut probe = x.clone();
    let mut g = Tensor::zeros(x.shape());
    for j in 0..x.len() {
        let orig = x.data()[j];
        probe.data_mut()[j] = orig + step;
        let up = objective(&probe);
        probe.data_mut()[j] = orig - step;
        let down = objective(&probe);
        probe.data_mut()[j] = orig;
        g.data_mut()[j] = (up - down) / (2.0 * step);
    }
    g
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`; falls back to the absolute difference when
/// both gradients are numerically zero.
pub fn relative_error(a: &Tensor, b: &Tensor) -> f64 {
    let norm = |t: &[f64]| t.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    let scale = norm(a.data()).max(norm(b.data()));
    if scale < 1e-10 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// Largest relative error over all parameter tensors, with the offending name.
pub fn worst_relative_error(
    store: &ParamStore,
    analytic: &[Tensor],
    numeric: &[Tensor],
) -> (f64, String) {
    store
        .iter()
        .map(|(id, p)| (relative_error(&analytic[id.0], &numeric[id.0]), p.name.clone()))
        .fold((0.0, String::new()), |acc, x| if x.0 > acc.0 { x } else { acc })
}
