//! Parameterised building blocks on top of [`Graph`].

use rand::Rng;

use super::params::{glorot_uniform, Bindings, ParamId, ParamStore};
use super::{Graph, NumError, Tensor, Var};

/// Affine layer `x·W + b` for row-vector inputs `x[m×in]`.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            glorot_uniform(&[fan_in, fan_out], fan_in, fan_out, rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[fan_out]));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bindings, x: Var) -> Result<Var, NumError> {
        let xw = g.matmul(x, p.var(self.weight))?;
        g.add_row(xw, p.var(self.bias))
    }

    pub fn forward_relu(&self, g: &mut Graph, p: &Bindings, x: Var) -> Result<Var, NumError> {
        let y = self.forward(g, p, x)?;
        Ok(g.relu(y))
    }
}

/// Valid temporal convolution with one bias per output channel.
#[derive(Debug, Clone, Copy)]
pub struct Conv1d {
    pub kernels: ParamId,
    pub bias: ParamId,
    pub kernel_len: usize,
    pub stride: usize,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel_len: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = kernel_len * in_channels;
        let fan_out = kernel_len * out_channels;
        let kernels = store.add(
            format!("{name}.kernels"),
            glorot_uniform(&[out_channels, kernel_len, in_channels], fan_in, fan_out, rng),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]));
        Self {
            kernels,
            bias,
            kernel_len,
            stride: 1,
        }
    }

    pub fn forward_relu(&self, g: &mut Graph, p: &Bindings, x: Var) -> Result<Var, NumError> {
        let y = g.conv1d(x, p.var(self.kernels), self.stride)?;
        let y = g.add_row(y, p.var(self.bias))?;
        Ok(g.relu(y))
    }
}

/// Layer-normalisation gain and bias.
#[derive(Debug, Clone, Copy)]
pub struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl Norm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Tensor::full(&[width], 1.0)),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[width])),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bindings, x: Var) -> Result<Var, NumError> {
        g.layer_norm(x, p.var(self.gain), p.var(self.bias))
    }
}
