//! Scaled dot-product multi-head self-attention, encoder blocks and the
//! sinusoidal position table.

use rand::Rng;

use super::MqaError;
use crate::numcore::nn::{Dense, Norm};
use crate::numcore::{Bindings, Graph, ParamStore, Tensor, Var};

/// FLOP-counter scope covering the score (`QKᵀ`) and mixing (`AV`) products.
pub const ATTENTION_SCOPE: &str = "attention";

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    query: Dense,
    key: Dense,
    value: Dense,
    output: Dense,
    heads: usize,
    head_dim: usize,
}

impl MultiHeadAttention {
    /// Projects `model_dim` to `heads·head_dim` for queries, keys and values and back.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        model_dim: usize,
        heads: usize,
        head_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let inner = heads * head_dim;
        Self {
            query: Dense::new(store, &format!("{name}.query"), model_dim, inner, rng),
            key: Dense::new(store, &format!("{name}.key"), model_dim, inner, rng),
            value: Dense::new(store, &format!("{name}.value"), model_dim, inner, rng),
            output: Dense::new(store, &format!("{name}.output"), inner, model_dim, rng),
            heads,
            head_dim,
        }
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    /// Self-attention over the rows of `x`; returns the output and one `L×L`
    /// attention matrix per head.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bindings,
        x: Var,
    ) -> Result<(Var, Vec<Var>), MqaError> {
        let q = self.query.forward(g, p, x)?;
        let k = self.key.forward(g, p, x)?;
        let v = self.value.forward(g, p, x)?;
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        let mut maps = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols: Vec<usize> = (h * self.head_dim..(h + 1) * self.head_dim).collect();
            let qh = g.gather_cols(q, &cols)?;
            let kh = g.gather_cols(k, &cols)?;
            let vh = g.gather_cols(v, &cols)?;
            let kt = g.transpose(kh)?;
            let prev = g.set_scope(Some(ATTENTION_SCOPE));
            let scores = g.matmul(qh, kt)?;
            g.set_scope(prev);
            let scores = g.scale(scores, scale);
            let attn = g.softmax(scores, 1)?;
            let prev = g.set_scope(Some(ATTENTION_SCOPE));
            let mixed = g.matmul(attn, vh)?;
            g.set_scope(prev);
            maps.push(attn);
            outs.push(mixed);
        }
        let joined = g.concat_cols(&outs)?;
        Ok((self.output.forward(g, p, joined)?, maps))
    }
}

/// Pre-norm encoder block: `x + MHA(LN(x))`, then `h + FFN(LN(h))`.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    norm1: Norm,
    attention: MultiHeadAttention,
    norm2: Norm,
    ff1: Dense,
    ff2: Dense,
}

impl EncoderBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        model_dim: usize,
        heads: usize,
        ff_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self, MqaError> {
        if heads == 0 || !model_dim.is_multiple_of(heads) {
            return Err(MqaError::Config(format!(
                "model width {model_dim} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            norm1: Norm::new(store, &format!("{name}.norm1"), model_dim),
            attention: MultiHeadAttention::new(
                store,
                &format!("{name}.attention"),
                model_dim,
                heads,
                model_dim / heads,
                rng,
            ),
            norm2: Norm::new(store, &format!("{name}.norm2"), model_dim),
            ff1: Dense::new(store, &format!("{name}.ff1"), model_dim, ff_dim, rng),
            ff2: Dense::new(store, &format!("{name}.ff2"), ff_dim, model_dim, rng),
        })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bindings,
        x: Var,
    ) -> Result<(Var, Vec<Var>), MqaError> {
        let n = self.norm1.forward(g, p, x)?;
        let (a, maps) = self.attention.forward(g, p, n)?;
        let h = g.add(x, a)?;
        let n = self.norm2.forward(g, p, h)?;
        let f = self.ff1.forward_relu(g, p, n)?;
        let f = self.ff2.forward(g, p, f)?;
        Ok((g.add(h, f)?, maps))
    }
}

/// Fixed table with `sin` in even and `cos` in odd columns.
pub fn sinusoidal_table(n: usize, k: usize) -> Tensor {
    let mut data = Vec::with_capacity(n * k);
    for pos in 0..n {
        for j in 0..k {
            let i = (j / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * i / k as f64);
            data.push(if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::new(&[n, k], data).expect("table shape")
}

/// Elementwise `z + table`.
pub fn add_positional(z: &Tensor, table: &Tensor) -> Result<Tensor, MqaError> {
    if z.shape() != table.shape() {
        return Err(MqaError::Dimension(format!(
            "tokens {:?} and position table {:?} differ",
            z.shape(),
            table.shape()
        )));
    }
    Ok(z.zip_map(table, |a, b| a + b)?)
}
