//! Dense denoising autoencoder over flattened, channel-standardised sequences.
//!
//! The training objective is the reconstruction MSE of the clean batch from
//! its augmented copy plus `λ·Σ|W|` over the encoder weight matrices.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ScoreGenError;
use crate::augment::{augment_batch, AugmentationSpec};
use crate::numcore::nn::Dense;
use crate::numcore::{AdamState, Bindings, Checkpoint, Graph, ParamId, ParamStore, Tensor, Var};
use crate::seeding::{derive_seed, rng};
use crate::skeldata::SkeletalSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    /// L1 weight on the encoder weights.
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Augmentations applied to every training batch; empty trains on clean data.
    pub policy: Vec<AugmentationSpec>,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 64],
            latent_dim: 8,
            lambda: 1e-4,
            epochs: 200,
            batch_size: 8,
            lr: 1e-3,
            seed: 0,
            policy: Vec::new(),
        }
    }
}

/// Shape record stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderMeta {
    pub frames: usize,
    pub features: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct Autoencoder {
    meta: AutoencoderMeta,
    store: ParamStore,
    encoder: Vec<Dense>,
    decoder: Vec<Dense>,
    mean: ParamId,
    scale: ParamId,
}

/// Per-epoch averages over batches.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AeTrainLog {
    pub total: Vec<f64>,
    pub reconstruction: Vec<f64>,
}

impl Autoencoder {
    pub fn new(meta: AutoencoderMeta, seed: u64) -> Self {
        let mut r = rng(seed);
        let mut store = ParamStore::new();
        let input = meta.frames * meta.features;
        let mean = store.add_buffer("norm.mean", Tensor::zeros(&[meta.features]));
        let scale = store.add_buffer("norm.scale", Tensor::full(&[meta.features], 1.0));
        let mut widths = vec![input];
        widths.extend(&meta.hidden);
        widths.push(meta.latent_dim);
        let encoder = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(&mut store, &format!("encoder.{i}"), w[0], w[1], &mut r))
            .collect();
        let rev: Vec<usize> = widths.iter().rev().copied().collect();
        let decoder = rev
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(&mut store, &format!("decoder.{i}"), w[0], w[1], &mut r))
            .collect();
        Self {
            meta,
            store,
            encoder,
            decoder,
            mean,
            scale,
        }
    }

    pub fn meta(&self) -> &AutoencoderMeta {
        &self.meta
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn latent_dim(&self) -> usize {
        self.meta.latent_dim
    }

    /// Sets the per-channel standardisation from the frames of `data`.
    pub fn fit_normalization(&mut self, data: &[SkeletalSequence]) {
        let d = self.meta.features;
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let mut count = 0.0;
        for s in data {
            for row in s.frames().data().chunks(d) {
                for j in 0..d {
                    sum[j] += row[j];
                    sq[j] += row[j] * row[j];
                }
                count += 1.0;
            }
        }
        if count == 0.0 {
            return;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let var = (sq[j] / count - mean[j] * mean[j]).max(0.0);
                let sd = var.sqrt();
                if sd < 1e-8 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        *self.store.get_mut(self.mean) = Tensor::vector(mean);
        *self.store.get_mut(self.scale) = Tensor::vector(scale);
    }

    fn check_shape(&self, x: &SkeletalSequence) -> Result<(), ScoreGenError> {
        if x.len() != self.meta.frames || x.feature_dim() != self.meta.features {
            return Err(ScoreGenError::Dimension(format!(
                "sequence {} is {}×{}, autoencoder expects {}×{}",
                x.id,
                x.len(),
                x.feature_dim(),
                self.meta.frames,
                self.meta.features
            )));
        }
        Ok(())
    }

    /// Standardised, flattened rows for a batch of sequences.
    pub fn batch_matrix(&self, batch: &[&SkeletalSequence]) -> Result<Tensor, ScoreGenError> {
        let d = self.meta.features;
        let mean = self.store.get(self.mean).data();
        let scale = self.store.get(self.scale).data();
        let mut out = Vec::with_capacity(batch.len() * self.meta.frames * d);
        for s in batch {
            self.check_shape(s)?;
            for row in s.frames().data().chunks(d) {
                out.extend(row.iter().enumerate().map(|(j, v)| (v - mean[j]) / scale[j]));
            }
        }
        Ok(Tensor::new(&[batch.len(), self.meta.frames * d], out)?)
    }

    fn encode_vars(&self, g: &mut Graph, p: &Bindings, x: Var) -> Result<Var, ScoreGenError> {
        let mut h = x;
        let last = self.encoder.len() - 1;
        for (i, layer) in self.encoder.iter().enumerate() {
            h = if i == last {
                layer.forward(g, p, h)?
            } else {
                layer.forward_relu(g, p, h)?
            };
        }
        Ok(h)
    }

    fn decode_vars(&self, g: &mut Graph, p: &Bindings, z: Var) -> Result<Var, ScoreGenError> {
        let mut h = z;
        let last = self.decoder.len() - 1;
        for (i, layer) in self.decoder.iter().enumerate() {
            h = if i == last {
                layer.forward(g, p, h)?
            } else {
                layer.forward_relu(g, p, h)?
            };
        }
        Ok(h)
    }

    /// Builds the training objective on a graph; returns `(total, reconstruction)`.
    pub fn loss_graph(
        &self,
        g: &mut Graph,
        inputs: &Tensor,
        targets: &Tensor,
        lambda: f64,
    ) -> Result<(Var, Var), ScoreGenError> {
        let p = self.store.bind(g);
        let x = g.constant(inputs.clone());
        let t = g.constant(targets.clone());
        let z = self.encode_vars(g, &p, x)?;
        let y = self.decode_vars(g, &p, z)?;
        let recon = g.mse(y, t)?;
        if lambda == 0.0 {
            return Ok((recon, recon));
        }
        let mut l1 = Vec::with_capacity(self.encoder.len());
        for layer in &self.encoder {
            l1.push(g.abs_sum(p.var(layer.weight)));
        }
        let mut reg = l1[0];
        for &v in &l1[1..] {
            reg = g.add(reg, v)?;
        }
        let reg = g.scale(reg, lambda);
        let total = g.add(recon, reg)?;
        Ok((total, recon))
    }

    /// Sum of absolute encoder weights.
    pub fn encoder_l1(&self) -> f64 {
        self.encoder
            .iter()
            .map(|l| self.store.get(l.weight).data().iter().map(|v| v.abs()).sum::<f64>())
            .sum()
    }

    pub fn encoder_weight_count(&self) -> usize {
        self.encoder.iter().map(|l| self.store.get(l.weight).len()).sum()
    }

    /// Latent code of one sequence.
    pub fn encode_latent(&self, x: &SkeletalSequence) -> Result<Vec<f64>, ScoreGenError> {
        Ok(self.encode_batch(&[x])?.pop().expect("one row"))
    }

    pub fn encode_batch(&self, xs: &[&SkeletalSequence]) -> Result<Vec<Vec<f64>>, ScoreGenError> {
        let m = self.batch_matrix(xs)?;
        let mut g = Graph::new();
        let p = self.store.bind(&mut g);
        let x = g.constant(m);
        let z = self.encode_vars(&mut g, &p, x)?;
        Ok(g.value(z)
            .data()
            .chunks(self.meta.latent_dim)
            .map(<[f64]>::to_vec)
            .collect())
    }

    /// Standardised-space MSE between `g(f(input))` and `target`.
    pub fn reconstruction_error(
        &self,
        inputs: &[&SkeletalSequence],
        targets: &[&SkeletalSequence],
    ) -> Result<f64, ScoreGenError> {
        let x = self.batch_matrix(inputs)?;
        let t = self.batch_matrix(targets)?;
        let mut g = Graph::new();
        let (_, recon) = self.loss_graph(&mut g, &x, &t, 0.0)?;
        Ok(g.value(recon).item())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = serde_json::to_string(&self.meta).expect("meta serialises");
        Checkpoint::from_store(meta, &self.store)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ScoreGenError> {
        let meta: AutoencoderMeta = serde_json::from_str(&ck.meta)
            .map_err(|e| ScoreGenError::Artifact(format!("autoencoder metadata: {e}")))?;
        let mut ae = Self::new(meta, 0);
        ae.store.load_from(&ck.named_tensors())?;
        Ok(ae)
    }
}

/// Trains a (denoising) autoencoder on equally shaped sequences.
///
/// Each batch is augmented with `cfg.policy` before encoding while the
/// reconstruction target stays the clean batch.
pub fn train_denoising_autoencoder(
    data: &[SkeletalSequence],
    cfg: &AutoencoderConfig,
) -> Result<(Autoencoder, AeTrainLog), ScoreGenError> {
    let first = data
        .first()
        .ok_or_else(|| ScoreGenError::Training("no training sequences".into()))?;
    if cfg.lambda < 0.0 || !cfg.lambda.is_finite() {
        return Err(ScoreGenError::Training(format!("lambda {} must be ≥ 0", cfg.lambda)));
    }
    if cfg.batch_size == 0 || cfg.latent_dim == 0 {
        return Err(ScoreGenError::Training("batch size and latent dim must be positive".into()));
    }
    let meta = AutoencoderMeta {
        frames: first.len(),
        features: first.feature_dim(),
        hidden: cfg.hidden.clone(),
        latent_dim: cfg.latent_dim,
        lambda: cfg.lambda,
    };
    let mut ae = Autoencoder::new(meta, derive_seed(cfg.seed, 0));
    for s in data {
        ae.check_shape(s)?;
    }
    ae.fit_normalization(data);
    let mut adam = AdamState::new(&ae.store, cfg.lr);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffler = rng(derive_seed(cfg.seed, 1));
    let mut log = AeTrainLog::default();
    let mut batch_counter = 0u64;
    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffler);
        let (mut total, mut recon, mut batches) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let clean: Vec<SkeletalSequence> = chunk.iter().map(|&i| data[i].clone()).collect();
            let noisy = if cfg.policy.is_empty() {
                clean.clone()
            } else {
                augment_batch(&clean, &cfg.policy, derive_seed(cfg.seed ^ 0xA5A5, batch_counter))?
                    .sequences
            };
            batch_counter += 1;
            let x = ae.batch_matrix(&noisy.iter().collect::<Vec<_>>())?;
            let t = ae.batch_matrix(&clean.iter().collect::<Vec<_>>())?;
            let mut g = Graph::new();
            let (loss, rec) = ae.loss_graph(&mut g, &x, &t, cfg.lambda)?;
            total += g.value(loss).item();
            recon += g.value(rec).item();
            batches += 1.0;
            let grads = g.backward(loss)?.for_params(&ae.store);
            adam.step(&mut ae.store, &grads)?;
        }
        log.total.push(total / batches);
        log.reconstruction.push(recon / batches);
    }
    Ok((ae, log))
}
