//! Transformer movement-quality scorer: window embedding, sinusoidal
//! positions, pre-norm encoder blocks and a dense sigmoid head.

mod attention;
mod embed;

pub use attention::{
    add_positional, sinusoidal_table, EncoderBlock, MultiHeadAttention, ATTENTION_SCOPE,
};
pub use embed::{
    body_part_preset, default_body_parts, even_split, BodyPart, EmbedderConfig, EmbedderKind,
    PART_NAMES, UPPER_BODY_PARTS,
};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numcore::nn::{Dense, Norm};
use crate::numcore::{Bindings, Checkpoint, FlopCounter, Graph, NumError, ParamId, ParamStore, Tensor, Var};
use crate::scoregen::QualityScore;
use crate::seeding::rng;
use crate::skeldata::{window_slice, DataError, SkeletalSequence};
use embed::Embedder;

#[derive(Debug, Error)]
pub enum MqaError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub embedder: EmbedderConfig,
    /// Sequence length after resampling; `N = canonical_t / W` windows.
    pub canonical_t: usize,
    pub blocks: usize,
    pub heads: usize,
    /// Feed-forward width inside each block; 0 means `2K`.
    pub ff_dim: usize,
    pub head_hidden: [usize; 2],
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            embedder: EmbedderConfig::default(),
            canonical_t: crate::skeldata::DEFAULT_CANONICAL_T,
            blocks: 2,
            heads: 4,
            ff_dim: 0,
            head_hidden: [128, 32],
        }
    }
}

impl ScorerConfig {
    pub fn windows(&self) -> usize {
        self.canonical_t / self.embedder.window.max(1)
    }

    pub fn validate(&self) -> Result<(), MqaError> {
        self.embedder.validate()?;
        if self.windows() == 0 {
            return Err(MqaError::Dimension(format!(
                "canonical length {} is shorter than window {}",
                self.canonical_t, self.embedder.window
            )));
        }
        let k = self.embedder.output_dim;
        if self.heads == 0 || !k.is_multiple_of(self.heads) {
            return Err(MqaError::Config(format!(
                "K = {k} is not divisible by {} heads",
                self.heads
            )));
        }
        if self.head_hidden.contains(&0) {
            return Err(MqaError::Config("head widths must be positive".into()));
        }
        Ok(())
    }

    fn ff_width(&self) -> usize {
        if self.ff_dim == 0 {
            2 * self.embedder.output_dim
        } else {
            self.ff_dim
        }
    }
}

/// Attention weights from one forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttentionRecord {
    /// `[layer][head]` → `N×N`.
    pub encoder: Vec<Vec<Tensor>>,
    /// `[window][head]` → `P×P` (attention embedder only).
    pub parts: Vec<Vec<Tensor>>,
    pub part_names: Vec<String>,
}

impl AttentionRecord {
    fn matrices(&self) -> impl Iterator<Item = &Tensor> {
        self.encoder.iter().chain(&self.parts).flatten()
    }

    /// Largest deviation of any row sum from 1, and the smallest entry.
    pub fn stochastic_error(&self) -> (f64, f64) {
        let mut worst: f64 = 0.0;
        let mut min = f64::INFINITY;
        for m in self.matrices() {
            let (r, _) = m.dims2().expect("attention matrices are 2-D");
            for i in 0..r {
                let row = m.row(i);
                worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
                min = row.iter().copied().fold(min, f64::min);
            }
        }
        (worst, min)
    }

    /// Per-head part attention averaged over windows.
    pub fn mean_part_attention(&self) -> Vec<Tensor> {
        let Some(first) = self.parts.first() else {
            return Vec::new();
        };
        let mut out: Vec<Tensor> = first.iter().map(|m| Tensor::zeros(m.shape())).collect();
        for window in &self.parts {
            for (acc, m) in out.iter_mut().zip(window) {
                acc.add_assign(m);
            }
        }
        let n = self.parts.len() as f64;
        out.iter().map(|m| m.map(|v| v / n)).collect()
    }

    /// Average share of part attention landing on the named parts.
    pub fn part_mass(&self, names: &[&str]) -> Option<f64> {
        let cols: Vec<usize> = self
            .part_names
            .iter()
            .enumerate()
            .filter(|(_, n)| names.contains(&n.as_str()))
            .map(|(i, _)| i)
            .collect();
        let (mut total, mut count) = (0.0, 0usize);
        for m in self.parts.iter().flatten() {
            let (r, _) = m.dims2().ok()?;
            for i in 0..r {
                total += cols.iter().map(|&j| m.at(i, j)).sum::<f64>();
                count += 1;
            }
        }
        (count > 0).then(|| total / count as f64)
    }
}

/// Output of [`ScorerModel::predict`].
#[derive(Debug, Clone)]
pub struct Prediction {
    pub score: QualityScore,
    pub attention: AttentionRecord,
    pub flops: FlopCounter,
}

/// Graph handles produced by one forward pass.
pub struct ForwardVars {
    /// `1×1` probability.
    pub score: Var,
    pub encoder_attention: Vec<Vec<Var>>,
    pub part_attention: Vec<Vec<Var>>,
    /// `[window][part]` → `1×K_part` sub-network outputs (part embedders only).
    pub part_features: Vec<Vec<Var>>,
    pub tokens: Var,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointMeta {
    config: ScorerConfig,
    #[serde(default)]
    extra: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct ScorerModel {
    config: ScorerConfig,
    store: ParamStore,
    embedder: Embedder,
    blocks: Vec<EncoderBlock>,
    final_norm: Norm,
    head: [Dense; 3],
    positional: Tensor,
    mean: ParamId,
    scale: ParamId,
}

impl ScorerModel {
    pub fn new(config: ScorerConfig, seed: u64) -> Result<Self, MqaError> {
        config.validate()?;
        let mut r = rng(seed);
        let mut store = ParamStore::new();
        let d = config.embedder.feature_dim;
        let k = config.embedder.output_dim;
        let n = config.windows();
        let mean = store.add_buffer("input.mean", Tensor::zeros(&[d]));
        let scale = store.add_buffer("input.scale", Tensor::full(&[d], 1.0));
        let embedder = Embedder::new(&config.embedder, &mut store, &mut r);
        let blocks = (0..config.blocks)
            .map(|b| {
                EncoderBlock::new(
                    &mut store,
                    &format!("encoder.{b}"),
                    k,
                    config.heads,
                    config.ff_width(),
                    &mut r,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let final_norm = Norm::new(&mut store, "encoder.norm", k);
        let [h1, h2] = config.head_hidden;
        let head = [
            Dense::new(&mut store, "head.0", n * k, h1, &mut r),
            Dense::new(&mut store, "head.1", h1, h2, &mut r),
            Dense::new(&mut store, "head.2", h2, 1, &mut r),
        ];
        Ok(Self {
            positional: sinusoidal_table(n, k),
            config,
            store,
            embedder,
            blocks,
            final_norm,
            head,
            mean,
            scale,
        })
    }

    pub fn config(&self) -> &ScorerConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn positional_table(&self) -> &Tensor {
        &self.positional
    }

    pub fn part_names(&self) -> Vec<String> {
        if self.config.embedder.kind.uses_parts() {
            self.config.embedder.body_parts.iter().map(|p| p.name.clone()).collect()
        } else {
            Vec::new()
        }
    }

    /// Sets the per-channel input standardisation from training sequences.
    pub fn fit_normalization(&mut self, data: &[SkeletalSequence]) {
        let d = self.config.embedder.feature_dim;
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let mut count = 0.0;
        for s in data.iter().filter(|s| s.feature_dim() == d) {
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
                let sd = (sq[j] / count - mean[j] * mean[j]).max(0.0).sqrt();
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

    /// Standardised windows of a sequence whose window count matches the model.
    pub fn prepare(&self, x: &SkeletalSequence) -> Result<Vec<Tensor>, MqaError> {
        let d = self.config.embedder.feature_dim;
        if x.feature_dim() != d {
            return Err(MqaError::Dimension(format!(
                "sequence {} has {} features, model expects {d}",
                x.id,
                x.feature_dim()
            )));
        }
        let windowed = window_slice(x, self.config.embedder.window)?;
        if windowed.count() != self.config.windows() {
            return Err(MqaError::Dimension(format!(
                "sequence {} gives {} windows, model expects {} (resample to {} frames)",
                x.id,
                windowed.count(),
                self.config.windows(),
                self.config.canonical_t
            )));
        }
        let mean = self.store.get(self.mean).data();
        let scale = self.store.get(self.scale).data();
        Ok(windowed
            .windows
            .into_iter()
            .map(|w| {
                let mut w = w;
                for (i, v) in w.data_mut().iter_mut().enumerate() {
                    *v = (*v - mean[i % d]) / scale[i % d];
                }
                w
            })
            .collect())
    }

    /// Builds the forward pass for prepared windows on `g`.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bindings,
        windows: &[Tensor],
    ) -> Result<ForwardVars, MqaError> {
        if windows.len() != self.config.windows() {
            return Err(MqaError::Dimension(format!(
                "{} windows given, model expects {}",
                windows.len(),
                self.config.windows()
            )));
        }
        let embedded = self.embedder.forward(g, p, windows)?;
        let table = g.constant(self.positional.clone());
        let mut h = g.add(embedded.tokens, table)?;
        let mut encoder_attention = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (out, maps) = block.forward(g, p, h)?;
            encoder_attention.push(maps);
            h = out;
        }
        let h = self.final_norm.forward(g, p, h)?;
        let width = g.value(h).len();
        let flat = g.reshape(h, &[1, width])?;
        let z = self.head[0].forward_relu(g, p, flat)?;
        let z = self.head[1].forward_relu(g, p, z)?;
        let z = self.head[2].forward(g, p, z)?;
        Ok(ForwardVars {
            score: g.sigmoid(z),
            encoder_attention,
            part_attention: embedded.part_attention,
            part_features: embedded.part_features,
            tokens: embedded.tokens,
        })
    }

    /// Mean binary cross-entropy of a batch of `(windows, target)` pairs.
    pub fn batch_loss(
        &self,
        g: &mut Graph,
        p: &Bindings,
        batch: &[(&[Tensor], f64)],
    ) -> Result<Var, MqaError> {
        let mut preds = Vec::with_capacity(batch.len());
        for (windows, _) in batch {
            preds.push(self.forward(g, p, windows)?.score);
        }
        let stacked = g.concat_rows(&preds)?;
        let target = Tensor::new(&[batch.len(), 1], batch.iter().map(|(_, t)| *t).collect())?;
        Ok(g.bce(stacked, target)?)
    }

    /// Scores one sequence and records attention and matmul FLOPs.
    pub fn predict(&self, x: &SkeletalSequence) -> Result<Prediction, MqaError> {
        let windows = self.prepare(x)?;
        let mut g = Graph::new();
        let p = self.store.bind(&mut g);
        let fv = self.forward(&mut g, &p, &windows)?;
        let grab = |vs: &Vec<Vec<Var>>| -> Vec<Vec<Tensor>> {
            vs.iter()
                .map(|layer| layer.iter().map(|v| g.value(*v).clone()).collect())
                .collect()
        };
        let attention = AttentionRecord {
            encoder: grab(&fv.encoder_attention),
            parts: grab(&fv.part_attention),
            part_names: if fv.part_attention.is_empty() {
                Vec::new()
            } else {
                self.part_names()
            },
        };
        let score = g.value(fv.score).item().clamp(0.0, 1.0);
        Ok(Prediction {
            score: QualityScore::new(score).expect("clamped into range"),
            attention,
            flops: g.flops().clone(),
        })
    }

    pub fn predict_score(
        &self,
        x: &SkeletalSequence,
    ) -> Result<(QualityScore, AttentionRecord), MqaError> {
        let p = self.predict(x)?;
        Ok((p.score, p.attention))
    }

    /// Sub-network outputs per window and part, before concatenation.
    pub fn part_features(&self, x: &SkeletalSequence) -> Result<Vec<Vec<Tensor>>, MqaError> {
        let windows = self.prepare(x)?;
        let mut g = Graph::new();
        let p = self.store.bind(&mut g);
        let fv = self.forward(&mut g, &p, &windows)?;
        Ok(fv
            .part_features
            .iter()
            .map(|w| w.iter().map(|v| g.value(*v).clone()).collect())
            .collect())
    }

    /// `N×K` window embeddings.
    pub fn embed(&self, x: &SkeletalSequence) -> Result<Tensor, MqaError> {
        let windows = self.prepare(x)?;
        let mut g = Graph::new();
        let p = self.store.bind(&mut g);
        let fv = self.forward(&mut g, &p, &windows)?;
        Ok(g.value(fv.tokens).clone())
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        let meta = CheckpointMeta {
            config: self.config.clone(),
            extra,
        };
        Checkpoint::from_store(serde_json::to_string(&meta).expect("meta serialises"), &self.store)
    }

    /// Rebuilds a model and returns the extra metadata saved with it.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, serde_json::Value), MqaError> {
        let meta: CheckpointMeta = serde_json::from_str(&ck.meta)
            .map_err(|e| MqaError::Checkpoint(format!("scorer metadata: {e}")))?;
        let mut model = Self::new(meta.config, 0)?;
        model.store.load_from(&ck.named_tensors())?;
        Ok((model, meta.extra))
    }
}

/// Matrix CSV with a label column and one column per key.
pub fn attention_csv(matrix: &Tensor, row_labels: &[String], col_labels: &[String]) -> String {
    let (r, c) = matrix.dims2().expect("attention matrices are 2-D");
    let mut out = String::from("query");
    for j in 0..c {
        let label = col_labels.get(j).cloned().unwrap_or_else(|| j.to_string());
        write!(out, ",{label}").expect("string write");
    }
    out.push('\n');
    for i in 0..r {
        out.push_str(&row_labels.get(i).cloned().unwrap_or_else(|| i.to_string()));
        for j in 0..c {
            write!(out, ",{:.9}", matrix.at(i, j)).expect("string write");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attention_csv_layout() {
        let m = Tensor::from_rows(&[vec![0.25, 0.75], vec![1.0, 0.0]]).unwrap();
        let labels = vec!["w0".to_string(), "w1".to_string()];
        assert_eq!(
            attention_csv(&m, &labels, &labels),
            "query,w0,w1\nw0,0.250000000,0.750000000\nw1,1.000000000,0.000000000\n"
        );
    }

    #[test]
    fn config_checks() {
        let mut cfg = ScorerConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.windows(), 6);
        cfg.heads = 3;
        assert!(matches!(cfg.validate(), Err(MqaError::Config(_))));
        cfg.heads = 4;
        cfg.canonical_t = 10;
        assert!(matches!(cfg.validate(), Err(MqaError::Dimension(_))));
    }
}
