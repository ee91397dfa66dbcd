//! Window feature extractors: dense, temporal convolution, and the per-body-part
//! hierarchical extractor with optional attention over parts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::MultiHeadAttention;
use super::MqaError;
use crate::numcore::nn::{Conv1d, Dense};
use crate::numcore::{Bindings, Graph, ParamStore, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Mlp,
    Cnn,
    Hfe,
    #[default]
    HfeA,
}

impl EmbedderKind {
    pub const ALL: [EmbedderKind; 4] = [Self::Mlp, Self::Cnn, Self::Hfe, Self::HfeA];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mlp => "mlp",
            Self::Cnn => "cnn",
            Self::Hfe => "hfe",
            Self::HfeA => "hfe_a",
        }
    }

    pub fn uses_parts(self) -> bool {
        matches!(self, Self::Hfe | Self::HfeA)
    }
}

impl std::str::FromStr for EmbedderKind {
    type Err = MqaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s || (s == "hfe-a" && *k == Self::HfeA))
            .ok_or_else(|| MqaError::Config(format!("unknown embedder `{s}` (mlp, cnn, hfe, hfe_a)")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BodyPart {
    pub name: String,
    pub joints: Vec<usize>,
}

impl BodyPart {
    pub fn new(name: &str, joints: impl IntoIterator<Item = usize>) -> Self {
        Self {
            name: name.to_string(),
            joints: joints.into_iter().collect(),
        }
    }

    /// Feature columns of the part (three per joint).
    pub fn columns(&self) -> Vec<usize> {
        self.joints.iter().flat_map(|j| [3 * j, 3 * j + 1, 3 * j + 2]).collect()
    }
}

/// Part names of the five-part layouts, in order.
pub const PART_NAMES: [&str; 5] = ["trunk_head", "left_arm", "right_arm", "left_leg", "right_leg"];
pub const UPPER_BODY_PARTS: [&str; 3] = ["trunk_head", "left_arm", "right_arm"];

fn five(groups: [std::ops::RangeInclusive<usize>; 5]) -> Vec<BodyPart> {
    PART_NAMES
        .iter()
        .zip(groups)
        .map(|(n, r)| BodyPart::new(n, r))
        .collect()
}

/// Named body-part layouts.
///
/// * `kinect25`: Kinect v2 joint order.
/// * `uiprmd_kinect22`: 22-joint processed Kinect layout.
/// * `vicon39`: 39 Vicon segments grouped in contiguous blocks.
pub fn body_part_preset(name: &str) -> Result<Vec<BodyPart>, MqaError> {
    Ok(match name {
        "kinect25" => vec![
            BodyPart::new("trunk_head", [0, 1, 2, 3, 20]),
            BodyPart::new("left_arm", [4, 5, 6, 7, 21, 22]),
            BodyPart::new("right_arm", [8, 9, 10, 11, 23, 24]),
            BodyPart::new("left_leg", 12..=15),
            BodyPart::new("right_leg", 16..=19),
        ],
        "uiprmd_kinect22" => five([0..=5, 6..=9, 10..=13, 14..=17, 18..=21]),
        "vicon39" => five([0..=10, 11..=17, 18..=24, 25..=31, 32..=38]),
        other => {
            return Err(MqaError::Config(format!(
                "unknown body-part preset `{other}` (kinect25, uiprmd_kinect22, vicon39)"
            )))
        }
    })
}

/// The preset matching a joint count, or an even split into five contiguous parts.
pub fn default_body_parts(joints: usize) -> Vec<BodyPart> {
    match joints {
        25 => body_part_preset("kinect25").expect("known preset"),
        22 => body_part_preset("uiprmd_kinect22").expect("known preset"),
        39 => body_part_preset("vicon39").expect("known preset"),
        m => even_split(m, 5.min(m.max(1))),
    }
}

/// `parts` contiguous groups whose sizes differ by at most one.
pub fn even_split(joints: usize, parts: usize) -> Vec<BodyPart> {
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let size = joints / parts + usize::from(p < joints % parts);
        let name = PART_NAMES.get(p).map_or_else(|| format!("part{p}"), |s| s.to_string());
        out.push(BodyPart::new(&name, start..start + size));
        start += size;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    /// Output width `K`.
    pub output_dim: usize,
    /// Window length `W`.
    pub window: usize,
    /// Feature width `D = 3M`.
    pub feature_dim: usize,
    pub body_parts: Vec<BodyPart>,
    pub hfe_attention_heads: usize,
    pub hfe_head_dim: usize,
    pub mlp_hidden: [usize; 2],
    pub cnn_channels: [usize; 2],
    pub cnn_kernels: [usize; 2],
    pub part_channels: usize,
    pub part_kernel: usize,
    /// Per-part feature width `K_part`.
    pub part_dim: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::HfeA,
            output_dim: 256,
            window: 40,
            feature_dim: 66,
            body_parts: default_body_parts(22),
            hfe_attention_heads: 5,
            hfe_head_dim: 16,
            mlp_hidden: [256, 256],
            cnn_channels: [64, 64],
            cnn_kernels: [5, 5],
            part_channels: 32,
            part_kernel: 5,
            part_dim: 64,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<(), MqaError> {
        let cfg = |m: String| Err(MqaError::Config(m));
        if self.output_dim == 0 || self.window == 0 {
            return cfg("output dim and window must be positive".into());
        }
        if self.feature_dim == 0 || !self.feature_dim.is_multiple_of(3) {
            return cfg(format!("feature dim {} is not a positive multiple of 3", self.feature_dim));
        }
        if self.hfe_attention_heads == 0 || self.hfe_head_dim == 0 {
            return cfg("part attention needs at least one head of positive width".into());
        }
        match self.kind {
            EmbedderKind::Mlp => {
                if self.mlp_hidden.contains(&0) {
                    return cfg("mlp hidden widths must be positive".into());
                }
            }
            EmbedderKind::Cnn => {
                if self.cnn_channels.contains(&0) || self.cnn_kernels.contains(&0) {
                    return cfg("cnn channels and kernels must be positive".into());
                }
                let field = self.cnn_kernels[0] + self.cnn_kernels[1] - 1;
                if self.window < field {
                    return Err(MqaError::Dimension(format!(
                        "window {} is shorter than the receptive field {field}",
                        self.window
                    )));
                }
            }
            EmbedderKind::Hfe | EmbedderKind::HfeA => {
                self.check_partition()?;
                if self.part_channels == 0 || self.part_dim == 0 || self.part_kernel == 0 {
                    return cfg("part sub-network sizes must be positive".into());
                }
                if self.window < self.part_kernel {
                    return Err(MqaError::Dimension(format!(
                        "window {} is shorter than the part kernel {}",
                        self.window, self.part_kernel
                    )));
                }
            }
        }
        Ok(())
    }

    /// Every joint `0..M` must belong to exactly one non-empty part.
    pub fn check_partition(&self) -> Result<(), MqaError> {
        let m = self.feature_dim / 3;
        let mut seen = vec![0usize; m];
        for part in &self.body_parts {
            if part.joints.is_empty() {
                return Err(MqaError::Config(format!("body part `{}` has no joints", part.name)));
            }
            for &j in &part.joints {
                if j >= m {
                    return Err(MqaError::Config(format!(
                        "body part `{}` lists joint {j} but the skeleton has {m}",
                        part.name
                    )));
                }
                seen[j] += 1;
            }
        }
        if self.body_parts.is_empty() {
            return Err(MqaError::Config("no body parts configured".into()));
        }
        if let Some(j) = seen.iter().position(|&c| c != 1) {
            return Err(MqaError::Config(format!(
                "body parts do not partition the joints: joint {j} appears {} times",
                seen[j]
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PartNet {
    columns: Vec<usize>,
    conv: Conv1d,
    dense: Dense,
}

#[derive(Debug, Clone)]
pub(crate) enum Embedder {
    Mlp {
        layers: [Dense; 3],
    },
    Cnn {
        convs: [Conv1d; 2],
        out: Dense,
    },
    Parts {
        parts: Vec<PartNet>,
        attention: Option<MultiHeadAttention>,
        out: Dense,
    },
}

/// Window embeddings `N×K` plus, for the attention variant, one `Var` per
/// window and head holding the part-attention matrix.
pub(crate) struct Embedded {
    pub tokens: Var,
    pub part_attention: Vec<Vec<Var>>,
    pub part_features: Vec<Vec<Var>>,
}

impl Embedder {
    pub fn new(cfg: &EmbedderConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let (w, d, k) = (cfg.window, cfg.feature_dim, cfg.output_dim);
        match cfg.kind {
            EmbedderKind::Mlp => {
                let [h1, h2] = cfg.mlp_hidden;
                Embedder::Mlp {
                    layers: [
                        Dense::new(store, "embed.mlp.0", w * d, h1, rng),
                        Dense::new(store, "embed.mlp.1", h1, h2, rng),
                        Dense::new(store, "embed.mlp.2", h2, k, rng),
                    ],
                }
            }
            EmbedderKind::Cnn => {
                let [c1, c2] = cfg.cnn_channels;
                let [k1, k2] = cfg.cnn_kernels;
                Embedder::Cnn {
                    convs: [
                        Conv1d::new(store, "embed.cnn.0", d, c1, k1, rng),
                        Conv1d::new(store, "embed.cnn.1", c1, c2, k2, rng),
                    ],
                    out: Dense::new(store, "embed.cnn.out", c2, k, rng),
                }
            }
            EmbedderKind::Hfe | EmbedderKind::HfeA => {
                let parts: Vec<PartNet> = cfg
                    .body_parts
                    .iter()
                    .map(|bp| {
                        let cols = bp.columns();
                        let name = format!("embed.part.{}", bp.name);
                        PartNet {
                            conv: Conv1d::new(
                                store,
                                &format!("{name}.conv"),
                                cols.len(),
                                cfg.part_channels,
                                cfg.part_kernel,
                                rng,
                            ),
                            dense: Dense::new(
                                store,
                                &format!("{name}.dense"),
                                cfg.part_channels,
                                cfg.part_dim,
                                rng,
                            ),
                            columns: cols,
                        }
                    })
                    .collect();
                if cfg.kind == EmbedderKind::HfeA {
                    let attention = MultiHeadAttention::new(
                        store,
                        "embed.part_attention",
                        cfg.part_dim,
                        cfg.hfe_attention_heads,
                        cfg.hfe_head_dim,
                        rng,
                    );
                    Embedder::Parts {
                        parts,
                        attention: Some(attention),
                        out: Dense::new(store, "embed.out", cfg.part_dim, k, rng),
                    }
                } else {
                    let width = cfg.part_dim * cfg.body_parts.len();
                    Embedder::Parts {
                        parts,
                        attention: None,
                        out: Dense::new(store, "embed.out", width, k, rng),
                    }
                }
            }
        }
    }

    /// Embeds standardised `W×D` windows into `N×K` tokens.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bindings,
        windows: &[Tensor],
    ) -> Result<Embedded, MqaError> {
        let mut part_attention = Vec::new();
        let mut part_features = Vec::new();
        let tokens = match self {
            Embedder::Mlp { layers } => {
                let flat: Vec<f64> = windows.iter().flat_map(|w| w.data().iter().copied()).collect();
                let width = windows[0].len();
                let x = g.constant(Tensor::new(&[windows.len(), width], flat)?);
                let h = layers[0].forward_relu(g, p, x)?;
                let h = layers[1].forward_relu(g, p, h)?;
                layers[2].forward(g, p, h)?
            }
            Embedder::Cnn { convs, out } => {
                let mut pooled = Vec::with_capacity(windows.len());
                for w in windows {
                    let x = g.constant(w.clone());
                    let h = convs[0].forward_relu(g, p, x)?;
                    let h = convs[1].forward_relu(g, p, h)?;
                    pooled.push(g.global_max_pool(h)?);
                }
                let stacked = g.concat_rows(&pooled)?;
                out.forward(g, p, stacked)?
            }
            Embedder::Parts {
                parts,
                attention,
                out,
            } => {
                let mut rows = Vec::with_capacity(windows.len());
                for w in windows {
                    let x = g.constant(w.clone());
                    let mut feats = Vec::with_capacity(parts.len());
                    for part in parts {
                        let cols = g.gather_cols(x, &part.columns)?;
                        let h = part.conv.forward_relu(g, p, cols)?;
                        let pooled = g.global_max_pool(h)?;
                        let width = g.value(pooled).len();
                        let pooled = g.reshape(pooled, &[1, width])?;
                        feats.push(part.dense.forward_relu(g, p, pooled)?);
                    }
                    part_features.push(feats.clone());
                    let row = match attention {
                        Some(mha) => {
                            let stacked = g.concat_rows(&feats)?;
                            let (mixed, maps) = mha.forward(g, p, stacked)?;
                            part_attention.push(maps);
                            let pooled = g.global_max_pool(mixed)?;
                            let width = g.value(pooled).len();
                            g.reshape(pooled, &[1, width])?
                        }
                        None => g.concat_cols(&feats)?,
                    };
                    rows.push(row);
                }
                let stacked = g.concat_rows(&rows)?;
                out.forward(g, p, stacked)?
            }
        };
        Ok(Embedded {
            tokens,
            part_attention,
            part_features,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_partition_their_skeletons() {
        for (name, m) in [("kinect25", 25), ("uiprmd_kinect22", 22), ("vicon39", 39)] {
            let cfg = EmbedderConfig {
                feature_dim: 3 * m,
                body_parts: body_part_preset(name).unwrap(),
                ..Default::default()
            };
            cfg.check_partition().unwrap();
            assert_eq!(cfg.body_parts.len(), 5);
        }
        assert!(body_part_preset("nope").is_err());
    }

    #[test]
    fn partition_errors() {
        let mut cfg = EmbedderConfig {
            feature_dim: 12,
            body_parts: vec![BodyPart::new("a", [0, 1]), BodyPart::new("b", [2])],
            ..Default::default()
        };
        assert!(matches!(cfg.check_partition(), Err(MqaError::Config(_))));
        cfg.body_parts.push(BodyPart::new("c", [3, 0]));
        assert!(cfg.check_partition().is_err());
        cfg.body_parts[2] = BodyPart::new("c", [3]);
        cfg.check_partition().unwrap();
    }

    #[test]
    fn even_split_sizes() {
        let parts = even_split(7, 3);
        let sizes: Vec<usize> = parts.iter().map(|p| p.joints.len()).collect();
        assert_eq!(sizes, vec![3, 2, 2]);
        assert_eq!(parts[2].joints, vec![5, 6]);
        assert_eq!(BodyPart::new("x", [2]).columns(), vec![6, 7, 8]);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("hfe_a".parse::<EmbedderKind>().unwrap(), EmbedderKind::HfeA);
        assert_eq!("cnn".parse::<EmbedderKind>().unwrap(), EmbedderKind::Cnn);
        assert!("rnn".parse::<EmbedderKind>().is_err());
    }
}
