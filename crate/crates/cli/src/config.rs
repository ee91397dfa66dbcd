//! The TOML configuration file and seed resolution.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mqa_core::augment::AugmentationSpec;
use mqa_core::harness::{default_policy, TrainConfig};
use mqa_core::scoregen::ScoreGenConfig;
use mqa_core::synth::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Correct and incorrect repetitions per subject.
    #[default]
    Exercise,
    /// Sequences with a known quality score in [0, 1].
    Scored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SignalJoints {
    /// Quality deviations touch every joint.
    #[default]
    All,
    /// Only trunk/head and arm joints carry the quality signal.
    UpperBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub kind: SynthKind,
    /// Number of exercises, named `e01`, `e02`, ...
    pub exercises: usize,
    /// Sequences per exercise for the scored kind.
    pub count: usize,
    pub signal: SignalJoints,
    /// Shape of each exercise; `exercise` and `seed` are set per exercise.
    pub shape: SynthConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            kind: SynthKind::Exercise,
            exercises: 1,
            count: 40,
            signal: SignalJoints::All,
            shape: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub policy: Vec<AugmentationSpec>,
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self {
            policy: default_policy(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MqaConfig {
    /// Master seed. Copied into every section, so section-level seeds are ignored.
    pub seed: u64,
    pub synth: SynthSection,
    pub augment: AugmentSection,
    pub scoregen: ScoreGenConfig,
    pub train: TrainConfig,
}

impl MqaConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Applies a seed override and propagates the master seed into the sections.
    pub fn resolve(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.synth.shape.seed = self.seed;
        self.scoregen.seed = self.seed;
        self.scoregen.autoencoder.seed = self.seed;
        self.train.seed = self.seed;
        self
    }

    /// Compact JSON with fields in declaration order.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_survives_reserialisation() {
        let cfg = MqaConfig::from_toml(
            "seed = 3\n[train]\nruns = 2\n[[augment.policy]]\nkind = \"pace\"\nfactor = 1.0\n",
        )
        .unwrap()
        .resolve(None);
        let again = MqaConfig::from_toml(&cfg.to_toml()).unwrap().resolve(None);
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.train.runs, 2);
        assert_eq!(cfg.train.seed, 3);
    }

    #[test]
    fn seed_override_wins() {
        let cfg = MqaConfig::from_toml("seed = 3").unwrap().resolve(Some(9));
        assert_eq!(
            (cfg.seed, cfg.scoregen.seed, cfg.synth.shape.seed),
            (9, 9, 9)
        );
        assert_ne!(cfg.hash(), MqaConfig::default().resolve(Some(3)).hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(MqaConfig::from_toml("sede = 1").is_err());
        assert!(MqaConfig::from_toml("[train]\nlearning_rate = 1.0").is_err());
    }
}
