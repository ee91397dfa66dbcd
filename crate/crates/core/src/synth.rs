//! Seeded synthetic skeletal data for tests, demos and smoke runs.
//!
//! Every joint angle follows a sinusoid whose amplitude and phase are fixed per
//! exercise. Subjects add a small offset and tempo change, repetitions add
//! Gaussian noise, and incorrect (or low-quality) repetitions add a structured
//! deviation on a subset of joints.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::numcore::Tensor;
use crate::seeding::{derive_seed, rng};
use crate::skeldata::{
    save_sequence, DataError, DatasetItem, DatasetManifest, Device, FileFormat, Label,
    ManifestEntry, SkeletalSequence, KIMORE_SCORE_MAX,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub exercise: String,
    pub joints: usize,
    pub frames: usize,
    pub subjects: usize,
    pub correct_per_subject: usize,
    pub incorrect_per_subject: usize,
    /// Standard deviation of per-frame noise.
    pub noise: f64,
    /// Size of the incorrect-repetition deviation relative to the motion amplitude.
    pub deviation: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            exercise: "e01".into(),
            joints: 22,
            frames: 120,
            subjects: 4,
            correct_per_subject: 6,
            incorrect_per_subject: 6,
            noise: 0.02,
            deviation: 0.6,
            seed: 0,
        }
    }
}

struct Motion {
    amp: Vec<f64>,
    phase: Vec<f64>,
    freq: Vec<f64>,
}

impl Motion {
    fn new(channels: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        Self {
            amp: (0..channels).map(|_| r.random_range(0.2..1.0)).collect(),
            phase: (0..channels)
                .map(|_| r.random_range(0.0..std::f64::consts::TAU))
                .collect(),
            freq: (0..channels)
                .map(|_| if r.random_bool(0.5) { 1.0 } else { 2.0 })
                .collect(),
        }
    }

    /// Frame matrix with optional per-channel deviation scale in `[0, ∞)`.
    fn render(
        &self,
        frames: usize,
        tempo: f64,
        offset: &[f64],
        deviation: &[f64],
        noise: f64,
        r: &mut impl Rng,
    ) -> Tensor {
        let d = self.amp.len();
        let normal = Normal::new(0.0, noise.max(0.0)).expect("valid noise");
        let mut data = Vec::with_capacity(frames * d);
        for t in 0..frames {
            let u = t as f64 / frames.max(2).saturating_sub(1) as f64;
            for c in 0..d {
                let arg = std::f64::consts::TAU * self.freq[c] * u * tempo + self.phase[c];
                let clean = self.amp[c] * arg.sin();
                let dev = deviation[c] * self.amp[c] * (0.5 * arg).cos().abs();
                data.push(clean + dev + offset[c] + normal.sample(r));
            }
        }
        Tensor::new(&[frames, d], data).expect("shape matches data")
    }
}

fn device_for(joints: usize) -> Device {
    if joints == crate::skeldata::VICON_JOINTS {
        Device::Vicon
    } else {
        Device::Kinect
    }
}

/// Correct and incorrect repetitions of one exercise, with manifest rows.
pub fn synth_exercise(cfg: &SynthConfig) -> Vec<DatasetItem> {
    let d = cfg.joints * 3;
    let motion = Motion::new(d, derive_seed(cfg.seed, 0));
    let mut items = Vec::new();
    for s in 0..cfg.subjects {
        let mut sr = rng(derive_seed(cfg.seed, 1000 + s as u64));
        let offset: Vec<f64> = (0..d).map(|_| sr.random_range(-0.05..0.05)).collect();
        let tempo = sr.random_range(0.95..1.05);
        let subject = format!("s{:02}", s + 1);
        let reps = (0..cfg.correct_per_subject)
            .map(|i| (Label::Correct, i))
            .chain((0..cfg.incorrect_per_subject).map(|i| (Label::Incorrect, i)));
        for (label, i) in reps {
            let tag = if label == Label::Correct { "c" } else { "i" };
            let id = format!("{}_{subject}_{tag}{:02}", cfg.exercise, i + 1);
            let mut rr = rng(derive_seed(cfg.seed, derive_seed(s as u64, items.len() as u64)));
            let deviation: Vec<f64> = if label == Label::Incorrect {
                (0..d)
                    .map(|_| {
                        if rr.random_bool(0.5) {
                            cfg.deviation * rr.random_range(0.5..1.5)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            } else {
                vec![0.0; d]
            };
            let frames = motion.render(cfg.frames, tempo, &offset, &deviation, cfg.noise, &mut rr);
            let seq = SkeletalSequence::new(id.clone(), frames, device_for(cfg.joints))
                .expect("synthetic frames are valid")
                .with_label(label);
            items.push(DatasetItem {
                entry: ManifestEntry {
                    file: format!("{id}.txt"),
                    sequence_id: id,
                    exercise: cfg.exercise.clone(),
                    subject: subject.clone(),
                    label,
                    frames: cfg.frames,
                    joints: cfg.joints,
                    clinical_score: None,
                },
                sequence: seq,
            });
        }
    }
    items
}

/// Sequences with a known quality `q ∈ [0, 1]`.
///
/// The deviation scales with `1 − q` and touches only `signal_joints` (all
/// joints when `None`); the remaining joints carry independent random motion.
pub fn synth_scored(
    n: usize,
    joints: usize,
    frames: usize,
    signal_joints: Option<&[usize]>,
    seed: u64,
) -> Vec<(SkeletalSequence, f64)> {
    let d = joints * 3;
    let motion = Motion::new(d, derive_seed(seed, 0));
    let is_signal = |c: usize| signal_joints.is_none_or(|s| s.contains(&(c / 3)));
    (0..n)
        .map(|i| {
            let mut r = rng(derive_seed(seed, 1 + i as u64));
            let q = if n > 1 {
                i as f64 / (n - 1) as f64
            } else {
                1.0
            };
            let q = (q + r.random_range(-0.02..0.02)).clamp(0.0, 1.0);
            let deviation: Vec<f64> = (0..d)
                .map(|c| if is_signal(c) { 1.5 * (1.0 - q) } else { 0.0 })
                .collect();
            let mut frames_t = motion.render(frames, 1.0, &vec![0.0; d], &deviation, 0.02, &mut r);
            if signal_joints.is_some() {
                for t in 0..frames {
                    for c in (0..d).filter(|&c| !is_signal(c)) {
                        frames_t.data_mut()[t * d + c] = r.random_range(-1.0..1.0);
                    }
                }
            }
            let mut seq = SkeletalSequence::new(format!("q{:03}", i + 1), frames_t, device_for(joints))
                .expect("synthetic frames are valid");
            seq.clinical_score = Some(q * KIMORE_SCORE_MAX);
            (seq, q)
        })
        .collect()
}

/// Writes sequences as whitespace-separated text files plus `manifest.json`.
pub fn write_dataset(dir: &Path, items: &[DatasetItem]) -> Result<DatasetManifest, DataError> {
    std::fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    for it in items {
        save_sequence(&it.sequence, &dir.join(&it.entry.file))?;
    }
    let manifest = DatasetManifest {
        format: FileFormat::UiprmdAngles,
        entries: items.iter().map(|it| it.entry.clone()).collect(),
    };
    manifest.write(dir)?;
    Ok(manifest)
}

/// Wraps scored sequences as dataset items carrying the quality as a clinical score.
pub fn scored_items(exercise: &str, scored: &[(SkeletalSequence, f64)]) -> Vec<DatasetItem> {
    scored
        .iter()
        .enumerate()
        .map(|(i, (seq, _))| DatasetItem {
            entry: ManifestEntry {
                file: format!("{}.txt", seq.id),
                sequence_id: seq.id.clone(),
                exercise: exercise.to_string(),
                subject: format!("s{:02}", i % 4 + 1),
                label: Label::Unlabeled,
                frames: seq.len(),
                joints: seq.joint_count(),
                clinical_score: seq.clinical_score,
            },
            sequence: seq.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exercise_counts_and_determinism() {
        let cfg = SynthConfig {
            subjects: 2,
            correct_per_subject: 3,
            incorrect_per_subject: 2,
            ..Default::default()
        };
        let a = synth_exercise(&cfg);
        let b = synth_exercise(&cfg);
        assert_eq!(a.len(), 10);
        assert_eq!(a.iter().filter(|i| i.entry.label == Label::Correct).count(), 6);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.sequence.frames(), y.sequence.frames());
        }
        assert_eq!(a[0].sequence.feature_dim(), 66);
    }

    #[test]
    fn scored_quality_range() {
        let s = synth_scored(5, 4, 16, Some(&[0usize, 1][..]), 3);
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(|(_, q)| (0.0..=1.0).contains(q)));
        assert!(s[0].1 < s[4].1);
    }
}
