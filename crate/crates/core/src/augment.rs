//! Skeletal data augmentation: variable pace, joint occlusion and movement
//! data masking, plus a batch applicator.
//!
//! Every operator is a pure function of `(input, parameters, seed)`.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numcore::Tensor;
use crate::seeding::{derive_seed, rng};
use crate::skeldata::{resample_sequence, DataError, SkeletalSequence};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid augmentation parameter: {0}")]
    Parameter(String),
    #[error("augmentation config error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionMode {
    /// Occluded channels read 0.0.
    #[default]
    Zero,
    /// Occluded channels freeze at the window's first frame.
    RepeatFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationKind {
    Pace,
    Occlusion,
    Masking,
}

/// One augmentation together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AugmentationSpec {
    /// `factor > 1` speeds the movement up. When `range` is set the factor is
    /// drawn uniformly from `[range.0, range.1]` for every application.
    Pace {
        #[serde(default = "one")]
        factor: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        range: Option<(f64, f64)>,
    },
    Occlusion {
        h: usize,
        n: usize,
        #[serde(default)]
        mode: OcclusionMode,
    },
    Masking { h: usize, p: f64 },
}

fn one() -> f64 {
    1.0
}

/// Default range for randomly paced training policies.
pub const DEFAULT_PACE_RANGE: (f64, f64) = (0.75, 1.33);

impl AugmentationSpec {
    pub fn pace(factor: f64) -> Self {
        Self::Pace {
            factor,
            range: None,
        }
    }

    pub fn kind(&self) -> AugmentationKind {
        match self {
            Self::Pace { .. } => AugmentationKind::Pace,
            Self::Occlusion { .. } => AugmentationKind::Occlusion,
            Self::Masking { .. } => AugmentationKind::Masking,
        }
    }

    /// Checks parameters that do not depend on the sequence.
    pub fn validate(&self) -> Result<(), AugmentError> {
        match *self {
            Self::Pace { factor, range } => {
                if !(factor > 0.0 && factor.is_finite()) {
                    return Err(AugmentError::Parameter(format!("pace factor {factor} must be > 0")));
                }
                if let Some((lo, hi)) = range {
                    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                        return Err(AugmentError::Parameter(format!("bad pace range [{lo}, {hi}]")));
                    }
                }
            }
            Self::Occlusion { h, .. } | Self::Masking { h, .. } if h == 0 => {
                return Err(AugmentError::Parameter("window length h must be ≥ 1".into()));
            }
            Self::Masking { p, .. } if !(0.0..=1.0).contains(&p) => {
                return Err(AugmentError::Parameter(format!("masking probability {p} outside [0, 1]")));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn apply(&self, x: &SkeletalSequence, seed: u64) -> Result<SkeletalSequence, AugmentError> {
        self.validate()?;
        match *self {
            Self::Pace { factor, range } => {
                let factor = match range {
                    Some((lo, hi)) if hi > lo => rng(seed).random_range(lo..=hi),
                    Some((lo, _)) => lo,
                    None => factor,
                };
                augment_pace(x, factor)
            }
            Self::Occlusion { h, n, mode } => augment_joint_occlusion(x, h, n, mode, seed),
            Self::Masking { h, p } => augment_masking(x, h, p, seed),
        }
    }
}

/// Changes the execution pace by `factor` (> 1 is faster).
///
/// The output has `max(2, round(T/factor))` frames. Speed-ups keep the frames
/// at rounded stride positions `round(i·factor)`; slow-downs interpolate
/// linearly.
pub fn augment_pace(x: &SkeletalSequence, factor: f64) -> Result<SkeletalSequence, AugmentError> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(AugmentError::Parameter(format!("pace factor {factor} must be > 0")));
    }
    let t = x.len();
    let target = ((t as f64 / factor).round() as usize).max(2);
    if target == t {
        return Ok(x.clone());
    }
    if target > t {
        return Ok(resample_sequence(x, target)?);
    }
    let d = x.feature_dim();
    let src = x.frames().data();
    let mut out = Vec::with_capacity(target * d);
    for i in 0..target {
        let idx = ((i as f64 * factor).round() as usize).min(t - 1);
        out.extend_from_slice(&src[idx * d..(idx + 1) * d]);
    }
    let frames = Tensor::new(&[target, d], out).expect("pace shape");
    Ok(x.with_frames(frames)?)
}

fn check_window(x: &SkeletalSequence, h: usize) -> Result<(), AugmentError> {
    if h == 0 || h > x.len() {
        return Err(AugmentError::Parameter(format!(
            "window length {h} must be within 1..={}",
            x.len()
        )));
    }
    Ok(())
}

/// Simulates lost joint tracking: in each `h`-frame window, `n` joints drawn
/// without replacement are either zeroed or frozen at the window's first frame.
pub fn augment_joint_occlusion(
    x: &SkeletalSequence,
    h: usize,
    n: usize,
    mode: OcclusionMode,
    seed: u64,
) -> Result<SkeletalSequence, AugmentError> {
    check_window(x, h)?;
    let m = x.joint_count();
    if n > m {
        return Err(AugmentError::Parameter(format!(
            "cannot occlude {n} of {m} joints"
        )));
    }
    if n == 0 {
        return Ok(x.clone());
    }
    let t = x.len();
    let d = x.feature_dim();
    let mut frames = x.frames().clone();
    let mut r = rng(seed);
    let data = frames.data_mut();
    for start in (0..t).step_by(h) {
        let end = (start + h).min(t);
        let joints = sample(&mut r, m, n);
        for j in joints.iter() {
            let cols = 3 * j..3 * j + 3;
            let first: Vec<f64> = data[start * d + cols.start..start * d + cols.end].to_vec();
            for f in start..end {
                let row = &mut data[f * d + cols.start..f * d + cols.end];
                match mode {
                    OcclusionMode::Zero => row.fill(0.0),
                    OcclusionMode::RepeatFirst => row.copy_from_slice(&first),
                }
            }
        }
    }
    Ok(x.with_frames(frames)?)
}

/// Zeroes every feature of each `h`-frame window independently with
/// probability `p`. A trailing partial window counts as one window.
pub fn augment_masking(
    x: &SkeletalSequence,
    h: usize,
    p: f64,
    seed: u64,
) -> Result<SkeletalSequence, AugmentError> {
    check_window(x, h)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(AugmentError::Parameter(format!("masking probability {p} outside [0, 1]")));
    }
    let (_, mask) = masking_decisions(x.len(), h, p, seed);
    let d = x.feature_dim();
    let mut frames = x.frames().clone();
    let data = frames.data_mut();
    for (w, masked) in mask.into_iter().enumerate() {
        if masked {
            let end = ((w + 1) * h).min(x.len());
            data[w * h * d..end * d].fill(0.0);
        }
    }
    Ok(x.with_frames(frames)?)
}

/// The per-window Bernoulli draws used by [`augment_masking`].
pub fn masking_decisions(t: usize, h: usize, p: f64, seed: u64) -> (usize, Vec<bool>) {
    let windows = t.div_ceil(h);
    let mut r = rng(seed);
    let mask = (0..windows).map(|_| r.random_bool(p)).collect();
    (windows, mask)
}

/// Result of [`augment_batch`]: the augmented copies and the operator used on each.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedBatch {
    pub sequences: Vec<SkeletalSequence>,
    pub applied: Vec<AugmentationKind>,
}

/// Augments every member of a batch with one spec drawn uniformly from `policy`.
///
/// Members whose length changed (pace) are resampled back to their original
/// length so the batch stays rectangular.
pub fn augment_batch(
    batch: &[SkeletalSequence],
    policy: &[AugmentationSpec],
    seed: u64,
) -> Result<AugmentedBatch, AugmentError> {
    if policy.is_empty() {
        return Err(AugmentError::Config("empty augmentation policy".into()));
    }
    for spec in policy {
        spec.validate()?;
    }
    let mut sequences = Vec::with_capacity(batch.len());
    let mut applied = Vec::with_capacity(batch.len());
    for (i, x) in batch.iter().enumerate() {
        let (mut y, kind) = augment_one(x, policy, derive_seed(seed, i as u64))?;
        if y.len() != x.len() {
            y = resample_sequence(&y, x.len().max(2))?;
        }
        sequences.push(y);
        applied.push(kind);
    }
    Ok(AugmentedBatch { sequences, applied })
}

/// Applies one spec drawn uniformly from `policy`; the output keeps whatever
/// length the operator produced.
pub fn augment_one(
    x: &SkeletalSequence,
    policy: &[AugmentationSpec],
    seed: u64,
) -> Result<(SkeletalSequence, AugmentationKind), AugmentError> {
    if policy.is_empty() {
        return Err(AugmentError::Config("empty augmentation policy".into()));
    }
    let spec = &policy[rng(seed).random_range(0..policy.len())];
    Ok((spec.apply(x, derive_seed(seed, 1))?, spec.kind()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeldata::Device;

    fn column(values: &[f64]) -> SkeletalSequence {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v, v + 0.5, v - 0.5]).collect();
        SkeletalSequence::new("c", Tensor::from_rows(&rows).unwrap(), Device::Kinect).unwrap()
    }

    fn nonzero(t: usize, m: usize) -> SkeletalSequence {
        let rows: Vec<Vec<f64>> = (0..t)
            .map(|i| (0..3 * m).map(|j| 1.0 + i as f64 + 0.1 * j as f64).collect())
            .collect();
        SkeletalSequence::new("nz", Tensor::from_rows(&rows).unwrap(), Device::Kinect).unwrap()
    }

    fn first_col(s: &SkeletalSequence) -> Vec<f64> {
        (0..s.len()).map(|i| s.frames().at(i, 0)).collect()
    }

    #[test]
    fn pace_examples() {
        let x = nonzero(100, 2);
        assert_eq!(augment_pace(&x, 1.0).unwrap(), x);
        assert_eq!(augment_pace(&x, 1.25).unwrap().len(), 80);
        let y = augment_pace(&column(&[0.0, 2.0, 4.0, 6.0]), 2.0).unwrap();
        assert_eq!(first_col(&y), vec![0.0, 4.0]);
        let slow = augment_pace(&column(&[0.0, 2.0, 4.0, 6.0]), 0.5).unwrap();
        assert_eq!(slow.len(), 8);
        assert_eq!(slow.frames().at(7, 0), 6.0);
        assert!(augment_pace(&x, 0.0).is_err());
        assert!(augment_pace(&x, -1.0).is_err());
    }

    #[test]
    fn pace_keeps_order() {
        let x = column(&(0..50).map(f64::from).collect::<Vec<_>>());
        for f in [0.6, 0.8, 1.3, 1.9, 3.0] {
            let y = first_col(&augment_pace(&x, f).unwrap());
            assert!(y.windows(2).all(|w| w[0] <= w[1]), "factor {f}");
        }
    }

    #[test]
    fn occlusion_zero_counts() {
        let x = nonzero(4, 2);
        let y = augment_joint_occlusion(&x, 2, 1, OcclusionMode::Zero, 3).unwrap();
        let zeros = y.frames().data().iter().filter(|&&v| v == 0.0).count();
        assert_eq!(zeros, 12);
        for start in [0, 2] {
            let z = (start..start + 2)
                .flat_map(|f| y.frames().row(f).to_vec())
                .filter(|&v| v == 0.0)
                .count();
            assert_eq!(z, 6);
        }
    }

    #[test]
    fn occlusion_identity_and_errors() {
        let x = nonzero(12, 3);
        assert_eq!(augment_joint_occlusion(&x, 5, 0, OcclusionMode::Zero, 1).unwrap(), x);
        assert!(augment_joint_occlusion(&x, 5, 4, OcclusionMode::Zero, 1).is_err());
        assert!(augment_joint_occlusion(&x, 0, 1, OcclusionMode::Zero, 1).is_err());
        assert!(augment_joint_occlusion(&x, 13, 1, OcclusionMode::Zero, 1).is_err());
    }

    #[test]
    fn repeat_first_freezes_channels() {
        let x = nonzero(10, 4);
        let y = augment_joint_occlusion(&x, 5, 2, OcclusionMode::RepeatFirst, 9).unwrap();
        for start in [0, 5] {
            let frozen: Vec<usize> = (0..12)
                .filter(|&c| (start..start + 5).all(|f| y.frames().at(f, c) == y.frames().at(start, c)))
                .collect();
            assert_eq!(frozen.len(), 6, "window at {start}");
            for c in 0..12 {
                assert_eq!(y.frames().at(start, c), x.frames().at(start, c));
            }
        }
    }

    #[test]
    fn masking_extremes() {
        let x = nonzero(23, 2);
        assert_eq!(augment_masking(&x, 5, 0.0, 4).unwrap(), x);
        let all = augment_masking(&x, 5, 1.0, 4).unwrap();
        assert!(all.frames().data().iter().all(|&v| v.to_bits() == 0));
        assert!(augment_masking(&x, 5, 1.5, 4).is_err());
    }

    #[test]
    fn batch_requires_policy() {
        let x = nonzero(10, 2);
        assert!(matches!(augment_batch(&[x], &[], 0), Err(AugmentError::Config(_))));
    }

    #[test]
    fn batch_identity_pace_is_unchanged() {
        let batch = vec![nonzero(10, 2), nonzero(10, 3)];
        let out = augment_batch(&batch, &[AugmentationSpec::pace(1.0)], 5).unwrap();
        assert_eq!(out.sequences, batch);
    }

    #[test]
    fn batch_restores_length_after_pace() {
        let batch = vec![nonzero(40, 2); 4];
        let policy = [AugmentationSpec::Pace {
            factor: 1.0,
            range: Some(DEFAULT_PACE_RANGE),
        }];
        let out = augment_batch(&batch, &policy, 11).unwrap();
        assert!(out.sequences.iter().all(|s| s.len() == 40));
    }

    #[test]
    fn spec_serde_shape() {
        let spec: AugmentationSpec =
            serde_json::from_str(r#"{"kind":"occlusion","h":10,"n":2,"mode":"repeat_first"}"#).unwrap();
        assert_eq!(
            spec,
            AugmentationSpec::Occlusion {
                h: 10,
                n: 2,
                mode: OcclusionMode::RepeatFirst
            }
        );
        let spec: AugmentationSpec = serde_json::from_str(r#"{"kind":"pace"}"#).unwrap();
        assert_eq!(spec, AugmentationSpec::pace(1.0));
    }
}
