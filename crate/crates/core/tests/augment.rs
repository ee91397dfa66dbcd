use mqa_core::augment::*;
use mqa_core::numcore::Tensor;
use mqa_core::seeding::derive_seed;
use mqa_core::skeldata::{Device, SkeletalSequence};
use proptest::prelude::*;

fn ramp(t: usize, m: usize) -> SkeletalSequence {
    let data = (0..t * 3 * m).map(|i| 1.0 + i as f64 * 0.01).collect();
    SkeletalSequence::new("r", Tensor::new(&[t, 3 * m], data).unwrap(), Device::Kinect).unwrap()
}

#[test]
fn masking_frequency_over_ten_thousand_windows() {
    let (_, mask) = masking_decisions(10_000 * 5, 5, 0.2, 42);
    assert_eq!(mask.len(), 10_000);
    let freq = mask.iter().filter(|&&b| b).count() as f64 / 10_000.0;
    assert!((freq - 0.2).abs() < 0.01, "{freq}");

    let mut masked = 0;
    for s in 0..2_000u64 {
        let y = augment_masking(&ramp(25, 2), 5, 0.2, derive_seed(7, s)).unwrap();
        masked += (0..5).filter(|w| y.frames().row(w * 5).iter().all(|&v| v == 0.0)).count();
    }
    let freq = masked as f64 / 10_000.0;
    assert!((freq - 0.2).abs() < 0.01, "{freq}");
}

#[test]
fn batch_operator_frequencies() {
    let policy = vec![
        AugmentationSpec::pace(1.5),
        AugmentationSpec::Occlusion { h: 4, n: 1, mode: OcclusionMode::Zero },
        AugmentationSpec::Masking { h: 4, p: 0.5 },
    ];
    let batch: Vec<SkeletalSequence> = (0..10).map(|_| ramp(16, 3)).collect();
    let mut counts = [0usize; 3];
    for s in 0..100u64 {
        for k in augment_batch(&batch, &policy, s).unwrap().applied {
            counts[k as usize] += 1;
        }
    }
    for c in counts {
        let f = c as f64 / 1000.0;
        assert!((f - 1.0 / 3.0).abs() < 0.05, "{counts:?}");
    }
}

#[test]
fn operators_are_deterministic() {
    let x = ramp(30, 4);
    let specs = [
        AugmentationSpec::Pace { factor: 1.0, range: Some(DEFAULT_PACE_RANGE) },
        AugmentationSpec::Occlusion { h: 10, n: 2, mode: OcclusionMode::RepeatFirst },
        AugmentationSpec::Masking { h: 3, p: 0.4 },
    ];
    for spec in &specs {
        assert_eq!(spec.apply(&x, 5).unwrap(), spec.apply(&x, 5).unwrap());
    }
    let a = augment_batch(&[x.clone(), x.clone()], &specs, 3).unwrap();
    let b = augment_batch(&[x.clone(), x], &specs, 3).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn identity_parameters_are_bitwise_identity(t in 2usize..40, m in 1usize..6, h in 1usize..10, seed in any::<u64>()) {
        prop_assume!(h <= t);
        let x = ramp(t, m);
        let paced = augment_pace(&x, 1.0).unwrap();
        let occluded = augment_joint_occlusion(&x, h, 0, OcclusionMode::Zero, seed).unwrap();
        let masked = augment_masking(&x, h, 0.0, seed).unwrap();
        for y in [paced, occluded, masked] {
            let same = y.frames().data().iter().zip(x.frames().data()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same && y.len() == x.len());
        }
    }

    #[test]
    fn occlusion_zero_count(t in 1usize..6, m in 1usize..8, n in 0usize..8, seed in any::<u64>()) {
        prop_assume!(n <= m);
        let h = 5;
        let x = ramp(t * h, m);
        let y = augment_joint_occlusion(&x, h, n, OcclusionMode::Zero, seed).unwrap();
        for w in 0..t {
            let zeros = y.frames().data()[w * h * 3 * m..(w + 1) * h * 3 * m].iter().filter(|&&v| v == 0.0).count();
            prop_assert_eq!(zeros, n * 3 * h);
        }
    }

    #[test]
    fn pace_length(t in 2usize..80, factor in 0.3f64..3.0) {
        let y = augment_pace(&ramp(t, 1), factor).unwrap();
        prop_assert_eq!(y.len(), ((t as f64 / factor).round() as usize).max(2));
    }
}
