use mqa_core::numcore::Tensor;
use mqa_core::skeldata::*;
use mqa_core::synth::{synth_exercise, write_dataset, SynthConfig};
use proptest::prelude::*;

fn frames_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..30, 1usize..5).prop_flat_map(|(t, m)| {
        (
            Just(t),
            Just(m),
            prop::collection::vec(-1e4f64..1e4, t * 3 * m),
        )
    })
}

proptest! {
    #[test]
    fn text_round_trip_is_bit_exact((t, m, data) in frames_strategy()) {
        let seq = SkeletalSequence::new("p", Tensor::new(&[t, 3 * m], data).unwrap(), Device::Kinect).unwrap();
        let text = write_sequence(&seq);
        let back = parse_sequence(&text, FileFormat::UiprmdAngles, "p", "mem").unwrap();
        prop_assert_eq!(back.frames().data(), seq.frames().data());
        let again = write_sequence(&back);
        prop_assert_eq!(again, text);
    }

    #[test]
    fn windows_tile_the_prefix((t, m, data) in frames_strategy(), w in 1usize..8) {
        let seq = SkeletalSequence::new("p", Tensor::new(&[t, 3 * m], data).unwrap(), Device::Kinect).unwrap();
        match window_slice(&seq, w) {
            Ok(ws) => {
                prop_assert_eq!(ws.count(), t / w);
                let joined: Vec<f64> = ws.windows.iter().flat_map(|x| x.data().iter().copied()).collect();
                prop_assert_eq!(&joined[..], &seq.frames().data()[..(t / w) * w * 3 * m]);
            }
            Err(_) => prop_assert!(t < w),
        }
    }

    #[test]
    fn resample_keeps_endpoints((t, m, data) in frames_strategy(), target in 2usize..50) {
        prop_assume!(t >= 2);
        let seq = SkeletalSequence::new("p", Tensor::new(&[t, 3 * m], data).unwrap(), Device::Kinect).unwrap();
        let r = resample_sequence(&seq, target).unwrap();
        prop_assert_eq!(r.len(), target);
        prop_assert_eq!(r.frames().row(0), seq.frames().row(0));
        let last = r.frames().row(target - 1);
        for (a, b) in last.iter().zip(seq.frames().row(t - 1)) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn split_partitions_items(n in 2usize..60, ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let items: Vec<usize> = (0..n).collect();
        let s = split_dataset(&items, ratio, seed).unwrap();
        prop_assert!(!s.train.is_empty() && !s.validation.is_empty());
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).copied().collect();
        all.sort();
        prop_assert_eq!(all, items.clone());
        let again = split_dataset(&items, ratio, seed).unwrap();
        prop_assert_eq!(again.train, s.train);
    }
}

#[test]
fn dataset_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let items = synth_exercise(&SynthConfig {
        subjects: 2,
        correct_per_subject: 2,
        incorrect_per_subject: 1,
        frames: 12,
        ..Default::default()
    });
    write_dataset(dir.path(), &items).unwrap();
    let (manifest, loaded) = load_dataset(dir.path()).unwrap();
    assert_eq!(manifest.entries.len(), 6);
    assert_eq!(manifest.exercises(), vec!["e01".to_string()]);
    for (a, b) in items.iter().zip(&loaded) {
        assert_eq!(a.sequence.frames(), b.sequence.frames());
        assert_eq!(a.entry, b.entry);
        assert_eq!(b.sequence.label, a.entry.label);
    }
    assert_eq!(by_exercise(&loaded)["e01"].len(), 6);
}

#[test]
fn uiprmd_tree_is_scanned_without_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("Segmented Movements").join("Kinect").join("Angles");
    std::fs::create_dir_all(&sub).unwrap();
    let rows = "1,2,3\n4,5,6\n";
    std::fs::write(sub.join("m01_s01_e01_angles.txt"), rows).unwrap();
    std::fs::write(sub.join("m01_s02_e01_angles_inc.txt"), rows).unwrap();
    std::fs::write(sub.join("README.txt"), "ignored").unwrap();
    let (manifest, items) = load_dataset(dir.path()).unwrap();
    assert_eq!(items.len(), 2);
    let labels: Vec<Label> = manifest.entries.iter().map(|e| e.label).collect();
    assert!(labels.contains(&Label::Correct) && labels.contains(&Label::Incorrect));
    assert!(manifest.entries.iter().all(|e| e.exercise == "m01"));
}
