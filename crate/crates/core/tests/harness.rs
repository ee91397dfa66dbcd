use std::collections::BTreeMap;

use mqa_core::harness::*;
use mqa_core::mqaformer::{even_split, EmbedderConfig, EmbedderKind, ScorerConfig, ScorerModel};
use mqa_core::numcore::{Graph, Tensor};
use mqa_core::synth::{scored_items, synth_scored};

fn tiny_scorer(kind: EmbedderKind) -> ScorerConfig {
    ScorerConfig {
        embedder: EmbedderConfig {
            kind,
            output_dim: 8,
            window: 4,
            feature_dim: 12,
            body_parts: even_split(4, 2),
            hfe_attention_heads: 2,
            hfe_head_dim: 4,
            mlp_hidden: [16, 16],
            cnn_channels: [8, 8],
            cnn_kernels: [2, 2],
            part_channels: 6,
            part_kernel: 2,
            part_dim: 8,
        },
        canonical_t: 16,
        blocks: 1,
        heads: 2,
        ff_dim: 16,
        head_hidden: [16, 8],
    }
}

fn tiny_train(kind: EmbedderKind) -> TrainConfig {
    TrainConfig {
        lr: 3e-3,
        batch_size: 8,
        max_epochs: 2000,
        patience: 2000,
        runs: 1,
        augment: false,
        scorer: tiny_scorer(kind),
        ..Default::default()
    }
}

/// Eight sequences labelled 0.1 (low quality) or 0.9 (high quality).
fn two_level_set() -> Vec<LabeledSequence> {
    synth_scored(8, 4, 16, None, 17)
        .into_iter()
        .map(|(sequence, q)| LabeledSequence {
            sequence,
            label: if q < 0.5 { 0.1 } else { 0.9 },
        })
        .collect()
}

fn graded_set(n: usize, seed: u64) -> Vec<LabeledSequence> {
    synth_scored(n, 4, 16, None, seed)
        .into_iter()
        .map(|(sequence, label)| LabeledSequence { sequence, label })
        .collect()
}

#[test]
fn tiny_scorer_overfits_eight_sequences() {
    let data = two_level_set();
    for kind in EmbedderKind::ALL {
        let out = train_scorer_on(&tiny_train(kind), &data, &data, 1).unwrap();
        let mae = evaluate_mae(&out.model, &data).unwrap();
        assert!(mae < 0.05, "{}: training MAE {mae}", kind.name());
    }
}

#[test]
fn fixed_seed_gives_identical_checkpoint() {
    let data = graded_set(10, 3);
    let mut cfg = tiny_train(EmbedderKind::HfeA);
    cfg.max_epochs = 5;
    cfg.augment = true;
    cfg.augment_policy = vec![
        mqa_core::augment::AugmentationSpec::Masking { h: 4, p: 0.3 },
        mqa_core::augment::AugmentationSpec::pace(1.2),
    ];
    let a = train_scorer(&cfg, &data, 9).unwrap();
    let b = train_scorer(&cfg, &data, 9).unwrap();
    let bytes = |o: &TrainOutcome| o.model.to_checkpoint(serde_json::Value::Null).to_bytes();
    assert_eq!(bytes(&a), bytes(&b));
    assert_eq!(a.validation_ids, b.validation_ids);
    assert_eq!(a.validation_ids.len(), 2);
}

#[test]
fn early_stopping_returns_best_validation_checkpoint() {
    let data = graded_set(12, 4);
    let mut cfg = tiny_train(EmbedderKind::Mlp);
    cfg.max_epochs = 200;
    cfg.patience = 5;
    cfg.lr = 2e-2;
    let (train, valid) = data.split_at(9);
    let out = train_scorer_on(&cfg, train, valid, 2).unwrap();
    let min_logged = out.log.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert!(out.best_val_loss <= min_logged);
    if out.best_epoch > 0 {
        assert_eq!(out.best_val_loss, out.log[out.best_epoch - 1].val_loss);
    }
    // The returned parameters reproduce the best validation loss.
    let mut g = Graph::new();
    let p = out.model.params().bind(&mut g);
    let prepared: Vec<(Vec<Tensor>, f64)> =
        valid.iter().map(|s| (out.model.prepare(&s.sequence).unwrap(), s.label)).collect();
    let batch: Vec<(&[Tensor], f64)> = prepared.iter().map(|(w, t)| (w.as_slice(), *t)).collect();
    let loss = out.model.batch_loss(&mut g, &p, &batch).unwrap();
    assert!((g.value(loss).item() - out.best_val_loss).abs() < 1e-12);
    assert!(out.log.len() < 200 || out.best_epoch + 5 >= out.log.len());
}

#[test]
fn mae_arithmetic_and_permutation() {
    let mut model = ScorerModel::new(tiny_scorer(EmbedderKind::Cnn), 0).unwrap();
    let ids: Vec<_> = model.params().iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    for id in ids {
        let t = model.params_mut().get_mut(id);
        *t = Tensor::zeros(t.shape());
    }
    let mut data = graded_set(2, 5);
    data[0].label = 0.0;
    data[1].label = 1.0;
    assert_eq!(evaluate_mae(&model, &data).unwrap(), 0.5);
    assert!(evaluate_mae(&model, &[]).is_err());

    let model = ScorerModel::new(tiny_scorer(EmbedderKind::Cnn), 3).unwrap();
    let data = graded_set(6, 6);
    let mut rev = data.clone();
    rev.reverse();
    let (a, b) = (evaluate_mae(&model, &data).unwrap(), evaluate_mae(&model, &rev).unwrap());
    assert!((a - b).abs() < 1e-15);
}

#[test]
fn experiment_report_is_reproducible() {
    let mut cfg = tiny_train(EmbedderKind::Mlp);
    cfg.max_epochs = 4;
    cfg.runs = 3;
    let mut dataset = BTreeMap::new();
    dataset.insert("e01".to_string(), graded_set(10, 7));
    dataset.insert("e02".to_string(), graded_set(10, 8));
    let (a, timings) = run_experiment(&cfg, &dataset).unwrap();
    let (b, _) = run_experiment(&cfg, &dataset).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.to_csv(), b.to_csv());
    for ex in &a.exercises {
        let maes: Vec<f64> = ex.runs.iter().map(|r| r.mae.unwrap()).collect();
        assert_eq!(maes.len(), 3);
        assert!((ex.mean_mae.unwrap() - maes.iter().sum::<f64>() / 3.0).abs() < 1e-15);
        assert_eq!(ex.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
    }
    assert_eq!(timings.ms_per_batch["e01"].len(), 3);
}

#[test]
fn failing_runs_are_flagged() {
    let mut cfg = tiny_train(EmbedderKind::Mlp);
    cfg.max_epochs = 2;
    cfg.runs = 2;
    let mut data = graded_set(4, 9);
    data[3].sequence = data[3]
        .sequence
        .with_frames(Tensor::zeros(&[12, 12]))
        .unwrap();
    let (report, _) = run_exercise(&cfg, "e01", &data).unwrap();
    assert!(report.runs.iter().any(|r| r.error.is_some()));
}

#[test]
fn labels_from_file_or_clinical_score() {
    let scored = synth_scored(3, 4, 20, None, 1);
    let mut items = scored_items("e01", &scored);
    let labels = vec![("q001".to_string(), 0.25)];
    let out = attach_labels(&items, Some(&labels), 16).unwrap();
    assert_eq!(out[0].label, 0.25);
    assert!((out[2].label - scored[2].1).abs() < 1e-12);
    assert_eq!(out[1].sequence.len(), 16);
    items[1].sequence.clinical_score = None;
    assert!(matches!(attach_labels(&items, None, 16), Err(HarnessError::Data(_))));
}
