//! Scorer training with early stopping, MAE evaluation and multi-run experiments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{augment_batch, AugmentError, AugmentationSpec, OcclusionMode, DEFAULT_PACE_RANGE};
use crate::mqaformer::{EmbedderKind, MqaError, ScorerConfig, ScorerModel};
use crate::numcore::{AdamState, Graph, NumError, ParamStore, Tensor};
use crate::seeding::{derive_seed, rng};
use crate::skeldata::{resample_sequence, split_dataset, DataError, DatasetItem, SkeletalSequence};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error(transparent)]
    Model(#[from] MqaError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Skeleton(#[from] DataError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
}

/// Random pace in the default range, occlusion of two joints per 10 frames,
/// and masking of 10-frame windows with probability 0.2.
pub fn default_policy() -> Vec<AugmentationSpec> {
    vec![
        AugmentationSpec::Pace {
            factor: 1.0,
            range: Some(DEFAULT_PACE_RANGE),
        },
        AugmentationSpec::Occlusion {
            h: 10,
            n: 2,
            mode: OcclusionMode::Zero,
        },
        AugmentationSpec::Masking { h: 10, p: 0.2 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub split_ratio: f64,
    pub runs: usize,
    pub seed: u64,
    /// Apply `augment_policy` to every training batch.
    pub augment: bool,
    pub augment_policy: Vec<AugmentationSpec>,
    pub scorer: ScorerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            batch_size: 8,
            max_epochs: 2000,
            patience: 100,
            split_ratio: 0.8,
            runs: 5,
            seed: 0,
            augment: true,
            augment_policy: default_policy(),
            scorer: ScorerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be > 0", self.lr));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split ratio {} must lie in (0, 1)", self.split_ratio));
        }
        if self.patience == 0 || self.runs == 0 || self.batch_size == 0 {
            return bad("patience, runs and batch size must be ≥ 1".into());
        }
        if self.augment {
            if self.augment_policy.is_empty() {
                return bad("augmentation is on but the policy is empty".into());
            }
            for spec in &self.augment_policy {
                spec.validate()?;
            }
        }
        self.scorer.validate()?;
        Ok(())
    }
}

/// A sequence resampled to the canonical length with its target score.
#[derive(Debug, Clone)]
pub struct LabeledSequence {
    pub sequence: SkeletalSequence,
    pub label: f64,
}

/// Pairs dataset items with scores, preferring `labels` (by sequence id) and
/// falling back to normalised clinical scores.
pub fn attach_labels(
    items: &[DatasetItem],
    labels: Option<&[(String, f64)]>,
    canonical_t: usize,
) -> Result<Vec<LabeledSequence>, HarnessError> {
    let table: BTreeMap<&str, f64> = labels
        .unwrap_or_default()
        .iter()
        .map(|(id, v)| (id.as_str(), *v))
        .collect();
    items
        .iter()
        .map(|it| {
            let id = it.entry.sequence_id.as_str();
            let label = table
                .get(id)
                .copied()
                .or_else(|| it.sequence.normalized_clinical_score())
                .ok_or_else(|| HarnessError::Data(format!("sequence {id} has no quality label")))?;
            if !(0.0..=1.0).contains(&label) {
                return Err(HarnessError::Data(format!("label {label} of {id} outside [0, 1]")));
            }
            let sequence = if it.sequence.len() == canonical_t {
                it.sequence.clone()
            } else {
                resample_sequence(&it.sequence, canonical_t)?
            };
            Ok(LabeledSequence { sequence, label })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: ScorerModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub validation_ids: Vec<String>,
    /// Mean wall-clock milliseconds per training batch.
    pub ms_per_batch: f64,
}

pub fn training_log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for e in log {
        writeln!(out, "{},{:.9},{:.9}", e.epoch, e.train_loss, e.val_loss).expect("string write");
    }
    out
}

fn mean_loss(
    model: &ScorerModel,
    store: &ParamStore,
    prepared: &[(Vec<Tensor>, f64)],
) -> Result<f64, HarnessError> {
    let mut total = 0.0;
    for chunk in prepared.chunks(32) {
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let batch: Vec<(&[Tensor], f64)> = chunk.iter().map(|(w, t)| (w.as_slice(), *t)).collect();
        let loss = model.batch_loss(&mut g, &p, &batch)?;
        total += g.value(loss).item() * chunk.len() as f64;
    }
    Ok(total / prepared.len().max(1) as f64)
}

/// Splits `data` with `seed` and trains on the training part.
pub fn train_scorer(
    cfg: &TrainConfig,
    data: &[LabeledSequence],
    seed: u64,
) -> Result<TrainOutcome, HarnessError> {
    if data.len() < 2 {
        return Err(HarnessError::Data("at least two labelled sequences are required".into()));
    }
    let split = split_dataset(data, cfg.split_ratio, seed)?;
    train_scorer_on(cfg, &split.train, &split.validation, seed)
}

/// Trains with an explicit validation set; the returned model holds the
/// parameters with the lowest validation loss.
pub fn train_scorer_on(
    cfg: &TrainConfig,
    train: &[LabeledSequence],
    validation: &[LabeledSequence],
    seed: u64,
) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(HarnessError::Data("training and validation sets must be non-empty".into()));
    }
    for s in train.iter().chain(validation) {
        if !(0.0..=1.0).contains(&s.label) {
            return Err(HarnessError::Data(format!("label {} of {} outside [0, 1]", s.label, s.sequence.id)));
        }
    }
    let mut model = ScorerModel::new(cfg.scorer.clone(), derive_seed(seed, 0))?;
    let raw: Vec<SkeletalSequence> = train.iter().map(|s| s.sequence.clone()).collect();
    model.fit_normalization(&raw);
    let val_prepared = validation
        .iter()
        .map(|s| Ok((model.prepare(&s.sequence)?, s.label)))
        .collect::<Result<Vec<_>, MqaError>>()?;
    let clean_prepared = train
        .iter()
        .map(|s| Ok((model.prepare(&s.sequence)?, s.label)))
        .collect::<Result<Vec<_>, MqaError>>()?;

    let mut adam = AdamState::new(model.params(), cfg.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffler = rng(derive_seed(seed, 1));
    let mut best_store = model.params().clone();
    let mut best_val = mean_loss(&model, model.params(), &val_prepared)?;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut log = Vec::new();
    let (mut batches, mut batch_secs) = (0u64, 0.0);
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffler);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let started = Instant::now();
            let prepared: Vec<(Vec<Tensor>, f64)> = if cfg.augment {
                let seqs: Vec<SkeletalSequence> = chunk.iter().map(|&i| raw[i].clone()).collect();
                let aug = augment_batch(&seqs, &cfg.augment_policy, derive_seed(seed ^ 0x5EED, batches))?;
                aug.sequences
                    .iter()
                    .zip(chunk)
                    .map(|(s, &i)| Ok((model.prepare(s)?, train[i].label)))
                    .collect::<Result<_, MqaError>>()?
            } else {
                chunk.iter().map(|&i| clean_prepared[i].clone()).collect()
            };
            let batch: Vec<(&[Tensor], f64)> = prepared.iter().map(|(w, t)| (w.as_slice(), *t)).collect();
            let mut g = Graph::new();
            let p = model.params().bind(&mut g);
            let loss = model.batch_loss(&mut g, &p, &batch)?;
            epoch_loss += g.value(loss).item() * chunk.len() as f64;
            let grads = g.backward(loss)?.for_params(model.params());
            adam.step(model.params_mut(), &grads)?;
            batches += 1;
            batch_secs += started.elapsed().as_secs_f64();
        }
        let val_loss = mean_loss(&model, model.params(), &val_prepared)?;
        log.push(EpochLog {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_store = model.params().clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    *model.params_mut() = best_store;
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        best_val_loss: best_val,
        validation_ids: validation.iter().map(|s| s.sequence.id.clone()).collect(),
        ms_per_batch: if batches == 0 {
            0.0
        } else {
            1000.0 * batch_secs / batches as f64
        },
    })
}

/// Mean absolute difference between predicted and labelled scores.
pub fn evaluate_mae(model: &ScorerModel, data: &[LabeledSequence]) -> Result<f64, HarnessError> {
    if data.is_empty() {
        return Err(HarnessError::Evaluation("empty evaluation set".into()));
    }
    let mut total = 0.0;
    for s in data {
        total += (model.predict(&s.sequence)?.score.value() - s.label).abs();
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub mae: Option<f64>,
    pub best_epoch: Option<usize>,
    pub epochs: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseReport {
    pub exercise: String,
    pub runs: Vec<RunResult>,
    /// Mean over successful runs.
    pub mean_mae: Option<f64>,
}

/// Serialised experiment summary. Wall-clock figures live in [`RunTimings`]
/// so that reports are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub embedder: EmbedderKind,
    pub exercises: Vec<ExerciseReport>,
    /// Mean of the per-exercise means.
    pub mean_mae: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTimings {
    /// `[exercise][run]` milliseconds per training batch.
    pub ms_per_batch: BTreeMap<String, Vec<f64>>,
}

impl RunTimings {
    pub fn mean_ms_per_batch(&self) -> Option<f64> {
        let all: Vec<f64> = self.ms_per_batch.values().flatten().copied().collect();
        (!all.is_empty()).then(|| all.iter().sum::<f64>() / all.len() as f64)
    }
}

/// One finished run: its result row, training log and model.
pub struct RunArtifacts {
    pub result: RunResult,
    pub log: Vec<EpochLog>,
    pub outcome: Option<TrainOutcome>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// `cfg.runs` train/evaluate cycles with seeds `cfg.seed + i`, each re-splitting
/// the data. Runs execute on scoped threads; failures are recorded per run.
pub fn run_exercise(
    cfg: &TrainConfig,
    exercise: &str,
    data: &[LabeledSequence],
) -> Result<(ExerciseReport, Vec<RunArtifacts>), HarnessError> {
    cfg.validate()?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cfg.runs);
    let mut slots: Vec<Option<RunArtifacts>> = (0..cfg.runs).map(|_| None).collect();
    let run_one = |i: usize| -> RunArtifacts {
        let seed = cfg.seed.wrapping_add(i as u64);
        let outcome = train_scorer(cfg, data, seed).and_then(|o| {
            let split = split_dataset(data, cfg.split_ratio, seed)?;
            let mae = evaluate_mae(&o.model, &split.validation)?;
            Ok((o, mae))
        });
        match outcome {
            Ok((o, mae)) => RunArtifacts {
                result: RunResult {
                    run: i,
                    seed,
                    mae: Some(mae),
                    best_epoch: Some(o.best_epoch),
                    epochs: Some(o.log.len()),
                    error: None,
                },
                log: o.log.clone(),
                outcome: Some(o),
            },
            Err(e) => RunArtifacts {
                result: RunResult {
                    run: i,
                    seed,
                    mae: None,
                    best_epoch: None,
                    epochs: None,
                    error: Some(e.to_string()),
                },
                log: Vec::new(),
                outcome: None,
            },
        }
    };
    for start in (0..cfg.runs).step_by(workers.max(1)) {
        let end = (start + workers).min(cfg.runs);
        let finished: Vec<RunArtifacts> = std::thread::scope(|s| {
            let handles: Vec<_> = (start..end).map(|i| s.spawn(move || run_one(i))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training worker panicked"))
                .collect()
        });
        for (i, a) in (start..end).zip(finished) {
            slots[i] = Some(a);
        }
    }
    let runs: Vec<RunArtifacts> = slots.into_iter().map(|s| s.expect("every run finished")).collect();
    let maes: Vec<f64> = runs.iter().filter_map(|r| r.result.mae).collect();
    Ok((
        ExerciseReport {
            exercise: exercise.to_string(),
            runs: runs.iter().map(|r| r.result.clone()).collect(),
            mean_mae: mean(&maes),
        },
        runs,
    ))
}

/// Runs every exercise and aggregates the report.
pub fn run_experiment(
    cfg: &TrainConfig,
    dataset: &BTreeMap<String, Vec<LabeledSequence>>,
) -> Result<(EvalReport, RunTimings), HarnessError> {
    let mut exercises = Vec::new();
    let mut timings = RunTimings::default();
    for (name, data) in dataset {
        let (report, runs) = run_exercise(cfg, name, data)?;
        timings.ms_per_batch.insert(
            name.clone(),
            runs.iter().filter_map(|r| r.outcome.as_ref().map(|o| o.ms_per_batch)).collect(),
        );
        exercises.push(report);
    }
    Ok((summarise(cfg.scorer.embedder.kind, exercises), timings))
}

pub fn summarise(embedder: EmbedderKind, exercises: Vec<ExerciseReport>) -> EvalReport {
    let means: Vec<f64> = exercises.iter().filter_map(|e| e.mean_mae).collect();
    EvalReport {
        embedder,
        mean_mae: mean(&means),
        exercises,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    /// One row per run plus one `mean` row per exercise.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("embedder,exercise,run,seed,mae,best_epoch,error\n");
        let e = self.embedder.name();
        for ex in &self.exercises {
            for r in &ex.runs {
                writeln!(
                    out,
                    "{e},{},{},{},{},{},{}",
                    ex.exercise,
                    r.run,
                    r.seed,
                    fmt_opt(r.mae),
                    r.best_epoch.map_or_else(String::new, |b| b.to_string()),
                    r.error.as_deref().unwrap_or("").replace([',', '\n'], " ")
                )
                .expect("string write");
            }
            writeln!(out, "{e},{},mean,,{},,", ex.exercise, fmt_opt(ex.mean_mae)).expect("string write");
        }
        out
    }
}

/// Comparison table of the four embedders: one row per kind.
pub fn ablation_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("embedder,mean_mae\n");
    for r in reports {
        writeln!(out, "{},{}", r.embedder.name(), fmt_opt(r.mean_mae)).expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.validate().unwrap();
        c.split_ratio = 1.0;
        assert!(c.validate().is_err());
        c.split_ratio = 0.8;
        c.lr = 0.0;
        assert!(c.validate().is_err());
        c.lr = 1e-3;
        c.augment_policy.clear();
        assert!(c.validate().is_err());
        c.augment = false;
        c.validate().unwrap();
    }

    #[test]
    fn report_means_and_csv() {
        let run = |i: usize, mae: Option<f64>| RunResult {
            run: i,
            seed: i as u64,
            mae,
            best_epoch: mae.map(|_| 3),
            epochs: mae.map(|_| 5),
            error: if mae.is_none() { Some("boom, bad".into()) } else { None },
        };
        let ex = ExerciseReport {
            exercise: "e01".into(),
            runs: vec![run(0, Some(0.1)), run(1, Some(0.3)), run(2, None)],
            mean_mae: Some(0.2),
        };
        let r = summarise(EmbedderKind::Mlp, vec![ex]);
        assert_eq!(r.mean_mae, Some(0.2));
        let csv = r.to_csv();
        assert!(csv.contains("mlp,e01,2,2,,,boom  bad\n"));
        assert!(csv.ends_with("mlp,e01,mean,,0.200000,,\n"));
        assert_eq!(ablation_csv(&[r]), "embedder,mean_mae\nmlp,0.200000\n");
    }

    #[test]
    fn log_csv() {
        let log = [EpochLog {
            epoch: 1,
            train_loss: 0.5,
            val_loss: 0.25,
        }];
        assert_eq!(training_log_csv(&log), "epoch,train_loss,val_loss\n1,0.500000000,0.250000000\n");
    }
}
