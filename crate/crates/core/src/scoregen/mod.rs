//! Label generation: denoising autoencoder, Gaussian-mixture exercise model,
//! negative log-likelihood metric and the logistic quality score.

mod autoencoder;
mod gmm;
mod scoring;

pub use autoencoder::{
    train_denoising_autoencoder, AeTrainLog, Autoencoder, AutoencoderConfig, AutoencoderMeta,
};
pub use gmm::{
    fit_gmm_bic, fit_gmm_em, log_sum_exp, performance_metric, ExerciseModel, GmmConfig,
    COVARIANCE_FLOOR, DEFAULT_MAX_COMPONENTS,
};
pub use scoring::{
    calibrate_scoring, score_from_metric, separation_degree, separation_degree_shifted,
    QualityScore, ScoringCalibration,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{augment_masking, AugmentError};
use crate::numcore::{Checkpoint, NumError};
use crate::seeding::derive_seed;
use crate::skeldata::{resample_sequence, DataError, DatasetItem, Label, SkeletalSequence};

#[derive(Debug, Error)]
pub enum ScoreGenError {
    #[error("training error: {0}")]
    Training(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("artifact error: {0}")]
    Artifact(String),
    #[error("sequence {id}: {source}")]
    Sequence {
        id: String,
        #[source]
        source: Box<ScoreGenError>,
    },
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScoreGenError + '_ {
    move |source| ScoreGenError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreGenConfig {
    /// Every repetition is resampled to this many frames.
    pub canonical_t: usize,
    pub autoencoder: AutoencoderConfig,
    pub gmm: GmmConfig,
    /// Fixed component count; `None` selects by BIC over `1..=max_components`.
    pub components: Option<usize>,
    pub max_components: usize,
    pub seed: u64,
}

impl Default for ScoreGenConfig {
    fn default() -> Self {
        Self {
            canonical_t: crate::skeldata::DEFAULT_CANONICAL_T,
            autoencoder: AutoencoderConfig::default(),
            gmm: GmmConfig::default(),
            components: None,
            max_components: DEFAULT_MAX_COMPONENTS,
            seed: 0,
        }
    }
}

/// Fitted autoencoder, exercise model and calibration for one exercise.
#[derive(Debug, Clone)]
pub struct ExercisePipeline {
    pub exercise: String,
    pub canonical_t: usize,
    pub autoencoder: Autoencoder,
    pub model: ExerciseModel,
    pub calibration: ScoringCalibration,
}

/// JSON sidecar stored next to the autoencoder checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineSidecar {
    pub exercise: String,
    pub canonical_t: usize,
    pub model: ExerciseModel,
    pub calibration: ScoringCalibration,
}

pub const AUTOENCODER_FILE: &str = "autoencoder.ckpt";
pub const SIDECAR_FILE: &str = "exercise_model.json";

impl ExercisePipeline {
    fn canonical(&self, x: &SkeletalSequence) -> Result<SkeletalSequence, ScoreGenError> {
        if x.len() == self.canonical_t {
            Ok(x.clone())
        } else {
            Ok(resample_sequence(x, self.canonical_t)?)
        }
    }

    pub fn metric(&self, x: &SkeletalSequence) -> Result<f64, ScoreGenError> {
        let run = || -> Result<f64, ScoreGenError> {
            let z = self.autoencoder.encode_latent(&self.canonical(x)?)?;
            performance_metric(&self.model, &z)
        };
        run().map_err(|e| ScoreGenError::Sequence {
            id: x.id.clone(),
            source: Box::new(e),
        })
    }

    pub fn score(&self, x: &SkeletalSequence) -> Result<QualityScore, ScoreGenError> {
        Ok(score_from_metric(&self.calibration, self.metric(x)?))
    }

    pub fn save(&self, dir: &Path) -> Result<(), ScoreGenError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        self.autoencoder.to_checkpoint().save(&dir.join(AUTOENCODER_FILE))?;
        let sidecar = PipelineSidecar {
            exercise: self.exercise.clone(),
            canonical_t: self.canonical_t,
            model: self.model.clone(),
            calibration: self.calibration,
        };
        let path = dir.join(SIDECAR_FILE);
        let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serialises");
        std::fs::write(&path, json + "\n").map_err(io_err(&path))
    }

    pub fn load(dir: &Path) -> Result<Self, ScoreGenError> {
        let ck = Checkpoint::load(&dir.join(AUTOENCODER_FILE))?;
        let autoencoder = Autoencoder::from_checkpoint(&ck)?;
        let path = dir.join(SIDECAR_FILE);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let mut sidecar: PipelineSidecar = serde_json::from_str(&text)
            .map_err(|e| ScoreGenError::Artifact(format!("{}: {e}", path.display())))?;
        sidecar.model.refresh()?;
        Ok(Self {
            exercise: sidecar.exercise,
            canonical_t: sidecar.canonical_t,
            autoencoder,
            model: sidecar.model,
            calibration: ScoringCalibration::new(sidecar.calibration.alpha, sidecar.calibration.delta)?,
        })
    }
}

/// Separation degree summary for one exercise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub exercise: String,
    /// Mean of per-subject separation degrees (subjects with both labels).
    pub within_subject: Option<f64>,
    /// Separation degree over all subjects pooled.
    pub between_subject: f64,
    pub correct: usize,
    pub incorrect: usize,
    pub components: usize,
}

/// Trains the autoencoder on correct repetitions, fits the mixture to their
/// latents and calibrates the score.
pub fn fit_exercise(
    exercise: &str,
    correct: &[SkeletalSequence],
    cfg: &ScoreGenConfig,
) -> Result<ExercisePipeline, ScoreGenError> {
    if correct.is_empty() {
        return Err(ScoreGenError::Training(format!("exercise {exercise} has no correct repetitions")));
    }
    let data = correct
        .iter()
        .map(|s| resample_sequence(s, cfg.canonical_t))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ae_cfg = cfg.autoencoder.clone();
    ae_cfg.seed = cfg.seed;
    let (autoencoder, _log) = train_denoising_autoencoder(&data, &ae_cfg)?;
    let latents = autoencoder.encode_batch(&data.iter().collect::<Vec<_>>())?;
    let model = match cfg.components {
        Some(c) => fit_gmm_em(&latents, c, cfg.seed, &cfg.gmm)?,
        None => fit_gmm_bic(&latents, cfg.max_components, cfg.seed, &cfg.gmm)?,
    };
    let metrics = latents
        .iter()
        .map(|z| performance_metric(&model, z))
        .collect::<Result<Vec<_>, _>>()?;
    let calibration = calibrate_scoring(&metrics)?;
    Ok(ExercisePipeline {
        exercise: exercise.to_string(),
        canonical_t: cfg.canonical_t,
        autoencoder,
        model,
        calibration,
    })
}

/// Separation degrees of a fitted pipeline on labelled dataset items.
pub fn separation_report(
    pipeline: &ExercisePipeline,
    items: &[DatasetItem],
) -> Result<SeparationReport, ScoreGenError> {
    let mut by_subject: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let (mut all_c, mut all_i) = (Vec::new(), Vec::new());
    for it in items {
        let slot = by_subject.entry(it.entry.subject.as_str()).or_default();
        match it.entry.label {
            Label::Correct => {
                let m = pipeline.metric(&it.sequence)?;
                slot.0.push(m);
                all_c.push(m);
            }
            Label::Incorrect => {
                let m = pipeline.metric(&it.sequence)?;
                slot.1.push(m);
                all_i.push(m);
            }
            Label::Unlabeled => {}
        }
    }
    let per_subject: Vec<f64> = by_subject
        .values()
        .filter(|(c, i)| !c.is_empty() && !i.is_empty())
        .map(|(c, i)| separation_degree(c, i))
        .collect::<Result<_, _>>()?;
    let within_subject =
        (!per_subject.is_empty()).then(|| per_subject.iter().sum::<f64>() / per_subject.len() as f64);
    Ok(SeparationReport {
        exercise: pipeline.exercise.clone(),
        within_subject,
        between_subject: separation_degree(&all_c, &all_i)?,
        correct: all_c.len(),
        incorrect: all_i.len(),
        components: pipeline.model.components(),
    })
}

/// Reconstruction error of clean sequences from masked copies.
///
/// Sequence `i` is masked with seed `derive_seed(seed, i)`.
pub fn masked_reconstruction_error(
    ae: &Autoencoder,
    clean: &[SkeletalSequence],
    h: usize,
    p: f64,
    seed: u64,
) -> Result<f64, ScoreGenError> {
    let masked = clean
        .iter()
        .enumerate()
        .map(|(i, s)| augment_masking(s, h, p, derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    ae.reconstruction_error(&masked.iter().collect::<Vec<_>>(), &clean.iter().collect::<Vec<_>>())
}

/// `(sequence id, score)` for every input sequence, in input order.
pub fn generate_labels(
    pipeline: &ExercisePipeline,
    sequences: &[SkeletalSequence],
) -> Result<Vec<(String, QualityScore)>, ScoreGenError> {
    sequences
        .iter()
        .map(|s| Ok((s.id.clone(), pipeline.score(s)?)))
        .collect()
}

pub fn label_csv(labels: &[(String, QualityScore)]) -> String {
    let mut out = String::from("sequence_id,score\n");
    for (id, s) in labels {
        writeln!(out, "{id},{:.6}", s.value()).expect("string write");
    }
    out
}

pub fn write_label_file(path: &Path, labels: &[(String, QualityScore)]) -> Result<(), ScoreGenError> {
    std::fs::write(path, label_csv(labels)).map_err(io_err(path))
}

pub fn read_label_file(path: &Path) -> Result<Vec<(String, f64)>, ScoreGenError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_label_csv(&text).map_err(|e| ScoreGenError::Artifact(format!("{}: {e}", path.display())))
}

pub fn parse_label_csv(text: &str) -> Result<Vec<(String, f64)>, String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "sequence_id,score" => {}
        _ => return Err("missing header `sequence_id,score`".into()),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (id, v) = line
            .rsplit_once(',')
            .ok_or_else(|| format!("line {}: expected two fields", i + 1))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|e| format!("line {}: {e}", i + 1))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("line {}: score {v} outside [0, 1]", i + 1));
        }
        out.push((id.trim().to_string(), v));
    }
    Ok(out)
}
