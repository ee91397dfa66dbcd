//! Metric-to-score mapping and separation degree.

use serde::{Deserialize, Serialize};

use super::ScoreGenError;

/// Logistic map `1/(1+exp(α(d−δ)))` from performance metric to score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringCalibration {
    pub alpha: f64,
    pub delta: f64,
}

impl ScoringCalibration {
    pub fn new(alpha: f64, delta: f64) -> Result<Self, ScoreGenError> {
        if !(alpha > 0.0) || !alpha.is_finite() || !delta.is_finite() {
            return Err(ScoreGenError::Calibration(format!(
                "alpha must be positive and finite (alpha={alpha}, delta={delta})"
            )));
        }
        Ok(Self { alpha, delta })
    }
}

/// A movement-quality score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct QualityScore(f64);

impl QualityScore {
    pub fn new(value: f64) -> Result<Self, ScoreGenError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(ScoreGenError::Metric(format!("score {value} outside [0, 1]")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Midpoint δ = mean + 3·std of the correct metrics; α places the mean at score 0.95.
pub fn calibrate_scoring(metrics_correct: &[f64]) -> Result<ScoringCalibration, ScoreGenError> {
    let n = metrics_correct.len();
    if n < 2 {
        return Err(ScoreGenError::Calibration(
            "at least two correct-repetition metrics are required".into(),
        ));
    }
    let mean = metrics_correct.iter().sum::<f64>() / n as f64;
    let var = metrics_correct.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if !(std > 0.0) || !std.is_finite() {
        return Err(ScoreGenError::Calibration(
            "correct-repetition metrics have zero variance; provide more varied data".into(),
        ));
    }
    ScoringCalibration::new(19f64.ln() / (3.0 * std), mean + 3.0 * std)
}

pub fn score_from_metric(cal: &ScoringCalibration, d: f64) -> QualityScore {
    let z = cal.alpha * (d - cal.delta);
    let v = if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    };
    QualityScore(v)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `(μ_inc − μ_cor)/(μ_inc + μ_cor)` on metrics that are already non-negative.
pub fn separation_degree_shifted(correct: &[f64], incorrect: &[f64]) -> Result<f64, ScoreGenError> {
    if correct.is_empty() || incorrect.is_empty() {
        return Err(ScoreGenError::Metric("separation degree needs both groups non-empty".into()));
    }
    let (mc, mi) = (mean(correct), mean(incorrect));
    let denom = mi + mc;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((mi - mc) / denom)
}

/// Separation degree after shifting all metrics so the global minimum is 0.
pub fn separation_degree(correct: &[f64], incorrect: &[f64]) -> Result<f64, ScoreGenError> {
    if correct.is_empty() || incorrect.is_empty() {
        return Err(ScoreGenError::Metric("separation degree needs both groups non-empty".into()));
    }
    let lo = correct
        .iter()
        .chain(incorrect)
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !lo.is_finite() {
        return Err(ScoreGenError::Metric("non-finite metric".into()));
    }
    let shift = |v: &[f64]| v.iter().map(|m| m - lo).collect::<Vec<_>>();
    separation_degree_shifted(&shift(correct), &shift(incorrect))
}
