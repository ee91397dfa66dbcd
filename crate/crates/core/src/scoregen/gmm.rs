//! Full-covariance Gaussian mixture fitted by EM, and its negative log-likelihood.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ScoreGenError;
use crate::numcore::linalg::{cholesky, log_det_from_cholesky, mahalanobis_sq};
use crate::seeding::rng;

pub const COVARIANCE_FLOOR: f64 = 1e-6;
pub const DEFAULT_MAX_COMPONENTS: usize = 6;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExerciseModel {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Row-major `dim×dim` matrices.
    pub covariances: Vec<Vec<f64>>,
    /// Data log-likelihood after each E-step.
    pub log_likelihood_trace: Vec<f64>,
    #[serde(skip)]
    cache: Vec<ComponentCache>,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct ComponentCache {
    chol: Vec<f64>,
    log_norm: f64,
}

impl ExerciseModel {
    /// Builds a model from explicit parameters.
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Vec<f64>>,
    ) -> Result<Self, ScoreGenError> {
        let dim = means.first().map_or(0, Vec::len);
        if weights.is_empty() || weights.len() != means.len() || means.len() != covariances.len() {
            return Err(ScoreGenError::Fit("component arrays disagree in length".into()));
        }
        if means.iter().any(|m| m.len() != dim) || covariances.iter().any(|c| c.len() != dim * dim) {
            return Err(ScoreGenError::Dimension("component shapes disagree".into()));
        }
        let mut model = Self {
            dim,
            weights,
            means,
            covariances,
            log_likelihood_trace: Vec::new(),
            cache: Vec::new(),
        };
        model.refresh()?;
        Ok(model)
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    /// Recomputes Cholesky factors; call after editing parameters or deserialising.
    pub fn refresh(&mut self) -> Result<(), ScoreGenError> {
        let n = self.dim;
        self.cache = self
            .covariances
            .iter()
            .enumerate()
            .map(|(c, cov)| {
                let chol = cholesky(cov, n).ok_or_else(|| {
                    ScoreGenError::Numerical(format!("covariance of component {c} is not positive-definite"))
                })?;
                let log_norm = -0.5 * (n as f64 * LN_2PI + log_det_from_cholesky(&chol, n));
                Ok(ComponentCache { chol, log_norm })
            })
            .collect::<Result<_, ScoreGenError>>()?;
        Ok(())
    }

    fn ensure_cache(&self) -> Result<(), ScoreGenError> {
        if self.cache.len() != self.weights.len() {
            return Err(ScoreGenError::Fit("model not refreshed after loading".into()));
        }
        Ok(())
    }

    /// `ln w_c + ln N(x; μ_c, Σ_c)` for every component.
    pub fn component_log_densities(&self, x: &[f64]) -> Result<Vec<f64>, ScoreGenError> {
        self.ensure_cache()?;
        if x.len() != self.dim {
            return Err(ScoreGenError::Dimension(format!(
                "latent has {} values, model expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(self
            .cache
            .iter()
            .zip(&self.means)
            .zip(&self.weights)
            .map(|((cc, mean), w)| {
                w.ln() + cc.log_norm - 0.5 * mahalanobis_sq(&cc.chol, self.dim, x, mean)
            })
            .collect())
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64, ScoreGenError> {
        Ok(log_sum_exp(&self.component_log_densities(x)?))
    }

    /// Total log-likelihood of a sample set.
    pub fn log_likelihood(&self, xs: &[Vec<f64>]) -> Result<f64, ScoreGenError> {
        xs.iter().map(|x| self.log_density(x)).sum()
    }

    /// Free parameter count (weights, means, symmetric covariances).
    pub fn parameter_count(&self) -> usize {
        let c = self.components();
        let l = self.dim;
        (c - 1) + c * l + c * l * (l + 1) / 2
    }

    pub fn bic(&self, xs: &[Vec<f64>]) -> Result<f64, ScoreGenError> {
        let ll = self.log_likelihood(xs)?;
        Ok(self.parameter_count() as f64 * (xs.len() as f64).ln() - 2.0 * ll)
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `−ln Σ_c w_c N(latent; μ_c, Σ_c)`.
pub fn performance_metric(model: &ExerciseModel, latent: &[f64]) -> Result<f64, ScoreGenError> {
    Ok(-model.log_density(latent)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmConfig {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-6,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by a few Lloyd iterations.
fn kmeans_init(xs: &[Vec<f64>], c: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    let mut centers = vec![xs[r.random_range(0..xs.len())].clone()];
    while centers.len() < c {
        let d: Vec<f64> = xs
            .iter()
            .map(|x| centers.iter().map(|m| sq_dist(x, m)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut u = r.random::<f64>() * total;
            let mut idx = xs.len() - 1;
            for (i, di) in d.iter().enumerate() {
                if u < *di {
                    idx = i;
                    break;
                }
                u -= di;
            }
            idx
        } else {
            r.random_range(0..xs.len())
        };
        centers.push(xs[pick].clone());
    }
    for _ in 0..20 {
        let mut sums = vec![vec![0.0; xs[0].len()]; c];
        let mut counts = vec![0usize; c];
        for x in xs {
            let k = (0..c)
                .min_by(|&a, &b| sq_dist(x, &centers[a]).total_cmp(&sq_dist(x, &centers[b])))
                .expect("c ≥ 1");
            counts[k] += 1;
            for (s, v) in sums[k].iter_mut().zip(x) {
                *s += v;
            }
        }
        for k in 0..c {
            if counts[k] > 0 {
                centers[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            }
        }
    }
    centers
}

fn sample_covariance(xs: &[Vec<f64>], resp: Option<(&[f64], f64)>, mean: &[f64]) -> Vec<f64> {
    let n = mean.len();
    let mut cov = vec![0.0; n * n];
    for (i, x) in xs.iter().enumerate() {
        let w = resp.map_or(1.0, |(r, _)| r[i]);
        for a in 0..n {
            let da = x[a] - mean[a];
            for b in 0..=a {
                cov[a * n + b] += w * da * (x[b] - mean[b]);
            }
        }
    }
    let norm = resp.map_or(xs.len() as f64, |(_, nk)| nk);
    for a in 0..n {
        for b in 0..=a {
            let v = cov[a * n + b] / norm;
            cov[a * n + b] = v;
            cov[b * n + a] = v;
        }
        cov[a * n + a] += COVARIANCE_FLOOR;
    }
    cov
}

/// EM fit of a `c`-component full-covariance mixture.
pub fn fit_gmm_em(
    latents: &[Vec<f64>],
    c: usize,
    seed: u64,
    cfg: &GmmConfig,
) -> Result<ExerciseModel, ScoreGenError> {
    if c == 0 {
        return Err(ScoreGenError::Fit("component count must be ≥ 1".into()));
    }
    let l = latents.first().map_or(0, Vec::len);
    if l == 0 {
        return Err(ScoreGenError::Fit("no latent vectors".into()));
    }
    if latents.iter().any(|x| x.len() != l) {
        return Err(ScoreGenError::Dimension("latent vectors differ in length".into()));
    }
    let n = latents.len();
    if n < c * (l + 1) {
        return Err(ScoreGenError::Fit(format!(
            "{n} samples are too few for {c} components in {l} dimensions (need {})",
            c * (l + 1)
        )));
    }
    let global_mean: Vec<f64> =
        (0..l).map(|j| latents.iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
    let global_cov = sample_covariance(latents, None, &global_mean);
    let means = if c == 1 {
        vec![global_mean]
    } else {
        kmeans_init(latents, c, seed)
    };
    let mut model = ExerciseModel::new(vec![1.0 / c as f64; c], means, vec![global_cov; c])?;
    let mut trace: Vec<f64> = Vec::new();
    let mut resp = vec![vec![0.0; n]; c];
    for _iter in 0..cfg.max_iters.max(1) {
        // E-step.
        let mut ll = 0.0;
        for (i, x) in latents.iter().enumerate() {
            let lp = model.component_log_densities(x)?;
            let lse = log_sum_exp(&lp);
            ll += lse;
            for k in 0..c {
                resp[k][i] = (lp[k] - lse).exp();
            }
        }
        if !ll.is_finite() {
            return Err(ScoreGenError::Numerical("log-likelihood is not finite".into()));
        }
        if let Some(&prev) = trace.last() {
            if ll < prev - 1e-9 * (1.0 + prev.abs()) {
                return Err(ScoreGenError::Numerical(format!(
                    "EM log-likelihood decreased from {prev} to {ll}"
                )));
            }
            let gain = ll - prev;
            trace.push(ll);
            if gain < cfg.tol {
                break;
            }
        } else {
            trace.push(ll);
        }
        // M-step.
        let mut weights = Vec::with_capacity(c);
        let mut means = Vec::with_capacity(c);
        let mut covs = Vec::with_capacity(c);
        for rk in &resp {
            let nk: f64 = rk.iter().sum();
            if nk < 1e-10 {
                return Err(ScoreGenError::Numerical("a mixture component collapsed".into()));
            }
            let mean: Vec<f64> = (0..l)
                .map(|j| latents.iter().zip(rk).map(|(x, r)| r * x[j]).sum::<f64>() / nk)
                .collect();
            covs.push(sample_covariance(latents, Some((rk, nk)), &mean));
            means.push(mean);
            weights.push(nk / n as f64);
        }
        model = ExerciseModel::new(weights, means, covs)?;
    }
    model.log_likelihood_trace = trace;
    Ok(model)
}

/// Fits `1..=max_c` components and keeps the lowest BIC; sizes lacking data are skipped.
pub fn fit_gmm_bic(
    latents: &[Vec<f64>],
    max_c: usize,
    seed: u64,
    cfg: &GmmConfig,
) -> Result<ExerciseModel, ScoreGenError> {
    let mut best: Option<(f64, ExerciseModel)> = None;
    let mut first_err = None;
    for c in 1..=max_c.max(1) {
        match fit_gmm_em(latents, c, seed, cfg).and_then(|m| Ok((m.bic(latents)?, m))) {
            Ok((bic, m)) => {
                if best.as_ref().is_none_or(|(b, _)| bic < *b) {
                    best = Some((bic, m));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.map(|(_, m)| m)
        .ok_or_else(|| first_err.expect("at least one attempt"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_naive() {
        let v = [0.1, -2.0, 1.5];
        let naive = v.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&v) - naive).abs() < 1e-14);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn standard_normal_metric_at_mean() {
        let m = ExerciseModel::new(vec![1.0], vec![vec![0.0]], vec![vec![1.0]]).unwrap();
        let d = performance_metric(&m, &[0.0]).unwrap();
        assert!((d - 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn single_component_closed_form() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
        let m = fit_gmm_em(&xs, 1, 0, &GmmConfig::default()).unwrap();
        let mean = [9.5, xs.iter().map(|x| x[1]).sum::<f64>() / 20.0];
        assert!((m.means[0][0] - mean[0]).abs() < 1e-10);
        assert!((m.means[0][1] - mean[1]).abs() < 1e-10);
        let var0 = xs.iter().map(|x| (x[0] - mean[0]).powi(2)).sum::<f64>() / 20.0;
        assert!((m.covariances[0][0] - var0 - COVARIANCE_FLOOR).abs() < 1e-10);
    }

    #[test]
    fn too_few_samples() {
        let xs = vec![vec![0.0, 1.0]; 5];
        assert!(matches!(fit_gmm_em(&xs, 2, 0, &GmmConfig::default()), Err(ScoreGenError::Fit(_))));
    }
}
