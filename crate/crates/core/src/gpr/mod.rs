//! Exact Gaussian-process regression with the ARD exponential kernel.
//!
//! Targets are centred on their training mean; the kernel matrix carries
//! i.i.d. observation noise `σ_n²` plus a small jitter for factorization.
//! Hyperparameters maximize the log marginal likelihood of the
//! standardized targets by quasi-Newton ascent over log-parameters.

mod kernel;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) use kernel::scaled_distance as kernel_distance;
pub use kernel::{
    cross_kernel, factorize, kernel_eval, kernel_matrix, KernelParams, JITTER_LADDER,
};

use crate::features::Standardizer;
use crate::optim::Ascent;

pub const MODEL_FORMAT: &str = "batlife-gpr";
pub const MODEL_VERSION: u32 = 1;

/// Negative predictive variances below this magnitude are rounding noise.
const CLAMP_FLAG: f64 = 1e-8;

// log-parameter box, in standardized units
const LN_SIGMA_F: (f64, f64) = (-4.6, 4.6);
const LN_LENGTH: (f64, f64) = (-4.6, 6.9);
const LN_SIGMA_N: (f64, f64) = (-9.2, 2.3);

#[derive(Debug, Error)]
pub enum GprError {
    #[error("DimensionMismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("SingularKernel: factorization failed at the largest jitter")]
    SingularKernel,
    #[error("DegenerateTargets: training targets have zero variance")]
    DegenerateTargets,
    #[error("need at least 2 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
    /// Training sets larger than this are thinned to an even stride.
    pub max_train_samples: Option<usize>,
}

impl Default for GprConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iterations: 500,
            tolerance: 1e-8,
            seed: 0,
            max_train_samples: Some(400),
        }
    }
}

/// Log marginal likelihood and its gradient in
/// `θ = [ln σ_f, ln l_1, …, ln l_d, ln σ_n]`.
#[derive(Debug, Clone)]
pub struct Lml {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub jitter: f64,
}

/// Marginal-likelihood objective over fixed inputs and targets.
#[derive(Debug, Clone)]
pub struct LmlProblem {
    x: Vec<Vec<f64>>,
    y: DVector<f64>,
}

impl LmlProblem {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self, GprError> {
        if x.len() != y.len() {
            return Err(GprError::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(Self {
            x,
            y: DVector::from_vec(y),
        })
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<Lml, GprError> {
        let d = self.dim();
        if theta.len() != d + 2 {
            return Err(GprError::DimensionMismatch {
                expected: d + 2,
                got: theta.len(),
            });
        }
        let n = self.x.len();
        let sf2 = (2.0 * theta[0]).exp();
        let l: Vec<f64> = theta[1..=d].iter().map(|v| v.exp()).collect();
        let sn2 = (2.0 * theta[d + 1]).exp();

        let mut k = kernel_matrix(&self.x, 1.0, &l);
        let r = k.clone();
        k *= sf2;
        for i in 0..n {
            k[(i, i)] += sn2;
        }
        let (chol, jitter) = factorize(&k, sf2)?;
        let alpha = chol.solve(&self.y);
        let log_det: f64 = chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>();
        let value = -0.5 * self.y.dot(&alpha)
            - log_det
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

        // W = ααᵀ - K⁻¹; dL/dθ = ½ tr(W ∂K/∂θ)
        let mut w = chol.inverse();
        w.neg_mut();
        w.ger(1.0, &alpha, &alpha, 1.0);

        let mut gradient = vec![0.0; d + 2];
        // jitter scales with σ_f², so it moves with ln σ_f
        let mut g_sf = 0.0;
        for i in 0..n {
            g_sf += w[(i, i)] * (sf2 + jitter);
            for j in 0..i {
                g_sf += 2.0 * w[(i, j)] * sf2 * r[(i, j)];
            }
        }
        gradient[0] = g_sf;
        let mut dx = vec![0.0; d];
        for i in 0..n {
            for j in 0..i {
                for m in 0..d {
                    dx[m] = (self.x[i][m] - self.x[j][m]) / l[m];
                }
                let dist = dx.iter().map(|v| v * v).sum::<f64>().sqrt();
                if dist == 0.0 {
                    continue;
                }
                // both (i, j) and (j, i) contribute, cancelling the ½
                let c = w[(i, j)] * sf2 * r[(i, j)] / dist;
                for m in 0..d {
                    gradient[1 + m] += c * dx[m] * dx[m];
                }
            }
        }
        gradient[d + 1] = w.trace() * sn2;
        Ok(Lml {
            value,
            gradient,
            jitter,
        })
    }
}

/// Outcome of hyperparameter training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub log_marginal_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub best_restart: usize,
    pub samples_used: usize,
}

/// A fitted regressor. Immutable; safe to share for concurrent prediction.
#[derive(Debug, Clone)]
pub struct GprModel {
    kernel: KernelParams,
    standardizer: Standardizer,
    x_train: Vec<Vec<f64>>,
    y_train: Vec<f64>,
    prior_mean: f64,
    jitter: f64,
    factor: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    summary: Option<TrainingSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Some variance was negative by more than rounding and was clamped.
    pub clamped: bool,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    kernel: KernelParams,
    standardizer: Standardizer,
    prior_mean: f64,
    x_train: Vec<Vec<f64>>,
    y_train: Vec<f64>,
    #[serde(default)]
    summary: Option<TrainingSummary>,
}

fn check_rows(x: &[Vec<f64>], d: usize) -> Result<(), GprError> {
    for row in x {
        if row.len() != d {
            return Err(GprError::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(GprError::NonFinite);
        }
    }
    Ok(())
}

/// Indices `⌊k·n/max⌋` for `k < max`, or all of `0..n`.
pub fn even_stride(n: usize, max: Option<usize>) -> Vec<usize> {
    match max {
        Some(m) if m > 0 && n > m => (0..m).map(|k| k * n / m).collect(),
        _ => (0..n).collect(),
    }
}

impl GprModel {
    /// Conditions a GP with fixed hyperparameters on standardized inputs
    /// `x_std` and raw targets `y`, with constant prior mean `prior_mean`.
    pub fn from_parts(
        kernel: KernelParams,
        standardizer: Standardizer,
        x_std: Vec<Vec<f64>>,
        y: Vec<f64>,
        prior_mean: f64,
    ) -> Result<Self, GprError> {
        kernel.validate()?;
        if x_std.len() != y.len() {
            return Err(GprError::DimensionMismatch {
                expected: x_std.len(),
                got: y.len(),
            });
        }
        if x_std.is_empty() {
            return Err(GprError::TooFewSamples(0));
        }
        check_rows(&x_std, kernel.dim())?;
        if standardizer.dim() != kernel.dim() {
            return Err(GprError::DimensionMismatch {
                expected: kernel.dim(),
                got: standardizer.dim(),
            });
        }
        let a = Self::kernel_with_noise(&kernel, &x_std);
        let (factor, jitter) = factorize(&a, kernel.sigma_f.powi(2))?;
        let centred = DVector::from_iterator(y.len(), y.iter().map(|v| v - prior_mean));
        let alpha = factor.solve(&centred);
        Ok(Self {
            kernel,
            standardizer,
            x_train: x_std,
            y_train: y,
            prior_mean,
            jitter,
            factor,
            alpha,
            summary: None,
        })
    }

    fn kernel_with_noise(kernel: &KernelParams, x: &[Vec<f64>]) -> DMatrix<f64> {
        let mut a = kernel_matrix(x, kernel.sigma_f, &kernel.length_scales);
        for i in 0..a.nrows() {
            a[(i, i)] += kernel.sigma_n.powi(2);
        }
        a
    }

    /// Fits the standardizer and the hyperparameters, then conditions on the
    /// (possibly thinned) training set.
    pub fn train(x: &[Vec<f64>], y: &[f64], config: &GprConfig) -> Result<Self, GprError> {
        if x.len() != y.len() {
            return Err(GprError::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(GprError::TooFewSamples(x.len()));
        }
        let d = x[0].len();
        check_rows(x, d)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(GprError::NonFinite);
        }
        let keep = even_stride(x.len(), config.max_train_samples);
        let x: Vec<Vec<f64>> = keep.iter().map(|&i| x[i].clone()).collect();
        let y: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
        let n = y.len() as f64;
        let y_mean = y.iter().sum::<f64>() / n;
        let y_scale = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n).sqrt();
        if !(y_scale > 1e-12 * y_mean.abs().max(1.0)) {
            return Err(GprError::DegenerateTargets);
        }
        let standardizer = Standardizer::fit(&x);
        let x_std = standardizer.transform_rows(&x);
        let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();
        let problem = LmlProblem::new(x_std.clone(), ys)?;

        let mut lower = vec![LN_SIGMA_F.0];
        let mut upper = vec![LN_SIGMA_F.1];
        lower.extend(std::iter::repeat_n(LN_LENGTH.0, d));
        upper.extend(std::iter::repeat_n(LN_LENGTH.1, d));
        lower.push(LN_SIGMA_N.0);
        upper.push(LN_SIGMA_N.1);
        let ascent = Ascent {
            max_iterations: config.max_iterations,
            tolerance: config.tolerance,
            lower,
            upper,
        };

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let starts: Vec<Vec<f64>> = (0..config.restarts.max(1))
            .map(|r| {
                let mut th = Vec::with_capacity(d + 2);
                if r == 0 {
                    th.push(0.0);
                    th.extend(std::iter::repeat_n(0.0, d));
                    th.push(0.1f64.ln());
                } else {
                    th.push(rng.random_range(0.3f64.ln()..3f64.ln()));
                    for _ in 0..d {
                        th.push(rng.random_range(0.3f64.ln()..10f64.ln()));
                    }
                    th.push(rng.random_range(1e-3f64.ln()..0.3f64.ln()));
                }
                th
            })
            .collect();

        let objective = |th: &[f64]| problem.evaluate(th).ok().map(|l| (l.value, l.gradient));
        let results: Vec<_> = starts
            .par_iter()
            .map(|s| ascent.maximize(objective, s))
            .collect();
        let mut best: Option<(usize, crate::optim::AscentResult)> = None;
        let mut iterations = 0;
        for (i, r) in results.into_iter().enumerate() {
            let Some(r) = r else { continue };
            iterations += r.iterations;
            // strict comparison keeps the lowest restart index on ties
            if best.as_ref().is_none_or(|(_, b)| r.value > b.value) {
                best = Some((i, r));
            }
        }
        let (best_restart, best) = best.ok_or(GprError::SingularKernel)?;
        let th = &best.x;
        let kernel = KernelParams {
            sigma_f: th[0].exp() * y_scale,
            length_scales: th[1..=d].iter().map(|v| v.exp()).collect(),
            sigma_n: th[d + 1].exp() * y_scale,
        };
        let mut model = Self::from_parts(kernel, standardizer, x_std, y, y_mean)?;
        model.summary = Some(TrainingSummary {
            log_marginal_likelihood: best.value,
            iterations,
            converged: best.converged,
            best_restart,
            samples_used: keep.len(),
        });
        Ok(model)
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn summary(&self) -> Option<&TrainingSummary> {
        self.summary.as_ref()
    }

    pub fn training_inputs(&self) -> &[Vec<f64>] {
        &self.x_train
    }

    pub fn training_targets(&self) -> &[f64] {
        &self.y_train
    }

    /// Lower-triangular factor of the regularized kernel matrix.
    pub fn factor(&self) -> DMatrix<f64> {
        self.factor.l()
    }

    /// `K + σ_n²·I + jitter·I` over the training inputs.
    pub fn regularized_kernel(&self) -> DMatrix<f64> {
        let mut a = Self::kernel_with_noise(&self.kernel, &self.x_train);
        for i in 0..a.nrows() {
            a[(i, i)] += self.jitter;
        }
        a
    }

    /// Predictive mean and variance (including `σ_n²`) at raw feature rows.
    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Prediction, GprError> {
        check_rows(rows, self.dim())?;
        let xs = self.standardizer.transform_rows(rows);
        self.predict_standardized(&xs)
    }

    /// As [`Self::predict`] for rows already in standardized units.
    pub fn predict_standardized(&self, xs: &[Vec<f64>]) -> Result<Prediction, GprError> {
        check_rows(xs, self.dim())?;
        if xs.is_empty() {
            return Ok(Prediction {
                mean: vec![],
                variance: vec![],
                clamped: false,
            });
        }
        let k = &self.kernel;
        let ks = cross_kernel(&self.x_train, xs, k.sigma_f, &k.length_scales);
        let mean: Vec<f64> = (ks.transpose() * &self.alpha)
            .iter()
            .map(|v| v + self.prior_mean)
            .collect();
        let v = self
            .factor
            .l_dirty()
            .solve_lower_triangular(&ks)
            .ok_or(GprError::SingularKernel)?;
        let prior = k.sigma_f.powi(2) + k.sigma_n.powi(2);
        let mut clamped = false;
        let variance = v
            .column_iter()
            .map(|c| {
                let var = prior - c.norm_squared();
                if var < -CLAMP_FLAG {
                    clamped = true;
                }
                var.max(0.0)
            })
            .collect();
        Ok(Prediction {
            mean,
            variance,
            clamped,
        })
    }

    /// `w_m = l_m / Σ l`, larger length scale means larger weight.
    pub fn relative_importance(&self) -> Vec<f64> {
        relative_importance(&self.kernel.length_scales)
    }

    /// `(1/l_m) / Σ (1/l)`, the conventional ARD relevance.
    pub fn inverse_importance(&self) -> Vec<f64> {
        inverse_importance(&self.kernel.length_scales)
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            kernel: self.kernel.clone(),
            standardizer: self.standardizer.clone(),
            prior_mean: self.prior_mean,
            x_train: self.x_train.clone(),
            y_train: self.y_train.clone(),
            summary: self.summary.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    /// Restores a model; the factorization is recomputed.
    pub fn from_json(text: &str) -> Result<Self, GprError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| GprError::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(GprError::Format(format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        let mut model = Self::from_parts(
            file.kernel,
            file.standardizer,
            file.x_train,
            file.y_train,
            file.prior_mean,
        )?;
        model.summary = file.summary;
        Ok(model)
    }
}

pub fn relative_importance(length_scales: &[f64]) -> Vec<f64> {
    let total: f64 = length_scales.iter().sum();
    length_scales.iter().map(|l| l / total).collect()
}

pub fn inverse_importance(length_scales: &[f64]) -> Vec<f64> {
    let total: f64 = length_scales.iter().map(|l| 1.0 / l).sum();
    length_scales.iter().map(|l| (1.0 / l) / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn importance_examples() {
        assert_eq!(relative_importance(&[1.0; 4]), vec![0.25; 4]);
        assert_eq!(relative_importance(&[1.0, 3.0]), vec![0.25, 0.75]);
        assert_eq!(inverse_importance(&[1.0, 3.0]), vec![0.75, 0.25]);
    }

    #[test]
    fn constant_targets_rejected() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let err = GprModel::train(&x, &[2.0; 5], &GprConfig::default()).unwrap_err();
        assert!(matches!(err, GprError::DegenerateTargets));
    }

    #[test]
    fn identity_targets_interpolate() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 19.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        let model = GprModel::train(&x, &y, &GprConfig::default()).unwrap();
        let p = model.predict(&x).unwrap();
        let rmse = (p
            .mean
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / 20.0)
            .sqrt();
        assert!(rmse < 1e-3, "rmse {rmse}");
    }

    #[test]
    fn empty_query() {
        let x = vec![vec![0.0], vec![1.0]];
        let m = GprModel::from_parts(
            KernelParams::new(1.0, vec![1.0], 0.1).unwrap(),
            Standardizer::identity(1),
            x,
            vec![0.0, 1.0],
            0.0,
        )
        .unwrap();
        let p = m.predict(&[]).unwrap();
        assert!(p.mean.is_empty() && p.variance.is_empty());
        assert!(matches!(
            m.predict(&[vec![0.0, 0.0]]),
            Err(GprError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn json_round_trip_predicts_identically() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let m = GprModel::train(&x, &y, &GprConfig::default()).unwrap();
        let back = GprModel::from_json(&m.to_json()).unwrap();
        let q = vec![vec![2.5, 6.0]];
        assert_eq!(m.predict(&q).unwrap(), back.predict(&q).unwrap());
    }
}
