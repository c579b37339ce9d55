use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use super::GprError;

/// Jitter levels tried in turn, relative to `σ_f²`.
pub const JITTER_LADDER: [f64; 4] = [1e-9, 1e-8, 1e-7, 1e-6];

/// Hyperparameters of the ARD exponential kernel plus observation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub sigma_f: f64,
    pub length_scales: Vec<f64>,
    pub sigma_n: f64,
}

impl KernelParams {
    pub fn new(sigma_f: f64, length_scales: Vec<f64>, sigma_n: f64) -> Result<Self, GprError> {
        let k = Self {
            sigma_f,
            length_scales,
            sigma_n,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GprError> {
        if !(self.sigma_f > 0.0 && self.sigma_f.is_finite()) {
            return Err(GprError::InvalidKernel(format!(
                "sigma_f must be positive, got {}",
                self.sigma_f
            )));
        }
        if self
            .length_scales
            .iter()
            .any(|l| !(*l > 0.0 && l.is_finite()))
        {
            return Err(GprError::InvalidKernel(
                "length scales must be positive".into(),
            ));
        }
        if !(self.sigma_n >= 0.0 && self.sigma_n.is_finite()) {
            return Err(GprError::InvalidKernel(format!(
                "sigma_n must be >= 0, got {}",
                self.sigma_n
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }
}

/// `sqrt(Σ (a_m - b_m)² / l_m²)`.
pub(crate) fn scaled_distance(a: &[f64], b: &[f64], l: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(l)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// `σ_f²·exp(-sqrt(Σ (x_im - x_jm)² / l_m²))`.
pub fn kernel_eval(x_i: &[f64], x_j: &[f64], k: &KernelParams) -> Result<f64, GprError> {
    if x_i.len() != k.dim() || x_j.len() != k.dim() {
        return Err(GprError::DimensionMismatch {
            expected: k.dim(),
            got: if x_i.len() != k.dim() {
                x_i.len()
            } else {
                x_j.len()
            },
        });
    }
    Ok(k.sigma_f.powi(2) * (-scaled_distance(x_i, x_j, &k.length_scales)).exp())
}

/// Noise-free kernel matrix over the rows of `x`.
pub fn kernel_matrix(x: &[Vec<f64>], sigma_f: f64, l: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let sf2 = sigma_f * sigma_f;
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = sf2;
        for j in 0..i {
            let v = sf2 * (-scaled_distance(&x[i], &x[j], l)).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// `n × q` cross-covariance between training rows and test rows.
pub fn cross_kernel(x: &[Vec<f64>], xs: &[Vec<f64>], sigma_f: f64, l: &[f64]) -> DMatrix<f64> {
    let sf2 = sigma_f * sigma_f;
    DMatrix::from_fn(x.len(), xs.len(), |i, j| {
        sf2 * (-scaled_distance(&x[i], &xs[j], l)).exp()
    })
}

/// Cholesky factor of `a + jitter·I`, escalating the jitter through
/// [`JITTER_LADDER`] (scaled by `sigma_f2`). Returns the factor and the
/// absolute jitter used.
pub fn factorize(a: &DMatrix<f64>, sigma_f2: f64) -> Result<(Cholesky<f64, Dyn>, f64), GprError> {
    for rel in JITTER_LADDER {
        let jitter = rel * sigma_f2;
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(m) {
            if c.l_dirty()
                .diagonal()
                .iter()
                .all(|d| *d > 0.0 && d.is_finite())
            {
                return Ok((c, jitter));
            }
        }
    }
    Err(GprError::SingularKernel)
}
