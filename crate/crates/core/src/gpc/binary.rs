//! Binary GP classification with the logistic link and the Laplace
//! approximation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::quadrature::{expected_sigmoid, log_sigmoid, sigmoid};
use super::GpcError;
use crate::gpr::{cross_kernel, even_stride, kernel_matrix, KernelParams};
use crate::optim::Ascent;

const NEWTON_MAX: usize = 100;
const STATIONARITY_TOL: f64 = 1e-10;

const LN_SIGMA_F: (f64, f64) = (-2.3, 1.61);
const LN_LENGTH: (f64, f64) = (-4.6, 6.9);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpcConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
    /// Training sets larger than this are thinned to an even stride.
    pub max_train_samples: Option<usize>,
}

impl Default for GpcConfig {
    fn default() -> Self {
        Self {
            restarts: 3,
            max_iterations: 200,
            tolerance: 1e-8,
            seed: 0,
            max_train_samples: Some(300),
        }
    }
}

/// Posterior mode and the quantities reused for prediction and gradients.
#[derive(Debug, Clone)]
struct Mode {
    f: DVector<f64>,
    /// `∇ log p(y|f̂) = t - π`.
    grad: DVector<f64>,
    sqrt_w: DVector<f64>,
    /// Factor of `B = I + W^½ K W^½`.
    chol_b: Cholesky<f64, Dyn>,
    /// `a` with `f̂ = K a`.
    a: DVector<f64>,
    log_marginal: f64,
}

fn targets(labels: &[i8]) -> DVector<f64> {
    DVector::from_iterator(
        labels.len(),
        labels.iter().map(|&y| if y > 0 { 1.0 } else { 0.0 }),
    )
}

fn b_matrix(k: &DMatrix<f64>, sqrt_w: &DVector<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let v = sqrt_w[i] * k[(i, j)] * sqrt_w[j];
        if i == j {
            1.0 + v
        } else {
            v
        }
    })
}

fn objective(a: &DVector<f64>, f: &DVector<f64>, labels: &[i8]) -> f64 {
    let lik: f64 = labels
        .iter()
        .zip(f.iter())
        .map(|(&y, &fi)| log_sigmoid(y as f64 * fi))
        .sum();
    -0.5 * a.dot(f) + lik
}

/// Newton iterations for the posterior mode under the logistic likelihood,
/// with step halving whenever the objective fails to increase.
fn find_mode(k: &DMatrix<f64>, labels: &[i8]) -> Result<Mode, GpcError> {
    let n = labels.len();
    let t = targets(labels);
    let mut a = DVector::zeros(n);
    let mut f = DVector::zeros(n);
    let mut psi = objective(&a, &f, labels);
    for _ in 0..NEWTON_MAX {
        let pi = f.map(sigmoid);
        let grad = &t - &pi;
        if (&grad - &a).norm() < STATIONARITY_TOL {
            break;
        }
        let sqrt_w = pi.map(|p| (p * (1.0 - p)).sqrt());
        let chol = Cholesky::new(b_matrix(k, &sqrt_w)).ok_or(GpcError::SingularKernel)?;
        let w = sqrt_w.component_mul(&sqrt_w);
        let b = w.component_mul(&f) + &grad;
        let kb = k * &b;
        let inner = chol.solve(&sqrt_w.component_mul(&kb));
        let a_new = &b - sqrt_w.component_mul(&inner);
        let mut step = 1.0;
        loop {
            let a_try = &a + (&a_new - &a) * step;
            let f_try = k * &a_try;
            let psi_try = objective(&a_try, &f_try, labels);
            if psi_try >= psi - 1e-12 * psi.abs() || step < 1e-6 {
                a = a_try;
                f = f_try;
                psi = psi_try;
                break;
            }
            step *= 0.5;
        }
    }
    let pi = f.map(sigmoid);
    let grad = &t - &pi;
    let stationarity = (&grad - &a).norm();
    if !(stationarity < 1e-8) {
        return Err(GpcError::NoConvergence(stationarity));
    }
    let sqrt_w = pi.map(|p| (p * (1.0 - p)).sqrt());
    let chol_b = Cholesky::new(b_matrix(k, &sqrt_w)).ok_or(GpcError::SingularKernel)?;
    let log_det: f64 = chol_b.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    Ok(Mode {
        log_marginal: psi - log_det,
        f,
        grad,
        sqrt_w,
        chol_b,
        a,
    })
}

/// Laplace-approximate log marginal likelihood and its gradient in
/// `θ = [ln σ_f, ln l_1, …, ln l_d]`.
pub fn laplace_lml(
    x: &[Vec<f64>],
    labels: &[i8],
    theta: &[f64],
) -> Result<(f64, Vec<f64>), GpcError> {
    let d = x.first().map_or(0, Vec::len);
    if theta.len() != d + 1 {
        return Err(GpcError::DimensionMismatch {
            expected: d + 1,
            got: theta.len(),
        });
    }
    let n = x.len();
    let sf2 = (2.0 * theta[0]).exp();
    let l: Vec<f64> = theta[1..].iter().map(|v| v.exp()).collect();
    let k = kernel_matrix(x, sf2.sqrt(), &l);
    let mode = find_mode(&k, labels)?;

    let lmat = mode.chol_b.l();
    let sw = &mode.sqrt_w;
    // R = W^½ B⁻¹ W^½
    let r = {
        let diag = DMatrix::from_diagonal(sw);
        let inner = mode.chol_b.solve(&diag);
        DMatrix::from_fn(n, n, |i, j| sw[i] * inner[(i, j)])
    };
    // C = L⁻¹ W^½ K
    let swk = DMatrix::from_fn(n, n, |i, j| sw[i] * k[(i, j)]);
    let c = lmat
        .solve_lower_triangular(&swk)
        .ok_or(GpcError::SingularKernel)?;
    let pi = mode.f.map(sigmoid);
    let third = pi.map(|p| -p * (1.0 - p) * (1.0 - 2.0 * p));
    // d(-½ log|B|)/df̂_i = ½ [(K⁻¹ + W)⁻¹]_ii ∂³ log p/∂f_i³
    let s2 = DVector::from_fn(n, |i, _| {
        let post_var = k[(i, i)] - c.column(i).norm_squared();
        0.5 * post_var * third[i]
    });

    let mut gradient = Vec::with_capacity(d + 1);
    let mut dk = |dk: DMatrix<f64>| {
        let s1 = 0.5 * mode.a.dot(&(&dk * &mode.a)) - 0.5 * r.component_mul(&dk).sum();
        let b = &dk * &mode.grad;
        let s3 = &b - &k * (&r * &b);
        gradient.push(s1 + s2.dot(&s3));
    };
    dk(&k * 2.0);
    for m in 0..d {
        let dkm = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                return 0.0;
            }
            let dist = crate::gpr::kernel_distance(&x[i], &x[j], &l);
            if dist == 0.0 {
                return 0.0;
            }
            let dx = (x[i][m] - x[j][m]) / l[m];
            k[(i, j)] * dx * dx / dist
        });
        dk(dkm);
    }
    Ok((mode.log_marginal, gradient))
}

/// A trained binary classifier on standardized inputs. Label `+1` is the
/// positive class.
#[derive(Debug, Clone)]
pub struct BinaryGpc {
    kernel: KernelParams,
    x: Vec<Vec<f64>>,
    labels: Vec<i8>,
    mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct BinaryGpcFile {
    pub kernel: KernelParams,
    pub x: Vec<Vec<f64>>,
    pub labels: Vec<i8>,
}

fn check(x: &[Vec<f64>], labels: &[i8]) -> Result<usize, GpcError> {
    if x.len() != labels.len() {
        return Err(GpcError::DimensionMismatch {
            expected: x.len(),
            got: labels.len(),
        });
    }
    let d = x.first().map_or(0, Vec::len);
    for row in x {
        if row.len() != d {
            return Err(GpcError::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(GpcError::NonFinite);
        }
    }
    if labels.iter().any(|&y| y != 1 && y != -1) {
        return Err(GpcError::BadLabel);
    }
    let pos = labels.iter().filter(|&&y| y > 0).count();
    if pos == 0 || pos == labels.len() {
        return Err(GpcError::OneClassOnly);
    }
    Ok(d)
}

impl BinaryGpc {
    /// Conditions on labelled inputs at fixed hyperparameters.
    pub fn with_kernel(
        kernel: KernelParams,
        x: Vec<Vec<f64>>,
        labels: Vec<i8>,
    ) -> Result<Self, GpcError> {
        let d = check(&x, &labels)?;
        if d != kernel.dim() {
            return Err(GpcError::DimensionMismatch {
                expected: kernel.dim(),
                got: d,
            });
        }
        let k = kernel_matrix(&x, kernel.sigma_f, &kernel.length_scales);
        let mode = find_mode(&k, &labels)?;
        Ok(Self {
            kernel,
            x,
            labels,
            mode,
        })
    }

    /// Trains hyperparameters by maximizing the Laplace marginal likelihood.
    pub fn train(x: &[Vec<f64>], labels: &[i8], config: &GpcConfig) -> Result<Self, GpcError> {
        check(x, labels)?;
        // keep both classes represented when thinning
        let keep = stratified_stride(labels, config.max_train_samples);
        let x: Vec<Vec<f64>> = keep.iter().map(|&i| x[i].clone()).collect();
        let labels: Vec<i8> = keep.iter().map(|&i| labels[i]).collect();
        let d = check(&x, &labels)?;

        let mut lower = vec![LN_SIGMA_F.0];
        let mut upper = vec![LN_SIGMA_F.1];
        lower.extend(std::iter::repeat_n(LN_LENGTH.0, d));
        upper.extend(std::iter::repeat_n(LN_LENGTH.1, d));
        let ascent = Ascent {
            max_iterations: config.max_iterations,
            tolerance: config.tolerance,
            lower,
            upper,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let starts: Vec<Vec<f64>> = (0..config.restarts.max(1))
            .map(|r| {
                if r == 0 {
                    let mut th = vec![1f64.ln()];
                    th.extend(std::iter::repeat_n(0.0, d));
                    th
                } else {
                    let mut th = vec![rng.random_range(0.5f64.ln()..5f64.ln())];
                    th.extend((0..d).map(|_| rng.random_range(0.3f64.ln()..10f64.ln())));
                    th
                }
            })
            .collect();
        let objective = |th: &[f64]| laplace_lml(&x, &labels, th).ok();
        let results: Vec<_> = starts
            .par_iter()
            .map(|s| ascent.maximize(objective, s))
            .collect();
        let mut best: Option<crate::optim::AscentResult> = None;
        for r in results.into_iter().flatten() {
            if best.as_ref().is_none_or(|b| r.value > b.value) {
                best = Some(r);
            }
        }
        let best = best.ok_or(GpcError::NoConvergence(f64::NAN))?;
        let kernel = KernelParams {
            sigma_f: best.x[0].exp(),
            length_scales: best.x[1..].iter().map(|v| v.exp()).collect(),
            sigma_n: 0.0,
        };
        Self::with_kernel(kernel, x, labels)
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    pub fn mode(&self) -> &[f64] {
        self.mode.f.as_slice()
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.mode.log_marginal
    }

    /// Norm of `∇ log p(f|X, y)` at the stored mode.
    pub fn stationarity(&self) -> f64 {
        (&self.mode.grad - &self.mode.a).norm()
    }

    /// Mean and variance of the latent `f*` under the Laplace posterior.
    pub fn latent(&self, x_star: &[f64]) -> Result<(f64, f64), GpcError> {
        if x_star.len() != self.dim() {
            return Err(GpcError::DimensionMismatch {
                expected: self.dim(),
                got: x_star.len(),
            });
        }
        let ks = cross_kernel(
            &self.x,
            &[x_star.to_vec()],
            self.kernel.sigma_f,
            &self.kernel.length_scales,
        );
        let ks = ks.column(0);
        let mean = ks.dot(&self.mode.grad);
        let v = self
            .mode
            .chol_b
            .l_dirty()
            .solve_lower_triangular(&self.mode.sqrt_w.component_mul(&ks))
            .ok_or(GpcError::SingularKernel)?;
        let var = (self.kernel.sigma_f.powi(2) - v.norm_squared()).max(0.0);
        Ok((mean, var))
    }

    /// `P(y = +1 | x*)`, kept strictly inside (0, 1).
    pub fn predict(&self, x_star: &[f64]) -> Result<f64, GpcError> {
        let (mean, var) = self.latent(x_star)?;
        Ok(expected_sigmoid(mean, var).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    }

    pub(crate) fn to_file(&self) -> BinaryGpcFile {
        BinaryGpcFile {
            kernel: self.kernel.clone(),
            x: self.x.clone(),
            labels: self.labels.clone(),
        }
    }

    pub(crate) fn from_file(f: BinaryGpcFile) -> Result<Self, GpcError> {
        Self::with_kernel(f.kernel, f.x, f.labels)
    }
}

/// Even stride within each class, splitting the budget in proportion to
/// class size with at least one sample per class.
fn stratified_stride(labels: &[i8], max: Option<usize>) -> Vec<usize> {
    let Some(max) = max.filter(|&m| labels.len() > m) else {
        return (0..labels.len()).collect();
    };
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] > 0).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] < 0).collect();
    let n_pos = ((max * pos.len()) / labels.len()).clamp(1, max - 1);
    let mut keep: Vec<usize> = even_stride(pos.len(), Some(n_pos))
        .into_iter()
        .map(|i| pos[i])
        .chain(
            even_stride(neg.len(), Some(max - n_pos))
                .into_iter()
                .map(|i| neg[i]),
        )
        .collect();
    keep.sort_unstable();
    keep
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Mirror-image clusters of 40 points on [-2.5, -1.5] and [1.5, 2.5].
    fn separated() -> (Vec<Vec<f64>>, Vec<i8>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for k in 0..40 {
            let o = k as f64 / 39.0;
            x.push(vec![-1.5 - o]);
            y.push(-1);
            x.push(vec![1.5 + o]);
            y.push(1);
        }
        (x, y)
    }

    #[test]
    fn one_class_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            BinaryGpc::train(&x, &[1, 1], &GpcConfig::default()),
            Err(GpcError::OneClassOnly)
        ));
    }

    #[test]
    fn mode_signs_match_labels() {
        let (x, y) = separated();
        let m = BinaryGpc::train(&x, &y, &GpcConfig::default()).unwrap();
        assert!(m.mode().iter().zip(&y).all(|(f, &l)| f * l as f64 > 0.0));
        assert!(m.stationarity() < 1e-8);
        assert!(m.predict(&[2.0]).unwrap() > 0.9);
    }

    #[test]
    fn mirror_point_is_even() {
        let (x, y) = separated();
        let m = BinaryGpc::train(&x, &y, &GpcConfig::default()).unwrap();
        assert!((m.predict(&[0.0]).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn laplace_gradient_matches_differences() {
        let (x, y) = separated();
        let th = [0.4, -0.2];
        let (_, g) = laplace_lml(&x, &y, &th).unwrap();
        for i in 0..2 {
            let h = 1e-5;
            let mut p = th;
            let mut q = th;
            p[i] += h;
            q[i] -= h;
            let fd = (laplace_lml(&x, &y, &p).unwrap().0 - laplace_lml(&x, &y, &q).unwrap().0)
                / (2.0 * h);
            assert!(
                (fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1e-3),
                "{i}: {fd} vs {}",
                g[i]
            );
        }
    }

    #[test]
    fn stratified_keeps_both_classes() {
        let mut labels = vec![1i8; 1000];
        labels[500] = -1;
        let keep = stratified_stride(&labels, Some(10));
        assert_eq!(keep.len(), 10);
        assert!(keep.contains(&500));
    }
}
