//! Bounded quasi-Newton gradient ascent shared by the GP trainers.

use std::collections::VecDeque;

const MEMORY: usize = 7;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone)]
pub(crate) struct Ascent {
    pub max_iterations: usize,
    /// Stop when one accepted step changes the objective by less than this.
    pub tolerance: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct AscentResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Ascent {
    fn clamp(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    /// Maximizes `f`, which returns the value and gradient or `None` where
    /// the objective is undefined. L-BFGS directions with backtracking; the
    /// iterate is projected onto the box after every step.
    pub fn maximize<F>(&self, f: F, x0: &[f64]) -> Option<AscentResult>
    where
        F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
    {
        let mut x = x0.to_vec();
        self.clamp(&mut x);
        let (mut fx, mut gx) = f(&x)?;
        let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
        for it in 0..self.max_iterations {
            let mut d = self.direction(&gx, &memory);
            if dot(&d, &gx) <= 0.0 {
                memory.clear();
                d = gx.clone();
            }
            // freeze coordinates pushing against an active bound
            for i in 0..d.len() {
                if (x[i] <= self.lower[i] && d[i] < 0.0) || (x[i] >= self.upper[i] && d[i] > 0.0) {
                    d[i] = 0.0;
                }
            }
            if d.iter().all(|v| *v == 0.0) {
                return Some(AscentResult {
                    x,
                    value: fx,
                    iterations: it,
                    converged: true,
                });
            }
            let mut step = if memory.is_empty() {
                (1.0 / d.iter().fold(0.0f64, |m, v| m.max(v.abs()))).min(1.0)
            } else {
                1.0
            };
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
                self.clamp(&mut xn);
                let moved: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                if let Some((fn_, gn)) = f(&xn) {
                    if fn_.is_finite() && fn_ >= fx + ARMIJO * dot(&gx, &moved) {
                        accepted = Some((xn, fn_, gn, moved));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((xn, fn_, gn, s)) = accepted else {
                if memory.is_empty() {
                    return Some(AscentResult {
                        x,
                        value: fx,
                        iterations: it,
                        converged: false,
                    });
                }
                memory.clear();
                continue;
            };
            // curvature pair for the minimization of -f
            let y: Vec<f64> = gx.iter().zip(&gn).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                if memory.len() == MEMORY {
                    memory.pop_front();
                }
                memory.push_back((s, y, 1.0 / sy));
            }
            let change = (fn_ - fx).abs();
            x = xn;
            fx = fn_;
            gx = gn;
            if change < self.tolerance {
                return Some(AscentResult {
                    x,
                    value: fx,
                    iterations: it + 1,
                    converged: true,
                });
            }
        }
        Some(AscentResult {
            x,
            value: fx,
            iterations: self.max_iterations,
            converged: false,
        })
    }

    /// Two-loop recursion; returns an ascent direction.
    fn direction(&self, g: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
        let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter().map(|v| -v).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximizes_concave_quadratic() {
        let f = |x: &[f64]| {
            let v = -(x[0] - 1.0).powi(2) - 10.0 * (x[1] + 2.0).powi(2);
            Some((v, vec![-2.0 * (x[0] - 1.0), -20.0 * (x[1] + 2.0)]))
        };
        let opt = Ascent {
            max_iterations: 200,
            tolerance: 1e-14,
            lower: vec![-10.0; 2],
            upper: vec![10.0; 2],
        };
        let r = opt.maximize(f, &[5.0, 5.0]).unwrap();
        assert!(
            (r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] + 2.0).abs() < 1e-5,
            "{:?}",
            r.x
        );
    }

    #[test]
    fn respects_bounds() {
        let f = |x: &[f64]| Some((x[0], vec![1.0]));
        let opt = Ascent {
            max_iterations: 50,
            tolerance: 1e-12,
            lower: vec![0.0],
            upper: vec![3.0],
        };
        let r = opt.maximize(f, &[0.5]).unwrap();
        assert_eq!(r.x[0], 3.0);
    }
}
