use batlife::features::Standardizer;
use batlife::gpr::{GprConfig, GprModel, KernelParams};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn inputs() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 3..25)
}

fn kernel() -> impl Strategy<Value = KernelParams> {
    (0.2f64..3.0, 0.1f64..3.0, 0.1f64..3.0, 0.0f64..0.5)
        .prop_map(|(sf, l0, l1, sn)| KernelParams::new(sf, vec![l0, l1], sn).unwrap())
}

fn model(k: &KernelParams, x: &[Vec<f64>], y: &[f64]) -> GprModel {
    GprModel::from_parts(
        k.clone(),
        Standardizer::identity(2),
        x.to_vec(),
        y.to_vec(),
        0.0,
    )
    .unwrap()
}

// plain double loop over the kernel definition, no shared helpers
fn k_naive(a: &[f64], b: &[f64], k: &KernelParams) -> f64 {
    let mut s = 0.0;
    for m in 0..a.len() {
        s += ((a[m] - b[m]) / k.length_scales[m]).powi(2);
    }
    k.sigma_f * k.sigma_f * (-s.sqrt()).exp()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn variance_is_bounded_by_prior(k in kernel(), x in inputs(), q in inputs()) {
        let y: Vec<f64> = x.iter().map(|r| r[0].sin() + r[1]).collect();
        let p = model(&k, &x, &y).predict(&q).unwrap();
        let prior = k.sigma_f.powi(2) + k.sigma_n.powi(2);
        for v in &p.variance {
            prop_assert!(*v >= 0.0);
            prop_assert!(*v <= prior * (1.0 + 1e-12));
        }
    }

    #[test]
    fn factor_reconstructs_kernel(k in kernel(), x in inputs()) {
        let y = vec![0.0; x.len()];
        let m = model(&k, &x, &y);
        let l = m.factor();
        let a = m.regularized_kernel();
        let err = (&l * l.transpose() - &a).abs().max();
        prop_assert!(err <= 1e-8 * a.abs().max());
    }

    #[test]
    fn matches_dense_inverse(k in kernel(), x in inputs(), q in inputs()) {
        let n = x.len();
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[1] - r[0]).collect();
        let m = model(&k, &x, &y);
        let mut a = DMatrix::from_fn(n, n, |i, j| k_naive(&x[i], &x[j], &k));
        for i in 0..n {
            a[(i, i)] += k.sigma_n.powi(2) + m.jitter();
        }
        let inv = a.clone().try_inverse().unwrap();
        let cond = a.norm() * inv.norm();
        prop_assume!(cond < 1e6);
        let yv = DVector::from_vec(y.clone());
        let p = m.predict(&q).unwrap();
        for (j, row) in q.iter().enumerate() {
            let ks = DVector::from_fn(n, |i, _| k_naive(&x[i], row, &k));
            let mean = (ks.transpose() * &inv * &yv)[0];
            let var = k.sigma_f.powi(2) + k.sigma_n.powi(2) - (ks.transpose() * &inv * &ks)[0];
            let scale = yv.amax().max(1.0);
            prop_assert!((p.mean[j] - mean).abs() <= 1e-8 * scale * cond.max(1.0));
            prop_assert!((p.variance[j] - var.max(0.0)).abs() <= 1e-8 * k.sigma_f.powi(2) * cond.max(1.0));
        }
    }
}

#[test]
fn irrelevant_feature_gets_long_length_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<Vec<f64>> = (0..80)
        .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
        .collect();
    let y: Vec<f64> = x
        .iter()
        .map(|r| (1.5 * r[0]).sin() + 0.01 * rng.random_range(-1.0..1.0))
        .collect();
    let config = GprConfig {
        restarts: 2,
        max_iterations: 200,
        ..GprConfig::default()
    };
    let m = GprModel::train(&x, &y, &config).unwrap();
    let l = &m.kernel().length_scales;
    assert!(l[1] > 5.0 * l[0], "length scales {l:?}");
    // larger length scale, larger relative weight
    let w = m.relative_importance();
    assert!(w[1] > w[0]);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn model_file_round_trip_predicts_identically() {
    let x: Vec<Vec<f64>> = (0..20)
        .map(|i| vec![i as f64, (i * i) as f64 / 10.0])
        .collect();
    let y: Vec<f64> = x.iter().map(|r| r[0] * 2.0 - r[1]).collect();
    let config = GprConfig {
        restarts: 1,
        max_iterations: 100,
        ..GprConfig::default()
    };
    let m = GprModel::train(&x, &y, &config).unwrap();
    let back = GprModel::from_json(&m.to_json()).unwrap();
    let q = vec![vec![3.5, 1.0], vec![-1.0, 30.0]];
    assert_eq!(m.predict(&q).unwrap(), back.predict(&q).unwrap());
}
