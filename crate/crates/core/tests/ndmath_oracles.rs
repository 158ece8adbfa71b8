#![allow(clippy::needless_range_loop)]

use finq_core::ndmath::{pca::covariance, pca_fit, Activation, Matrix, Mlp, Rng};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = Rng::new(seed);
    // Correlated columns so the spectrum is well separated.
    let mix: Vec<f64> = rng.normal_vec(cols * cols);
    let data: Vec<f64> = (0..rows)
        .flat_map(|_| {
            let z = rng.normal_vec(cols);
            (0..cols)
                .map(|c| (0..cols).map(|k| mix[c * cols + k] * z[k]).sum::<f64>() * (1.0 + c as f64 * 0.1))
                .collect::<Vec<_>>()
        })
        .collect();
    Matrix::new(rows, cols, data).unwrap()
}

#[test]
fn pca_matches_dense_eigensolver() {
    let data = random_matrix(50, 18, 77);
    let k = 18;
    let basis = pca_fit(&data, k).unwrap();

    // Oracle: covariance formed explicitly, decomposed by nalgebra.
    let mean = data.column_means();
    let mut cov = DMatrix::<f64>::zeros(18, 18);
    for row in data.iter_rows() {
        let d = DMatrix::from_iterator(18, 1, row.iter().zip(&mean).map(|(x, m)| x - m));
        cov += &d * d.transpose();
    }
    cov /= 49.0;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..18).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    for (r, &i) in order.iter().enumerate() {
        assert!((basis.explained_variance[r] - eig.eigenvalues[i]).abs() < 1e-8);
        let v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let pivot = (0..18).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap();
        let sign = v[pivot].signum();
        for c in 0..18 {
            let diff = (basis.components.get(r, c) - sign * v[c]).abs();
            assert!(diff < 1e-8, "component {r} entry {c}: {diff}");
        }
    }
}

#[test]
fn pca_components_orthonormal_and_error_monotone_in_k() {
    let data = random_matrix(60, 10, 5);
    let mut previous = f64::INFINITY;
    for k in 1..=10 {
        let basis = pca_fit(&data, k).unwrap();
        for i in 0..k {
            for j in 0..k {
                let d: f64 = basis
                    .components
                    .row(i)
                    .iter()
                    .zip(basis.components.row(j))
                    .map(|(a, b)| a * b)
                    .sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((d - expected).abs() < 1e-8);
            }
        }
        assert!(basis.explained_variance.windows(2).all(|w| w[0] >= w[1]));
        let err: f64 = data
            .iter_rows()
            .map(|row| {
                let rec = basis.reconstruct(row).unwrap();
                rec.iter().zip(row).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            })
            .sum();
        assert!(err <= previous + 1e-10, "k={k}: {err} > {previous}");
        previous = err;
    }
    assert!(previous < 1e-18 * 60.0 + 1e-16);
}

#[test]
fn reconstruction_error_equals_out_of_span_norm() {
    let data = random_matrix(40, 8, 9);
    let basis = pca_fit(&data, 3).unwrap();
    // Explicit projector P = Cᵀ C.
    let c = &basis.components;
    let p = c.transpose().matmul(c).unwrap();
    let mut rng = Rng::new(10);
    for _ in 0..20 {
        let x = rng.normal_vec(8);
        let centered: Vec<f64> = x.iter().zip(&basis.mean).map(|(a, m)| a - m).collect();
        let px = p.matvec(&centered).unwrap();
        let out_of_span: f64 = centered.iter().zip(&px).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let rec = basis.reconstruct(&x).unwrap();
        let err: f64 = rec.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!((err - out_of_span).abs() < 1e-12);
    }
}

#[test]
fn covariance_uses_unbiased_divisor() {
    let data = Matrix::from_rows(&[[0.01], [0.03]]).unwrap();
    let (mean, cov) = covariance(&data);
    assert!((mean[0] - 0.02).abs() < 1e-15);
    assert!((cov.get(0, 0) - 2e-4).abs() < 1e-15);
}

/// Smooth scalar loss with a non-trivial output gradient.
fn loss(out: &[f64], target: &[f64]) -> f64 {
    out.iter()
        .zip(target)
        .map(|(o, t)| (o - t).powi(2) + 0.1 * o.powi(3).sin())
        .sum()
}

fn loss_grad(out: &[f64], target: &[f64]) -> Vec<f64> {
    out.iter()
        .zip(target)
        .map(|(o, t)| 2.0 * (o - t) + 0.3 * o * o * o.powi(3).cos())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mlp_gradients_match_finite_differences(
        seed in 0u64..u64::MAX,
        hidden in proptest::collection::vec(1usize..7, 0..=3),
        input_dim in 1usize..6,
        output_dim in 1usize..5,
    ) {
        let mut rng = Rng::new(seed);
        let mut sizes = vec![input_dim];
        sizes.extend(&hidden);
        sizes.push(output_dim);
        let mut net = Mlp::new(&sizes, Activation::Tanh, &mut rng).unwrap();
        let x = rng.normal_vec(input_dim);
        let target = rng.normal_vec(output_dim);

        let cache = net.forward(&x).unwrap();
        let g_out = loss_grad(cache.output(), &target);
        let (grads, _) = net.backward(&cache, &g_out).unwrap();
        let analytic: Vec<Vec<f64>> = grads.blocks().iter().map(|b| b.to_vec()).collect();

        let h = 1e-5;
        for (bi, block) in analytic.iter().enumerate() {
            for (k, &a) in block.iter().enumerate() {
                let orig = net.param_blocks_mut("")[bi].values[k];
                net.param_blocks_mut("")[bi].values[k] = orig + h;
                let fp = loss(&net.predict(&x).unwrap(), &target);
                net.param_blocks_mut("")[bi].values[k] = orig - h;
                let fm = loss(&net.predict(&x).unwrap(), &target);
                net.param_blocks_mut("")[bi].values[k] = orig;
                let numeric = (fp - fm) / (2.0 * h);
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                prop_assert!(rel < 1e-4, "block {} entry {}: {} vs {}", bi, k, a, numeric);
            }
        }
    }

    #[test]
    fn forward_is_deterministic(seed in 0u64..1000) {
        let mut rng = Rng::new(seed);
        let net = Mlp::new(&[5, 7, 3], Activation::Tanh, &mut rng).unwrap();
        let x = rng.normal_vec(5);
        let a = net.predict(&x).unwrap();
        let b = net.predict(&x).unwrap();
        prop_assert_eq!(a, b);
    }
}
