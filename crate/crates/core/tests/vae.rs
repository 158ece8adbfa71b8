use std::sync::Arc;

use finq_core::market_data::{generate_synthetic_history, Normalizer, TenorGrid};
use finq_core::ndmath::{Matrix, Rng};
use finq_core::vae::{kl_divergence, reparameterize, train, TrainConfig, VaeModel};
use proptest::prelude::*;

fn perturbed_loss(model: &VaeModel, block: usize, idx: usize, h: f64, x: &[f64], eps: &[f64], anchors: &[usize]) -> f64 {
    let mut m = model.clone();
    m.param_blocks_mut()[block].values[idx] += h;
    let (p, _) = m.loss_and_gradients(x, eps, anchors).unwrap();
    p.total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn loss_gradient_matches_finite_differences(
        seed in any::<u64>(),
        input_dim in 3usize..8,
        latent in 1usize..4,
        beta in 0.0f64..1.0,
        alpha in 0.0f64..10.0,
    ) {
        let mut rng = Rng::new(seed);
        let model = VaeModel::init(input_dim, latent, &[6, 5], &[5, 6], beta, alpha, &mut rng).unwrap();
        let x = rng.normal_vec(input_dim);
        let eps = rng.normal_vec(latent);
        let anchors: Vec<usize> = (0..input_dim).filter(|i| i % 2 == 0).collect();
        let (_, grads) = model.loss_and_gradients(&x, &eps, &anchors).unwrap();
        let blocks = grads.blocks();
        let h = 1e-5;
        for (b, g) in blocks.iter().enumerate() {
            for (i, &analytic) in g.iter().enumerate() {
                let numeric = (perturbed_loss(&model, b, i, h, &x, &eps, &anchors)
                    - perturbed_loss(&model, b, i, -h, &x, &eps, &anchors))
                    / (2.0 * h);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                prop_assert!(rel < 1e-4, "block {b} index {i}: {analytic} vs {numeric}");
            }
        }
    }

    #[test]
    fn loss_parts_compose(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let model = VaeModel::init(6, 2, &[8], &[8], rng.uniform(), 10.0 * rng.uniform(), &mut rng).unwrap();
        let x = rng.normal_vec(6);
        let z = rng.normal_vec(2);
        let p = model.loss(&x, &z, &[1, 4]).unwrap();
        let expected = p.recon + model.alpha() * p.anchor + model.beta() * p.kl;
        prop_assert!((p.total - expected).abs() <= 1e-12 * p.total.abs().max(1.0));
        prop_assert!(p.kl >= -1e-12);
    }

    #[test]
    fn kl_non_negative(mu in proptest::collection::vec(-5.0f64..5.0, 1..6), seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let logvar: Vec<f64> = mu.iter().map(|_| rng.uniform_in(-8.0, 4.0)).collect();
        prop_assert!(kl_divergence(&mu, &logvar).unwrap() >= -1e-12);
    }
}

#[test]
fn kl_closed_form_cases() {
    assert!((kl_divergence(&[1.0], &[0.0]).unwrap() - 0.5).abs() < 1e-12);
    assert!(kl_divergence(&[0.0, 0.0], &[0.0, 0.0]).unwrap().abs() < 1e-12);
    // σ² = e: ½(e − 1 − 1)
    let v = kl_divergence(&[0.0], &[1.0]).unwrap();
    assert!((v - 0.5 * (std::f64::consts::E - 2.0)).abs() < 1e-12);
}

#[test]
fn reparameterize_sample_statistics() {
    let mut rng = Rng::new(11);
    let n = 100_000;
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    for _ in 0..n {
        let z = reparameterize(&[0.0; 3], &[0.0; 3], &mut rng).unwrap();
        for k in 0..3 {
            sum[k] += z[k];
            sq[k] += z[k] * z[k];
        }
    }
    for k in 0..3 {
        let mean = sum[k] / n as f64;
        let std = (sq[k] / n as f64 - mean * mean).sqrt();
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((std - 1.0).abs() < 0.02, "std {std}");
    }
}

#[test]
fn reparameterize_degenerate_and_seeded() {
    let mu = [0.3, -1.2];
    let z = reparameterize(&mu, &[-50.0, -50.0], &mut Rng::new(1)).unwrap();
    assert!(z.iter().zip(&mu).all(|(a, b)| (a - b).abs() < 1e-10));
    let a = reparameterize(&mu, &[0.0, 0.5], &mut Rng::new(4)).unwrap();
    let b = reparameterize(&mu, &[0.0, 0.5], &mut Rng::new(4)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn identical_rows_are_learned() {
    let row = [0.4, -0.3, 1.1, 0.2, -0.7];
    let data = Matrix::from_rows(&vec![row; 64]).unwrap();
    let cfg = TrainConfig::with_latent_dim(1);
    let (model, _) = train(&data, &[0, 2, 4], &cfg).unwrap();
    let x_hat = model.reconstruct_mean(&row).unwrap();
    let mse = row.iter().zip(&x_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / row.len() as f64;
    let power = row.iter().map(|a| a * a).sum::<f64>() / row.len() as f64;
    assert!(mse < 1e-4 * power, "mse {mse}");
}

#[test]
fn training_is_deterministic() {
    let mut rng = Rng::new(5);
    let rows: Vec<Vec<f64>> = (0..64).map(|_| rng.normal_vec(6)).collect();
    let data = Matrix::from_rows(&rows).unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::with_latent_dim(2)
    };
    let (m1, t1) = train(&data, &[1, 3], &cfg).unwrap();
    let (m2, t2) = train(&data, &[1, 3], &cfg).unwrap();
    assert_eq!(t1, t2);
    assert_eq!(m1.to_json().unwrap(), m2.to_json().unwrap());
}

#[test]
fn nelson_siegel_curves_compress_to_three_factors() {
    let grid = Arc::new(TenorGrid::standard());
    let s = generate_synthetic_history(&grid, &Default::default(), 500, &mut Rng::new(7)).unwrap();
    let raw = s.history.to_matrix();
    let norm = Normalizer::fit(&raw, grid.labels()).unwrap();
    let data = norm.apply_matrix(&raw);
    let anchors = grid.indices_of(&["2Y", "5Y", "10Y", "30Y"]).unwrap();
    let (model, trace) = train(&data, &anchors, &TrainConfig::default()).unwrap();
    assert!(trace.last().unwrap().total <= trace[0].total);

    let mut se = 0.0;
    for x in data.iter_rows() {
        let x_hat = model.reconstruct_mean(x).unwrap();
        se += x.iter().zip(&x_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    // Per-tenor standardized data: unit std in every column.
    let rmse = (se / (data.rows() * data.cols()) as f64).sqrt();
    assert!(rmse < 0.25, "rmse {rmse}");
}
