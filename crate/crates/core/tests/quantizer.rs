use std::sync::Arc;

use finq_core::market_data::{generate_synthetic_history, Normalizer, TenorGrid};
use finq_core::ndmath::{Activation, Dense, Matrix, Mlp, Rng};
use finq_core::quantizer::{
    anchor_objective, latent_gradient, quantize, reconstruct_quantized, QuantizeConfig, QuantizeMethod,
};
use finq_core::vae::{train, TrainConfig, VaeModel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn affine_model(w: &Matrix, b: &[f64]) -> VaeModel {
    let decoder = Mlp::from_layers(
        vec![Dense {
            weights: w.clone(),
            bias: b.to_vec(),
        }],
        Activation::Tanh,
        Activation::Linear,
    )
    .unwrap();
    let encoder = Mlp::zeros(&[w.rows(), 2 * w.cols()], Activation::Tanh).unwrap();
    VaeModel::from_parts(encoder, decoder, 0.0, 0.0).unwrap()
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::new(rows, cols, rng.normal_vec(rows * cols)).unwrap()
}

/// Least squares on the anchor rows, solved independently with an SVD.
fn normal_equations(w: &Matrix, b: &[f64], x: &[f64], anchors: &[usize]) -> Vec<f64> {
    let a = DMatrix::from_fn(anchors.len(), w.cols(), |r, c| w.get(anchors[r], c));
    let rhs = DVector::from_iterator(anchors.len(), anchors.iter().map(|&i| x[i] - b[i]));
    a.svd(true, true).solve(&rhs, 1e-14).unwrap().iter().copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn affine_decoder_matches_least_squares(seed in any::<u64>(), k in 1usize..4) {
        let mut rng = Rng::new(seed);
        let m = 9;
        let w = random_matrix(m, k, &mut rng);
        let b = rng.normal_vec(m);
        let x: Vec<f64> = rng.normal_vec(m).iter().map(|v| 0.5 * v).collect();
        let anchors = vec![0, 2, 4, 5, 8];
        let model = affine_model(&w, &b);
        let expected = normal_equations(&w, &b, &x, &anchors);
        // z accuracy of 1e-6 needs objective improvements well below the default tolerance.
        let cfg = QuantizeConfig { latent_bound: None, max_iters: 5000, tolerance: 1e-20, ..Default::default() };
        let r = quantize(&model, &x, &anchors, &cfg, &vec![0.0; k]).unwrap();
        for (a, e) in r.z_q.iter().zip(&expected) {
            prop_assert!((a - e).abs() < 1e-6, "{:?} vs {:?}", r.z_q, expected);
        }
    }

    #[test]
    fn affine_gradient_closed_form(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let w = random_matrix(6, 2, &mut rng);
        let b = rng.normal_vec(6);
        let x = rng.normal_vec(6);
        let z = rng.normal_vec(2);
        let anchors = [1, 3, 4];
        let g = latent_gradient(&affine_model(&w, &b), &z, &x, &anchors).unwrap();
        let dec = w.matvec(&z).unwrap();
        for (c, gc) in g.iter().enumerate() {
            let expected: f64 = anchors
                .iter()
                .map(|&i| 2.0 * w.get(i, c) * (dec[i] + b[i] - x[i]))
                .sum();
            prop_assert!((gc - expected).abs() < 1e-12 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn random_decoder_gradient_matches_finite_differences(seed in any::<u64>(), k in 1usize..4) {
        let mut rng = Rng::new(seed);
        let model = VaeModel::init(7, k, &[8], &[8, 6], 0.0, 0.0, &mut rng).unwrap();
        let x = rng.normal_vec(7);
        let z = rng.normal_vec(k);
        let anchors = [0, 3, 6];
        let g = latent_gradient(&model, &z, &x, &anchors).unwrap();
        let h = 1e-6;
        for c in 0..k {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[c] += h;
            zm[c] -= h;
            let fd = (anchor_objective(&model, &zp, &x, &anchors).unwrap()
                - anchor_objective(&model, &zm, &x, &anchors).unwrap())
                / (2.0 * h);
            let rel = (g[c] - fd).abs() / g[c].abs().max(fd.abs()).max(1e-6);
            prop_assert!(rel < 1e-4, "{} vs {}", g[c], fd);
        }
    }

    #[test]
    fn never_worse_than_warm_start(seed in any::<u64>(), method in 0usize..3) {
        let mut rng = Rng::new(seed);
        let model = VaeModel::init(8, 2, &[6], &[6], 0.0, 0.0, &mut rng).unwrap();
        let x: Vec<f64> = rng.normal_vec(8);
        let method = [QuantizeMethod::Gradient, QuantizeMethod::NelderMead, QuantizeMethod::Auto][method];
        let cfg = QuantizeConfig { method, max_iters: 60, ..Default::default() };
        let (obj, r) = reconstruct_quantized(&model, &x, &[0, 4, 7], &cfg).unwrap();
        prop_assert!(r.anchor_error_after <= r.anchor_error_before);
        let direct: f64 = [0, 4, 7].iter().map(|&i| (x[i] - obj[i]).powi(2)).sum();
        prop_assert!((direct - r.anchor_error_after).abs() < 1e-12);
    }
}

#[test]
fn zero_anchor_error_means_zero_gradient() {
    let mut rng = Rng::new(2);
    let model = VaeModel::init(5, 2, &[4], &[4], 0.0, 0.0, &mut rng).unwrap();
    let z = [0.2, -0.4];
    let x = model.decode(&z).unwrap();
    assert!(latent_gradient(&model, &z, &x, &[0, 2]).unwrap().iter().all(|g| *g == 0.0));
}

fn trained_base_layer(seed: u64) -> (VaeModel, Matrix, Vec<usize>) {
    let grid = Arc::new(TenorGrid::standard());
    let s = generate_synthetic_history(&grid, &Default::default(), 400, &mut Rng::new(seed)).unwrap();
    let raw = s.history.to_matrix();
    let norm = Normalizer::fit(&raw, grid.labels()).unwrap();
    let data = norm.apply_matrix(&raw);
    let anchors = grid.indices_of(&["2Y", "5Y", "10Y", "30Y"]).unwrap();
    let (model, _) = train(&data, &anchors, &TrainConfig::default()).unwrap();
    (model, data, anchors)
}

#[test]
fn identical_curves_are_fitted_at_anchors() {
    let row = [0.9, 0.4, -0.2, -0.6, 0.1, 0.8];
    let data = Matrix::from_rows(&vec![row; 64]).unwrap();
    let (model, _) = train(&data, &[1, 3, 5], &TrainConfig::with_latent_dim(1)).unwrap();
    let (obj, _) = reconstruct_quantized(&model, &row, &[1, 3, 5], &QuantizeConfig::default()).unwrap();
    for i in [1, 3, 5] {
        assert!((obj[i] - row[i]).abs() < 1e-4, "{} vs {}", obj[i], row[i]);
    }
}

#[test]
fn trained_layer_matches_grid_search() {
    let (model, data, anchors) = trained_base_layer(21);
    let x = data.row(123);
    let r = quantize(&model, x, &anchors, &QuantizeConfig::default(), &model.encode(x).unwrap().0).unwrap();

    // Exhaustive grid over [−4, 4]³ at 0.05, then Nelder–Mead from the best cell.
    let steps = 161;
    let coord = |i: usize| -4.0 + 0.05 * i as f64;
    let mut best = (f64::INFINITY, vec![0.0; 3]);
    for a in 0..steps {
        for b in 0..steps {
            for c in 0..steps {
                let z = [coord(a), coord(b), coord(c)];
                let f = anchor_objective(&model, &z, x, &anchors).unwrap();
                if f < best.0 {
                    best = (f, z.to_vec());
                }
            }
        }
    }
    let refine = QuantizeConfig {
        method: QuantizeMethod::NelderMead,
        simplex_size: 0.05,
        max_iters: 2000,
        scan_points: None,
        ..Default::default()
    };
    let oracle = quantize(&model, x, &anchors, &refine, &best.1).unwrap().anchor_error_after;
    assert!(
        r.anchor_error_after <= 1.05 * oracle + 1e-14,
        "quantized {} vs oracle {}",
        r.anchor_error_after,
        oracle
    );
}

#[test]
fn quantization_improves_calibration_on_trained_layer() {
    let (model, data, anchors) = trained_base_layer(5);
    let cfg = QuantizeConfig::default();
    let (mut before, mut after) = (0.0, 0.0);
    for x in data.iter_rows().take(100) {
        let (_, r) = reconstruct_quantized(&model, x, &anchors, &cfg).unwrap();
        assert!(r.anchor_error_after <= r.anchor_error_before);
        before += r.anchor_error_before;
        after += r.anchor_error_after;
    }
    assert!(after < before, "{after} vs {before}");
}
