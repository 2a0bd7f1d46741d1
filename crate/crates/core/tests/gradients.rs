mod common;

use common::*;
use tinder_core::{
    ll_gradient, log_likelihood, penalty, penalty_gradient, CovarianceMode, SoftAssignment,
};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

#[test]
fn log_likelihood_gradient_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..120 {
        let mut rng = rng(seed);
        let mode = if seed % 4 == 3 { CovarianceMode::Spherical } else { CovarianceMode::Diagonal };
        let data = random_data(&mut rng, 20, 2, 2.0);
        let params = random_params(&mut rng, 3, 2, mode);
        let analytic = ll_gradient(&data, &params).unwrap().to_flat();
        let fd = finite_difference(&params, STEP, |p| log_likelihood(&data, p).unwrap());
        let err = relative_error(&analytic, &fd);
        worst = worst.max(err);
        assert!(err < TOL, "seed {seed}: relative error {err}");
    }
    assert!(worst < TOL);
}

#[test]
fn penalty_gradient_matches_finite_differences() {
    for seed in 0..120 {
        let mut rng = rng(1000 + seed);
        let mode = if seed % 4 == 3 { CovarianceMode::Spherical } else { CovarianceMode::Diagonal };
        let data = random_data(&mut rng, 20, 2, 2.0);
        let params = random_params(&mut rng, 3, 2, mode);
        let h0 = random_assignment(&mut rng, 20, 3, 2.0);
        let h1 = random_assignment(&mut rng, 20, 2, 2.0);
        let history = [&h0, &h1];
        let analytic = penalty_gradient(&params, &history, &data).unwrap().to_flat();
        let fd = finite_difference(&params, STEP, |p| penalty(p, &history, &data).unwrap());
        let err = relative_error(&analytic, &fd);
        assert!(err < TOL, "seed {seed}: relative error {err}");
    }
}

#[test]
fn empty_history_gives_zero_penalty_gradient() {
    let mut rng = rng(5);
    let data = random_data(&mut rng, 20, 2, 2.0);
    let params = random_params(&mut rng, 3, 2, CovarianceMode::Diagonal);
    let g = penalty_gradient(&params, &[], &data).unwrap();
    assert!(g.to_flat().iter().all(|&v| v == 0.0));
}

#[test]
fn uninformative_history_gives_zero_penalty_gradient() {
    let mut rng = rng(6);
    let data = random_data(&mut rng, 20, 2, 2.0);
    let params = random_params(&mut rng, 3, 2, CovarianceMode::Diagonal);
    let flat = SoftAssignment::uniform(20, 4);
    let g = penalty_gradient(&params, &[&flat], &data).unwrap();
    assert!(g.max_abs() < 1e-8, "max |g| = {}", g.max_abs());
}

#[test]
fn f32_gradient_is_close_to_f64() {
    let mut rng = rng(77);
    let data = random_data(&mut rng, 20, 2, 2.0);
    let params = random_params(&mut rng, 3, 2, CovarianceMode::Diagonal);
    let g64 = ll_gradient(&data, &params).unwrap().to_flat();

    let data32 = tinder_core::DataMatrix::new(data.values().mapv(|v| v as f32), None).unwrap();
    let params32 = tinder_core::MixtureParams::new(
        params.weight_logits().mapv(|v| v as f32),
        params.means().mapv(|v| v as f32),
        params.log_variances().mapv(|v| v as f32),
        params.covariance_mode(),
    )
    .unwrap();
    let g32: Vec<f64> = ll_gradient(&data32, &params32).unwrap().to_flat().iter().map(|&v| v as f64).collect();
    assert!(relative_error(&g32, &g64) < 1e-4);
}
