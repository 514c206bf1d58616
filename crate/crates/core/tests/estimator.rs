use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use romkit::error::RomError;
use romkit::estimator::*;
use romkit::mlp::{MlpParams, ReducedDynamics};
use romkit::plant::NUM_INPUTS;

mod common;
use common::*;

#[test]
fn update_matches_the_textbook_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.random_range(1..8);
        let m = rng.random_range(1..6);
        let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let p = random_spd(n, &mut rng);
        let obs = AffineObservation { c: random_matrix(m, n, 1.0, &mut rng), offset: DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)) };
        let r = random_spd(m, &mut rng);
        let y = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let got = update(&EkfBelief::new(x.clone(), p.clone()).unwrap(), &y, &obs, &r).unwrap();
        let (x_want, p_want) = textbook_update(&x, &p, &y, &obs.c, &obs.offset, &r);
        assert!((&got.belief.xi - x_want).amax() < 1e-10);
        assert!((&got.belief.p - p_want).amax() < 1e-10);
        let residual = &got.gain * &got.innovation_cov - &p * obs.c.transpose();
        assert!(residual.amax() < 1e-10);
    }
}

#[test]
fn predict_matches_a_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let r = rng.random_range(1..6);
        let net = MlpParams::glorot(&[NUM_INPUTS + r, 7, r], rng.random()).unwrap();
        let xi = DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
        let p = random_spd(r, &mut rng);
        let q = random_spd(r, &mut rng);
        let u = random_input(&mut rng);
        let got = predict(&EkfBelief::new(xi.clone(), p.clone()).unwrap(), &u, &net, &q).unwrap();
        let a = net.state_jacobian(&xi, &u).unwrap();
        assert_eq!(got.xi, net.step(&xi, &u).unwrap());
        for i in 0..r {
            for j in 0..r {
                let mut acc = q[(i, j)];
                for k in 0..r {
                    for l in 0..r {
                        acc += a[(i, k)] * p[(k, l)] * a[(j, l)];
                    }
                }
                assert!((got.p[(i, j)] - acc).abs() < 1e-12 * acc.abs().max(1.0));
            }
        }
    }
}

#[test]
fn pod_mlp_ekf_with_a_linear_network_is_a_kalman_filter() {
    for seed in 0..5 {
        let gap = pod_mlp_ekf_linear_gap(seed);
        assert!(gap < 1e-10, "seed {seed}: {gap}");
    }
}

#[test]
fn observation_rows_select_the_reconstructed_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = normalization(10, &mut rng);
    let basis = basis(10, 3, &mut rng);
    let obs = AffineObservation::reduced(&basis, &params, &[1, 4, 10]).unwrap();
    let xi = DVector::from_vec(vec![0.3, -0.7, 1.1]);
    let x = lift(&xi, &basis, &params).unwrap();
    let y = &obs.c * &xi + &obs.offset;
    for (row, &i) in [1, 4, 10].iter().enumerate() {
        assert!((y[row] - x[i - 1]).abs() < 1e-12);
    }
}

#[test]
fn full_ekf_on_a_linear_plant_is_a_kalman_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 8;
    let selection = [1, 3, 8];
    let plant = linear_plant(n, &mut rng);
    let run = measured_run(&plant, &selection, 100, &mut rng);
    let params = normalization(n, &mut rng);
    let config = EkfConfig::full(&noise(n, &selection), &params).unwrap();
    let got = run_full_ekf(&run, &plant, &params, &config, false).unwrap();

    let obs = AffineObservation::selection(n, &selection).unwrap();
    let zero = DVector::zeros(n);
    let x0 = params.denormalize(&DVector::from_element(n, 0.5)).unwrap();
    let want = LinearKf { a: &plant.m, b: &plant.b, d: &zero, c: &obs.c, offset: &obs.offset }.run(&config, x0, &run);
    // forward differences of a linear map are exact up to rounding
    for (g, w) in got.estimates.iter().zip(&want) {
        assert!((g - w).amax() < 1e-6, "{}", (g - w).amax());
    }
}

#[test]
fn pod_ekf_on_a_linear_plant_is_a_kalman_filter_on_the_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, r) = (10, 4);
    let selection = [2, 6, 9];
    let plant = linear_plant(n, &mut rng);
    let run = measured_run(&plant, &selection, 100, &mut rng);
    let params = normalization(n, &mut rng);
    let basis = basis(n, r, &mut rng);
    let config = EkfConfig::reduced(&noise(n, &selection), &basis, &params).unwrap();
    let got = run_pod_ekf(&run, &plant, &basis, &params, &config, false).unwrap();

    // xi+ = U^T D^-1 (M (D U xi + x_min) + B u - x_min)
    let d_inv = DMatrix::from_diagonal(&params.scale().map(|s| 1.0 / s));
    let d = DMatrix::from_diagonal(&params.scale());
    let ut = basis.modes.transpose();
    let a = &ut * &d_inv * &plant.m * &d * &basis.modes;
    let b = &ut * &d_inv * &plant.b;
    let shift = &ut * &d_inv * (&plant.m * &params.x_min - &params.x_min);
    let obs = AffineObservation::reduced(&basis, &params, &selection).unwrap();
    let xi0 = &ut * DVector::from_element(n, 0.5);
    let want = LinearKf { a: &a, b: &b, d: &shift, c: &obs.c, offset: &obs.offset }.run(&config, xi0, &run);
    for (g, w) in got.means.iter().zip(&want) {
        assert!((g - w).amax() < 1e-6, "{}", (g - w).amax());
    }
}

#[test]
fn covariance_stays_healthy_over_a_long_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (n, r) = (12, 5);
    let selection = [1, 2, 3, 12];
    let plant = linear_plant(n, &mut rng);
    let run = measured_run(&plant, &selection, 300, &mut rng);
    let params = normalization(n, &mut rng);
    let basis = basis(n, r, &mut rng);
    let net = MlpParams::glorot(&[NUM_INPUTS + r, 16, r], 7).unwrap();
    let config = EkfConfig::reduced(&noise(n, &selection), &basis, &params).unwrap();
    let out = run_pod_mlp_ekf(&run, &net, &basis, &params, &config, true).unwrap();
    assert_eq!(out.health.len(), 300);
    for h in &out.health {
        assert!(h.max_asymmetry == 0.0, "step {}", h.step);
        assert!(h.min_eigenvalue >= -1e-10, "step {}: {}", h.step, h.min_eigenvalue);
        assert!(h.gain_residual < 1e-10, "step {}: {}", h.step, h.gain_residual);
    }
    assert_eq!(out.timing.steps, 300);
    assert_eq!(out.timing.discretization, std::time::Duration::ZERO);
}

#[test]
fn a_non_finite_prediction_is_reported_with_its_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (n, r) = (6, 2);
    let plant = linear_plant(n, &mut rng);
    let run = measured_run(&plant, &[1], 5, &mut rng);
    let params = normalization(n, &mut rng);
    let basis = basis(n, r, &mut rng);
    let mut net = MlpParams::glorot(&[NUM_INPUTS + r, 4, r], 1).unwrap();
    net.biases[1][0] = f64::NAN;
    let config = EkfConfig::reduced(&noise(n, &[1]), &basis, &params).unwrap();
    match run_pod_mlp_ekf(&run, &net, &basis, &params, &config, false) {
        Err(RomError::FilterDivergence { step, .. }) => assert_eq!(step, 1),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn mismatched_inputs_are_contract_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (n, r) = (6, 2);
    let plant = linear_plant(n, &mut rng);
    let mut run = measured_run(&plant, &[1], 5, &mut rng);
    let params = normalization(n, &mut rng);
    let basis = basis(n, r, &mut rng);
    let net = MlpParams::glorot(&[NUM_INPUTS + 3, 4, 3], 1).unwrap();
    let config = EkfConfig::reduced(&noise(n, &[1]), &basis, &params).unwrap();
    assert!(run_pod_mlp_ekf(&run, &net, &basis, &params, &config, false).is_err());
    let good = MlpParams::glorot(&[NUM_INPUTS + r, 4, r], 1).unwrap();
    run.measurements.pop();
    assert!(run_pod_mlp_ekf(&run, &good, &basis, &params, &config, false).is_err());
}
