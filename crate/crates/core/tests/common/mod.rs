//! Oracles and fixtures shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use romkit::error::Result;
use romkit::estimator::*;
use romkit::mlp::{train, Activation, Dataset, MlpParams, Split, TrainConfig};
use romkit::plant::{Input, NUM_INPUTS};
use romkit::pod::{compute_basis, NormalizationParams, ReducedBasis};

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..1.0))
}

pub fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = random_matrix(n, n, 1.0, rng);
    &a * a.transpose() + DMatrix::identity(n, n) * 0.1
}

pub fn random_input(rng: &mut ChaCha8Rng) -> Input {
    Input([rng.random_range(0.48..0.66), rng.random_range(0.14..0.2), rng.random_range(0.8..1.2)])
}

pub fn input_vector(u: &Input) -> DVector<f64> {
    DVector::from_column_slice(u.as_slice())
}

/// Textbook Kalman update with an explicit inverse of the innovation covariance.
pub fn textbook_update(x: &DVector<f64>, p: &DMatrix<f64>, y: &DVector<f64>, c: &DMatrix<f64>, offset: &DVector<f64>, r: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let s = c * p * c.transpose() + r;
    let k = p * c.transpose() * s.try_inverse().unwrap();
    let x_new = x + &k * (y - c * x - offset);
    let n = x.len();
    let p_new = (DMatrix::identity(n, n) - &k * c) * p;
    (x_new, p_new)
}

/// Linear Kalman filter for `x+ = A x + B u + d`, `y = C x + offset`.
pub struct LinearKf<'a> {
    pub a: &'a DMatrix<f64>,
    pub b: &'a DMatrix<f64>,
    pub d: &'a DVector<f64>,
    pub c: &'a DMatrix<f64>,
    pub offset: &'a DVector<f64>,
}

impl LinearKf<'_> {
    pub fn run(&self, config: &EkfConfig, x0: DVector<f64>, run: &MeasuredRun) -> Vec<DVector<f64>> {
        let mut x = x0;
        let mut p = config.p0.clone();
        let mut out = vec![x.clone()];
        for (u, y) in run.inputs.iter().zip(&run.measurements) {
            x = self.a * &x + self.b * input_vector(u) + self.d;
            p = self.a * &p * self.a.transpose() + &config.q_r;
            (x, p) = textbook_update(&x, &p, y, self.c, self.offset, &config.r_r);
            out.push(x.clone());
        }
        out
    }
}

/// Linear plant `x+ = M x + B u` used as the truth and as a plant map.
pub struct LinearPlant {
    pub m: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl PlantMap for LinearPlant {
    fn dim(&self) -> usize {
        self.m.nrows()
    }

    fn step(&self, x: &DVector<f64>, u: &Input) -> Result<DVector<f64>> {
        Ok(&self.m * x + &self.b * input_vector(u))
    }
}

pub fn linear_plant(n: usize, rng: &mut ChaCha8Rng) -> LinearPlant {
    let m = DMatrix::identity(n, n) * 0.9 + random_matrix(n, n, 0.05, rng);
    LinearPlant { m, b: random_matrix(n, NUM_INPUTS, 0.5, rng) }
}

/// A noisy run of the linear plant measured on `selection`.
pub fn measured_run(plant: &LinearPlant, selection: &[usize], steps: usize, rng: &mut ChaCha8Rng) -> MeasuredRun {
    let n = plant.dim();
    let mut states = vec![DVector::from_fn(n, |_, _| rng.random_range(1.0..2.0))];
    let mut inputs = Vec::new();
    let mut measurements = Vec::new();
    for _ in 0..steps {
        let u = random_input(rng);
        let x = plant.step(states.last().unwrap(), &u).unwrap() + random_matrix(n, 1, 0.01, rng).column(0);
        measurements.push(DVector::from_iterator(selection.len(), selection.iter().map(|&i| x[i - 1] + 0.01 * rng.random_range(-1.0..1.0))));
        inputs.push(u);
        states.push(x);
    }
    MeasuredRun { inputs, states, measurements }
}

pub fn normalization(n: usize, rng: &mut ChaCha8Rng) -> NormalizationParams {
    let x_min = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
    let x_max = DVector::from_fn(n, |i, _| x_min[i] + rng.random_range(0.5..3.0));
    NormalizationParams::new(x_min, x_max).unwrap()
}

pub fn basis(n: usize, r: usize, rng: &mut ChaCha8Rng) -> ReducedBasis {
    compute_basis(&random_matrix(n, 4 * n, 1.0, rng), r).unwrap()
}

pub fn noise(n: usize, selection: &[usize]) -> NoiseModel {
    NoiseModel::from_steady_state(&DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64), selection, 0.05).unwrap()
}

/// Linear network `W2 (W1 z + b1) + b2` and its affine form in `(xi, u)`.
pub fn linear_surrogate(r: usize, rng: &mut ChaCha8Rng) -> (MlpParams, DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let w1 = random_matrix(6, NUM_INPUTS + r, 0.4, rng);
    let w2 = random_matrix(r, 6, 0.4, rng);
    let b1 = DVector::from_fn(6, |_, _| rng.random_range(-0.1..0.1));
    let b2 = DVector::from_fn(r, |_, _| rng.random_range(-0.1..0.1));
    let full = &w2 * &w1;
    let a = full.columns(NUM_INPUTS, r).into_owned();
    let b = full.columns(0, NUM_INPUTS).into_owned();
    let d = &w2 * &b1 + &b2;
    let net = MlpParams::from_layers(vec![w1, w2], vec![b1, b2], Activation::Identity).unwrap();
    (net, a, b, d)
}

/// Shared linear-consistency check; the acceptance run calls the same code.
pub fn pod_mlp_ekf_linear_gap(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, r) = (12, 4);
    let selection = [2, 5, 7, 11];
    let plant = linear_plant(n, &mut rng);
    let run = measured_run(&plant, &selection, 100, &mut rng);
    let params = normalization(n, &mut rng);
    let basis = basis(n, r, &mut rng);
    let (net, a, b, d) = linear_surrogate(r, &mut rng);
    let config = EkfConfig::reduced(&noise(n, &selection), &basis, &params).unwrap();
    let got = run_pod_mlp_ekf(&run, &net, &basis, &params, &config, false).unwrap();

    let obs = AffineObservation::reduced(&basis, &params, &selection).unwrap();
    let xi0 = basis.modes.transpose() * DVector::from_element(n, 0.5);
    let want = LinearKf { a: &a, b: &b, d: &d, c: &obs.c, offset: &obs.offset }.run(&config, xi0, &run);
    assert_eq!(got.means.len(), 101);
    got.means.iter().zip(&want).map(|(g, w)| (g - w).amax()).fold(0.0, f64::max)
}

/// Teacher-student setup: a frozen 6-unit teacher, a 16-unit student and
/// the default 300-epoch budget. Returns the final training MSE.
pub fn teacher_student_mse() -> f64 {
    let teacher = MlpParams::glorot(&[NUM_INPUTS + 2, 6, 2], 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let inputs = random_matrix(NUM_INPUTS + 2, 10_000, 1.0, &mut rng);
    let targets = teacher.predict_batch(&inputs).unwrap();
    let data = Dataset::new(inputs, targets, Split::shuffled(10_000, 0.8, 0.2, 13).unwrap()).unwrap();
    let config = TrainConfig { batch_size: 32, learning_rate: 1e-2, lr_decay: 0.98, seed: 14, ..Default::default() };
    assert_eq!(config.max_epochs, 300);
    let student = MlpParams::glorot(&[NUM_INPUTS + 2, 16, 2], 15).unwrap();
    let outcome = train(&student, &data, &config).unwrap();
    let (ti, tt) = data.select(&data.split.train);
    outcome.params.loss(&ti, &tt).unwrap()
}
