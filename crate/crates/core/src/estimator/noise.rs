use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure_len, Result, RomError};
use crate::plant::{self, validate_selection, Input, PlantConfig};

/// Diagonal process and measurement noise built from a steady state:
/// `Q = diag((rel x_s)^2)`, `R = diag((rel y_s)^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub q_diag: DVector<f64>,
    pub r_diag: DVector<f64>,
    /// One-based measured state indices.
    pub selection: Vec<usize>,
}

impl NoiseModel {
    pub fn from_steady_state(x_s: &DVector<f64>, selection: &[usize], relative: f64) -> Result<Self> {
        validate_selection(selection, x_s.len())?;
        if !(relative >= 0.0 && relative.is_finite()) {
            return Err(RomError::config(format!("relative noise level must be finite and nonnegative, got {relative}")));
        }
        let q_diag = x_s.map(|v| (relative * v).powi(2));
        let r_diag = DVector::from_iterator(selection.len(), selection.iter().map(|&i| (relative * x_s[i - 1]).powi(2)));
        Ok(Self { q_diag, r_diag, selection: selection.to_vec() })
    }

    pub fn state_dim(&self) -> usize {
        self.q_diag.len()
    }
}

/// A simulated experiment: inputs `u(0..K)`, true states `x(0..=K)` and
/// measurements `y(1..=K)` of the states after each input.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredRun {
    pub inputs: Vec<Input>,
    pub states: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
}

impl MeasuredRun {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        ensure_len("true states", self.states.len(), self.inputs.len() + 1)?;
        ensure_len("measurements", self.measurements.len(), self.inputs.len())
    }
}

/// Runs the plant from `x0` with additive Gaussian process and measurement
/// noise drawn from one seeded stream (process noise first at every step).
pub fn simulate_measured(config: &PlantConfig, x0: &DVector<f64>, inputs: &[Input], noise: &NoiseModel, seed: u64) -> Result<MeasuredRun> {
    ensure_len("noise model", noise.state_dim(), config.state_dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q_std = noise.q_diag.map(f64::sqrt);
    let r_std = noise.r_diag.map(f64::sqrt);
    let mut draw = |std: &DVector<f64>| -> DVector<f64> {
        std.map(|s| {
            let z: f64 = StandardNormal.sample(&mut rng);
            s * z
        })
    };
    let mut states = Vec::with_capacity(inputs.len() + 1);
    let mut measurements = Vec::with_capacity(inputs.len());
    states.push(x0.clone());
    for u in inputs {
        let w = draw(&q_std);
        let x = plant::step(config, states.last().unwrap(), u, Some(&w))?;
        let v = draw(&r_std);
        measurements.push(plant::measure(config, &noise.selection, &x, Some(&v))?);
        states.push(x);
    }
    Ok(MeasuredRun { inputs: inputs.to_vec(), states, measurements })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_from_steady_state() {
        let xs = DVector::from_vec(vec![300.0, 0.5, 2.0]);
        let n = NoiseModel::from_steady_state(&xs, &[3, 1], 0.01).unwrap();
        assert_eq!(n.q_diag, DVector::from_vec(vec![9.0, 0.000025, 0.0004]));
        assert_eq!(n.r_diag, DVector::from_vec(vec![0.0004, 9.0]));
        assert!(NoiseModel::from_steady_state(&xs, &[4], 0.01).is_err());
        assert!(NoiseModel::from_steady_state(&xs, &[1], -1.0).is_err());
    }

    #[test]
    fn zero_noise_run_is_the_deterministic_plant() {
        let cfg = PlantConfig::default();
        let x0 = plant::initial_guess(&cfg);
        let sel = plant::temperature_selection(&cfg);
        let noise = NoiseModel::from_steady_state(&x0, &sel, 0.0).unwrap();
        let u = vec![cfg.nominal_input(); 3];
        let run = simulate_measured(&cfg, &x0, &u, &noise, 1).unwrap();
        run.validate().unwrap();
        let x1 = plant::step(&cfg, &x0, &u[0], None).unwrap();
        assert_eq!(run.states[1], x1);
        assert_eq!(run.measurements[0], plant::measure(&cfg, &sel, &x1, None).unwrap());
    }
}
