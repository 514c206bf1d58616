use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_len, Result, RomError};
use crate::plant::NUM_INPUTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    /// Linear hidden layers; only useful for tests and linear-consistency checks.
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation output.
    fn slope_from_output(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - z * z,
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected network `z_l = act(W_l z_{l-1} + b_l)` with a linear output
/// layer. The input is `[u; xi]`: the three plant inputs first, then the
/// reduced state.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layer_dims: Vec<usize>,
    /// `weights[l]` is `dims[l+1] x dims[l]`.
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub hidden_activation: Activation,
}

/// Gradient with the same shapes as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl MlpGrads {
    pub fn max_abs(&self) -> f64 {
        self.weights.iter().map(|w| w.amax()).chain(self.biases.iter().map(|b| b.amax())).fold(0.0, f64::max)
    }
}

/// The default architecture for reduced order `r`: three hidden layers of 128.
pub fn default_layer_dims(r: usize) -> Vec<usize> {
    vec![NUM_INPUTS + r, 128, 128, 128, r]
}

impl MlpParams {
    pub fn zeros(layer_dims: &[usize], hidden_activation: Activation) -> Result<Self> {
        check_dims(layer_dims)?;
        let weights = layer_dims.windows(2).map(|d| DMatrix::zeros(d[1], d[0])).collect();
        let biases = layer_dims[1..].iter().map(|&d| DVector::zeros(d)).collect();
        Ok(Self { layer_dims: layer_dims.to_vec(), weights, biases, hidden_activation })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(layer_dims: &[usize], seed: u64) -> Result<Self> {
        let mut params = Self::zeros(layer_dims, Activation::Tanh)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut params.weights {
            let limit = (6.0 / (w.nrows() + w.ncols()) as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.random_range(-limit..limit);
            }
        }
        Ok(params)
    }

    /// Builds a network from explicit layers, checking shapes.
    pub fn from_layers(weights: Vec<DMatrix<f64>>, biases: Vec<DVector<f64>>, hidden_activation: Activation) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(RomError::contract("need one bias per weight layer and at least one layer"));
        }
        let mut dims = vec![weights[0].ncols()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != *dims.last().unwrap() || b.len() != w.nrows() {
                return Err(RomError::contract(format!("layer {l}: weight {:?} / bias {} do not chain", w.shape(), b.len())));
            }
            dims.push(w.nrows());
        }
        Ok(Self { layer_dims: dims, weights, biases, hidden_activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn activation(&self, layer: usize) -> Option<Activation> {
        (layer + 1 < self.num_layers()).then_some(self.hidden_activation)
    }

    /// Network output for a raw input vector.
    pub fn forward_input(&self, z0: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_len("network input", z0.len(), self.input_dim())?;
        let mut z = z0.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut a = w * &z + b;
            if let Some(act) = self.activation(l) {
                a.apply(|v| *v = act.apply(*v));
            }
            z = a;
        }
        Ok(z)
    }

    /// `f_mlp(xi, u)`.
    pub fn forward(&self, xi: &DVector<f64>, u: &[f64]) -> Result<DVector<f64>> {
        self.forward_input(&self.stack_input(xi, u)?)
    }

    pub fn stack_input(&self, xi: &DVector<f64>, u: &[f64]) -> Result<DVector<f64>> {
        ensure_len("plant input", u.len(), NUM_INPUTS)?;
        ensure_len("reduced state", xi.len(), self.input_dim().saturating_sub(NUM_INPUTS))?;
        Ok(DVector::from_iterator(self.input_dim(), u.iter().chain(xi.iter()).copied()))
    }

    /// Jacobian of the output with respect to the whole stacked input.
    pub fn jacobian_input(&self, z0: &DVector<f64>) -> Result<DMatrix<f64>> {
        ensure_len("network input", z0.len(), self.input_dim())?;
        self.jacobian_columns(z0, 0)
    }

    /// `A = d f_mlp / d xi`, an `r x r` matrix.
    pub fn jacobian_state(&self, xi: &DVector<f64>, u: &[f64]) -> Result<DMatrix<f64>> {
        let z0 = self.stack_input(xi, u)?;
        self.jacobian_columns(&z0, NUM_INPUTS)
    }

    /// Chain rule restricted to input columns `first..`.
    fn jacobian_columns(&self, z0: &DVector<f64>, first: usize) -> Result<DMatrix<f64>> {
        let cols = self.input_dim() - first;
        let mut z = z0.clone();
        let mut jac = self.weights[0].columns(first, cols).into_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if l > 0 {
                jac = w * &jac;
            }
            let mut a = w * &z + b;
            if let Some(act) = self.activation(l) {
                a.apply(|v| *v = act.apply(*v));
                for (i, mut row) in jac.row_iter_mut().enumerate() {
                    row *= act.slope_from_output(a[i]);
                }
            }
            z = a;
        }
        Ok(jac)
    }

    /// Batched forward pass; one sample per column. Returns every layer output
    /// (index 0 is the input itself).
    pub(crate) fn forward_batch(&self, inputs: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut outs = Vec::with_capacity(self.num_layers() + 1);
        outs.push(inputs.clone());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut a = w * outs.last().unwrap();
            for mut col in a.column_iter_mut() {
                col += b;
            }
            if let Some(act) = self.activation(l) {
                a.apply(|v| *v = act.apply(*v));
            }
            outs.push(a);
        }
        outs
    }

    pub fn predict_batch(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_len("batch input rows", inputs.nrows(), self.input_dim())?;
        Ok(self.forward_batch(inputs).pop().unwrap())
    }

    /// Mean squared error over samples (columns) and output coordinates.
    pub fn loss(&self, inputs: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<f64> {
        check_batch(self, inputs, targets)?;
        let pred = self.predict_batch(inputs)?;
        Ok((pred - targets).norm_squared() / targets.len() as f64)
    }

    /// Exact gradient of [`MlpParams::loss`] by backpropagation.
    pub fn gradient(&self, inputs: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<MlpGrads> {
        Ok(self.loss_and_gradient(inputs, targets)?.1)
    }

    pub fn loss_and_gradient(&self, inputs: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<(f64, MlpGrads)> {
        check_batch(self, inputs, targets)?;
        let outs = self.forward_batch(inputs);
        let mut delta = outs.last().unwrap() - targets;
        let loss = delta.norm_squared() / targets.len() as f64;
        delta *= 2.0 / targets.len() as f64;

        let layers = self.num_layers();
        let mut gw = vec![DMatrix::zeros(0, 0); layers];
        let mut gb = vec![DVector::zeros(0); layers];
        for l in (0..layers).rev() {
            if let Some(act) = self.activation(l) {
                delta.zip_apply(&outs[l + 1], |d, z| *d *= act.slope_from_output(z));
            }
            gw[l] = &delta * outs[l].transpose();
            gb[l] = delta.column_sum();
            if l > 0 {
                delta = self.weights[l].tr_mul(&delta);
            }
        }
        Ok((loss, MlpGrads { weights: gw, biases: gb }))
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(RomError::contract(format!("invalid layer dims {dims:?}")));
    }
    Ok(())
}

fn check_batch(p: &MlpParams, inputs: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<()> {
    ensure_len("batch input rows", inputs.nrows(), p.input_dim())?;
    ensure_len("batch target rows", targets.nrows(), p.output_dim())?;
    ensure_len("batch samples", targets.ncols(), inputs.ncols())?;
    if inputs.ncols() == 0 {
        return Err(RomError::contract("empty batch"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::zeros(&[5, 4, 2], Activation::Tanh).unwrap();
        let xi = DVector::from_vec(vec![0.3, -1.0]);
        assert_eq!(p.forward(&xi, &[1.0, 2.0, 3.0]).unwrap(), DVector::zeros(2));
        assert_eq!(p.jacobian_state(&xi, &[1.0, 2.0, 3.0]).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn one_hidden_layer_hand_check() {
        // hidden = tanh(x), output = identity readout
        let w1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let w2 = DMatrix::identity(2, 2);
        let p = MlpParams::from_layers(vec![w1, w2], vec![DVector::zeros(2), DVector::zeros(2)], Activation::Tanh).unwrap();
        let x = DVector::from_vec(vec![0.01, -0.02]);
        let y = p.forward_input(&x).unwrap();
        assert!((y[0] - 0.01f64.tanh()).abs() < 1e-15);
        assert!((y[1] - (-0.02f64).tanh()).abs() < 1e-15);
    }

    #[test]
    fn linear_network_jacobian_is_weight_product() {
        let w1 = DMatrix::from_fn(3, 5, |i, j| (i * 5 + j) as f64 * 0.1 - 0.4);
        let w2 = DMatrix::from_fn(2, 3, |i, j| (i as f64 - j as f64) * 0.3);
        let p = MlpParams::from_layers(vec![w1.clone(), w2.clone()], vec![DVector::zeros(3), DVector::zeros(2)], Activation::Identity).unwrap();
        let a = p.jacobian_state(&DVector::from_vec(vec![0.5, 0.25]), &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(a, &w2 * w1.columns(3, 2));
    }

    #[test]
    fn single_linear_layer_gradient_closed_form() {
        let w = DMatrix::from_row_slice(2, 4, &[0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.7, 0.8]);
        let b = DVector::from_vec(vec![0.05, -0.1]);
        let p = MlpParams::from_layers(vec![w.clone()], vec![b.clone()], Activation::Tanh).unwrap();
        let x = DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 0.5, 2.0]);
        let t = DMatrix::from_column_slice(2, 1, &[0.3, 0.2]);
        let g = p.gradient(&x, &t).unwrap();
        let err = &w * &x + DMatrix::from_column_slice(2, 1, b.as_slice()) - &t;
        let expected = &err * x.transpose() * (2.0 / 2.0);
        assert!((&g.weights[0] - expected).amax() < 1e-15);
        assert!((&g.biases[0] - err.column(0) * (2.0 / 2.0)).amax() < 1e-15);
    }

    #[test]
    fn zero_error_batch_has_zero_gradient() {
        let p = MlpParams::glorot(&[5, 6, 2], 1).unwrap();
        let x = DMatrix::from_fn(5, 7, |i, j| ((i + 2 * j) as f64 * 0.37).sin());
        let t = p.predict_batch(&x).unwrap();
        let (loss, g) = p.loss_and_gradient(&x, &t).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn constant_offset_loss() {
        let p = MlpParams::glorot(&[4, 3, 2], 2).unwrap();
        let x = DMatrix::from_fn(4, 5, |i, j| (i * j) as f64 * 0.1);
        let t = p.predict_batch(&x).unwrap().add_scalar(0.3);
        assert!((p.loss(&x, &t).unwrap() - 0.09).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let p = MlpParams::zeros(&[5, 3, 2], Activation::Tanh).unwrap();
        assert!(p.forward(&DVector::zeros(3), &[0.0; 3]).is_err());
        assert!(p.forward(&DVector::zeros(2), &[0.0; 2]).is_err());
        assert!(p.loss(&DMatrix::zeros(5, 3), &DMatrix::zeros(2, 4)).is_err());
        assert!(MlpParams::zeros(&[5], Activation::Tanh).is_err());
        assert!(MlpParams::from_layers(vec![DMatrix::zeros(2, 3), DMatrix::zeros(2, 3)], vec![DVector::zeros(2); 2], Activation::Tanh).is_err());
    }

    #[test]
    fn default_architecture() {
        assert_eq!(default_layer_dims(30), vec![33, 128, 128, 128, 30]);
        let p = MlpParams::glorot(&default_layer_dims(30), 0).unwrap();
        assert_eq!(p.weights[1].shape(), (128, 128));
        assert_eq!(p.biases[3].len(), 30);
    }
}
