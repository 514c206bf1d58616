use nalgebra::{DMatrix, DVector};

use super::network::MlpParams;
use super::train::{Dataset, Split};
use crate::error::{ensure_len, Result, RomError};
use crate::plant::{Input, NUM_INPUTS};

/// One-step reduced dynamics `xi(k+1) = f(xi(k), u(k))` with its state
/// Jacobian.
pub trait ReducedDynamics {
    fn order(&self) -> usize;
    fn step(&self, xi: &DVector<f64>, u: &Input) -> Result<DVector<f64>>;
    fn state_jacobian(&self, xi: &DVector<f64>, u: &Input) -> Result<DMatrix<f64>>;
}

impl ReducedDynamics for MlpParams {
    fn order(&self) -> usize {
        self.output_dim()
    }

    fn step(&self, xi: &DVector<f64>, u: &Input) -> Result<DVector<f64>> {
        self.forward(xi, u.as_slice())
    }

    fn state_jacobian(&self, xi: &DVector<f64>, u: &Input) -> Result<DMatrix<f64>> {
        self.jacobian_state(xi, u.as_slice())
    }
}

/// Per-feature min-max scaling to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaling {
    pub min: DVector<f64>,
    pub max: DVector<f64>,
}

impl FeatureScaling {
    pub fn identity(dim: usize) -> Self {
        Self { min: DVector::zeros(dim), max: DVector::from_element(dim, 1.0) }
    }

    /// Row-wise min/max over the given samples (one per column).
    pub fn fit(samples: &DMatrix<f64>) -> Result<Self> {
        if samples.ncols() == 0 {
            return Err(RomError::contract("cannot fit scaling to zero samples"));
        }
        Ok(Self {
            min: DVector::from_iterator(samples.nrows(), samples.row_iter().map(|r| r.min())),
            max: DVector::from_iterator(samples.nrows(), samples.row_iter().map(|r| r.max())),
        })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Width of feature `i`; constant features get width 1.
    pub fn width(&self, i: usize) -> f64 {
        let w = self.max[i] - self.min[i];
        if w > 0.0 {
            w
        } else {
            1.0
        }
    }

    /// Trailing `len` features, e.g. the `xi` part of `[u; xi]`.
    pub fn tail(&self, len: usize) -> FeatureScaling {
        let start = self.dim() - len;
        Self { min: self.min.rows(start, len).into_owned(), max: self.max.rows(start, len).into_owned() }
    }

    pub fn scale(&self, samples: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(samples.nrows(), samples.ncols(), |i, j| (samples[(i, j)] - self.min[i]) / self.width(i))
    }

    pub fn unscale(&self, scaled: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(scaled.nrows(), scaled.ncols(), |i, j| self.min[i] + scaled[(i, j)] * self.width(i))
    }

    fn scale_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(v.len(), |i, _| (v[i] - self.min[i]) / self.width(i))
    }
}

/// A trained network with the scaling it was trained under and an optional
/// affine skip path:
///
/// `xi(k+1) = L [u; xi; 1] + out_min + out_width .* net(scale([u; xi]))`.
///
/// With `L = 0` and the output scaling equal to the `xi` part of the input
/// scaling this is the plain network on min-max normalized data.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub network: MlpParams,
    pub input: FeatureScaling,
    pub output: FeatureScaling,
    /// `r x (3 + r + 1)`; the last column is the constant term.
    pub skip: DMatrix<f64>,
}

impl Surrogate {
    /// Plain network, outputs scaled like the `xi` inputs, no skip path.
    pub fn new(network: MlpParams, input: FeatureScaling) -> Result<Self> {
        let r = network.output_dim();
        let output = if input.dim() >= r { input.tail(r) } else { FeatureScaling::identity(r) };
        Self::with_skip(network, input, output, DMatrix::zeros(r, r + NUM_INPUTS + 1))
    }

    pub fn with_skip(network: MlpParams, input: FeatureScaling, output: FeatureScaling, skip: DMatrix<f64>) -> Result<Self> {
        let r = network.output_dim();
        if network.input_dim() != r + NUM_INPUTS {
            return Err(RomError::contract(format!(
                "surrogate network must map {} + r inputs to r outputs, got {:?}",
                NUM_INPUTS, network.layer_dims
            )));
        }
        ensure_len("input scaling", input.dim(), network.input_dim())?;
        ensure_len("output scaling", output.dim(), r)?;
        if skip.shape() != (r, r + NUM_INPUTS + 1) {
            return Err(RomError::contract(format!("skip matrix must be {r} x {}, got {:?}", r + NUM_INPUTS + 1, skip.shape())));
        }
        Ok(Self { network, input, output, skip })
    }

    /// Network used as-is, without scaling.
    pub fn unscaled(network: MlpParams) -> Result<Self> {
        let dim = network.input_dim();
        Self::new(network, FeatureScaling::identity(dim))
    }

    pub fn has_skip(&self) -> bool {
        self.skip.iter().any(|&v| v != 0.0)
    }

    fn skip_term(&self, z: &DVector<f64>) -> DVector<f64> {
        let m = z.len();
        &self.skip.columns(0, m) * z + self.skip.column(m)
    }

    /// Predictions for a batch of raw `[u; xi]` inputs (one per column).
    pub fn predict_batch(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_len("batch input rows", inputs.nrows(), self.network.input_dim())?;
        let mut out = self.output.unscale(&self.network.predict_batch(&self.input.scale(inputs))?);
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col += self.skip_term(&inputs.column(j).into_owned());
        }
        Ok(out)
    }
}

impl ReducedDynamics for Surrogate {
    fn order(&self) -> usize {
        self.network.output_dim()
    }

    fn step(&self, xi: &DVector<f64>, u: &Input) -> Result<DVector<f64>> {
        let z = self.network.stack_input(xi, u.as_slice())?;
        let net = self.network.forward_input(&self.input.scale_vector(&z))?;
        let skip = self.skip_term(&z);
        Ok(DVector::from_fn(net.len(), |i, _| skip[i] + self.output.min[i] + net[i] * self.output.width(i)))
    }

    fn state_jacobian(&self, xi: &DVector<f64>, u: &Input) -> Result<DMatrix<f64>> {
        let z = self.network.stack_input(xi, u.as_slice())?;
        let r = self.order();
        let full = self.network.jacobian_input(&self.input.scale_vector(&z))?;
        Ok(DMatrix::from_fn(r, r, |i, j| {
            self.skip[(i, NUM_INPUTS + j)] + full[(i, NUM_INPUTS + j)] * self.output.width(i) / self.input.width(NUM_INPUTS + j)
        }))
    }
}

/// Everything about a surrogate that is fitted before the network is
/// trained: input scaling, skip path and the scaling of what remains for the
/// network to learn. All statistics come from the training split only.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateFrame {
    pub input: FeatureScaling,
    pub output: FeatureScaling,
    pub skip: DMatrix<f64>,
}

impl SurrogateFrame {
    /// `inputs` holds raw `[u; xi(k)]`, `targets` raw `xi(k+1)`, one pair per
    /// column. With `affine_skip` the skip path is the least-squares affine
    /// fit of the targets; otherwise it is zero and the network learns the
    /// whole map.
    pub fn fit(inputs: &DMatrix<f64>, targets: &DMatrix<f64>, train: &[usize], affine_skip: bool) -> Result<Self> {
        ensure_len("pairs", targets.ncols(), inputs.ncols())?;
        ensure_len("input rows", inputs.nrows(), targets.nrows() + NUM_INPUTS)?;
        if train.is_empty() {
            return Err(RomError::contract("no training pairs"));
        }
        let r = targets.nrows();
        let x = inputs.select_columns(train);
        let y = targets.select_columns(train);
        let input = FeatureScaling::fit(&x)?;
        let skip = if affine_skip { affine_least_squares(&input, &x, &y)? } else { DMatrix::zeros(r, r + NUM_INPUTS + 1) };
        let output = FeatureScaling::fit(&Self::residual_of(&skip, &x, &y))?;
        Ok(Self { input, output, skip })
    }

    fn residual_of(skip: &DMatrix<f64>, inputs: &DMatrix<f64>, targets: &DMatrix<f64>) -> DMatrix<f64> {
        let m = inputs.nrows();
        let mut res = targets - &skip.columns(0, m) * inputs;
        for mut col in res.column_iter_mut() {
            col -= skip.column(m);
        }
        res
    }

    /// Scaled network training data for these pairs.
    pub fn dataset(&self, inputs: &DMatrix<f64>, targets: &DMatrix<f64>, split: Split) -> Result<Dataset> {
        let residual = Self::residual_of(&self.skip, inputs, targets);
        Dataset::new(self.input.scale(inputs), self.output.scale(&residual), split)
    }

    pub fn assemble(&self, network: MlpParams) -> Result<Surrogate> {
        Surrogate::with_skip(network, self.input.clone(), self.output.clone(), self.skip.clone())
    }
}

/// Affine least squares `y ~ L [x; 1]`, solved on scaled inputs by SVD and
/// mapped back to raw coordinates.
fn affine_least_squares(scaling: &FeatureScaling, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = x.nrows();
    let xs = scaling.scale(x);
    let design = DMatrix::from_fn(x.ncols(), m + 1, |j, i| if i < m { xs[(i, j)] } else { 1.0 });
    let svd = design.svd(true, true);
    let theta = svd.solve(&y.transpose(), 1e-12).map_err(|e| RomError::Svd(e.to_string()))?;
    // theta is (m+1) x r in scaled coordinates; undo the input scaling.
    let mut skip = DMatrix::zeros(y.nrows(), m + 1);
    for i in 0..y.nrows() {
        let mut constant = theta[(m, i)];
        for k in 0..m {
            let w = scaling.width(k);
            skip[(i, k)] = theta[(k, i)] / w;
            constant -= theta[(k, i)] * scaling.min[k] / w;
        }
        skip[(i, m)] = constant;
    }
    Ok(skip)
}

/// Open-loop iteration; returns `[xi0, xi1, ..., xiK]` for `K` inputs.
pub fn rollout<D: ReducedDynamics + ?Sized>(model: &D, xi0: &DVector<f64>, inputs: &[Input]) -> Result<Vec<DVector<f64>>> {
    ensure_len("initial reduced state", xi0.len(), model.order())?;
    let mut out = Vec::with_capacity(inputs.len() + 1);
    out.push(xi0.clone());
    for u in inputs {
        let next = model.step(out.last().unwrap(), u)?;
        out.push(next);
    }
    Ok(out)
}
