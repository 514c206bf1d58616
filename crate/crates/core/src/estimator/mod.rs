//! Extended Kalman filters on the surrogate, the full plant and the POD-projected
//! plant, sharing one predict/update core.

mod filters;
mod models;
mod noise;

pub use filters::{run_filter, run_full_ekf, run_pod_ekf, run_pod_mlp_ekf, FilterRun, PhaseTiming, StepHealth};
pub use models::{FilterModel, FullPlantModel, LearnedModel, PlantMap, PodPlantModel};
pub use noise::{simulate_measured, MeasuredRun, NoiseModel};

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_len, Result, RomError};
use crate::mlp::ReducedDynamics;
use crate::plant::{validate_selection, Input};
use crate::pod::{NormalizationParams, ReducedBasis};

/// Filter mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfBelief {
    pub xi: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl EkfBelief {
    pub fn new(xi: DVector<f64>, p: DMatrix<f64>) -> Result<Self> {
        if p.shape() != (xi.len(), xi.len()) {
            return Err(RomError::contract(format!("covariance {:?} does not match state length {}", p.shape(), xi.len())));
        }
        Ok(Self { xi, p })
    }
}

/// Measurement model `y = C xi + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineObservation {
    pub c: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineObservation {
    /// Direct selection of physical states (one-based indices).
    pub fn selection(n: usize, selection: &[usize]) -> Result<Self> {
        validate_selection(selection, n)?;
        let mut c = DMatrix::zeros(selection.len(), n);
        for (row, &i) in selection.iter().enumerate() {
            c[(row, i - 1)] = 1.0;
        }
        Ok(Self { c, offset: DVector::zeros(selection.len()) })
    }

    /// Selected states of `denormalize(U_r xi)`: `C = S D U_r`, offset `S x_min`.
    pub fn reduced(basis: &ReducedBasis, params: &NormalizationParams, selection: &[usize]) -> Result<Self> {
        ensure_len("normalization", params.dim(), basis.state_dim())?;
        validate_selection(selection, basis.state_dim())?;
        let scale = params.scale();
        let c = DMatrix::from_fn(selection.len(), basis.order(), |row, j| scale[selection[row] - 1] * basis.modes[(selection[row] - 1, j)]);
        let offset = DVector::from_iterator(selection.len(), selection.iter().map(|&i| params.x_min[i - 1]));
        Ok(Self { c, offset })
    }

    pub fn measurement_dim(&self) -> usize {
        self.c.nrows()
    }
}

/// Tuning of a filter in its own coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct EkfConfig {
    pub q_r: DMatrix<f64>,
    pub r_r: DMatrix<f64>,
    pub p0: DMatrix<f64>,
    /// One-based plant state indices that are measured.
    pub selection: Vec<usize>,
}

impl EkfConfig {
    /// POD-MLP-EKF tuning. `Q` is expressed in normalized coordinates before
    /// projection, `R` stays in measurement space, and `P0 = 0.1 I`.
    pub fn reduced(noise: &NoiseModel, basis: &ReducedBasis, params: &NormalizationParams) -> Result<Self> {
        ensure_len("process noise", noise.q_diag.len(), basis.state_dim())?;
        let inv = inverse_scale(params);
        let q_norm = DVector::from_fn(inv.len(), |i, _| noise.q_diag[i] * inv[i] * inv[i]);
        let q_r = basis.modes.tr_mul(&DMatrix::from_diagonal(&q_norm)) * &basis.modes;
        Ok(Self {
            q_r: symmetrize(q_r),
            r_r: DMatrix::from_diagonal(&noise.r_diag),
            p0: DMatrix::identity(basis.order(), basis.order()) * 0.1,
            selection: noise.selection.clone(),
        })
    }

    /// Full-state tuning with `P0 = 0.1 D^2`, the physical-units image of the
    /// reduced prior.
    pub fn full(noise: &NoiseModel, params: &NormalizationParams) -> Result<Self> {
        ensure_len("normalization", params.dim(), noise.q_diag.len())?;
        let scale = params.scale();
        Ok(Self {
            q_r: DMatrix::from_diagonal(&noise.q_diag),
            r_r: DMatrix::from_diagonal(&noise.r_diag),
            p0: DMatrix::from_diagonal(&scale.map(|s| 0.1 * s * s)),
            selection: noise.selection.clone(),
        })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        ensure_len("Q rows", self.q_r.nrows(), dim)?;
        ensure_len("P0 rows", self.p0.nrows(), dim)?;
        ensure_len("R rows", self.r_r.nrows(), self.selection.len())?;
        for (name, m) in [("Q", &self.q_r), ("R", &self.r_r), ("P0", &self.p0)] {
            if !m.is_square() {
                return Err(RomError::config(format!("{name} is not square")));
            }
            if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                return Err(RomError::config(format!("{name} is not symmetric")));
            }
            let min = m.clone().symmetric_eigenvalues().min();
            if min < -1e-10 * m.amax().max(1.0) {
                return Err(RomError::config(format!("{name} is not positive semidefinite (min eigenvalue {min:.3e})")));
            }
        }
        Ok(())
    }
}

/// Reciprocal of the normalization width; zero on degenerate rows, which
/// normalize to a constant.
pub(crate) fn inverse_scale(params: &NormalizationParams) -> DVector<f64> {
    params.scale().map(|s| if s > 0.0 { 1.0 / s } else { 0.0 })
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `xi(k+1|k) = f(xi(k|k), u)`, `P(k+1|k) = A P A^T + Q_r`.
pub fn predict<D: ReducedDynamics + ?Sized>(belief: &EkfBelief, u: &Input, model: &D, q_r: &DMatrix<f64>) -> Result<EkfBelief> {
    let xi = model.step(&belief.xi, u)?;
    let a = model.state_jacobian(&belief.xi, u)?;
    propagate(belief, xi, &a, q_r, 0)
}

pub(crate) fn propagate(belief: &EkfBelief, xi: DVector<f64>, a: &DMatrix<f64>, q: &DMatrix<f64>, step: usize) -> Result<EkfBelief> {
    ensure_len("process covariance", q.nrows(), xi.len())?;
    if let Some(i) = xi.iter().position(|v| !v.is_finite()) {
        return Err(RomError::FilterDivergence { step, reason: format!("predicted state entry {i} is non-finite") });
    }
    let p = symmetrize(a * &belief.p * a.transpose() + q);
    if p.iter().any(|v| !v.is_finite()) {
        return Err(RomError::FilterDivergence { step, reason: "predicted covariance is non-finite".into() });
    }
    Ok(EkfBelief { xi, p })
}

/// Posterior plus the gain, which callers may check against the solve.
#[derive(Debug, Clone)]
pub struct Update {
    pub belief: EkfBelief,
    pub gain: DMatrix<f64>,
    pub innovation_cov: DMatrix<f64>,
}

/// `K = P C^T (C P C^T + R)^-1` by Cholesky, then the mean and covariance update.
pub fn update(prior: &EkfBelief, y: &DVector<f64>, obs: &AffineObservation, r: &DMatrix<f64>) -> Result<Update> {
    ensure_len("measurement", y.len(), obs.measurement_dim())?;
    ensure_len("observation columns", obs.c.ncols(), prior.xi.len())?;
    ensure_len("measurement covariance", r.nrows(), y.len())?;
    let pct = &prior.p * obs.c.transpose();
    let s = symmetrize(&obs.c * &pct + r);
    let chol = match s.clone().cholesky() {
        Some(c) => c,
        None => return Err(RomError::SingularUpdate { min_eigenvalue: s.symmetric_eigenvalues().min() }),
    };
    // K S = P C^T  <=>  S K^T = C P^T
    let gain = chol.solve(&pct.transpose()).transpose();
    let innovation = y - (&obs.c * &prior.xi + &obs.offset);
    let xi = &prior.xi + &gain * innovation;
    let p = symmetrize(&prior.p - &gain * &obs.c * &prior.p);
    Ok(Update { belief: EkfBelief { xi, p }, gain, innovation_cov: s })
}

/// Full-state estimate `denormalize(U_r xi)`.
pub fn lift(xi: &DVector<f64>, basis: &ReducedBasis, params: &NormalizationParams) -> Result<DVector<f64>> {
    crate::pod::reconstruct(xi, basis, params)
}
