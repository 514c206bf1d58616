use nalgebra::{DMatrix, DVector};

use super::inverse_scale;
use crate::error::{ensure_len, Result};
use crate::mlp::ReducedDynamics;
use crate::plant::{self, Input, PlantConfig};
use crate::pod::{reconstruct, NormalizationParams, ReducedBasis};

/// Discrete dynamics as seen by the filter: a mean map and its Jacobian.
///
/// `jacobian` receives the already computed `fx = propagate(x, u)` so that
/// finite-difference models do not evaluate the base point twice.
pub trait FilterModel {
    fn dim(&self) -> usize;
    fn propagate(&self, x: &DVector<f64>, u: &Input) -> Result<DVector<f64>>;
    fn jacobian(&self, x: &DVector<f64>, u: &Input, fx: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// Whether `jacobian` linearizes a plant numerically (reported as
    /// discretization time) rather than evaluating a closed form.
    fn discretizes(&self) -> bool {
        true
    }
}

/// A learned one-step map with its analytic Jacobian.
pub struct LearnedModel<'a, D: ?Sized>(pub &'a D);

impl<D: ReducedDynamics + ?Sized> FilterModel for LearnedModel<'_, D> {
    fn dim(&self) -> usize {
        self.0.order()
    }

    fn propagate(&self, x: &DVector<f64>, u: &Input) -> Result<DVector<f64>> {
        self.0.step(x, u)
    }

    fn jacobian(&self, x: &DVector<f64>, u: &Input, _fx: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.0.state_jacobian(x, u)
    }

    fn discretizes(&self) -> bool {
        false
    }
}

/// Full-order discrete plant map.
pub trait PlantMap {
    fn dim(&self) -> usize;
    fn step(&self, x: &DVector<f64>, u: &Input) -> Result<DVector<f64>>;
}

impl PlantMap for PlantConfig {
    fn dim(&self) -> usize {
        self.state_dim()
    }

    fn step(&self, x: &DVector<f64>, u: &Input) -> Result<DVector<f64>> {
        plant::step(self, x, u, None)
    }
}

/// Relative forward-difference step per coordinate.
const FD_STEP: f64 = 1e-6;

/// Forward differences of `map` around `x`, reusing `fx`.
fn forward_difference<M: PlantMap + ?Sized>(map: &M, x: &DVector<f64>, u: &Input, fx: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut jac = DMatrix::zeros(fx.len(), n);
    let mut xp = x.clone();
    for j in 0..n {
        let h = FD_STEP * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let h = xp[j] - x[j];
        let col = (map.step(&xp, u)? - fx) / h;
        jac.set_column(j, &col);
        xp[j] = x[j];
    }
    Ok(jac)
}

/// The plant in physical coordinates, linearized by forward differences.
pub struct FullPlantModel<'a, M: ?Sized = PlantConfig> {
    pub plant: &'a M,
}

impl<M: PlantMap + ?Sized> FilterModel for FullPlantModel<'_, M> {
    fn dim(&self) -> usize {
        self.plant.dim()
    }

    fn propagate(&self, x: &DVector<f64>, u: &Input) -> Result<DVector<f64>> {
        self.plant.step(x, u)
    }

    fn jacobian(&self, x: &DVector<f64>, u: &Input, fx: &DVector<f64>) -> Result<DMatrix<f64>> {
        forward_difference(self.plant, x, u, fx)
    }
}

/// `xi -> U_r^T normalize(F(denormalize(U_r xi), u))`.
///
/// The Jacobian differentiates the plant in physical coordinates and projects
/// it, `A = U_r^T D^-1 J D U_r`. That costs one full-order linearization per
/// step, like the full EKF, and makes `r = n` an exact change of basis.
pub struct PodPlantModel<'a, M: ?Sized = PlantConfig> {
    plant: &'a M,
    basis: &'a ReducedBasis,
    params: &'a NormalizationParams,
    inv_scale: DVector<f64>,
    scaled_modes: DMatrix<f64>,
}

impl<'a, M: PlantMap + ?Sized> PodPlantModel<'a, M> {
    pub fn new(plant: &'a M, basis: &'a ReducedBasis, params: &'a NormalizationParams) -> Result<Self> {
        ensure_len("basis rows", basis.state_dim(), plant.dim())?;
        ensure_len("normalization", params.dim(), plant.dim())?;
        let scale = params.scale();
        let scaled_modes = DMatrix::from_fn(basis.state_dim(), basis.order(), |i, j| scale[i] * basis.modes[(i, j)]);
        Ok(Self { plant, basis, params, inv_scale: inverse_scale(params), scaled_modes })
    }
}

impl<M: PlantMap + ?Sized> FilterModel for PodPlantModel<'_, M> {
    fn dim(&self) -> usize {
        self.basis.order()
    }

    fn propagate(&self, xi: &DVector<f64>, u: &Input) -> Result<DVector<f64>> {
        let x = reconstruct(xi, self.basis, self.params)?;
        let next = self.plant.step(&x, u)?;
        Ok(self.basis.modes.tr_mul(&self.params.normalize(&next)?))
    }

    fn jacobian(&self, xi: &DVector<f64>, u: &Input, _fx: &DVector<f64>) -> Result<DMatrix<f64>> {
        let x = reconstruct(xi, self.basis, self.params)?;
        let fx = self.plant.step(&x, u)?;
        let mut jac = forward_difference(self.plant, &x, u, &fx)?;
        for (i, mut row) in jac.row_iter_mut().enumerate() {
            row *= self.inv_scale[i];
        }
        Ok(self.basis.modes.tr_mul(&(jac * &self.scaled_modes)))
    }
}
