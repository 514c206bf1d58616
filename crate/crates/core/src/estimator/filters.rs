use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use super::models::{FilterModel, FullPlantModel, LearnedModel, PlantMap, PodPlantModel};
use super::noise::MeasuredRun;
use super::{propagate, update, AffineObservation, EkfBelief, EkfConfig};
use crate::error::{ensure_len, Result, RomError};
use crate::mlp::ReducedDynamics;
use crate::pod::{reconstruct, NormalizationParams, ReducedBasis};

/// Wall-clock time split by phase, summed over the run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTiming {
    /// Mean propagation, plus the Jacobian for models that have it in
    /// closed form.
    pub model_prediction: Duration,
    /// Finite-difference linearization of the plant; zero for learned models.
    pub discretization: Duration,
    /// Covariance propagation, measurement update and lifting.
    pub other: Duration,
    pub steps: usize,
}

impl PhaseTiming {
    pub const PHASES: [&'static str; 4] = ["model_prediction", "discretization", "other", "total"];

    pub fn total(&self) -> Duration {
        self.model_prediction + self.discretization + self.other
    }

    pub fn phase(&self, name: &str) -> Option<Duration> {
        match name {
            "model_prediction" => Some(self.model_prediction),
            "discretization" => Some(self.discretization),
            "other" => Some(self.other),
            "total" => Some(self.total()),
            _ => None,
        }
    }

    pub fn mean_ms(&self, d: Duration) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            d.as_secs_f64() * 1e3 / self.steps as f64
        }
    }
}

/// Covariance diagnostics after one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepHealth {
    pub step: usize,
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
    /// `max |K S - P C^T|` for the gain actually applied.
    pub gain_residual: f64,
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    /// `x_hat(0..=K)` in physical units; entry 0 is the initial guess.
    pub estimates: Vec<DVector<f64>>,
    /// Filter-coordinate means, same indexing.
    pub means: Vec<DVector<f64>>,
    pub final_covariance: DMatrix<f64>,
    pub timing: PhaseTiming,
    /// Empty unless health recording was requested.
    pub health: Vec<StepHealth>,
}

fn at_step(err: RomError, step: usize) -> RomError {
    match err {
        RomError::FilterDivergence { reason, .. } => RomError::FilterDivergence { step, reason },
        RomError::SingularUpdate { min_eigenvalue } => {
            RomError::FilterDivergence { step, reason: format!("innovation covariance not positive definite (min eigenvalue {min_eigenvalue:.3e})") }
        }
        other => other,
    }
}

/// Generic predict/update loop. `lift` maps filter coordinates to physical
/// states; `health` turns on per-step covariance diagnostics (kept off for
/// timing runs).
pub fn run_filter<M: FilterModel + ?Sized>(
    model: &M,
    lift: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
    obs: &AffineObservation,
    config: &EkfConfig,
    x0: DVector<f64>,
    run: &MeasuredRun,
    health: bool,
) -> Result<FilterRun> {
    run.validate()?;
    if run.is_empty() {
        return Err(RomError::contract("filter needs at least one measurement"));
    }
    let n = model.dim();
    ensure_len("initial estimate", x0.len(), n)?;
    config.validate(n)?;
    ensure_len("observation rows", obs.measurement_dim(), config.selection.len())?;

    let mut belief = EkfBelief::new(x0, config.p0.clone())?;
    let mut timing = PhaseTiming::default();
    let mut estimates = Vec::with_capacity(run.len() + 1);
    let mut means = Vec::with_capacity(run.len() + 1);
    let mut diagnostics = Vec::new();
    estimates.push(lift(&belief.xi)?);
    means.push(belief.xi.clone());

    for (k, (u, y)) in run.inputs.iter().zip(&run.measurements).enumerate() {
        let step = k + 1;
        let t0 = Instant::now();
        let fx = model.propagate(&belief.xi, u).map_err(|e| at_step(e, step))?;
        let t1 = Instant::now();
        let a = model.jacobian(&belief.xi, u, &fx).map_err(|e| at_step(e, step))?;
        let t2 = Instant::now();
        let prior = propagate(&belief, fx, &a, &config.q_r, step)?;
        let post = update(&prior, y, obs, &config.r_r).map_err(|e| at_step(e, step))?;
        belief = post.belief;
        if belief.xi.iter().any(|v| !v.is_finite()) {
            return Err(RomError::FilterDivergence { step, reason: "posterior mean is non-finite".into() });
        }
        let x_hat = lift(&belief.xi)?;
        let t3 = Instant::now();
        if model.discretizes() {
            timing.model_prediction += t1 - t0;
            timing.discretization += t2 - t1;
        } else {
            timing.model_prediction += t2 - t0;
        }
        timing.other += t3 - t2;
        timing.steps += 1;

        if health {
            let residual = &post.gain * &post.innovation_cov - &prior.p * obs.c.transpose();
            diagnostics.push(StepHealth {
                step,
                max_asymmetry: (&belief.p - belief.p.transpose()).amax(),
                min_eigenvalue: belief.p.clone().symmetric_eigenvalues().min(),
                gain_residual: residual.amax(),
            });
        }
        estimates.push(x_hat);
        means.push(belief.xi.clone());
    }
    Ok(FilterRun { estimates, means, final_covariance: belief.p, timing, health: diagnostics })
}

/// POD-MLP-EKF started from the normalized guess `0.5 * 1`.
pub fn run_pod_mlp_ekf<D: ReducedDynamics + ?Sized>(
    run: &MeasuredRun,
    model: &D,
    basis: &ReducedBasis,
    params: &NormalizationParams,
    config: &EkfConfig,
    health: bool,
) -> Result<FilterRun> {
    ensure_len("surrogate order", model.order(), basis.order())?;
    let obs = AffineObservation::reduced(basis, params, &config.selection)?;
    let xi0 = basis.modes.tr_mul(&DVector::from_element(basis.state_dim(), 0.5));
    let lift = |xi: &DVector<f64>| reconstruct(xi, basis, params);
    run_filter(&LearnedModel(model), &lift, &obs, config, xi0, run, health)
}

/// EKF on the full plant, started from `denormalize(0.5 * 1)`.
pub fn run_full_ekf<M: PlantMap + ?Sized>(run: &MeasuredRun, plant: &M, params: &NormalizationParams, config: &EkfConfig, health: bool) -> Result<FilterRun> {
    let obs = AffineObservation::selection(plant.dim(), &config.selection)?;
    let x0 = params.denormalize(&DVector::from_element(plant.dim(), 0.5))?;
    let lift = |x: &DVector<f64>| Ok(x.clone());
    run_filter(&FullPlantModel { plant }, &lift, &obs, config, x0, run, health)
}

/// EKF on the POD projection of the plant, same start and tuning as the
/// POD-MLP-EKF.
pub fn run_pod_ekf<M: PlantMap + ?Sized>(
    run: &MeasuredRun,
    plant: &M,
    basis: &ReducedBasis,
    params: &NormalizationParams,
    config: &EkfConfig,
    health: bool,
) -> Result<FilterRun> {
    let model = PodPlantModel::new(plant, basis, params)?;
    let obs = AffineObservation::reduced(basis, params, &config.selection)?;
    let xi0 = basis.modes.tr_mul(&DVector::from_element(basis.state_dim(), 0.5));
    let lift = |xi: &DVector<f64>| reconstruct(xi, basis, params);
    run_filter(&model, &lift, &obs, config, xi0, run, health)
}
