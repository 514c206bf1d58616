//! Proper orthogonal decomposition on min-max normalized snapshots.
//!
//! Reduced coordinates are always taken against the normalized state:
//! `xi = U_r^T normalize(x)` and `x ~ denormalize(U_r xi)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{ensure_len, Result, RomError};

/// Snapshot columns `[x(0) x(1) ... x(N)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    data: DMatrix<f64>,
}

impl SnapshotMatrix {
    /// Fails when there are fewer snapshots than states.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() < data.nrows() || data.nrows() == 0 {
            return Err(RomError::contract(format!(
                "snapshot matrix needs at least as many samples as states ({} x {})",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(Self { data })
    }

    pub fn from_columns(columns: &[DVector<f64>]) -> Result<Self> {
        if columns.is_empty() {
            return Err(RomError::contract("no snapshots"));
        }
        Self::new(DMatrix::from_columns(columns))
    }

    /// A warning when the sample count is below ten times the state dimension.
    pub fn sampling_warning(&self) -> Option<String> {
        let (n, m) = self.data.shape();
        (m < 10 * n).then(|| format!("only {m} snapshots for {n} states; at least {} recommended", 10 * n))
    }

    pub fn states(&self) -> usize {
        self.data.nrows()
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationParams {
    pub x_min: DVector<f64>,
    pub x_max: DVector<f64>,
}

impl NormalizationParams {
    pub fn new(x_min: DVector<f64>, x_max: DVector<f64>) -> Result<Self> {
        ensure_len("x_max", x_max.len(), x_min.len())?;
        if let Some(i) = (0..x_min.len()).find(|&i| !(x_max[i] >= x_min[i])) {
            return Err(RomError::contract(format!("normalization row {i}: max {} < min {}", x_max[i], x_min[i])));
        }
        Ok(Self { x_min, x_max })
    }

    /// The identity map on `n` states (min 0, max 1); used for the
    /// unnormalized pipeline.
    pub fn identity(n: usize) -> Self {
        Self { x_min: DVector::zeros(n), x_max: DVector::from_element(n, 1.0) }
    }

    pub fn dim(&self) -> usize {
        self.x_min.len()
    }

    pub fn is_degenerate(&self, i: usize) -> bool {
        self.x_max[i] == self.x_min[i]
    }

    pub fn degenerate_rows(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.is_degenerate(i)).collect()
    }

    /// `dx/dx_norm` per state; zero on degenerate rows.
    pub fn scale(&self) -> DVector<f64> {
        &self.x_max - &self.x_min
    }

    pub fn normalize(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_len("state", x.len(), self.dim())?;
        Ok(DVector::from_fn(self.dim(), |i, _| self.normalize_entry(i, x[i])))
    }

    pub fn denormalize(&self, x_norm: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_len("normalized state", x_norm.len(), self.dim())?;
        Ok(DVector::from_fn(self.dim(), |i, _| self.denormalize_entry(i, x_norm[i])))
    }

    /// Column-wise normalization of a snapshot-shaped matrix.
    pub fn normalize_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_len("matrix rows", x.nrows(), self.dim())?;
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| self.normalize_entry(i, x[(i, j)])))
    }

    pub fn denormalize_matrix(&self, x_norm: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_len("matrix rows", x_norm.nrows(), self.dim())?;
        Ok(DMatrix::from_fn(x_norm.nrows(), x_norm.ncols(), |i, j| self.denormalize_entry(i, x_norm[(i, j)])))
    }

    fn normalize_entry(&self, i: usize, v: f64) -> f64 {
        if self.is_degenerate(i) {
            0.5
        } else {
            (v - self.x_min[i]) / (self.x_max[i] - self.x_min[i])
        }
    }

    fn denormalize_entry(&self, i: usize, v: f64) -> f64 {
        self.x_min[i] + v * (self.x_max[i] - self.x_min[i])
    }
}

/// Per-row minimum and maximum.
pub fn fit_normalization(chi: &DMatrix<f64>) -> Result<NormalizationParams> {
    if chi.is_empty() {
        return Err(RomError::contract("cannot fit normalization to an empty matrix"));
    }
    let x_min = DVector::from_iterator(chi.nrows(), chi.row_iter().map(|r| r.min()));
    let x_max = DVector::from_iterator(chi.nrows(), chi.row_iter().map(|r| r.max()));
    NormalizationParams::new(x_min, x_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdMethod {
    /// Pick `Gram` when there are more than ten samples per state.
    Auto,
    /// Symmetric eigendecomposition of `chi * chi^T`.
    Gram,
    /// One-sided SVD of the snapshot matrix itself.
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    /// `n x r`, orthonormal columns.
    pub modes: DMatrix<f64>,
    /// Leading `r` singular values, nonincreasing.
    pub singular_values: DVector<f64>,
    /// Squared Frobenius norm of the snapshot matrix (sum of all sigma^2).
    pub total_energy: f64,
}

impl ReducedBasis {
    pub fn order(&self) -> usize {
        self.modes.ncols()
    }

    pub fn state_dim(&self) -> usize {
        self.modes.nrows()
    }

    /// The first `r` modes of this basis.
    pub fn truncate(&self, r: usize) -> Result<ReducedBasis> {
        if r == 0 || r > self.order() {
            return Err(RomError::contract(format!("cannot truncate order {} basis to {r}", self.order())));
        }
        Ok(ReducedBasis {
            modes: self.modes.columns(0, r).into_owned(),
            singular_values: self.singular_values.rows(0, r).into_owned(),
            total_energy: self.total_energy,
        })
    }

    /// `||U_r^T U_r - I||_F`.
    pub fn orthonormality_error(&self) -> f64 {
        let r = self.order();
        (self.modes.transpose() * &self.modes - DMatrix::<f64>::identity(r, r)).norm()
    }

    /// Best rank-`r` approximation `U_r Sigma_r V_r^T = U_r U_r^T chi` of the
    /// matrix the basis was computed from.
    pub fn project(&self, chi: &DMatrix<f64>) -> DMatrix<f64> {
        &self.modes * (self.modes.transpose() * chi)
    }

    /// Right singular vectors `V_r = chi^T U_r Sigma_r^{-1}`.
    pub fn right_vectors(&self, chi: &DMatrix<f64>) -> DMatrix<f64> {
        let mut v = chi.transpose() * &self.modes;
        for (mut col, s) in v.column_iter_mut().zip(self.singular_values.iter()) {
            col /= *s;
        }
        v
    }
}

/// Truncated left singular basis of `chi` (`1 <= r <= min(n, N+1)`).
pub fn compute_basis(chi: &DMatrix<f64>, r: usize) -> Result<ReducedBasis> {
    compute_basis_with(chi, r, SvdMethod::Auto)
}

pub fn compute_basis_with(chi: &DMatrix<f64>, r: usize, method: SvdMethod) -> Result<ReducedBasis> {
    let (n, m) = chi.shape();
    if r == 0 || r > n.min(m) {
        return Err(RomError::contract(format!("order {r} outside [1, {}]", n.min(m))));
    }
    if chi.iter().any(|v| !v.is_finite()) {
        return Err(RomError::Svd("snapshot matrix has non-finite entries".into()));
    }
    let method = match method {
        SvdMethod::Auto if m > 10 * n => SvdMethod::Gram,
        SvdMethod::Auto => SvdMethod::Direct,
        other => other,
    };
    let (mut modes, sigmas) = match method {
        SvdMethod::Gram => gram_svd(chi, r),
        _ => direct_svd(chi, r)?,
    };
    fix_signs(&mut modes);
    let singular_values = DVector::from_vec(sigmas);
    if singular_values.iter().any(|s| !s.is_finite()) {
        return Err(RomError::Svd("non-finite singular values".into()));
    }
    Ok(ReducedBasis { modes, singular_values, total_energy: chi.norm_squared() })
}

fn gram_svd(chi: &DMatrix<f64>, r: usize) -> (DMatrix<f64>, Vec<f64>) {
    let gram = chi * chi.transpose();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let modes = DMatrix::from_columns(&order[..r].iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect::<Vec<_>>());
    let sigmas = order[..r].iter().map(|&k| eig.eigenvalues[k].max(0.0).sqrt()).collect();
    (modes, sigmas)
}

fn direct_svd(chi: &DMatrix<f64>, r: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let svd = chi
        .clone()
        .try_svd(true, false, f64::EPSILON, 10_000)
        .ok_or_else(|| RomError::Svd(format!("no convergence on {} x {} matrix (norm {:.3e})", chi.nrows(), chi.ncols(), chi.norm())))?;
    let u = svd.u.expect("left vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let modes = DMatrix::from_columns(&order[..r].iter().map(|&k| u.column(k).into_owned()).collect::<Vec<_>>());
    Ok((modes, order[..r].iter().map(|&k| svd.singular_values[k]).collect()))
}

/// Makes the largest-magnitude entry of every column positive.
fn fix_signs(modes: &mut DMatrix<f64>) {
    for mut col in modes.column_iter_mut() {
        let pivot = col.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
}

/// `xi = U_r^T normalize(x)`.
pub fn reduce(x: &DVector<f64>, basis: &ReducedBasis, params: &NormalizationParams) -> Result<DVector<f64>> {
    ensure_len("state", x.len(), basis.state_dim())?;
    Ok(basis.modes.tr_mul(&params.normalize(x)?))
}

/// `x = denormalize(U_r xi)`.
pub fn reconstruct(xi: &DVector<f64>, basis: &ReducedBasis, params: &NormalizationParams) -> Result<DVector<f64>> {
    ensure_len("reduced state", xi.len(), basis.order())?;
    params.denormalize(&(&basis.modes * xi))
}

/// `sqrt(sum_j sum_i (a_ij - b_ij)^2 / N)` for `N + 1` columns.
pub fn rmse(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<f64> {
    if truth.shape() != estimate.shape() {
        return Err(RomError::contract(format!("rmse shapes differ: {:?} vs {:?}", truth.shape(), estimate.shape())));
    }
    if truth.ncols() < 2 {
        return Err(RomError::contract("rmse needs at least two samples (divisor is N)"));
    }
    let n_intervals = (truth.ncols() - 1) as f64;
    Ok(((truth - estimate).norm_squared() / n_intervals).sqrt())
}

/// Fraction of snapshot energy captured by the first `r` modes.
pub fn energy_fraction(basis: &ReducedBasis, r: usize) -> Result<f64> {
    if r > basis.order() {
        return Err(RomError::contract(format!("order {r} exceeds basis order {}", basis.order())));
    }
    if basis.total_energy == 0.0 {
        return Ok(if r == 0 { 0.0 } else { 1.0 });
    }
    let captured: f64 = basis.singular_values.rows(0, r).iter().map(|s| s * s).sum();
    Ok((captured / basis.total_energy).min(1.0))
}

/// Validation error of one order for both pipelines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderError {
    pub order: usize,
    pub rmse_normalized: f64,
    pub rmse_raw: f64,
}

/// Projects a validation trajectory onto the leading modes of the
/// normalized-data basis and of the raw-data basis, and scores both
/// reconstructions in normalized coordinates.
pub fn order_sweep(train: &DMatrix<f64>, validation: &DMatrix<f64>, params: &NormalizationParams, orders: &[usize]) -> Result<Vec<OrderError>> {
    let max_order = orders.iter().copied().max().unwrap_or(0);
    if max_order == 0 {
        return Ok(Vec::new());
    }
    let norm_basis = compute_basis(&params.normalize_matrix(train)?, max_order)?;
    let raw_basis = compute_basis(train, max_order)?;
    let truth = params.normalize_matrix(validation)?;
    orders
        .iter()
        .map(|&r| {
            let approx_norm = norm_basis.truncate(r)?.project(&truth);
            let approx_raw = params.normalize_matrix(&raw_basis.truncate(r)?.project(validation))?;
            Ok(OrderError { order: r, rmse_normalized: rmse(&truth, &approx_norm)?, rmse_raw: rmse(&truth, &approx_raw)? })
        })
        .collect()
}
