//! Incremental PCA with a forgetting factor.
//!
//! The model keeps a running mean together with a truncated SVD of the
//! mean-centred observation history. Each update folds in a batch of `m`
//! complete points by taking the SVD of a small augmented matrix built from
//! the previous singular values, the centred batch and a mean-correction
//! column, so the cost of an update depends on `D` and `m` only.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::PointId;
use crate::linalg::thin_svd;

/// Singular values below this fraction of the largest are zeroed.
const SINGULAR_FLOOR: f64 = 1e-12;

/// Residual directions weaker than this (relative to the data scale) are
/// treated as already spanned by the basis.
const RESIDUAL_RANK_TOL: f64 = 1e-10;

/// Number of observations that still influence the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EffectiveHistory {
    Bounded(f64),
    Unbounded,
}

impl EffectiveHistory {
    /// Stored-point cap implied by this history, if any.
    pub fn capacity(&self) -> Option<usize> {
        match self {
            EffectiveHistory::Bounded(n) => Some((n * (1.0 - 1e-12)).ceil() as usize),
            EffectiveHistory::Unbounded => None,
        }
    }
}

/// `m / (1 - f)`, or unbounded when nothing is forgotten.
pub fn effective_history(forgetting: f64, batch: usize) -> Result<EffectiveHistory> {
    validate_forgetting(forgetting)?;
    if batch < 2 {
        return Err(Error::BatchTooSmall(batch));
    }
    if forgetting == 1.0 {
        Ok(EffectiveHistory::Unbounded)
    } else {
        Ok(EffectiveHistory::Bounded(batch as f64 / (1.0 - forgetting)))
    }
}

fn validate_forgetting(forgetting: f64) -> Result<()> {
    if forgetting.is_finite() && forgetting > 0.0 && forgetting <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidForgetting(forgetting))
    }
}

/// `m` complete points destined for one model update.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    points: DMatrix<f64>,
    ids: Vec<PointId>,
}

impl Batch {
    pub fn new(points: DMatrix<f64>, ids: Vec<PointId>) -> Result<Self> {
        if points.nrows() < 2 {
            return Err(Error::BatchTooSmall(points.nrows()));
        }
        if ids.len() != points.nrows() {
            return Err(Error::BatchIdCount {
                rows: points.nrows(),
                ids: ids.len(),
            });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { points, ids })
    }

    /// Builds a batch from row vectors, all of which must share one width.
    pub fn from_rows(ids: Vec<PointId>, rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != width) {
            return Err(Error::DimensionMismatch {
                expected: width,
                got: bad.len(),
            });
        }
        let points = DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]);
        Self::new(points, ids)
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn ids(&self) -> &[PointId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dims(&self) -> usize {
        self.points.ncols()
    }
}

/// Running PCA state.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    dims: usize,
    components: usize,
    forgetting: f64,
    mean: DVector<f64>,
    /// `D x k'`, orthonormal columns.
    basis: DMatrix<f64>,
    singular_values: DVector<f64>,
    n_effective: f64,
    updates: u64,
}

impl PcaModel {
    pub fn new(dims: usize, components: usize, forgetting: f64) -> Result<Self> {
        validate_forgetting(forgetting)?;
        if dims == 0 {
            return Err(Error::InvalidConfig("dimensionality must be positive".into()));
        }
        if components == 0 || components > dims {
            return Err(Error::InvalidConfig(format!(
                "components must be in 1..={dims}, got {components}"
            )));
        }
        Ok(Self {
            dims,
            components,
            forgetting,
            mean: DVector::zeros(dims),
            basis: DMatrix::zeros(dims, 0),
            singular_values: DVector::zeros(0),
            n_effective: 0.0,
            updates: 0,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn forgetting(&self) -> f64 {
        self.forgetting
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    pub fn n_effective(&self) -> f64 {
        self.n_effective
    }

    /// Number of updates absorbed so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn is_empty(&self) -> bool {
        self.updates == 0
    }

    /// Folds a batch into the model and returns the updated model.
    ///
    /// The retained rank after the update is `min(D, k + m)`. When the data
    /// seen so far spans fewer than `k` directions the basis is completed with
    /// orthonormal directions carrying zero singular value, so projection to
    /// `k` components is always possible.
    pub fn update(&self, batch: &Batch) -> Result<PcaModel> {
        if batch.dims() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                got: batch.dims(),
            });
        }
        let m = batch.len();
        if m < 2 {
            return Err(Error::BatchTooSmall(m));
        }
        let d = self.dims;
        let f = self.forgetting;
        let points = batch.points();

        let batch_mean = DVector::from_fn(d, |j, _| points.column(j).mean());
        let prior_weight = f * self.n_effective;
        let n_new = prior_weight + m as f64;
        let mean = (&self.mean * prior_weight + &batch_mean * m as f64) / n_new;

        // Centred batch plus the mean-correction column.
        let mut augmented = DMatrix::zeros(d, m + 1);
        for i in 0..m {
            for j in 0..d {
                augmented[(j, i)] = points[(i, j)] - batch_mean[j];
            }
        }
        let correction = (prior_weight * m as f64 / n_new).sqrt();
        for j in 0..d {
            augmented[(j, m)] = correction * (batch_mean[j] - self.mean[j]);
        }

        let kp = self.basis.ncols();
        let coeffs = self.basis.tr_mul(&augmented);
        let residual = &augmented - &self.basis * &coeffs;

        let scale = augmented
            .norm()
            .max(self.singular_values.iter().copied().fold(0.0, f64::max));
        let residual_basis = orth(&residual, RESIDUAL_RANK_TOL * scale.max(f64::MIN_POSITIVE))?;
        let r = residual_basis.ncols();

        // [ f*S   U^T B ]
        // [ 0     Q^T (B - U U^T B) ]
        let mut small = DMatrix::zeros(kp + r, kp + m + 1);
        for i in 0..kp {
            small[(i, i)] = f * self.singular_values[i];
        }
        small.view_mut((0, kp), (kp, m + 1)).copy_from(&coeffs);
        if r > 0 {
            let lower = residual_basis.tr_mul(&residual);
            small.view_mut((kp, kp), (r, m + 1)).copy_from(&lower);
        }

        let mut basis = DMatrix::zeros(d, 0);
        let mut singular = Vec::new();
        if kp + r > 0 {
            let svd = thin_svd(&small)?;
            let keep = (self.components + m).min(d).min(svd.s.len());
            let u_sel = svd.u.columns(0, keep);
            singular.extend(svd.s.iter().take(keep));
            let mut stacked = DMatrix::zeros(d, kp + r);
            stacked.view_mut((0, 0), (d, kp)).copy_from(&self.basis);
            if r > 0 {
                stacked.view_mut((0, kp), (d, r)).copy_from(&residual_basis);
            }
            basis = stacked * u_sel;
        }

        let largest = singular.first().copied().unwrap_or(0.0);
        for s in singular.iter_mut() {
            if *s < SINGULAR_FLOOR * largest || largest == 0.0 {
                *s = 0.0;
            }
        }

        let target = self.components.min(d);
        if basis.ncols() < target {
            basis = complete_basis(basis, target);
            singular.resize(target, 0.0);
        }
        reorthonormalize(&mut basis);

        Ok(PcaModel {
            dims: d,
            components: self.components,
            forgetting: f,
            mean,
            basis,
            singular_values: DVector::from_vec(singular),
            n_effective: n_new,
            updates: self.updates + 1,
        })
    }

    /// Number of basis columns currently retained.
    pub fn available_components(&self) -> usize {
        self.basis.ncols()
    }

    fn check_projectable(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyModel);
        }
        if self.basis.ncols() < self.components {
            return Err(Error::InsufficientComponents {
                requested: self.components,
                available: self.basis.ncols(),
            });
        }
        Ok(())
    }

    /// Projects the rows of `points` (`r x D`) onto the first `k` components.
    pub fn project(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if points.ncols() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                got: points.ncols(),
            });
        }
        self.check_projectable()?;
        let mut centred = points.clone();
        for mut row in centred.row_iter_mut() {
            row -= self.mean.transpose();
        }
        Ok(centred * self.basis.columns(0, self.components))
    }

    /// Projects row-major points (`rows.len() / D` of them) into `out`,
    /// row-major with `k` values per point.
    pub fn project_rows(&self, rows: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if rows.len() % self.dims != 0 {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                got: rows.len() % self.dims,
            });
        }
        self.check_projectable()?;
        let k = self.components;
        let mean = self.mean.as_slice();
        let cols: Vec<&[f64]> = (0..k)
            .map(|c| {
                let start = c * self.dims;
                &self.basis.as_slice()[start..start + self.dims]
            })
            .collect();
        out.clear();
        out.reserve(rows.len() / self.dims * k);
        for row in rows.chunks_exact(self.dims) {
            for col in &cols {
                let mut acc = 0.0;
                for ((x, mu), h) in row.iter().zip(mean).zip(col.iter()) {
                    acc += (x - mu) * h;
                }
                out.push(acc);
            }
        }
        Ok(())
    }

    /// Eigenvalue of each retained component, `s^2 / max(n - 1, 1)`.
    pub fn eigenvalues(&self) -> DVector<f64> {
        let denom = (self.n_effective - 1.0).max(1.0);
        self.singular_values.map(|s| s * s / denom)
    }

    /// PC loadings `w_ij = sqrt(lambda_i) * h_ij` as a `k x D` matrix.
    pub fn pc_loadings(&self) -> Result<DMatrix<f64>> {
        self.check_projectable()?;
        let eig = self.eigenvalues();
        let k = self.components;
        Ok(DMatrix::from_fn(k, self.dims, |i, j| {
            eig[i].sqrt() * self.basis[(j, i)]
        }))
    }
}

/// Orthonormal basis for the column space of `m`, dropping directions whose
/// singular value is at or below `tol`.
fn orth(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if m.ncols() == 0 || m.norm() <= tol {
        return Ok(DMatrix::zeros(m.nrows(), 0));
    }
    let svd = thin_svd(m)?;
    let rank = svd.s.iter().take_while(|&&s| s > tol).count();
    Ok(svd.u.columns(0, rank).into_owned())
}

/// Appends canonical directions, orthogonalised against the existing
/// columns, until the basis has `target` columns.
pub(crate) fn complete_basis(basis: DMatrix<f64>, target: usize) -> DMatrix<f64> {
    let d = basis.nrows();
    let mut cols: Vec<DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
    for axis in 0..d {
        if cols.len() >= target {
            break;
        }
        let mut v = DVector::zeros(d);
        v[axis] = 1.0;
        for _ in 0..2 {
            for c in &cols {
                let dot = c.dot(&v);
                v.axpy(-dot, c, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            cols.push(v / norm);
        }
    }
    DMatrix::from_columns(&cols)
}

/// One modified Gram-Schmidt pass; keeps column order and signs.
pub(crate) fn reorthonormalize(basis: &mut DMatrix<f64>) {
    for i in 0..basis.ncols() {
        for j in 0..i {
            let dot = basis.column(j).dot(&basis.column(i));
            let prev = basis.column(j).into_owned();
            basis.column_mut(i).axpy(-dot, &prev, 1.0);
        }
        let norm = basis.column(i).norm();
        if norm > 0.0 {
            basis.column_mut(i).unscale_mut(norm);
        }
    }
}
