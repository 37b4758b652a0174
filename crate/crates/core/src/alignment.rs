//! Similarity (Procrustes) alignment between consecutive layouts.
//!
//! A transform maps a row `p` of the current layout to `c (p + tau) R`, where
//! `c > 0` is a uniform scale, `tau` a translation and `R` an orthogonal
//! matrix that may include a reflection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::thin_svd;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub translation: Vec<f64>,
    /// Row-major `k x k`.
    pub rotation: Vec<f64>,
}

impl SimilarityTransform {
    pub fn identity(k: usize) -> Self {
        Self {
            scale: 1.0,
            translation: vec![0.0; k],
            rotation: DMatrix::<f64>::identity(k, k).transpose().as_slice().to_vec(),
        }
    }

    pub fn new(scale: f64, translation: Vec<f64>, rotation: &DMatrix<f64>) -> Result<Self> {
        let k = translation.len();
        if rotation.nrows() != k || rotation.ncols() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: rotation.nrows(),
            });
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidConfig(format!("scale must be positive, got {scale}")));
        }
        Ok(Self {
            scale,
            translation,
            rotation: rotation.transpose().as_slice().to_vec(),
        })
    }

    pub fn dims(&self) -> usize {
        self.translation.len()
    }

    pub fn rotation_matrix(&self) -> DMatrix<f64> {
        let k = self.dims();
        DMatrix::from_row_slice(k, k, &self.rotation)
    }

    /// Applies the transform to one row.
    pub fn apply_point(&self, p: &[f64], out: &mut [f64]) {
        let k = self.dims();
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..k {
            let shifted = self.scale * (p[i] + self.translation[i]);
            let row = &self.rotation[i * k..(i + 1) * k];
            for (o, r) in out.iter_mut().zip(row) {
                *o += shifted * r;
            }
        }
    }

    /// Applies the transform to every row of a row-major buffer.
    pub fn apply_rows(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let k = self.dims();
        if k == 0 || rows.len() % k != 0 {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: rows.len() % k.max(1),
            });
        }
        let mut out = vec![0.0; rows.len()];
        for (src, dst) in rows.chunks_exact(k).zip(out.chunks_exact_mut(k)) {
            self.apply_point(src, dst);
        }
        Ok(out)
    }

    /// Applies the transform to the rows of `points`.
    pub fn apply(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let k = self.dims();
        if points.ncols() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: points.ncols(),
            });
        }
        let tau = DVector::from_column_slice(&self.translation).transpose();
        let mut shifted = points.clone();
        for mut row in shifted.row_iter_mut() {
            row += &tau;
        }
        Ok(shifted * self.rotation_matrix() * self.scale)
    }

    pub fn invert(&self) -> Self {
        // p = (1/c) (y - c tau R) R^T
        let r = self.rotation_matrix();
        let tau = DVector::from_column_slice(&self.translation).transpose();
        let shift = -(tau * &r) * self.scale;
        Self {
            scale: 1.0 / self.scale,
            translation: shift.as_slice().to_vec(),
            rotation: r.as_slice().to_vec(),
        }
    }

    /// The transform equivalent to applying `self` and then `next`.
    pub fn then(&self, next: &SimilarityTransform) -> Self {
        // c2 (c1 (p + t1) R1 + t2) R2 = c1 c2 (p + t1 + t2 R1^T / c1) R1 R2
        let r1 = self.rotation_matrix();
        let r2 = next.rotation_matrix();
        let t1 = DVector::from_column_slice(&self.translation).transpose();
        let t2 = DVector::from_column_slice(&next.translation).transpose();
        let tau = t1 + t2 * r1.transpose() / self.scale;
        Self {
            scale: self.scale * next.scale,
            translation: tau.as_slice().to_vec(),
            rotation: (r1 * r2).transpose().as_slice().to_vec(),
        }
    }
}

/// Rows of the previous (`prev`) and current (`curr`) layouts paired by id.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCorrespondence {
    prev: DMatrix<f64>,
    curr: DMatrix<f64>,
}

impl PointCorrespondence {
    pub fn new(prev: DMatrix<f64>, curr: DMatrix<f64>) -> Result<Self> {
        if prev.nrows() != curr.nrows() {
            return Err(Error::LengthMismatch {
                left: prev.nrows(),
                right: curr.nrows(),
            });
        }
        if prev.nrows() == 0 {
            return Err(Error::NotEnoughPoints { needed: 1, have: 0 });
        }
        if prev.ncols() != curr.ncols() {
            return Err(Error::DimensionMismatch {
                expected: prev.ncols(),
                got: curr.ncols(),
            });
        }
        Ok(Self { prev, curr })
    }

    pub fn prev(&self) -> &DMatrix<f64> {
        &self.prev
    }

    pub fn curr(&self) -> &DMatrix<f64> {
        &self.curr
    }

    pub fn len(&self) -> usize {
        self.prev.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.prev.nrows() == 0
    }

    /// `|| c (P' + v tau^T) R - P ||_F`.
    pub fn residual(&self, t: &SimilarityTransform) -> f64 {
        let moved = t.apply(&self.curr).expect("width checked at construction");
        (moved - &self.prev).norm()
    }
}

/// Outcome of [`fit`]; `degenerate` is set when the current points have no
/// spread (or carry no signal about the previous ones) and only the centroid
/// could be matched.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub transform: SimilarityTransform,
    pub degenerate: bool,
}

fn centroid(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.ncols(), |j, _| m.column(j).mean())
}

fn centred(m: &DMatrix<f64>, c: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    let ct = c.transpose();
    for mut row in out.row_iter_mut() {
        row -= &ct;
    }
    out
}

/// Least-squares similarity transform taking `curr` onto `prev`.
pub fn fit(corr: &PointCorrespondence) -> Fit {
    let k = corr.prev.ncols();
    let prev_c = centroid(&corr.prev);
    let curr_c = centroid(&corr.curr);
    let a = centred(&corr.curr, &curr_c);
    let b = centred(&corr.prev, &prev_c);

    let spread = a.norm_squared();
    let magnitude = 1.0 + curr_c.norm() + a.amax();
    let fallback = || Fit {
        transform: SimilarityTransform {
            scale: 1.0,
            translation: (&prev_c - &curr_c).as_slice().to_vec(),
            rotation: SimilarityTransform::identity(k).rotation,
        },
        degenerate: true,
    };
    if spread.sqrt() <= 1e-14 * magnitude {
        return fallback();
    }

    // Maximise tr(R^T A^T B) over orthogonal R.
    let cross = a.tr_mul(&b);
    let Ok(svd) = thin_svd(&cross) else {
        return fallback();
    };
    let rotation = &svd.u * svd.v.transpose();
    let trace: f64 = svd.s.iter().sum();
    let scale = trace / spread;
    if !(scale.is_finite() && scale > 0.0) || trace <= 1e-14 * b.norm() * a.norm() {
        return fallback();
    }
    // c (curr_c + tau) R = prev_c
    let tau = (prev_c.transpose() * rotation.transpose()) / scale - curr_c.transpose();
    Fit {
        transform: SimilarityTransform {
            scale,
            translation: tau.as_slice().to_vec(),
            rotation: rotation.transpose().as_slice().to_vec(),
        },
        degenerate: false,
    }
}
