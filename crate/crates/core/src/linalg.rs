//! Dense decompositions on nalgebra matrices.

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Thin SVD with singular values in non-increasing order.
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub(crate) fn thin_svd(m: &DMatrix<f64>) -> Result<ThinSvd> {
    let r = m.nrows().min(m.ncols());
    if r == 0 {
        return Ok(ThinSvd {
            u: DMatrix::zeros(m.nrows(), 0),
            s: DVector::zeros(0),
            v: DMatrix::zeros(m.ncols(), 0),
        });
    }
    let svd = to_faer(m)
        .thin_svd()
        .map_err(|_| Error::NoConvergence("singular value decomposition"))?;
    let s = svd.S().column_vector();
    Ok(ThinSvd {
        u: from_faer(svd.U()),
        s: DVector::from_fn(r, |i, _| s[i]),
        v: from_faer(svd.V()),
    })
}

/// `(X - 1 mean^T)^T (X - 1 mean^T)` over the first `mean.len()` columns of
/// the row-major `n x dims` buffer `rows`.
pub(crate) fn centred_gram(rows: &[f64], dims: usize, mean: &[f64]) -> DMatrix<f64> {
    let l = mean.len();
    let n = rows.len() / dims;
    let centred = Mat::from_fn(n, l, |i, j| rows[i * dims + j] - mean[j]);
    let gram = centred.transpose() * &centred;
    from_faer(gram.as_ref())
}

/// Eigenpairs of a symmetric matrix, eigenvalues in non-increasing order.
pub(crate) fn symmetric_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let evd = to_faer(m)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::NoConvergence("symmetric eigendecomposition"))?;
    let values = evd.S().column_vector();
    let vectors = evd.U();
    Ok((
        DVector::from_fn(n, |i, _| values[n - 1 - i]),
        DMatrix::from_fn(n, n, |i, j| vectors[(i, n - 1 - j)]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_with_tiny_rows() {
        let r = DMatrix::from_row_slice(
            4,
            3,
            &[
                -2.8e-17, 2.8e-17, 1.7e-16, -5.6e-17, 2.8e-17, 1.1e-16, 2.8e-17, 0.0, -2.8e-17, -0.1, 0.1,
                0.11547005383792519,
            ],
        );
        let svd = thin_svd(&r).unwrap();
        assert!((svd.s[0] - (0.02 + 0.11547005383792519f64.powi(2)).sqrt()).abs() < 1e-15);
        assert!((svd.u[(3, 0)].abs() - 1.0).abs() < 1e-14);
        let recomposed = &svd.u * DMatrix::from_diagonal(&svd.s) * svd.v.transpose();
        assert!((recomposed - r).amax() < 1e-15);
    }

    #[test]
    fn gram_of_centred_prefix() {
        let rows = [1.0, 2.0, 9.0, 3.0, 0.0, 9.0, 2.0, 4.0, 9.0];
        let g = centred_gram(&rows, 3, &[2.0, 2.0]);
        // centred prefix rows: (-1, 0), (1, -2), (0, 2)
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 8.0]));
    }

    #[test]
    fn eigen_order() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        let (values, vectors) = symmetric_eigen(&m).unwrap();
        assert_eq!(values.as_slice(), &[3.0, 1.0]);
        assert!((vectors[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }
}
