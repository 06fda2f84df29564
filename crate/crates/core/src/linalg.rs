use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Residual tolerance for eigenpairs, relative to the matrix scale.
const EIGEN_RESIDUAL_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigenvalues of a symmetric matrix, ascending, repeated values kept.
pub(crate) fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Eigen(format!(
            "matrix is {}x{}, not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_TOL * m.amax().max(1.0) {
        return Err(Error::NonSymmetric(asym));
    }
    let eig = m
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;
    let scale = m.amax().max(1.0);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let residual = (m * v - v * lambda).amax();
        if residual > EIGEN_RESIDUAL_TOL * scale {
            return Err(Error::Eigen(format!(
                "eigenpair {k} residual {residual:e} exceeds tolerance"
            )));
        }
    }
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}
