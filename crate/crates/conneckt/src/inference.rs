//! Covariance estimation, precision-matrix computation (exact or
//! PCA-truncated) and the partial-correlation association statistic,
//! plus the plain Pearson baseline.

use nalgebra::{Cholesky, DMatrix};
use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{AssociationMatrix, Recording};

/// Eigenvalues at or below this fraction of the largest eigenvalue are
/// excluded from the truncated inverse, guarding the 1/lambda blow-up.
pub const EIGENVALUE_RELATIVE_FLOOR: f64 = 1e-12;

/// Sample covariance of a recording: p x p, exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub sigma: Array2<f64>,
    pub sample_count: usize,
}

impl CovarianceEstimate {
    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }

    /// Adds `lambda` to every diagonal entry.
    pub fn add_ridge(&mut self, lambda: f64) -> Result<()> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Parameter(format!("ridge must be >= 0, got {lambda}")));
        }
        for i in 0..self.p() {
            self.sigma[[i, i]] += lambda;
        }
        Ok(())
    }
}

/// Inverse covariance (or its rank-truncated spectral reconstruction).
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    pub omega: Array2<f64>,
    /// Number of spectral components that actually entered the
    /// reconstruction (equals p for the exact inverse).
    pub components_used: usize,
}

impl PrecisionEstimate {
    pub fn p(&self) -> usize {
        self.omega.nrows()
    }
}

/// Default truncation order M = round(0.8 p), at least 1.
pub fn default_pca_components(p: usize) -> usize {
    ((0.8 * p as f64).round() as usize).max(1)
}

fn mirror_upper(m: &mut Array2<f64>) {
    let p = m.nrows();
    for i in 0..p {
        for j in i + 1..p {
            m[[j, i]] = m[[i, j]];
        }
    }
}

/// Sample covariance with divisor n-1. The upper triangle is computed
/// and mirrored, so symmetry is exact. Each entry is a single
/// sequential dot product; the parallel split over rows cannot change
/// any output bit.
pub fn empirical_covariance(rec: &Recording) -> Result<CovarianceEstimate> {
    let p = rec.neurons();
    let n = rec.samples();
    if n < 2 {
        return Err(Error::Shape(format!(
            "covariance needs at least 2 samples, recording has {n}"
        )));
    }
    let mut centered = rec.values.clone();
    for i in 0..p {
        let mean = centered.row(i).sum() / n as f64;
        centered.row_mut(i).mapv_inplace(|x| x - mean);
    }
    let denom = (n - 1) as f64;
    let upper: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let row_i = centered.row(i);
            (i..p).map(|j| row_i.dot(&centered.row(j)) / denom).collect()
        })
        .collect();

    let mut sigma = Array2::zeros((p, p));
    for (i, row) in upper.iter().enumerate() {
        for (offset, &v) in row.iter().enumerate() {
            let j = i + offset;
            sigma[[i, j]] = v;
            sigma[[j, i]] = v;
        }
    }
    Ok(CovarianceEstimate {
        sigma,
        sample_count: n,
    })
}

/// Rescales every neuron to zero mean and unit sample variance.
pub fn standardize(rec: &Recording) -> Result<Recording> {
    let p = rec.neurons();
    let n = rec.samples();
    if n < 2 {
        return Err(Error::Shape(format!(
            "standardization needs at least 2 samples, recording has {n}"
        )));
    }
    let mut values = rec.values.clone();
    for i in 0..p {
        let mean = values.row(i).sum() / n as f64;
        let var = values.row(i).fold(0.0, |acc, &x| acc + (x - mean) * (x - mean)) / (n - 1) as f64;
        if var == 0.0 {
            return Err(Error::Degenerate { neuron: i });
        }
        let sd = var.sqrt();
        values.row_mut(i).mapv_inplace(|x| (x - mean) / sd);
    }
    Ok(Recording {
        values,
        time_offset: rec.time_offset,
    })
}

fn to_nalgebra(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

/// Exact inverse through a symmetric positive-definite factorization.
/// Fails on singular or indefinite input, pointing at the PCA path.
pub fn invert_exact(cov: &CovarianceEstimate) -> Result<PrecisionEstimate> {
    let p = cov.p();
    let chol = Cholesky::new(to_nalgebra(&cov.sigma))
        .ok_or_else(|| Error::IllConditioned("SPD factorization failed".into()))?;
    let inv = chol.inverse();
    let mut omega = Array2::from_shape_fn((p, p), |(i, j)| inv[(i, j)]);
    mirror_upper(&mut omega);
    Ok(PrecisionEstimate {
        omega,
        components_used: p,
    })
}

/// Truncated inverse from the top `components` eigenpairs of the
/// covariance (eigenvalues sorted descending, ties broken by original
/// index). Eigenvalues at or below the relative floor are excluded
/// even inside the first `components`.
pub fn invert_pca(cov: &CovarianceEstimate, components: usize) -> Result<PrecisionEstimate> {
    let p = cov.p();
    if components < 1 || components > p {
        return Err(Error::Parameter(format!(
            "component count must be in [1, {p}], got {components}"
        )));
    }
    let eig = to_nalgebra(&cov.sigma).symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let lambda_max = eig.eigenvalues[order[0]];
    let floor = EIGENVALUE_RELATIVE_FLOOR * lambda_max;
    let kept: Vec<usize> = order
        .into_iter()
        .take(components)
        .filter(|&k| eig.eigenvalues[k] > floor && eig.eigenvalues[k] > 0.0)
        .collect();

    // omega = V diag(1/lambda) V^T, assembled as W W^T with
    // W[:, k] = v_k / sqrt(lambda_k).
    let mut w = Array2::zeros((p, kept.len()));
    for (col, &k) in kept.iter().enumerate() {
        let scale = 1.0 / eig.eigenvalues[k].sqrt();
        for i in 0..p {
            w[[i, col]] = eig.eigenvectors[(i, k)] * scale;
        }
    }
    let mut omega = w.dot(&w.t());
    mirror_upper(&mut omega);
    Ok(PrecisionEstimate {
        omega,
        components_used: kept.len(),
    })
}

/// Partial-correlation scores from a precision matrix:
/// `-omega_ij / sqrt(omega_ii omega_jj)` off the diagonal, 0 on it.
/// Errors with the neuron index when a diagonal entry is not positive
/// (constant neuron after filtering).
pub fn partial_correlation(prec: &PrecisionEstimate) -> Result<AssociationMatrix> {
    let p = prec.p();
    for i in 0..p {
        if !(prec.omega[[i, i]] > 0.0) {
            return Err(Error::Degenerate { neuron: i });
        }
    }
    let mut scores = Array2::zeros((p, p));
    for i in 0..p {
        for j in i + 1..p {
            let denom = (prec.omega[[i, i]] * prec.omega[[j, j]]).sqrt();
            let value = -prec.omega[[i, j]] / denom;
            scores[[i, j]] = value;
            scores[[j, i]] = value;
        }
    }
    AssociationMatrix::new(scores, true)
}

/// Pearson correlation baseline: `sigma_ij / sqrt(sigma_ii sigma_jj)`,
/// 0 on the diagonal.
pub fn pearson_correlation(rec: &Recording) -> Result<AssociationMatrix> {
    let cov = empirical_covariance(rec)?;
    let p = cov.p();
    for i in 0..p {
        if !(cov.sigma[[i, i]] > 0.0) {
            return Err(Error::Degenerate { neuron: i });
        }
    }
    let mut scores = Array2::zeros((p, p));
    for i in 0..p {
        for j in i + 1..p {
            let denom = (cov.sigma[[i, i]] * cov.sigma[[j, j]]).sqrt();
            let value = cov.sigma[[i, j]] / denom;
            scores[[i, j]] = value;
            scores[[j, i]] = value;
        }
    }
    AssociationMatrix::new(scores, true)
}
