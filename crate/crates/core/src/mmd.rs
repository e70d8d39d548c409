//! MMD estimators: complete U-statistic, linear-time, incomplete, and the
//! per-feature statistic vector with its covariance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::design::{design_size, linear_pair_design, sample_pair_design, PairDesign};
use crate::error::{Error, Result};
use crate::kernels::{sq_dist, KernelSpec};
use crate::matrix::SampleMatrix;

/// Scaled per-feature statistic `t = √l · estimate` with covariance Σ̂.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStat {
    pub t: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// Number of tuples (or blocks) behind the estimate.
    pub l: usize,
    pub feature_names: Vec<String>,
}

impl MultiStat {
    pub fn dim(&self) -> usize {
        self.t.len()
    }

    /// Unscaled per-feature estimates.
    pub fn estimates(&self) -> DVector<f64> {
        &self.t / (self.l as f64).sqrt()
    }
}

/// Row mean and sample covariance (divisor `rows − 1`) of an l×d matrix.
pub(crate) fn mean_and_covariance(h: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let l = h.nrows();
    let mean = h.row_mean().transpose();
    let mut centered = h.clone();
    for (j, mut c) in centered.column_iter_mut().enumerate() {
        c.add_scalar_mut(-mean[j]);
    }
    let mut cov = centered.transpose() * &centered / (l as f64 - 1.0);
    // Enforce exact symmetry.
    for i in 0..cov.nrows() {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

/// h(z, z') = K(x,x') + K(y,y') − K(x',y) − K(x,y') for scalar observations.
#[inline]
pub fn mmd_h(x: f64, x2: f64, y: f64, y2: f64, spec: &KernelSpec) -> f64 {
    (spec.eval_scalar(x, x2) + spec.eval_scalar(y, y2))
        - (spec.eval_scalar(x2, y) + spec.eval_scalar(x, y2))
}

/// h for vector observations.
pub fn mmd_h_vec(x: &[f64], x2: &[f64], y: &[f64], y2: &[f64], spec: &KernelSpec) -> f64 {
    (spec.of_sq_dist(sq_dist(x, x2)) + spec.of_sq_dist(sq_dist(y, y2)))
        - (spec.of_sq_dist(sq_dist(x2, y)) + spec.of_sq_dist(sq_dist(x, y2)))
}

fn check_pair(x: &SampleMatrix, y: &SampleMatrix) -> Result<usize> {
    if x.nrows() != y.nrows() || x.ncols() != y.ncols() {
        return Err(Error::Shape(format!(
            "samples {}x{} and {}x{}",
            x.nrows(),
            x.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::InvalidParameter(format!("need n >= 2, got {}", x.nrows())));
    }
    Ok(x.nrows())
}

fn h_rows(xr: &[Vec<f64>], yr: &[Vec<f64>], i: usize, j: usize, spec: &KernelSpec) -> f64 {
    mmd_h_vec(&xr[i], &xr[j], &yr[i], &yr[j], spec)
}

/// Complete U-statistic, averaging h over all ordered pairs i ≠ j.
pub fn mmd_u(x: &SampleMatrix, y: &SampleMatrix, spec: &KernelSpec) -> Result<f64> {
    let n = check_pair(x, y)?;
    let (xr, yr) = (x.rows(), y.rows());
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += h_rows(&xr, &yr, i, j, spec);
            }
        }
    }
    Ok(sum / (n * (n - 1)) as f64)
}

/// Linear-time estimator over consecutive disjoint pairs.
pub fn mmd_linear(x: &SampleMatrix, y: &SampleMatrix, spec: &KernelSpec) -> Result<f64> {
    let n = check_pair(x, y)?;
    mmd_incomplete(x, y, spec, &linear_pair_design(n)?)
}

/// Incomplete U-statistic over `design`.
pub fn mmd_incomplete(
    x: &SampleMatrix,
    y: &SampleMatrix,
    spec: &KernelSpec,
    design: &PairDesign,
) -> Result<f64> {
    let n = check_pair(x, y)?;
    design.check_against(n)?;
    let (xr, yr) = (x.rows(), y.rows());
    let sum: f64 = design
        .tuples()
        .iter()
        .map(|&[i, j]| h_rows(&xr, &yr, i, j, spec))
        .sum();
    Ok(sum / design.len() as f64)
}

/// Per-feature h values on the design: an l×d matrix.
pub(crate) fn mmd_h_matrix(
    x: &SampleMatrix,
    y: &SampleMatrix,
    specs: &[KernelSpec],
    design: &PairDesign,
) -> DMatrix<f64> {
    let l = design.len();
    let d = x.ncols();
    let cols: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|f| {
            let (xc, yc, spec) = (x.column(f), y.column(f), &specs[f]);
            design
                .tuples()
                .iter()
                .map(|&[i, j]| mmd_h(xc[i], xc[j], yc[i], yc[j], spec))
                .collect()
        })
        .collect();
    DMatrix::from_fn(l, d, |r, c| cols[c][r])
}

/// Per-feature statistic on a fixed pair design shared across features.
pub fn mmd_multistat_with_design(
    x: &SampleMatrix,
    y: &SampleMatrix,
    specs: &[KernelSpec],
    design: &PairDesign,
) -> Result<MultiStat> {
    let n = check_pair(x, y)?;
    if specs.len() != x.ncols() {
        return Err(Error::Shape(format!(
            "{} kernel specs for {} features",
            specs.len(),
            x.ncols()
        )));
    }
    design.check_against(n)?;
    let l = design.len();
    if l < 2 {
        return Err(Error::InvalidParameter(format!("design size {l} < 2")));
    }
    let h = mmd_h_matrix(x, y, specs, design);
    let (mean, sigma) = mean_and_covariance(&h);
    Ok(MultiStat {
        t: mean * (l as f64).sqrt(),
        sigma,
        l,
        feature_names: x.names().to_vec(),
    })
}

/// Per-feature incomplete MMD with a shared random design of size round(r·n).
pub fn mmd_multistat<R: Rng + ?Sized>(
    x: &SampleMatrix,
    y: &SampleMatrix,
    specs: &[KernelSpec],
    r: f64,
    rng: &mut R,
) -> Result<MultiStat> {
    let n = check_pair(x, y)?;
    let l = design_size(n, r)?;
    if l < 2 {
        return Err(Error::InvalidParameter(format!("design size {l} < 2")));
    }
    let design = sample_pair_design(n, l, rng)?;
    mmd_multistat_with_design(x, y, specs, &design)
}
