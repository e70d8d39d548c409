//! HSIC estimators: complete U-statistic, incomplete (random quadruple
//! design), block, and the per-feature statistic vectors built on them.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::design::{design_size, sample_quad_design, QuadDesign};
use crate::error::{Error, Result};
use crate::kernels::{gram_matrix, KernelSpec};
use crate::matrix::SampleMatrix;
use crate::mmd::{mean_and_covariance, MultiStat};

/// Paired covariates and response, one row per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSample {
    pub x: SampleMatrix,
    pub y: SampleMatrix,
}

impl JointSample {
    pub fn new(x: SampleMatrix, y: SampleMatrix) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::Shape(format!(
                "covariates have {} rows, response has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        if y.ncols() == 0 {
            return Err(Error::Shape("empty response".into()));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }
}

/// Random access to Gram entries.
pub trait GramLookup {
    fn at(&self, i: usize, j: usize) -> f64;
}

impl GramLookup for DMatrix<f64> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self[(i, j)]
    }
}

/// Gram entries of a univariate column, evaluated on demand.
pub struct LazyGram<'a> {
    pub values: &'a [f64],
    pub spec: KernelSpec,
}

impl GramLookup for LazyGram<'_> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.spec.eval_scalar(self.values[i], self.values[j])
    }
}

const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Symmetrised HSIC kernel, assuming distinct indices.
///
/// Closed form of the 24-permutation average of K_st (L_st + L_uv − 2 L_su).
/// The six index pairs split into three perfect matchings {p, p̄}; with
/// b = 2L_p + 2L_p̄ − (sum of L over the other four pairs),
/// h = (1/12) Σ_matchings (K_p + K_p̄) · b. Since Σ b = 0, K is centred at one
/// entry, which makes a constant K or a constant L give exactly zero.
#[inline]
pub(crate) fn hsic_h_unchecked<K: GramLookup + ?Sized, L: GramLookup + ?Sized>(
    k: &K,
    l: &L,
    q: [usize; 4],
) -> f64 {
    let mut kp = [0.0; 6];
    let mut lp = [0.0; 6];
    for (m, &(a, b)) in PAIRS.iter().enumerate() {
        kp[m] = k.at(q[a], q[b]);
        lp[m] = l.at(q[a], q[b]);
    }
    // Matching j pairs PAIRS[j] with PAIRS[5 - j].
    let b = |j: usize, o: [usize; 4]| {
        (lp[j] - lp[o[0]]) + (lp[j] - lp[o[1]]) + (lp[5 - j] - lp[o[2]]) + (lp[5 - j] - lp[o[3]])
    };
    let b0 = b(0, [1, 2, 3, 4]);
    let b1 = b(1, [0, 2, 3, 5]);
    let b2 = b(2, [0, 1, 4, 5]);
    let k0 = kp[0];
    let s = ((kp[0] - k0) + (kp[5] - k0)) * b0
        + ((kp[1] - k0) + (kp[4] - k0)) * b1
        + ((kp[2] - k0) + (kp[3] - k0)) * b2;
    s / 12.0
}

pub fn hsic_h(kmat: &DMatrix<f64>, lmat: &DMatrix<f64>, quad: [usize; 4]) -> Result<f64> {
    for a in 0..4 {
        for b in (a + 1)..4 {
            if quad[a] == quad[b] {
                return Err(Error::RepeatedIndex(quad.to_vec()));
            }
        }
    }
    let n = kmat.nrows().min(lmat.nrows());
    if quad.iter().any(|&i| i >= n) {
        return Err(Error::Shape(format!("quadruple {quad:?} out of range for n = {n}")));
    }
    Ok(hsic_h_unchecked(kmat, lmat, quad))
}

fn grams(z: &JointSample, spec_x: &KernelSpec, spec_y: &KernelSpec) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    Ok((gram_matrix(spec_x, &z.x, &z.x)?, gram_matrix(spec_y, &z.y, &z.y)?))
}

/// Complete U-statistic over the index range `lo..hi`.
fn complete_u<K: GramLookup + ?Sized, L: GramLookup + ?Sized>(k: &K, l: &L, lo: usize, hi: usize) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in lo..hi {
        for j in (i + 1)..hi {
            for q in (j + 1)..hi {
                for r in (q + 1)..hi {
                    sum += hsic_h_unchecked(k, l, [i, j, q, r]);
                    count += 1;
                }
            }
        }
    }
    sum / count as f64
}

/// Complete U-statistic. O(n⁴); meant for small n.
pub fn hsic_u(z: &JointSample, spec_x: &KernelSpec, spec_y: &KernelSpec) -> Result<f64> {
    let n = z.n();
    if n < 4 {
        return Err(Error::InvalidParameter(format!("HSIC needs n >= 4, got {n}")));
    }
    let (k, l) = grams(z, spec_x, spec_y)?;
    Ok(complete_u(&k, &l, 0, n))
}

pub fn hsic_incomplete(
    z: &JointSample,
    spec_x: &KernelSpec,
    spec_y: &KernelSpec,
    design: &QuadDesign,
) -> Result<f64> {
    design.check_against(z.n())?;
    let (k, l) = grams(z, spec_x, spec_y)?;
    let sum: f64 = design
        .tuples()
        .iter()
        .map(|&q| hsic_h_unchecked(&k, &l, q))
        .sum();
    Ok(sum / design.len() as f64)
}

fn check_block(n: usize, block: usize) -> Result<usize> {
    if block < 4 {
        return Err(Error::InvalidParameter(format!("block size {block} < 4")));
    }
    if n < block {
        return Err(Error::InvalidParameter(format!("n = {n} smaller than block size {block}")));
    }
    Ok(n / block)
}

/// Mean of complete U-statistics over consecutive blocks; a trailing partial
/// block is discarded.
pub fn hsic_block(z: &JointSample, spec_x: &KernelSpec, spec_y: &KernelSpec, block: usize) -> Result<f64> {
    let nb = check_block(z.n(), block)?;
    let (k, l) = grams(z, spec_x, spec_y)?;
    let sum: f64 = (0..nb)
        .map(|t| complete_u(&k, &l, t * block, (t + 1) * block))
        .sum();
    Ok(sum / nb as f64)
}

fn check_specs(z: &JointSample, specs: &[KernelSpec]) -> Result<()> {
    if specs.len() != z.d() {
        return Err(Error::Shape(format!(
            "{} kernel specs for {} features",
            specs.len(),
            z.d()
        )));
    }
    Ok(())
}

/// Per-feature h values on a quadruple design: an l×d matrix.
fn hsic_h_matrix(z: &JointSample, specs: &[KernelSpec], lmat: &DMatrix<f64>, design: &QuadDesign) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = (0..z.d())
        .into_par_iter()
        .map(|f| {
            let k = LazyGram {
                values: z.x.column(f),
                spec: specs[f],
            };
            design
                .tuples()
                .iter()
                .map(|&q| hsic_h_unchecked(&k, lmat, q))
                .collect()
        })
        .collect();
    DMatrix::from_fn(design.len(), z.d(), |r, c| cols[c][r])
}

/// Per-feature incomplete HSIC on a fixed design shared by all features.
pub fn hsic_multistat_with_design(
    z: &JointSample,
    specs: &[KernelSpec],
    spec_y: &KernelSpec,
    design: &QuadDesign,
) -> Result<MultiStat> {
    check_specs(z, specs)?;
    design.check_against(z.n())?;
    let l = design.len();
    if l < 2 {
        return Err(Error::InvalidParameter(format!("design size {l} < 2")));
    }
    let lmat = gram_matrix(spec_y, &z.y, &z.y)?;
    let h = hsic_h_matrix(z, specs, &lmat, design);
    let (mean, sigma) = mean_and_covariance(&h);
    Ok(MultiStat {
        t: mean * (l as f64).sqrt(),
        sigma,
        l,
        feature_names: z.x.names().to_vec(),
    })
}

/// Per-feature incomplete HSIC with a shared random design of size round(r·n).
pub fn hsic_multistat_incomplete<R: Rng + ?Sized>(
    z: &JointSample,
    specs: &[KernelSpec],
    spec_y: &KernelSpec,
    r: f64,
    rng: &mut R,
) -> Result<MultiStat> {
    let n = z.n();
    if n < 4 {
        return Err(Error::InvalidParameter(format!("HSIC needs n >= 4, got {n}")));
    }
    let l = design_size(n, r)?;
    if l < 2 {
        return Err(Error::InvalidParameter(format!("design size {l} < 2")));
    }
    let design = sample_quad_design(n, l, rng)?;
    hsic_multistat_with_design(z, specs, spec_y, &design)
}

/// Per-block complete U-statistics: an (n / block)×d matrix.
pub fn block_estimates(z: &JointSample, specs: &[KernelSpec], spec_y: &KernelSpec, block: usize) -> Result<DMatrix<f64>> {
    check_specs(z, specs)?;
    let nb = check_block(z.n(), block)?;
    let lmat = gram_matrix(spec_y, &z.y, &z.y)?;
    let cols: Vec<Vec<f64>> = (0..z.d())
        .into_par_iter()
        .map(|f| {
            let k = LazyGram {
                values: z.x.column(f),
                spec: specs[f],
            };
            (0..nb)
                .map(|t| complete_u(&k, &lmat, t * block, (t + 1) * block))
                .collect()
        })
        .collect();
    Ok(DMatrix::from_fn(nb, z.d(), |r, c| cols[c][r]))
}

/// Block-estimator statistic: `t = √(n/B) · HSIC_Blo` and the block
/// covariance with divisor n/B.
pub fn hsic_multistat_block(z: &JointSample, specs: &[KernelSpec], spec_y: &KernelSpec, block: usize) -> Result<MultiStat> {
    let eta = block_estimates(z, specs, spec_y, block)?;
    let nb = eta.nrows();
    if nb < 2 {
        return Err(Error::InvalidParameter(format!("{nb} block(s); need at least 2")));
    }
    let (mean, sample_cov) = mean_and_covariance(&eta);
    let sigma = sample_cov * ((nb as f64 - 1.0) / nb as f64);
    let t: DVector<f64> = mean * (nb as f64).sqrt();
    Ok(MultiStat {
        t,
        sigma,
        l: nb,
        feature_names: z.x.names().to_vec(),
    })
}
