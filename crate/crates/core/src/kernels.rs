//! Positive-definite kernels, Gram matrices and median-heuristic bandwidths.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SampleMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Imq,
}

/// A Gaussian kernel `exp(-‖x−y‖² / 2σ²)` or an inverse multiquadric kernel
/// `(c² + ‖x−y‖²)^(-1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    Gaussian { bandwidth: f64 },
    Imq { offset: f64 },
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!("bandwidth {bandwidth}")));
        }
        Ok(Self::Gaussian { bandwidth })
    }

    pub fn imq(offset: f64) -> Result<Self> {
        if !(offset > 0.0 && offset.is_finite()) {
            return Err(Error::InvalidParameter(format!("IMQ offset {offset}")));
        }
        Ok(Self::Imq { offset })
    }

    pub fn family(&self) -> KernelFamily {
        match self {
            Self::Gaussian { .. } => KernelFamily::Gaussian,
            Self::Imq { .. } => KernelFamily::Imq,
        }
    }

    /// Kernel value as a function of the squared distance.
    #[inline]
    pub fn of_sq_dist(&self, d2: f64) -> f64 {
        match *self {
            Self::Gaussian { bandwidth } => (-d2 / (2.0 * bandwidth * bandwidth)).exp(),
            Self::Imq { offset } => (offset * offset + d2).sqrt().recip(),
        }
    }

    #[inline]
    pub fn eval_scalar(&self, x: f64, y: f64) -> f64 {
        let d = x - y;
        self.of_sq_dist(d * d)
    }
}

pub fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "kernel inputs of dimension {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(spec.of_sq_dist(sq_dist(x, y)))
}

pub fn gram_matrix(spec: &KernelSpec, a: &SampleMatrix, b: &SampleMatrix) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!(
            "Gram inputs with {} and {} columns",
            a.ncols(),
            b.ncols()
        )));
    }
    let ra = a.rows();
    let rb = b.rows();
    let entries: Vec<f64> = (0..ra.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let x = &ra[i];
            rb.iter().map(move |y| spec.of_sq_dist(sq_dist(x, y)))
        })
        .collect();
    Ok(DMatrix::from_row_slice(ra.len(), rb.len(), &entries))
}

/// Gram matrix of a single column against itself.
pub fn gram_1d(spec: &KernelSpec, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = spec.of_sq_dist(0.0);
        for i in (j + 1)..n {
            let v = spec.eval_scalar(x[i], x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let m = v.len();
    let (_, hi, _) = v.select_nth_unstable_by(m / 2, f64::total_cmp);
    let hi = *hi;
    if m % 2 == 1 {
        hi
    } else {
        let lo = v[..m / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

fn pairwise_sq_dists(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(sq_dist(&rows[i], &rows[j]));
        }
    }
    out
}

fn pairwise_sq_dists_1d(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let xi = x[i];
        out.extend(x[i + 1..].iter().map(|&xj| (xi - xj) * (xi - xj)));
    }
    out
}

fn bandwidth_from_sq_dists(mut d2: Vec<f64>) -> Result<f64> {
    if d2.is_empty() {
        return Err(Error::DegenerateSample(
            "median heuristic needs at least 2 rows".into(),
        ));
    }
    let med = median_in_place(&mut d2);
    if !(med > 0.0) {
        return Err(Error::DegenerateSample(
            "median squared distance is zero".into(),
        ));
    }
    Ok((med / 2.0).sqrt())
}

/// Bandwidth σ with σ² = median squared pairwise distance / 2.
///
/// Zero distances take part in the median.
pub fn median_heuristic(pooled: &SampleMatrix) -> Result<f64> {
    if pooled.ncols() == 1 {
        return median_heuristic_1d(pooled.column(0));
    }
    bandwidth_from_sq_dists(pairwise_sq_dists(&pooled.rows()))
}

pub fn median_heuristic_1d(x: &[f64]) -> Result<f64> {
    bandwidth_from_sq_dists(pairwise_sq_dists_1d(x))
}

/// How a bandwidth used by the test pipelines was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthSource {
    Median,
    /// More than half of the pairs coincide; median of the non-zero distances.
    NonzeroMedian,
    /// Every observation is identical; unit bandwidth.
    Unit,
    Fixed,
}

/// Median heuristic that never fails: heavily tied samples (binary labels)
/// fall back to the median of the non-zero distances, constant samples to 1.
pub fn robust_bandwidth(rows: &[Vec<f64>]) -> (f64, BandwidthSource) {
    let d2 = if rows.first().map_or(0, Vec::len) == 1 {
        pairwise_sq_dists_1d(&rows.iter().map(|r| r[0]).collect::<Vec<_>>())
    } else {
        pairwise_sq_dists(rows)
    };
    robust_from_sq_dists(d2)
}

pub fn robust_bandwidth_1d(x: &[f64]) -> (f64, BandwidthSource) {
    robust_from_sq_dists(pairwise_sq_dists_1d(x))
}

fn robust_from_sq_dists(d2: Vec<f64>) -> (f64, BandwidthSource) {
    let nonzero: Vec<f64> = d2.iter().copied().filter(|&v| v > 0.0).collect();
    match bandwidth_from_sq_dists(d2) {
        Ok(bw) => (bw, BandwidthSource::Median),
        Err(_) if !nonzero.is_empty() => (
            bandwidth_from_sq_dists(nonzero).expect("non-zero distances"),
            BandwidthSource::NonzeroMedian,
        ),
        Err(_) => (1.0, BandwidthSource::Unit),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[f64]) -> SampleMatrix {
        SampleMatrix::from_columns(&[v.to_vec()]).unwrap()
    }

    #[test]
    fn gaussian_values() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        assert_eq!(kernel_eval(&g, &[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
        let v = kernel_eval(&g, &[0.0], &[2.0]).unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.135_335).abs() < 1e-6);
    }

    #[test]
    fn imq_at_zero_distance() {
        let k = KernelSpec::imq(1.0).unwrap();
        assert_eq!(kernel_eval(&k, &[4.0], &[4.0]).unwrap(), 1.0);
        let k = KernelSpec::imq(2.0).unwrap();
        assert_eq!(kernel_eval(&k, &[4.0], &[4.0]).unwrap(), 0.5);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(f64::NAN).is_err());
        assert!(KernelSpec::imq(-1.0).is_err());
        let g = KernelSpec::gaussian(1.0).unwrap();
        assert!(matches!(kernel_eval(&g, &[0.0], &[0.0, 1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn median_heuristic_examples() {
        let s = median_heuristic(&col(&[0.0, 1.0, 3.0])).unwrap();
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        let s = median_heuristic(&col(&[0.0, 2.0])).unwrap();
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            median_heuristic(&col(&[1.5, 1.5, 1.5])),
            Err(Error::DegenerateSample(_))
        ));
        assert!(median_heuristic(&col(&[1.0])).is_err());
    }

    #[test]
    fn median_heuristic_multivariate_matches_enumeration() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 3.0]];
        // squared distances: 1, 4, 18, 5, 13, 10 -> sorted 1 4 5 10 13 18, median 7.5
        let s = median_heuristic(&SampleMatrix::from_rows(&rows).unwrap()).unwrap();
        assert!((s * s - 3.75).abs() < 1e-12);
    }

    #[test]
    fn robust_bandwidth_handles_ties() {
        let labels = [0.0, 0.0, 0.0, 1.0];
        // pairs: 3 zero, 3 ones -> median 0.5 > 0
        assert_eq!(robust_bandwidth_1d(&labels).1, BandwidthSource::Median);
        let labels = [0.0, 0.0, 0.0, 0.0, 1.0];
        let (bw, src) = robust_bandwidth_1d(&labels);
        assert_eq!(src, BandwidthSource::NonzeroMedian);
        assert!((bw - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(robust_bandwidth_1d(&[2.0; 4]), (1.0, BandwidthSource::Unit));
    }

    #[test]
    fn gram_single_row_and_identity_case() {
        let g = KernelSpec::gaussian(0.7).unwrap();
        let a = SampleMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(gram_matrix(&g, &a, &a).unwrap()[(0, 0)], 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..2).map(|_| rng.random::<f64>()).collect())
            .collect();
        let a = SampleMatrix::from_rows(&rows).unwrap();
        let k = gram_matrix(&g, &a, &a).unwrap();
        for i in 0..6 {
            assert_eq!(k[(i, i)], 1.0);
            for j in 0..6 {
                assert_eq!(k[(i, j)], k[(j, i)]);
            }
        }
    }

    #[test]
    fn gram_matches_elementwise_loop() {
        let g = KernelSpec::gaussian(1.3).unwrap();
        let a = col(&[0.1, -0.4, 2.2]);
        let b = col(&[1.0, 0.0, -3.0]);
        let k = gram_matrix(&g, &a, &b).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let d = a.get(i, 0) - b.get(j, 0);
                let want = (-d * d / (2.0 * 1.3 * 1.3)).exp();
                assert!((k[(i, j)] - want).abs() < 1e-12);
            }
        }
        let k1 = gram_1d(&g, a.column(0));
        let k2 = gram_matrix(&g, &a, &a).unwrap();
        assert_eq!(k1, k2);
    }

    #[test]
    fn gram_is_positive_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in [KernelSpec::gaussian(0.8).unwrap(), KernelSpec::imq(1.0).unwrap()] {
            let rows: Vec<Vec<f64>> = (0..25)
                .map(|_| (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
                .collect();
            let a = SampleMatrix::from_rows(&rows).unwrap();
            let k = gram_matrix(&spec, &a, &a).unwrap();
            let eig = k.symmetric_eigenvalues();
            assert!(eig.min() > -1e-8, "min eigenvalue {}", eig.min());
        }
    }

    #[test]
    fn kernel_symmetry_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let specs = [KernelSpec::gaussian(0.9).unwrap(), KernelSpec::imq(1.7).unwrap()];
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            for s in &specs {
                assert_eq!(kernel_eval(s, &x, &y).unwrap(), kernel_eval(s, &y, &x).unwrap());
            }
        }
    }

    proptest! {
        #[test]
        fn kernel_values_are_bounded(
            x in prop::collection::vec(-50.0f64..50.0, 2),
            y in prop::collection::vec(-50.0f64..50.0, 2),
            bw in 0.05f64..20.0,
            c in 0.05f64..20.0,
        ) {
            let g = kernel_eval(&KernelSpec::gaussian(bw).unwrap(), &x, &y).unwrap();
            prop_assert!((0.0..=1.0).contains(&g));
            let k = kernel_eval(&KernelSpec::imq(c).unwrap(), &x, &y).unwrap();
            prop_assert!(k > 0.0 && k <= 1.0 / c);
        }

        #[test]
        fn median_heuristic_permutation_invariant(
            mut v in prop::collection::vec(-10.0f64..10.0, 3..30),
            seed in any::<u64>(),
        ) {
            let a = median_heuristic_1d(&v);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..v.len()).rev() {
                let j = rng.random_range(0..=i);
                v.swap(i, j);
            }
            let b = median_heuristic_1d(&v);
            prop_assert_eq!(a, b);
        }
    }
}
