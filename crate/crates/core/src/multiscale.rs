//! Parametric multiscale bootstrap.
//!
//! Replicates are drawn directly from N(mean, γ²·Σ) at several scales
//! γ² = n/n'. Bootstrap probabilities of a region are turned into normalised
//! z-values ψ = γ·Φ̄⁻¹(BP), a line ψ ≈ β₀ + γ²β₁ is fitted across scales, and
//! the fit is extrapolated to γ² = 0 or γ² = −1.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mmd::MultiStat;
use crate::normal;
use crate::seed;

pub const DEFAULT_REPLICATES: usize = 2000;
pub const DEFAULT_SCALE_COUNT: usize = 10;
pub const DEFAULT_SCALE_RANGE: (f64, f64) = (0.5, 2.0);

/// Replicates handled by one seeded chunk; fixed so that results do not
/// depend on the number of worker threads.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub n_prime: usize,
    pub gamma2: f64,
}

/// Bootstrap scales, ordered by increasing γ² (decreasing n').
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    scales: Vec<Scale>,
    replicates_per_scale: usize,
}

impl ScaleSet {
    pub fn new(mut scales: Vec<Scale>, replicates_per_scale: usize) -> Result<Self> {
        if replicates_per_scale == 0 {
            return Err(Error::InvalidParameter("zero replicates per scale".into()));
        }
        if scales.iter().any(|s| !(s.gamma2 > 0.0 && s.gamma2.is_finite())) {
            return Err(Error::InvalidParameter("scale with non-positive γ²".into()));
        }
        scales.sort_by(|a, b| a.gamma2.total_cmp(&b.gamma2));
        if scales.windows(2).any(|w| w[0].gamma2 >= w[1].gamma2) {
            return Err(Error::InvalidParameter("duplicate scales".into()));
        }
        if scales.len() < 3 {
            return Err(Error::InsufficientScales { usable: scales.len() });
        }
        Ok(Self {
            scales,
            replicates_per_scale,
        })
    }

    /// `count` values of n' log-spaced over [lo·n, hi·n], rounded and
    /// deduplicated, with γ² = n/n'.
    pub fn log_spaced(n: usize, count: usize, lo: f64, hi: f64, replicates_per_scale: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || count < 2 {
            return Err(Error::InvalidParameter(format!(
                "scale range [{lo}, {hi}] with {count} scales"
            )));
        }
        let (a, b) = ((lo * n as f64).ln(), (hi * n as f64).ln());
        let mut n_primes: Vec<usize> = (0..count)
            .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp().round() as usize)
            .filter(|&m| m >= 2)
            .collect();
        n_primes.dedup();
        let scales = n_primes
            .into_iter()
            .map(|m| Scale {
                n_prime: m,
                gamma2: n as f64 / m as f64,
            })
            .collect();
        Self::new(scales, replicates_per_scale)
    }

    pub fn scales(&self) -> &[Scale] {
        &self.scales
    }

    pub fn replicates_per_scale(&self) -> usize {
        self.replicates_per_scale
    }

    pub fn with_replicates(mut self, reps: usize) -> Result<Self> {
        if reps == 0 {
            return Err(Error::InvalidParameter("zero replicates per scale".into()));
        }
        self.replicates_per_scale = reps;
        Ok(self)
    }
}

/// Ten scales with n' log-spaced over [0.5n, 2n].
pub fn default_scales(n: usize) -> Result<ScaleSet> {
    if n < 4 {
        return Err(Error::InvalidParameter(format!("n = {n} too small for multiscale bootstrap")));
    }
    ScaleSet::log_spaced(
        n,
        DEFAULT_SCALE_COUNT,
        DEFAULT_SCALE_RANGE.0,
        DEFAULT_SCALE_RANGE.1,
        DEFAULT_REPLICATES,
    )
}

type Predicate = dyn Fn(&[f64]) -> bool + Send + Sync;

/// Membership test for a region of ℝᵈ.
#[derive(Clone)]
pub struct RegionIndicator {
    label: String,
    predicate: Arc<Predicate>,
}

impl RegionIndicator {
    pub fn new(label: impl Into<String>, predicate: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            predicate: Arc::new(predicate),
        }
    }

    /// {y : y[coord] ≤ threshold}
    pub fn half_space(coord: usize, threshold: f64) -> Self {
        Self::new(format!("y[{coord}] <= {threshold}"), move |y| y[coord] <= threshold)
    }

    pub fn everything() -> Self {
        Self::new("everything", |_| true)
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        (self.predicate)(y)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for RegionIndicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegionIndicator").field("label", &self.label).finish()
    }
}

/// Draws from N(mean, γ²Σ) through a Cholesky factor of Σ.
#[derive(Debug, Clone)]
pub struct GaussianReplicator {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
    jittered: bool,
}

impl GaussianReplicator {
    pub fn new(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Shape(format!(
                "mean of length {d} with {}x{} covariance",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("bootstrap mean or covariance".into()));
        }
        if let Some(ch) = cov.clone().cholesky() {
            return Ok(Self {
                mean: mean.clone(),
                factor: ch.l(),
                jittered: false,
            });
        }
        let mean_diag = cov.diagonal().mean();
        let jitter = if mean_diag > 0.0 { 1e-10 * mean_diag } else { 1e-10 };
        let mut cj = cov.clone();
        for i in 0..d {
            cj[(i, i)] += jitter;
        }
        let ch = cj.cholesky().ok_or(Error::Factorization)?;
        Ok(Self {
            mean: mean.clone(),
            factor: ch.l(),
            jittered: true,
        })
    }

    pub fn jittered(&self) -> bool {
        self.jittered
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn draw_into<R: rand::Rng + ?Sized>(&self, gamma: f64, rng: &mut R, z: &mut [f64], y: &mut [f64]) {
        let d = self.dim();
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        for i in 0..d {
            let mut acc = 0.0;
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                acc += self.factor[(i, j)] * zj;
            }
            y[i] = self.mean[i] + gamma * acc;
        }
    }

    /// Runs `reps` replicates at scale γ² and accumulates `n_regions`
    /// counters through `eval`. Replicate chunks are seeded from
    /// (seed, scale_label, chunk index).
    pub fn hit_counts<F>(&self, gamma2: f64, reps: usize, seed: u64, scale_label: u64, n_regions: usize, eval: F) -> Vec<u64>
    where
        F: Fn(&[f64], &mut [u64]) + Sync,
    {
        let gamma = gamma2.sqrt();
        let d = self.dim();
        let chunks = reps.div_ceil(CHUNK);
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = seed::rng(seed, &[seed::stream::BOOTSTRAP, scale_label, c as u64]);
                let mut hits = vec![0u64; n_regions];
                let (mut z, mut y) = (vec![0.0; d], vec![0.0; d]);
                let todo = CHUNK.min(reps - c * CHUNK);
                for _ in 0..todo {
                    self.draw_into(gamma, &mut rng, &mut z, &mut y);
                    eval(&y, &mut hits);
                }
                hits
            })
            .reduce(
                || vec![0u64; n_regions],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    }
}

/// Fraction of `reps` draws from N(mean, γ²·cov) that land in `region`.
pub fn bootstrap_probability(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    gamma2: f64,
    region: &RegionIndicator,
    reps: usize,
    seed: u64,
) -> Result<f64> {
    if reps == 0 {
        return Err(Error::InvalidParameter("zero replicates".into()));
    }
    if !(gamma2 > 0.0 && gamma2.is_finite()) {
        return Err(Error::InvalidParameter(format!("γ² = {gamma2}")));
    }
    let rep = GaussianReplicator::new(mean, cov)?;
    let hits = rep.hit_counts(gamma2, reps, seed, 0, 1, |y, h| {
        if region.contains(y) {
            h[0] += 1;
        }
    });
    Ok(hits[0] as f64 / reps as f64)
}

/// Normalised bootstrap z-value γ·Φ̄⁻¹(BP).
pub fn psi_transform(bp: f64, gamma2: f64) -> Result<f64> {
    if !(bp > 0.0 && bp < 1.0) {
        return Err(Error::InvalidParameter(format!("bootstrap probability {bp} not in (0, 1)")));
    }
    if !(gamma2 > 0.0) {
        return Err(Error::InvalidParameter(format!("γ² = {gamma2}")));
    }
    Ok(gamma2.sqrt() * normal::isf(bp))
}

/// One (γ², ψ) observation with its regression weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalePoint {
    pub gamma2: f64,
    pub psi: f64,
    pub weight: f64,
}

impl ScalePoint {
    pub fn unweighted(gamma2: f64, psi: f64) -> Self {
        Self { gamma2, psi, weight: 1.0 }
    }

    /// Point from an observed BP with delta-method weight
    /// 1 / Var(ψ), Var(ψ) ≈ γ²·BP(1−BP) / (B·φ(Φ̄⁻¹(BP))²).
    /// `None` when BP is 0 or 1.
    pub fn from_bp(gamma2: f64, bp: f64, reps: usize) -> Option<Self> {
        let psi = psi_transform(bp, gamma2).ok()?;
        let z = normal::isf(bp);
        let dens = normal::pdf(z);
        let var = gamma2 * bp * (1.0 - bp) / (reps as f64 * dens * dens);
        (var > 0.0 && var.is_finite()).then_some(Self {
            gamma2,
            psi,
            weight: var.recip(),
        })
    }
}

/// Weighted least-squares line ψ ≈ β₀ + γ²β₁.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// Signed distance (intercept at γ² = 0).
    pub beta0: f64,
    /// Curvature term (slope in γ²).
    pub beta1: f64,
    pub points_used: usize,
    /// Weighted residual sum of squares.
    pub weighted_rss: f64,
    pub max_abs_residual: f64,
}

impl ScalingFit {
    pub fn predict(&self, gamma2: f64) -> f64 {
        self.beta0 + gamma2 * self.beta1
    }
}

pub fn fit_scaling_law(points: &[ScalePoint]) -> Result<ScalingFit> {
    let pts: Vec<&ScalePoint> = points
        .iter()
        .filter(|p| p.psi.is_finite() && p.gamma2.is_finite() && p.weight > 0.0 && p.weight.is_finite())
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientScales { usable: pts.len() });
    }
    let sw: f64 = pts.iter().map(|p| p.weight).sum();
    let xm = pts.iter().map(|p| p.weight * p.gamma2).sum::<f64>() / sw;
    let ym = pts.iter().map(|p| p.weight * p.psi).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.weight * (p.gamma2 - xm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.weight * (p.gamma2 - xm) * (p.psi - ym)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientScales { usable: 1 });
    }
    let beta1 = sxy / sxx;
    let beta0 = ym - beta1 * xm;
    let (mut rss, mut maxr) = (0.0f64, 0.0f64);
    for p in &pts {
        let r = p.psi - (beta0 + beta1 * p.gamma2);
        rss += p.weight * r * r;
        maxr = maxr.max(r.abs());
    }
    Ok(ScalingFit {
        beta0,
        beta1,
        points_used: pts.len(),
        weighted_rss: rss,
        max_abs_residual: maxr,
    })
}

/// Outcome of the selective p-value formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectiveP {
    pub p: f64,
    /// Inputs left the ratio undefined; `p` was set to 1.
    pub degenerate: bool,
}

/// Φ̄(φ_H(−1)) / Φ̄(φ_H(−1) + φ_S(0)), evaluated in log space and clamped to [0, 1].
pub fn selective_p(phi_h_minus1: f64, phi_s_0: f64) -> SelectiveP {
    let num = normal::log_sf(phi_h_minus1);
    let den = normal::log_sf(phi_h_minus1 + phi_s_0);
    let p = (num - den).exp();
    if p.is_nan() || den == f64::NEG_INFINITY {
        return SelectiveP { p: 1.0, degenerate: true };
    }
    SelectiveP {
        p: p.clamp(0.0, 1.0),
        degenerate: false,
    }
}

/// Signed distance of t[i] to the flat boundary {y[i] ≤ 0} in units of σ̂ᵢ.
pub fn flat_hypothesis_distance(stat: &MultiStat, i: usize) -> Result<f64> {
    if i >= stat.dim() {
        return Err(Error::InvalidParameter(format!("feature {i} out of range")));
    }
    let var = stat.sigma[(i, i)];
    if !(var > 0.0) {
        return Err(Error::DegenerateFeature(i));
    }
    Ok(stat.t[i] / var.sqrt())
}

/// Extrapolated signed distance to a selection region boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDistance {
    /// φ_S(0) after clamping to ≤ 0; −∞ when the fit was impossible.
    pub phi_s0: f64,
    /// Extrapolated intercept before clamping.
    pub raw_phi_s0: Option<f64>,
    pub fit: Option<ScalingFit>,
    pub scales_dropped: usize,
    pub bp: Vec<f64>,
}

/// Fits φ_S from per-scale hit counts and extrapolates to γ² = 0.
///
/// Scales with BP ∈ {0, 1} are dropped. Fewer than three survivors means the
/// selection does not constrain the statistic at the bootstrap resolution,
/// and φ_S(0) = −∞.
pub fn selection_distance(scales: &ScaleSet, hits: &[u64]) -> SelectionDistance {
    let reps = scales.replicates_per_scale();
    let bp: Vec<f64> = hits.iter().map(|&h| h as f64 / reps as f64).collect();
    let points: Vec<ScalePoint> = scales
        .scales()
        .iter()
        .zip(&bp)
        .filter_map(|(s, &b)| ScalePoint::from_bp(s.gamma2, b, reps))
        .collect();
    let dropped = scales.scales().len() - points.len();
    match fit_scaling_law(&points) {
        Ok(fit) => SelectionDistance {
            phi_s0: fit.beta0.min(0.0),
            raw_phi_s0: Some(fit.beta0),
            fit: Some(fit),
            scales_dropped: dropped,
            bp,
        },
        Err(_) => SelectionDistance {
            phi_s0: f64::NEG_INFINITY,
            raw_phi_s0: None,
            fit: None,
            scales_dropped: dropped,
            bp,
        },
    }
}

/// Result of the general two-region selective multiscale bootstrap.
#[derive(Debug, Clone)]
pub struct SelectiveMultiscale {
    pub p: SelectiveP,
    pub hypothesis_fit: ScalingFit,
    pub selection: SelectionDistance,
}

/// Selective multiscale bootstrap for arbitrary hypothesis and selection
/// regions: both φ_H and φ_S are fitted by regression, φ_H is extrapolated
/// to γ² = −1 and φ_S to γ² = 0.
pub fn selective_multiscale(
    hypothesis: &RegionIndicator,
    selection: &RegionIndicator,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    scales: &ScaleSet,
    seed: u64,
) -> Result<SelectiveMultiscale> {
    let rep = GaussianReplicator::new(mean, cov)?;
    let reps = scales.replicates_per_scale();
    let mut h_points = Vec::new();
    let mut s_hits = Vec::new();
    for (k, s) in scales.scales().iter().enumerate() {
        let hits = rep.hit_counts(s.gamma2, reps, seed, k as u64, 2, |y, h| {
            h[0] += u64::from(hypothesis.contains(y));
            h[1] += u64::from(selection.contains(y));
        });
        if let Some(p) = ScalePoint::from_bp(s.gamma2, hits[0] as f64 / reps as f64, reps) {
            h_points.push(p);
        }
        s_hits.push(hits[1]);
    }
    let hypothesis_fit = fit_scaling_law(&h_points)?;
    let selection = selection_distance(scales, &s_hits);
    let p = selective_p(hypothesis_fit.predict(-1.0), selection.phi_s0);
    Ok(SelectiveMultiscale {
        p,
        hypothesis_fit,
        selection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial_band(p: f64, reps: usize) -> f64 {
        3.0 * (p * (1.0 - p) / reps as f64).sqrt()
    }

    #[test]
    fn bp_everything_is_one() {
        let mean = DVector::from_vec(vec![0.3, -1.0]);
        let cov = DMatrix::identity(2, 2);
        let bp = bootstrap_probability(&mean, &cov, 1.5, &RegionIndicator::everything(), 500, 1).unwrap();
        assert_eq!(bp, 1.0);
    }

    #[test]
    fn bp_half_space_through_mean() {
        let mean = DVector::from_vec(vec![2.0, -1.0]);
        let cov = DMatrix::identity(2, 2);
        let reps = 10_000;
        let bp = bootstrap_probability(&mean, &cov, 1.0, &RegionIndicator::half_space(0, 2.0), reps, 5).unwrap();
        assert!((bp - 0.5).abs() < binomial_band(0.5, reps), "{bp}");
    }

    #[test]
    fn bp_gaussian_tail() {
        let mean = DVector::from_vec(vec![1.0, 0.0]);
        let cov = DMatrix::identity(2, 2);
        let reps = 10_000;
        let want = normal::cdf(-1.0);
        assert!((want - 0.1587).abs() < 1e-4);
        let bp = bootstrap_probability(&mean, &cov, 1.0, &RegionIndicator::half_space(0, 0.0), reps, 6).unwrap();
        assert!((bp - want).abs() < binomial_band(want, reps), "{bp}");
    }

    #[test]
    fn bp_is_deterministic_across_thread_pools() {
        let mean = DVector::from_vec(vec![0.5, 0.1, -0.2]);
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 1.0]);
        let region = RegionIndicator::half_space(1, 0.0);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| bootstrap_probability(&mean, &cov, 0.7, &region, 3000, 42).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn replicator_jitters_singular_covariance() {
        let mean = DVector::from_vec(vec![0.0, 0.0]);
        let cov = DMatrix::from_element(2, 2, 1.0);
        let rep = GaussianReplicator::new(&mean, &cov).unwrap();
        assert!(rep.jittered());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]);
        assert!(matches!(GaussianReplicator::new(&mean, &bad), Err(Error::NonFinite(_))));
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(GaussianReplicator::new(&mean, &neg).unwrap_err(), Error::Factorization);
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi_transform(0.5, 3.0).unwrap(), 0.0);
        assert!((psi_transform(normal::sf(2.0), 1.0).unwrap() - 2.0).abs() < 1e-9);
        assert!((psi_transform(normal::sf(1.0), 4.0).unwrap() - 2.0).abs() < 1e-9);
        assert!(psi_transform(0.0, 1.0).is_err());
        assert!(psi_transform(1.0, 1.0).is_err());
    }

    #[test]
    fn exact_and_constant_lines() {
        let pts: Vec<ScalePoint> = [0.5, 0.8, 1.0, 1.6, 2.0]
            .iter()
            .map(|&g| ScalePoint::unweighted(g, 1.0 + 0.5 * g))
            .collect();
        let fit = fit_scaling_law(&pts).unwrap();
        assert!((fit.beta0 - 1.0).abs() < 1e-10 && (fit.beta1 - 0.5).abs() < 1e-10);
        assert!((fit.predict(-1.0) - 0.5).abs() < 1e-10);

        let pts: Vec<ScalePoint> = [0.5, 1.0, 2.0].iter().map(|&g| ScalePoint::unweighted(g, -0.7)).collect();
        let fit = fit_scaling_law(&pts).unwrap();
        assert!((fit.beta0 + 0.7).abs() < 1e-12 && fit.beta1.abs() < 1e-12);

        let two = &pts[..2];
        assert_eq!(fit_scaling_law(two).unwrap_err(), Error::InsufficientScales { usable: 2 });
    }

    #[test]
    fn from_bp_drops_degenerate_probabilities() {
        assert!(ScalePoint::from_bp(1.0, 0.0, 100).is_none());
        assert!(ScalePoint::from_bp(1.0, 1.0, 100).is_none());
        let p = ScalePoint::from_bp(1.0, 0.5, 100).unwrap();
        // Var = 0.25 / (100 · φ(0)²) = 0.25 · 2π / 100
        assert!((p.weight - 100.0 / (0.25 * 2.0 * std::f64::consts::PI)).abs() < 1e-9);
    }

    #[test]
    fn noisy_line_recovery() {
        // Half-space {y ≤ c}: ψ = μ − c exactly, so BP at each scale follows
        // the analytic line β₀ = μ − c, β₁ = 0.
        let scales = default_scales(1000).unwrap().with_replicates(10_000).unwrap();
        let mean = DVector::from_vec(vec![0.4, 0.0]);
        let cov = DMatrix::identity(2, 2);
        let rep = GaussianReplicator::new(&mean, &cov).unwrap();
        let region = RegionIndicator::half_space(0, -0.6);
        let pts: Vec<ScalePoint> = scales
            .scales()
            .iter()
            .enumerate()
            .filter_map(|(k, s)| {
                let h = rep.hit_counts(s.gamma2, 10_000, 3, k as u64, 1, |y, h| h[0] += u64::from(region.contains(y)));
                ScalePoint::from_bp(s.gamma2, h[0] as f64 / 10_000.0, 10_000)
            })
            .collect();
        let fit = fit_scaling_law(&pts).unwrap();
        assert!((fit.beta0 - 1.0).abs() < 0.05, "{fit:?}");
        assert!(fit.beta1.abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn selective_p_limits() {
        let c = selective_p(1.3, f64::NEG_INFINITY);
        assert!((c.p - normal::sf(1.3)).abs() < 1e-15 && !c.degenerate);
        assert_eq!(selective_p(0.0, 0.0).p, 1.0);
        assert!((selective_p(1.6449, f64::NEG_INFINITY).p - 0.05).abs() < 1e-4);
        let d = selective_p(f64::INFINITY, f64::NEG_INFINITY);
        assert!(d.degenerate && d.p == 1.0);
        // Deep tail stays finite and ordered.
        let deep = selective_p(45.0, -2.0);
        assert!(deep.p > 0.0 && deep.p < 1e-30 && !deep.degenerate);
    }

    #[test]
    fn flat_distance_examples() {
        let stat = MultiStat {
            t: DVector::from_vec(vec![0.0, 2.0, 1.0]),
            sigma: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 0.0])),
            l: 10,
            feature_names: vec![],
        };
        assert_eq!(flat_hypothesis_distance(&stat, 0).unwrap(), 0.0);
        assert_eq!(flat_hypothesis_distance(&stat, 1).unwrap(), 1.0);
        assert_eq!(flat_hypothesis_distance(&stat, 2).unwrap_err(), Error::DegenerateFeature(2));
    }

    #[test]
    fn default_scale_endpoints() {
        let s = default_scales(1000).unwrap();
        let sc = s.scales();
        assert_eq!(sc.len(), 10);
        assert_eq!(sc.first().unwrap().n_prime, 2000);
        assert_eq!(sc.last().unwrap().n_prime, 500);
        assert!((sc.first().unwrap().gamma2 - 0.5).abs() < 1e-15);
        assert!((sc.last().unwrap().gamma2 - 2.0).abs() < 1e-15);
        for w in sc.windows(2) {
            assert!(w[0].n_prime > w[1].n_prime && w[0].gamma2 < w[1].gamma2);
        }
        let small = default_scales(4).unwrap();
        assert!(small.scales().iter().all(|s| s.n_prime >= 2));
        assert!(default_scales(3).is_err());
    }

    #[test]
    fn selection_distance_falls_back_when_unconstrained() {
        let scales = default_scales(100).unwrap().with_replicates(100).unwrap();
        let hits = vec![100u64; scales.scales().len()];
        let sd = selection_distance(&scales, &hits);
        assert_eq!(sd.phi_s0, f64::NEG_INFINITY);
        assert!(sd.fit.is_none());
        assert_eq!(sd.scales_dropped, scales.scales().len());
    }

    #[test]
    fn general_selective_bootstrap_on_half_spaces() {
        // H = {y0 ≤ 0}, S = {y1 ≤ 5} (essentially always selected): p reduces
        // to the classical Φ̄(μ0).
        let mean = DVector::from_vec(vec![1.5, 0.0]);
        let cov = DMatrix::identity(2, 2);
        let scales = default_scales(200).unwrap().with_replicates(20_000).unwrap();
        let out = selective_multiscale(
            &RegionIndicator::half_space(0, 0.0),
            &RegionIndicator::half_space(1, 5.0),
            &mean,
            &cov,
            &scales,
            9,
        )
        .unwrap();
        assert!((out.hypothesis_fit.beta0 - 1.5).abs() < 0.05);
        assert!(out.selection.phi_s0 < -3.0);
        assert!((out.p.p - normal::sf(1.5)).abs() < 0.01, "{:?}", out.p);
    }
}
