//! Top-k feature selection followed by selective inference, either by the
//! multiscale bootstrap on the per-feature selection event or by the
//! polyhedral truncated-normal baseline on the whole top-k event.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::{HsicEstimator, Method, MmdEstimator, RunConfig};
use crate::design::linear_pair_design;
use crate::error::{Error, Result};
use crate::hsic::{hsic_multistat_block, hsic_multistat_incomplete, JointSample};
use crate::kernels::{robust_bandwidth, robust_bandwidth_1d, BandwidthSource, KernelFamily, KernelSpec};
use crate::matrix::SampleMatrix;
use crate::mmd::{mmd_multistat, mmd_multistat_with_design, MultiStat};
use crate::multiscale::{
    flat_hypothesis_distance, selection_distance, selective_p, GaussianReplicator, RegionIndicator, ScaleSet,
};
use crate::normal;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected features in greedy order (largest score first).
    pub selected: Vec<usize>,
    pub scores: Vec<f64>,
}

impl SelectionResult {
    pub fn k(&self) -> usize {
        self.selected.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.selected.contains(&i)
    }
}

/// `a` ranks ahead of `b`: larger score, ties to the lower index.
fn ranks_ahead(y: &[f64], a: usize, b: usize) -> Ordering {
    y[b].total_cmp(&y[a]).then(a.cmp(&b))
}

fn check_k(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(Error::InvalidParameter(format!("k = {k} outside 1..={d}")));
    }
    Ok(())
}

pub fn select_top_k(scores: &[f64], k: usize) -> Result<SelectionResult> {
    check_k(k, scores.len())?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| ranks_ahead(scores, a, b));
    order.truncate(k);
    Ok(SelectionResult {
        selected: order,
        scores: scores.to_vec(),
    })
}

/// The k-th ranked index of `y`. `buf` is scratch space of length d.
fn kth_ranked(y: &[f64], k: usize, buf: &mut [usize]) -> usize {
    for (i, b) in buf.iter_mut().enumerate() {
        *b = i;
    }
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, |&a, &b| ranks_ahead(y, a, b));
    *kth
}

fn in_top_k(y: &[f64], i: usize, kth: usize) -> bool {
    ranks_ahead(y, i, kth) != Ordering::Greater
}

/// {y : coordinate i is among the k largest of y}.
pub fn selection_indicator(i: usize, k: usize) -> RegionIndicator {
    RegionIndicator::new(format!("top{k}[{i}]"), move |y: &[f64]| {
        if i >= y.len() || k == 0 {
            return false;
        }
        if k >= y.len() {
            return true;
        }
        let ahead = (0..y.len())
            .filter(|&j| ranks_ahead(y, j, i) == Ordering::Less)
            .count();
        ahead < k
    })
}

/// Truncation interval of t[i] under the event {t_a ≥ t_b : a selected, b not}.
pub fn poly_truncation_interval(
    t: &DVector<f64>,
    sigma: &DMatrix<f64>,
    selection: &SelectionResult,
    i: usize,
) -> Result<(f64, f64)> {
    let d = t.len();
    if sigma.nrows() != d || sigma.ncols() != d || selection.scores.len() != d {
        return Err(Error::Shape(format!(
            "statistic of length {d}, covariance {}x{}, {} scores",
            sigma.nrows(),
            sigma.ncols(),
            selection.scores.len()
        )));
    }
    if i >= d {
        return Err(Error::InvalidParameter(format!("feature {i} out of range")));
    }
    let var = sigma[(i, i)];
    if !(var > 0.0) {
        return Err(Error::DegenerateFeature(i));
    }
    let c: Vec<f64> = (0..d).map(|j| sigma[(j, i)] / var).collect();
    let z: Vec<f64> = (0..d).map(|j| t[j] - c[j] * t[i]).collect();
    let mut in_set = vec![false; d];
    for &a in &selection.selected {
        in_set[a] = true;
    }
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for &a in &selection.selected {
        for b in (0..d).filter(|&b| !in_set[b]) {
            // Row e_b − e_a of A t ≤ 0.
            let ac = c[b] - c[a];
            let az = z[b] - z[a];
            if ac < 0.0 {
                lo = lo.max(-az / ac);
            } else if ac > 0.0 {
                hi = hi.min(-az / ac);
            }
        }
    }
    Ok((lo, hi))
}

/// Survival of N(0, var) truncated to [lo, hi] at `t`.
pub fn poly_p(t: f64, var: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::InvalidParameter(format!("variance {var}")));
    }
    if t.is_nan() || lo.is_nan() || hi.is_nan() {
        return Err(Error::NonFinite("truncated normal input".into()));
    }
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("empty interval [{lo}, {hi}]")));
    }
    let s = var.sqrt();
    let (a, b) = (lo / s, hi / s);
    let x = (t / s).clamp(a, b);
    let p = if a > 0.0 {
        // Everything in the upper tail: normalize by Φ̄(a).
        let la = normal::log_sf(a);
        let rx = (normal::log_sf(x) - la).exp();
        let rb = (normal::log_sf(b) - la).exp();
        (rx - rb) / (1.0 - rb)
    } else if b < 0.0 {
        // Everything in the lower tail: normalize by Φ(b).
        let lb = normal::log_cdf(b);
        let rx = (normal::log_cdf(x) - lb).exp();
        let ra = (normal::log_cdf(a) - lb).exp();
        (1.0 - rx) / (1.0 - ra)
    } else {
        (normal::sf(x) - normal::sf(b)) / (normal::sf(a) - normal::sf(b))
    };
    if !p.is_finite() {
        return Err(Error::NonFinite("truncated normal survival".into()));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Per-feature statistic plus the kernels used to build it.
#[derive(Debug, Clone)]
pub struct PreparedStatistic {
    pub stat: MultiStat,
    pub n: usize,
    pub kernels: Vec<KernelSpec>,
    pub bandwidth_sources: Vec<BandwidthSource>,
    pub response_kernel: Option<KernelSpec>,
}

fn feature_kernel(cfg: &RunConfig, column: impl FnOnce() -> Vec<f64>) -> Result<(KernelSpec, BandwidthSource)> {
    match cfg.kernel.family {
        KernelFamily::Imq => Ok((KernelSpec::imq(cfg.kernel.imq_offset)?, BandwidthSource::Fixed)),
        KernelFamily::Gaussian => match cfg.kernel.bandwidth {
            Some(bw) => Ok((KernelSpec::gaussian(bw)?, BandwidthSource::Fixed)),
            None => {
                let (bw, src) = robust_bandwidth_1d(&column());
                Ok((KernelSpec::gaussian(bw)?, src))
            }
        },
    }
}

pub fn mmd_statistic(x: &SampleMatrix, y: &SampleMatrix, cfg: &RunConfig) -> Result<PreparedStatistic> {
    cfg.validate()?;
    if x.ncols() != y.ncols() {
        return Err(Error::Shape(format!("X has {} features, Y has {}", x.ncols(), y.ncols())));
    }
    let n = x.nrows().min(y.nrows());
    let (x, y) = (x.truncate_rows(n), y.truncate_rows(n));
    let (kernels, sources): (Vec<_>, Vec<_>) = (0..x.ncols())
        .map(|f| {
            feature_kernel(cfg, || {
                let mut pooled = x.column(f).to_vec();
                pooled.extend_from_slice(y.column(f));
                pooled
            })
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let stat = match cfg.mmd_estimator {
        MmdEstimator::Incomplete => {
            let mut rng = seed::rng(cfg.seed, &[seed::stream::DESIGN]);
            mmd_multistat(&x, &y, &kernels, cfg.r, &mut rng)?
        }
        MmdEstimator::Linear => mmd_multistat_with_design(&x, &y, &kernels, &linear_pair_design(n)?)?,
    };
    Ok(PreparedStatistic {
        stat,
        n,
        kernels,
        bandwidth_sources: sources,
        response_kernel: None,
    })
}

pub fn hsic_statistic(z: &JointSample, cfg: &RunConfig) -> Result<PreparedStatistic> {
    cfg.validate()?;
    let (kernels, sources): (Vec<_>, Vec<_>) = (0..z.d())
        .map(|f| feature_kernel(cfg, || z.x.column(f).to_vec()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let response = match (cfg.kernel.family, cfg.kernel.response_bandwidth) {
        (KernelFamily::Imq, _) => KernelSpec::imq(cfg.kernel.imq_offset)?,
        (KernelFamily::Gaussian, Some(bw)) => KernelSpec::gaussian(bw)?,
        (KernelFamily::Gaussian, None) => KernelSpec::gaussian(robust_bandwidth(&z.y.rows()).0)?,
    };
    let stat = match cfg.hsic_estimator {
        HsicEstimator::Incomplete => {
            let mut rng = seed::rng(cfg.seed, &[seed::stream::DESIGN]);
            hsic_multistat_incomplete(z, &kernels, &response, cfg.r, &mut rng)?
        }
        HsicEstimator::Block => hsic_multistat_block(z, &kernels, &response, cfg.block_size)?,
    };
    Ok(PreparedStatistic {
        stat,
        n: z.n(),
        kernels,
        bandwidth_sources: sources,
        response_kernel: Some(response),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDiagnostics {
    pub feature: usize,
    pub name: String,
    pub score: f64,
    pub variance: f64,
    /// Signed distance to the flat null boundary, t_i / σ̂_i.
    pub beta0: Option<f64>,
    /// Clamped selection distance; `None` when it is −∞ (selection not
    /// constraining at bootstrap resolution).
    pub phi_s0: Option<f64>,
    pub raw_phi_s0: Option<f64>,
    pub slope: Option<f64>,
    pub scales_dropped: Option<usize>,
    pub bootstrap_probabilities: Vec<f64>,
    pub v_minus: Option<f64>,
    pub v_plus: Option<f64>,
    /// Reason the p-value was forced to 1.
    pub flag: Option<String>,
}

impl FeatureDiagnostics {
    fn new(stat: &MultiStat, i: usize) -> Self {
        Self {
            feature: i,
            name: stat.feature_names.get(i).cloned().unwrap_or_default(),
            score: stat.t[i],
            variance: stat.sigma[(i, i)],
            beta0: None,
            phi_s0: None,
            raw_phi_s0: None,
            slope: None,
            scales_dropped: None,
            bootstrap_probabilities: Vec::new(),
            v_minus: None,
            v_plus: None,
            flag: None,
        }
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveReport {
    pub method: Method,
    pub selection: SelectionResult,
    /// One p-value per entry of `selection.selected`, same order.
    pub p_values: Vec<f64>,
    pub diagnostics: Vec<FeatureDiagnostics>,
    pub design_size: usize,
    pub covariance_jittered: bool,
    pub config: RunConfig,
}

impl SelectiveReport {
    pub fn rejected(&self, alpha: f64) -> Vec<usize> {
        self.selection
            .selected
            .iter()
            .zip(&self.p_values)
            .filter(|(_, &p)| p < alpha)
            .map(|(&i, _)| i)
            .collect()
    }

    pub fn rejections(&self) -> Vec<usize> {
        self.rejected(self.config.alpha)
    }
}

fn multiscale_pvalues(
    prep: &PreparedStatistic,
    sel: &SelectionResult,
    cfg: &RunConfig,
) -> Result<(Vec<f64>, Vec<FeatureDiagnostics>, bool)> {
    let stat = &prep.stat;
    let d = stat.dim();
    let k = sel.k();
    let mut diags: Vec<FeatureDiagnostics> = sel.selected.iter().map(|&i| FeatureDiagnostics::new(stat, i)).collect();
    let mut p = vec![1.0; k];
    for (diag, &i) in diags.iter_mut().zip(&sel.selected) {
        match flat_hypothesis_distance(stat, i) {
            Ok(b) => diag.beta0 = Some(b),
            Err(e) => diag.flag = Some(e.to_string()),
        }
    }
    let rep = match GaussianReplicator::new(&stat.t, &stat.sigma) {
        Ok(r) => r,
        Err(e) => {
            for diag in &mut diags {
                diag.flag.get_or_insert_with(|| e.to_string());
            }
            return Ok((p, diags, false));
        }
    };
    let [lo, hi] = cfg.scale_range;
    let scales = ScaleSet::log_spaced(prep.n, cfg.scale_count, lo, hi, cfg.replicates_per_scale)?;
    let boot_seed = seed::derive(cfg.seed, &[seed::stream::BOOTSTRAP]);
    let reps = scales.replicates_per_scale();
    let selected = &sel.selected;
    let mut hits = vec![Vec::with_capacity(scales.scales().len()); k];
    for (s_idx, s) in scales.scales().iter().enumerate() {
        let counts = if k == d {
            vec![reps as u64; k]
        } else {
            rep.hit_counts(s.gamma2, reps, boot_seed, s_idx as u64, k, |y, h| {
                let mut buf = vec![0usize; d];
                let kth = kth_ranked(y, k, &mut buf);
                for (slot, &i) in h.iter_mut().zip(selected) {
                    *slot += u64::from(in_top_k(y, i, kth));
                }
            })
        };
        for (hf, c) in hits.iter_mut().zip(counts) {
            hf.push(c);
        }
    }
    for (j, diag) in diags.iter_mut().enumerate() {
        let sd = selection_distance(&scales, &hits[j]);
        diag.phi_s0 = finite(sd.phi_s0);
        diag.raw_phi_s0 = sd.raw_phi_s0;
        diag.slope = sd.fit.map(|f| f.beta1);
        diag.scales_dropped = Some(sd.scales_dropped);
        diag.bootstrap_probabilities = sd.bp;
        let Some(beta0) = diag.beta0 else { continue };
        let sp = selective_p(beta0, sd.phi_s0);
        if sp.degenerate {
            diag.flag = Some("selective p-value undefined".into());
        } else {
            p[j] = sp.p;
        }
    }
    Ok((p, diags, rep.jittered()))
}

fn polyhedral_pvalues(prep: &PreparedStatistic, sel: &SelectionResult) -> (Vec<f64>, Vec<FeatureDiagnostics>) {
    let stat = &prep.stat;
    let mut p = vec![1.0; sel.k()];
    let mut diags = Vec::with_capacity(sel.k());
    for (j, &i) in sel.selected.iter().enumerate() {
        let mut diag = FeatureDiagnostics::new(stat, i);
        diag.beta0 = flat_hypothesis_distance(stat, i).ok();
        let res = poly_truncation_interval(&stat.t, &stat.sigma, sel, i).and_then(|(lo, hi)| {
            diag.v_minus = finite(lo);
            diag.v_plus = finite(hi);
            poly_p(stat.t[i], stat.sigma[(i, i)], lo, hi)
        });
        match res {
            Ok(v) => p[j] = v,
            Err(e) => diag.flag = Some(e.to_string()),
        }
        diags.push(diag);
    }
    (p, diags)
}

/// Selective report for `method` on an already computed statistic.
pub fn report_from_statistic(
    prep: &PreparedStatistic,
    method: Method,
    k: usize,
    cfg: &RunConfig,
) -> Result<SelectiveReport> {
    let sel = select_top_k(prep.stat.t.as_slice(), k)?;
    let (p_values, diagnostics, covariance_jittered) = if method.is_multiscale() {
        multiscale_pvalues(prep, &sel, cfg)?
    } else {
        let (p, d) = polyhedral_pvalues(prep, &sel);
        (p, d, false)
    };
    let mut config = cfg.with_method(method);
    config.k = k;
    Ok(SelectiveReport {
        method,
        selection: sel,
        p_values,
        diagnostics,
        design_size: prep.stat.l,
        covariance_jittered,
        config,
    })
}

pub fn multi_mmd(x: &SampleMatrix, y: &SampleMatrix, k: usize, cfg: &RunConfig) -> Result<SelectiveReport> {
    report_from_statistic(&mmd_statistic(x, y, cfg)?, Method::MultiMmd, k, cfg)
}

pub fn poly_mmd(x: &SampleMatrix, y: &SampleMatrix, k: usize, cfg: &RunConfig) -> Result<SelectiveReport> {
    report_from_statistic(&mmd_statistic(x, y, cfg)?, Method::PolyMmd, k, cfg)
}

pub fn multi_hsic(z: &JointSample, k: usize, cfg: &RunConfig) -> Result<SelectiveReport> {
    report_from_statistic(&hsic_statistic(z, cfg)?, Method::MultiHsic, k, cfg)
}

pub fn poly_hsic(z: &JointSample, k: usize, cfg: &RunConfig) -> Result<SelectiveReport> {
    report_from_statistic(&hsic_statistic(z, cfg)?, Method::PolyHsic, k, cfg)
}
