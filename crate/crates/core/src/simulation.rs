use std::ops::Range;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Method, RunConfig};
use crate::error::{Error, Result};
use crate::hsic::JointSample;
use crate::matrix::SampleMatrix;
use crate::seed;
use crate::selective::{hsic_statistic, mmd_statistic, report_from_statistic, SelectiveReport};

fn gaussian_columns<R: Rng + ?Sized>(rng: &mut R, n: usize, d: usize, mean: impl Fn(usize) -> f64) -> SampleMatrix {
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mu = mean(j);
            (0..n).map(|_| mu + Distribution::<f64>::sample(&StandardNormal, rng)).collect()
        })
        .collect();
    SampleMatrix::from_columns(&cols).expect("equal-length columns")
}

fn check_dims(n: usize, d: usize, m: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter(format!("n = {n}, d = {d}")));
    }
    if m > d {
        return Err(Error::InvalidParameter(format!("{m} informative features but d = {d}")));
    }
    Ok(())
}

/// X ~ N(0, I); Y ~ N(μ, I) with μ_j = shift for j < m and 0 otherwise.
pub fn gen_mean_shift<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    shift: f64,
    m: usize,
    rng: &mut R,
) -> Result<(SampleMatrix, SampleMatrix)> {
    check_dims(n, d, m)?;
    if !shift.is_finite() {
        return Err(Error::InvalidParameter(format!("shift {shift}")));
    }
    let x = gaussian_columns(rng, n, d, |_| 0.0);
    let y = gaussian_columns(rng, n, d, |j| if j < m { shift } else { 0.0 });
    Ok((x, y))
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// X ~ N(0, I); y_j ~ Bernoulli(logistic(x_j1 + … + x_jm)).
pub fn gen_logistic<R: Rng + ?Sized>(n: usize, d: usize, m: usize, rng: &mut R) -> Result<JointSample> {
    check_dims(n, d, m)?;
    let x = gaussian_columns(rng, n, d, |_| 0.0);
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let s: f64 = (0..m).map(|j| x.get(i, j)).sum();
            let b = Bernoulli::new(logistic(s)).expect("probability in [0, 1]");
            if b.sample(rng) { 1.0 } else { 0.0 }
        })
        .collect();
    let mut ym = SampleMatrix::from_columns(&[y])?;
    ym = SampleMatrix::with_names(ym.values().clone(), vec!["y".into()])?;
    JointSample::new(x, ym)
}

/// Appends `n_fake` standard Gaussian noise columns; returns the widened
/// matrix and the index range of the fake columns.
pub fn augment_fake_features<R: Rng + ?Sized>(x: &SampleMatrix, n_fake: usize, rng: &mut R) -> (SampleMatrix, Range<usize>) {
    let d = x.ncols();
    if n_fake == 0 {
        return (x.clone(), d..d);
    }
    let fake = gaussian_columns(rng, x.nrows(), n_fake, |_| 0.0);
    let names: Vec<String> = (0..n_fake).map(|j| format!("fake{j}")).collect();
    let fake = SampleMatrix::with_names(fake.values().clone(), names).expect("matching names");
    (x.hstack(&fake).expect("equal row counts"), d..d + n_fake)
}

/// Per-trial rates. `None` marks an empty denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TprFpr {
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
}

pub fn tpr_fpr(report: &SelectiveReport, truth_positive: &[usize], alpha: f64) -> TprFpr {
    let rejected = report.rejected(alpha);
    let positive = |i: &usize| truth_positive.contains(i);
    let sel = &report.selection.selected;
    let ratio = |want: bool| {
        let denom = sel.iter().filter(|i| positive(i) == want).count();
        let num = rejected.iter().filter(|i| positive(i) == want).count();
        (denom > 0).then(|| num as f64 / denom as f64)
    };
    TprFpr {
        tpr: ratio(true),
        fpr: ratio(false),
    }
}

/// Data-generating problem for a trial harness.
#[derive(Debug, Clone)]
pub enum Problem {
    MeanShift { n: usize, d: usize, shift: f64, m: usize },
    Logistic { n: usize, d: usize, m: usize },
    /// Fixed two-sample data; each trial subsamples `n` rows from each side
    /// (all rows when `None`) and appends fresh fake features.
    TwoSampleData {
        name: String,
        x: SampleMatrix,
        y: SampleMatrix,
        n: Option<usize>,
        n_fake: usize,
    },
    JointData {
        name: String,
        z: JointSample,
        n: Option<usize>,
        n_fake: usize,
    },
}

/// Serializable description of a [`Problem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "kebab-case")]
pub enum ProblemSummary {
    MeanShift { n: usize, d: usize, shift: f64, m: usize },
    Logistic { n: usize, d: usize, m: usize },
    TwoSampleData { name: String, rows_x: usize, rows_y: usize, d: usize, n: Option<usize>, n_fake: usize },
    JointData { name: String, rows: usize, d: usize, n: Option<usize>, n_fake: usize },
}

impl Problem {
    pub fn summary(&self) -> ProblemSummary {
        match self {
            Self::MeanShift { n, d, shift, m } => ProblemSummary::MeanShift { n: *n, d: *d, shift: *shift, m: *m },
            Self::Logistic { n, d, m } => ProblemSummary::Logistic { n: *n, d: *d, m: *m },
            Self::TwoSampleData { name, x, y, n, n_fake } => ProblemSummary::TwoSampleData {
                name: name.clone(),
                rows_x: x.nrows(),
                rows_y: y.nrows(),
                d: x.ncols(),
                n: *n,
                n_fake: *n_fake,
            },
            Self::JointData { name, z, n, n_fake } => ProblemSummary::JointData {
                name: name.clone(),
                rows: z.n(),
                d: z.d(),
                n: *n,
                n_fake: *n_fake,
            },
        }
    }

    pub fn is_two_sample(&self) -> bool {
        matches!(self, Self::MeanShift { .. } | Self::TwoSampleData { .. })
    }

    fn dims(&self) -> usize {
        match self {
            Self::MeanShift { d, .. } | Self::Logistic { d, .. } => *d,
            Self::TwoSampleData { x, n_fake, .. } => x.ncols() + n_fake,
            Self::JointData { z, n_fake, .. } => z.d() + n_fake,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::MeanShift { n, d, m, .. } | Self::Logistic { n, d, m } => check_dims(*n, *d, *m),
            Self::TwoSampleData { x, y, n, .. } => {
                if x.ncols() != y.ncols() {
                    return Err(Error::Shape(format!("{} vs {} features", x.ncols(), y.ncols())));
                }
                match n {
                    Some(n) if *n > x.nrows().min(y.nrows()) => Err(Error::InvalidParameter(format!(
                        "subsample size {n} exceeds the smaller group ({})",
                        x.nrows().min(y.nrows())
                    ))),
                    _ => Ok(()),
                }
            }
            Self::JointData { z, n, .. } => match n {
                Some(n) if *n > z.n() => Err(Error::InvalidParameter(format!("subsample size {n} exceeds {} rows", z.n()))),
                _ => Ok(()),
            },
        }
    }
}

enum TrialData {
    TwoSample(SampleMatrix, SampleMatrix),
    Joint(JointSample),
}

fn subsample<R: Rng + ?Sized>(m: &SampleMatrix, n: Option<usize>, rng: &mut R) -> SampleMatrix {
    match n {
        Some(n) if n < m.nrows() => {
            let mut idx = index::sample(rng, m.nrows(), n).into_vec();
            idx.sort_unstable();
            m.select_rows(&idx)
        }
        _ => m.clone(),
    }
}

/// Builds one trial's data and the indices of its truly informative features.
fn trial_data<R: Rng + ?Sized>(problem: &Problem, rng: &mut R) -> Result<(TrialData, Vec<usize>)> {
    Ok(match problem {
        Problem::MeanShift { n, d, shift, m } => {
            let (x, y) = gen_mean_shift(*n, *d, *shift, *m, rng)?;
            let pos = if *shift == 0.0 { Vec::new() } else { (0..*m).collect() };
            (TrialData::TwoSample(x, y), pos)
        }
        Problem::Logistic { n, d, m } => (TrialData::Joint(gen_logistic(*n, *d, *m, rng)?), (0..*m).collect()),
        Problem::TwoSampleData { x, y, n, n_fake, .. } => {
            let xs = subsample(x, *n, rng);
            let ys = subsample(y, *n, rng);
            let (xa, _) = augment_fake_features(&xs, *n_fake, rng);
            let (ya, _) = augment_fake_features(&ys, *n_fake, rng);
            (TrialData::TwoSample(xa, ya), (0..x.ncols()).collect())
        }
        Problem::JointData { z, n, n_fake, .. } => {
            let idx: Vec<usize> = match n {
                Some(n) if *n < z.n() => {
                    let mut idx = index::sample(rng, z.n(), *n).into_vec();
                    idx.sort_unstable();
                    idx
                }
                _ => (0..z.n()).collect(),
            };
            let (xa, _) = augment_fake_features(&z.x.select_rows(&idx), *n_fake, rng);
            let joint = JointSample::new(xa, z.y.select_rows(&idx))?;
            (TrialData::Joint(joint), (0..z.d()).collect())
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub selected: Vec<usize>,
    pub p_values: Vec<f64>,
    pub rejected: Vec<usize>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemSummary,
    pub trials: usize,
    pub master_seed: u64,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub method: String,
    /// Mean per-trial TPR over trials with at least one selected positive.
    pub tpr: f64,
    pub tpr_se: f64,
    pub tpr_trials: usize,
    pub fpr: f64,
    pub fpr_se: f64,
    pub fpr_trials: usize,
    pub trials: usize,
    pub failed_trials: usize,
    pub config: ExperimentConfig,
    pub records: Vec<TrialRecord>,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    match v.len() {
        0 => (0.0, 0.0),
        1 => (v[0], 0.0),
        m => {
            let mean = v.iter().sum::<f64>() / m as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
            (mean, (var / m as f64).sqrt())
        }
    }
}

fn run_one(problem: &Problem, methods: &[Method], base: &RunConfig, trial: usize, master_seed: u64) -> Vec<TrialRecord> {
    let trial_seed = seed::derive(master_seed, &[seed::stream::TRIAL, trial as u64]);
    let fail = |e: Error| {
        methods
            .iter()
            .map(|_| TrialRecord {
                trial,
                seed: trial_seed,
                selected: Vec::new(),
                p_values: Vec::new(),
                rejected: Vec::new(),
                tpr: None,
                fpr: None,
                error: Some(e.to_string()),
            })
            .collect::<Vec<_>>()
    };
    let mut data_rng = seed::rng(trial_seed, &[seed::stream::DATA]);
    let (data, positives) = match trial_data(problem, &mut data_rng) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let cfg = RunConfig {
        seed: trial_seed,
        ..base.clone()
    };
    let prep = match &data {
        TrialData::TwoSample(x, y) => mmd_statistic(x, y, &cfg),
        TrialData::Joint(z) => hsic_statistic(z, &cfg),
    };
    let prep = match prep {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    methods
        .iter()
        .map(|&method| match report_from_statistic(&prep, method, cfg.k, &cfg) {
            Ok(r) => {
                let rates = tpr_fpr(&r, &positives, cfg.alpha);
                TrialRecord {
                    trial,
                    seed: trial_seed,
                    rejected: r.rejected(cfg.alpha),
                    selected: r.selection.selected,
                    p_values: r.p_values,
                    tpr: rates.tpr,
                    fpr: rates.fpr,
                    error: None,
                }
            }
            Err(e) => fail(e).swap_remove(0),
        })
        .collect()
}

/// Runs `trials` independent replications of `problem` for each method.
/// Data and test seeds for trial t are derived from (master_seed, t), so the
/// result does not depend on scheduling.
pub fn run_trials(
    problem: &Problem,
    methods: &[Method],
    trials: usize,
    base: &RunConfig,
    master_seed: u64,
) -> Result<Vec<TrialSummary>> {
    base.validate()?;
    problem.validate()?;
    if trials == 0 {
        return Err(Error::InvalidParameter("zero trials".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidParameter("no methods".into()));
    }
    if let Some(m) = methods.iter().find(|m| m.is_mmd() != problem.is_two_sample()) {
        return Err(Error::InvalidParameter(format!(
            "{} does not apply to this problem",
            m.name()
        )));
    }
    if base.k > problem.dims() {
        return Err(Error::InvalidParameter(format!("k = {} exceeds d = {}", base.k, problem.dims())));
    }
    let per_trial: Vec<Vec<TrialRecord>> = (0..trials)
        .into_par_iter()
        .map(|t| run_one(problem, methods, base, t, master_seed))
        .collect();
    let config = ExperimentConfig {
        problem: problem.summary(),
        trials,
        master_seed,
        run: base.clone(),
    };
    Ok(methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let records: Vec<TrialRecord> = per_trial.iter().map(|r| r[mi].clone()).collect();
            let tprs: Vec<f64> = records.iter().filter_map(|r| r.tpr).collect();
            let fprs: Vec<f64> = records.iter().filter_map(|r| r.fpr).collect();
            let (tpr, tpr_se) = mean_se(&tprs);
            let (fpr, fpr_se) = mean_se(&fprs);
            TrialSummary {
                method: method.name().to_string(),
                tpr,
                tpr_se,
                tpr_trials: tprs.len(),
                fpr,
                fpr_se,
                fpr_trials: fprs.len(),
                trials,
                failed_trials: records.iter().filter(|r| r.error.is_some()).count(),
                config: ExperimentConfig {
                    run: base.with_method(method),
                    ..config.clone()
                },
                records,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selective::SelectionResult;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn report(selected: Vec<usize>, p: Vec<f64>) -> SelectiveReport {
        SelectiveReport {
            method: Method::MultiMmd,
            selection: SelectionResult {
                scores: vec![0.0; 5],
                selected,
            },
            p_values: p,
            diagnostics: Vec::new(),
            design_size: 10,
            covariance_jittered: false,
            config: RunConfig::new(Method::MultiMmd, 3, 0),
        }
    }

    #[test]
    fn rates_examples() {
        let r = report(vec![1, 2, 3], vec![0.01, 0.5, 0.02]);
        assert_eq!(tpr_fpr(&r, &[1, 2], 0.05), TprFpr { tpr: Some(0.5), fpr: Some(1.0) });
        let r = report(vec![1, 2, 3], vec![0.9, 0.5, 0.2]);
        assert_eq!(tpr_fpr(&r, &[1, 2], 0.05), TprFpr { tpr: Some(0.0), fpr: Some(0.0) });
        let r = report(vec![1, 2], vec![0.0, 0.0]);
        assert_eq!(tpr_fpr(&r, &[1, 2], 0.05), TprFpr { tpr: Some(1.0), fpr: None });
    }

    #[test]
    fn logistic_values() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(2.0) - 2f64.exp() / (1.0 + 2f64.exp())).abs() < 1e-15);
        assert!(logistic(-800.0) >= 0.0 && logistic(800.0) == 1.0);
    }

    #[test]
    fn mean_shift_column_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let (x, y) = gen_mean_shift(n, 4, 0.5, 2, &mut rng).unwrap();
        let band = 4.0 / (n as f64).sqrt();
        for j in 0..4 {
            let mx = x.column(j).iter().sum::<f64>() / n as f64;
            let my = y.column(j).iter().sum::<f64>() / n as f64;
            assert!(mx.abs() < band);
            let want = if j < 2 { 0.5 } else { 0.0 };
            assert!((my - want).abs() < band, "{j} {my}");
        }
        assert!(gen_mean_shift(10, 2, 0.5, 3, &mut rng).is_err());
    }

    #[test]
    fn logistic_labels_increase_with_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = gen_logistic(100_000, 12, 10, &mut rng).unwrap();
        let (mut hi, mut nhi, mut lo, mut nlo) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..z.n() {
            let s: f64 = (0..10).map(|j| z.x.get(i, j)).sum();
            let y = z.y.get(i, 0);
            assert!(y == 0.0 || y == 1.0);
            if s > 2.0 {
                hi += y;
                nhi += 1.0;
            } else if s < -2.0 {
                lo += y;
                nlo += 1.0;
            }
        }
        assert!(hi / nhi > lo / nlo + 0.3);
    }

    #[test]
    fn null_logistic_labels_are_fair_coins() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = gen_logistic(20_000, 3, 0, &mut rng).unwrap();
        let mean = z.y.column(0).iter().sum::<f64>() / 20_000.0;
        assert!((mean - 0.5).abs() < 4.0 * 0.5 / (20_000f64).sqrt());
    }

    #[test]
    fn fake_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, _) = gen_mean_shift(500, 3, 0.0, 0, &mut rng).unwrap();
        let (same, range) = augment_fake_features(&x, 0, &mut rng);
        assert_eq!(same, x);
        assert!(range.is_empty());
        let (aug, range) = augment_fake_features(&x, 30, &mut rng);
        assert_eq!(aug.ncols(), 33);
        assert_eq!(range, 3..33);
        for j in 0..3 {
            assert_eq!(aug.column(j), x.column(j));
        }
        let corr = |a: &[f64], b: &[f64]| {
            let n = a.len() as f64;
            let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
            let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
            let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
            let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
            cov / (va * vb).sqrt()
        };
        for j in 0..3 {
            for f in range.clone() {
                assert!(corr(aug.column(j), aug.column(f)).abs() < 0.15);
            }
        }
    }

    fn quick_cfg(k: usize) -> RunConfig {
        let mut c = RunConfig::new(Method::MultiMmd, k, 0);
        c.replicates_per_scale = 300;
        c
    }

    #[test]
    fn single_trial_summary_matches_record() {
        let p = Problem::MeanShift { n: 60, d: 5, shift: 1.0, m: 2 };
        let s = run_trials(&p, &[Method::MultiMmd, Method::PolyMmd], 1, &quick_cfg(3), 5).unwrap();
        for summary in &s {
            let r = &summary.records[0];
            assert_eq!(summary.tpr, r.tpr.unwrap_or(0.0));
            assert_eq!(summary.fpr, r.fpr.unwrap_or(0.0));
            assert_eq!(summary.tpr_se, 0.0);
        }
        assert_eq!(s[0].records[0].selected, s[1].records[0].selected);
    }

    #[test]
    fn same_master_seed_same_summary() {
        let p = Problem::Logistic { n: 60, d: 6, m: 2 };
        let methods = [Method::MultiHsic, Method::PolyHsic];
        let a = run_trials(&p, &methods, 4, &quick_cfg(2), 9).unwrap();
        let b = run_trials(&p, &methods, 4, &quick_cfg(2), 9).unwrap();
        assert_eq!(a, b);
        let c = run_trials(&p, &methods, 4, &quick_cfg(2), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_mismatched_methods() {
        let p = Problem::Logistic { n: 60, d: 6, m: 2 };
        assert!(run_trials(&p, &[Method::MultiMmd], 1, &quick_cfg(2), 0).is_err());
        let p = Problem::MeanShift { n: 60, d: 6, shift: 0.0, m: 0 };
        assert!(run_trials(&p, &[Method::PolyHsic], 1, &quick_cfg(2), 0).is_err());
        assert!(run_trials(&p, &[Method::PolyMmd], 1, &quick_cfg(7), 0).is_err());
    }

    #[test]
    fn dataset_problem_marks_originals_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (x, y) = gen_mean_shift(80, 3, 1.5, 3, &mut rng).unwrap();
        let p = Problem::TwoSampleData {
            name: "toy".into(),
            x,
            y,
            n: Some(60),
            n_fake: 4,
        };
        let s = run_trials(&p, &[Method::PolyMmd], 3, &quick_cfg(4), 1).unwrap();
        assert_eq!(s[0].failed_trials, 0);
        assert!(s[0].tpr > 0.5);
    }
}
