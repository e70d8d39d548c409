//! Command-line front end. Parses arguments, loads data, calls the library
//! and renders the result document and a summary table.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{HsicEstimator, KernelConfig, Method, MmdEstimator, RunConfig};
use crate::error::Error;
use crate::io::{load_joint, load_matrix, load_table, Header};
use crate::kernels::KernelFamily;
use crate::selective::{hsic_statistic, mmd_statistic, report_from_statistic, FeatureDiagnostics, SelectiveReport};
use crate::simulation::{run_trials, ExperimentConfig, Problem, TrialSummary};

pub const SCHEMA_VERSION: &str = "selkern.result/1";

#[derive(Debug, Parser)]
#[command(name = "selkern", version, about = "Selective kernel two-sample and independence tests on top-k selected features")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the JSON result document here.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Two-sample test per feature between two CSV files.
    MmdTest {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[command(flatten)]
        test: TestArgs,
    },
    /// Independence test per feature against a response column.
    HsicTest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        response: String,
        #[command(flatten)]
        test: TestArgs,
    },
    /// Repeated trials on a synthetic problem.
    Simulate {
        #[arg(long, value_enum, default_value_t = ProblemKind::MeanShift)]
        problem: ProblemKind,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        d: usize,
        /// Informative features.
        #[arg(long, default_value_t = 10)]
        m: usize,
        /// Mean shift of the informative features (mean-shift problem).
        #[arg(long, default_value_t = 0.5)]
        shift: f64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Write one row per (method, trial) here.
        #[arg(long)]
        trials_csv: Option<PathBuf>,
        #[command(flatten)]
        test: TestArgs,
    },
    /// Repeated trials on a labeled CSV augmented with fake features.
    Benchmark {
        #[arg(long)]
        data: PathBuf,
        /// Binary class column: split rows into two samples (MMD methods).
        #[arg(long, conflicts_with = "response", required_unless_present = "response")]
        class: Option<String>,
        /// Response column (HSIC methods).
        #[arg(long)]
        response: Option<String>,
        #[arg(long, default_value_t = 30)]
        n_fake: usize,
        /// Rows drawn per trial (per class for MMD); default all rows.
        #[arg(long)]
        subsample: Option<usize>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        trials_csv: Option<PathBuf>,
        #[command(flatten)]
        test: TestArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProblemKind {
    MeanShift,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodChoice {
    Multi,
    Poly,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorChoice {
    Incomplete,
    Linear,
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HeaderChoice {
    Detect,
    Present,
    Absent,
}

#[derive(Debug, Args)]
struct TestArgs {
    /// Number of features to select.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<MethodChoice>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Design size ratio l/n for incomplete estimators.
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long, value_enum, default_value_t = EstimatorChoice::Incomplete)]
    estimator: EstimatorChoice,
    #[arg(long, default_value_t = 5)]
    block_size: usize,
    #[arg(long, default_value_t = 10)]
    scales: usize,
    #[arg(long, default_value_t = 0.5)]
    scale_min: f64,
    #[arg(long, default_value_t = 2.0)]
    scale_max: f64,
    #[arg(long, default_value_t = 2000)]
    replicates: usize,
    #[arg(long, env = "SELKERN_SEED")]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = KernelChoice::Gaussian)]
    kernel: KernelChoice,
    /// Fixed Gaussian bandwidth for all features (default: median heuristic per feature).
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    imq_offset: f64,
    #[arg(long)]
    response_bandwidth: Option<f64>,
    #[arg(long, value_enum, default_value_t = HeaderChoice::Detect)]
    header: HeaderChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelChoice {
    Gaussian,
    Imq,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl TestArgs {
    fn header(&self) -> Header {
        match self.header {
            HeaderChoice::Detect => Header::Detect,
            HeaderChoice::Present => Header::Present,
            HeaderChoice::Absent => Header::Absent,
        }
    }

    fn methods(&self, mmd: bool, default: MethodChoice) -> Vec<Method> {
        let (multi, poly) = if mmd {
            (Method::MultiMmd, Method::PolyMmd)
        } else {
            (Method::MultiHsic, Method::PolyHsic)
        };
        match self.method.unwrap_or(default) {
            MethodChoice::Multi => vec![multi],
            MethodChoice::Poly => vec![poly],
            MethodChoice::Both => vec![multi, poly],
        }
    }

    fn config(&self, mmd: bool, default_k: Option<usize>, seed_required: bool) -> Result<RunConfig, Failure> {
        let k = self
            .k
            .or(default_k)
            .ok_or_else(|| Failure::Usage("--k is required".into()))?;
        let seed = match (self.seed, seed_required) {
            (Some(s), _) => s,
            (None, true) => return Err(Failure::Usage("--seed (or SELKERN_SEED) is required".into())),
            (None, false) => 0,
        };
        let (mmd_estimator, hsic_estimator) = match (self.estimator, mmd) {
            (EstimatorChoice::Incomplete, _) => (MmdEstimator::Incomplete, HsicEstimator::Incomplete),
            (EstimatorChoice::Linear, true) => (MmdEstimator::Linear, HsicEstimator::Incomplete),
            (EstimatorChoice::Block, false) => (MmdEstimator::Incomplete, HsicEstimator::Block),
            (e, _) => {
                return Err(Failure::Usage(format!(
                    "estimator {e:?} does not apply to {} tests",
                    if mmd { "MMD" } else { "HSIC" }
                )))
            }
        };
        let method = self.methods(mmd, MethodChoice::Multi)[0];
        let cfg = RunConfig {
            method,
            k,
            alpha: self.alpha,
            r: self.r,
            mmd_estimator,
            hsic_estimator,
            block_size: self.block_size,
            scale_count: self.scales,
            scale_range: [self.scale_min, self.scale_max],
            replicates_per_scale: self.replicates,
            seed,
            kernel: KernelConfig {
                family: match self.kernel {
                    KernelChoice::Gaussian => KernelFamily::Gaussian,
                    KernelChoice::Imq => KernelFamily::Imq,
                },
                bandwidth: self.bandwidth,
                imq_offset: self.imq_offset,
                response_bandwidth: self.response_bandwidth,
            },
        };
        cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Serialize)]
struct SelectedFeature {
    feature: usize,
    name: String,
    score: f64,
    p_value: f64,
    rejected: bool,
}

#[derive(Debug, Serialize)]
struct MethodResult {
    method: &'static str,
    alpha: f64,
    selected: Vec<SelectedFeature>,
    rejected: Vec<usize>,
    design_size: usize,
    covariance_jittered: bool,
    diagnostics: Vec<FeatureDiagnostics>,
    config: RunConfig,
}

impl MethodResult {
    fn new(r: SelectiveReport) -> Self {
        let alpha = r.config.alpha;
        let selected = r
            .selection
            .selected
            .iter()
            .zip(&r.p_values)
            .zip(&r.diagnostics)
            .map(|((&i, &p), d)| SelectedFeature {
                feature: i,
                name: d.name.clone(),
                score: r.selection.scores[i],
                p_value: p,
                rejected: p < alpha,
            })
            .collect();
        Self {
            method: r.method.name(),
            alpha,
            rejected: r.rejections(),
            selected,
            design_size: r.design_size,
            covariance_jittered: r.covariance_jittered,
            diagnostics: r.diagnostics,
            config: r.config,
        }
    }
}

#[derive(Debug, Serialize)]
struct InputSummary {
    files: Vec<String>,
    n: usize,
    d: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    response: Option<String>,
}

#[derive(Debug, Serialize)]
struct TestDocument {
    schema_version: &'static str,
    command: &'static str,
    input: InputSummary,
    results: Vec<MethodResult>,
}

#[derive(Debug, Serialize)]
struct TrialsDocument {
    schema_version: &'static str,
    command: &'static str,
    experiment: ExperimentConfig,
    summaries: Vec<TrialSummary>,
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn test_table(results: &[MethodResult]) -> String {
    let mut s = format!("{:<10} {:>7} {:<16} {:>12} {:>10} {}\n", "method", "feature", "name", "score", "p_value", "reject");
    for r in results {
        for f in &r.selected {
            s += &format!(
                "{:<10} {:>7} {:<16} {:>12.5} {:>10.4} {}\n",
                r.method,
                f.feature,
                f.name,
                f.score,
                f.p_value,
                if f.rejected { "yes" } else { "no" }
            );
        }
    }
    s
}

fn trials_table(summaries: &[TrialSummary]) -> String {
    let mut s = format!("{:<10} {:>14} {:>14} {:>7} {:>7}\n", "method", "tpr", "fpr", "trials", "failed");
    for t in summaries {
        s += &format!(
            "{:<10} {:>6.3} ± {:<5.3} {:>6.3} ± {:<5.3} {:>7} {:>7}\n",
            t.method, t.tpr, t.tpr_se, t.fpr, t.fpr_se, t.trials, t.failed_trials
        );
    }
    s
}

fn write_trials_csv(path: &Path, summaries: &[TrialSummary]) -> Result<(), Failure> {
    let fail = |e: csv::Error| Failure::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    w.write_record(["method", "trial", "seed", "selected", "rejected", "tpr", "fpr", "error"])
        .map_err(fail)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in summaries {
        for r in &s.records {
            w.write_record([
                s.method.clone(),
                r.trial.to_string(),
                r.seed.to_string(),
                r.selected.len().to_string(),
                r.rejected.len().to_string(),
                opt(r.tpr),
                opt(r.fpr),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(fail)?;
        }
    }
    w.flush().map_err(|e| Failure::Data(e.to_string()))
}

/// Runs one command; returns (document JSON, table text).
fn execute(command: Command) -> Result<(String, String), Failure> {
    match command {
        Command::MmdTest { x, y, test } => {
            let cfg = test.config(true, None, false)?;
            let xm = load_matrix(&x, test.header())?;
            let ym = load_matrix(&y, test.header())?;
            let prep = mmd_statistic(&xm, &ym, &cfg)?;
            let results = test
                .methods(true, MethodChoice::Multi)
                .into_iter()
                .map(|m| report_from_statistic(&prep, m, cfg.k, &cfg).map(MethodResult::new))
                .collect::<Result<Vec<_>, _>>()?;
            let table = test_table(&results);
            let doc = TestDocument {
                schema_version: SCHEMA_VERSION,
                command: "mmd-test",
                input: InputSummary {
                    files: vec![path_str(&x), path_str(&y)],
                    n: prep.n,
                    d: xm.ncols(),
                    response: None,
                },
                results,
            };
            Ok((to_json(&doc)?, table))
        }
        Command::HsicTest { data, response, test } => {
            let cfg = test.config(false, None, false)?;
            let z = load_joint(&data, test.header(), &response)?;
            let prep = hsic_statistic(&z, &cfg)?;
            let results = test
                .methods(false, MethodChoice::Multi)
                .into_iter()
                .map(|m| report_from_statistic(&prep, m, cfg.k, &cfg).map(MethodResult::new))
                .collect::<Result<Vec<_>, _>>()?;
            let table = test_table(&results);
            let doc = TestDocument {
                schema_version: SCHEMA_VERSION,
                command: "hsic-test",
                input: InputSummary {
                    files: vec![path_str(&data)],
                    n: z.n(),
                    d: z.d(),
                    response: Some(response),
                },
                results,
            };
            Ok((to_json(&doc)?, table))
        }
        Command::Simulate { problem, n, d, m, shift, trials, trials_csv, test } => {
            let mmd = problem == ProblemKind::MeanShift;
            let cfg = test.config(mmd, Some(30.min(d)), true)?;
            let p = match problem {
                ProblemKind::MeanShift => Problem::MeanShift { n, d, shift, m },
                ProblemKind::Logistic => Problem::Logistic { n, d, m },
            };
            trials_output("simulate", &p, &test.methods(mmd, MethodChoice::Both), trials, &cfg, trials_csv.as_deref())
        }
        Command::Benchmark { data, class, response, n_fake, subsample, trials, trials_csv, test } => {
            let mmd = class.is_some();
            let table = load_table(&data, test.header())?;
            let d = table.ncols().saturating_sub(1) + n_fake;
            let cfg = test.config(mmd, Some(30.min(d.max(1))), true)?;
            let name = path_str(&data);
            let p = match (class, response) {
                (Some(c), _) => {
                    let (x, y) = table.split_by_class(&c)?;
                    Problem::TwoSampleData { name, x, y, n: subsample, n_fake }
                }
                (None, Some(r)) => Problem::JointData {
                    name,
                    z: table.to_joint(&r)?,
                    n: subsample,
                    n_fake,
                },
                (None, None) => return Err(Failure::Usage("--class or --response is required".into())),
            };
            trials_output("benchmark", &p, &test.methods(mmd, MethodChoice::Both), trials, &cfg, trials_csv.as_deref())
        }
    }
}

fn trials_output(
    command: &'static str,
    problem: &Problem,
    methods: &[Method],
    trials: usize,
    cfg: &RunConfig,
    trials_csv: Option<&Path>,
) -> Result<(String, String), Failure> {
    let summaries = run_trials(problem, methods, trials, cfg, cfg.seed)?;
    if let Some(path) = trials_csv {
        write_trials_csv(path, &summaries)?;
    }
    let table = trials_table(&summaries);
    let doc = TrialsDocument {
        schema_version: SCHEMA_VERSION,
        command,
        experiment: ExperimentConfig {
            problem: problem.summary(),
            trials,
            master_seed: cfg.seed,
            run: cfg.clone(),
        },
        summaries,
    };
    Ok((to_json(&doc)?, table))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Failure::Data(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Runs the CLI with explicit output streams and returns the exit code:
/// 0 on success, 2 on usage errors, 1 on data errors.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return code;
        }
    };
    let outcome = match cli.threads {
        Some(0) => Err(Failure::Usage("--threads must be at least 1".into())),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| execute(cli.command)),
            Err(e) => Err(Failure::Data(format!("thread pool: {e}"))),
        },
        None => execute(cli.command),
    };
    let written = outcome.and_then(|(doc, table)| {
        if let Some(path) = &cli.out {
            std::fs::write(path, doc).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        }
        Ok(table)
    });
    match written {
        Ok(table) => {
            let _ = stdout.write_all(table.as_bytes());
            0
        }
        Err(Failure::Usage(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            2
        }
        Err(Failure::Data(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            1
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
