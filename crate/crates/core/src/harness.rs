//! End-to-end test orchestration: single tests, Monte-Carlo experiments over
//! seeds, configuration, and CSV result output.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::cme::{self, RegressionTarget};
use crate::datagen::{self, Dataset, Hypothesis};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::pipeline::{
    run_with_indices, Calibration, KernelConfig, ModelInfo, PipelineSettings,
};
use crate::seeding::{derive_seed, stream_rng};
use crate::split_heuristic::{
    default_ratio_grid, select_split_ratio, SplitPlan, SplitSelectConfig,
};
use crate::stats::{Estimator, Method, StatisticConfig};

/// Every test the harness can run: the kernel-based family plus the
/// regression baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodSelect {
    Kci,
    Circe,
    #[serde(rename = "splitkci")]
    SplitKci,
    #[serde(rename = "splitkci_a_only")]
    SplitKciAOnly,
    Gcm,
    Rbpt2,
    Rbpt2Corrected,
}

impl MethodSelect {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSelect::Kci => "kci",
            MethodSelect::Circe => "circe",
            MethodSelect::SplitKci => "splitkci",
            MethodSelect::SplitKciAOnly => "splitkci_a_only",
            MethodSelect::Gcm => "gcm",
            MethodSelect::Rbpt2 => "rbpt2",
            MethodSelect::Rbpt2Corrected => "rbpt2_corrected",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "kci" => Ok(MethodSelect::Kci),
            "circe" => Ok(MethodSelect::Circe),
            "splitkci" => Ok(MethodSelect::SplitKci),
            "splitkci_a_only" => Ok(MethodSelect::SplitKciAOnly),
            "gcm" => Ok(MethodSelect::Gcm),
            "rbpt2" => Ok(MethodSelect::Rbpt2),
            "rbpt2_corrected" => Ok(MethodSelect::Rbpt2Corrected),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }

    fn kernel_method(&self) -> Option<Method> {
        match self {
            MethodSelect::Kci => Some(Method::Kci),
            MethodSelect::Circe => Some(Method::Circe),
            MethodSelect::SplitKci => Some(Method::SplitKci),
            MethodSelect::SplitKciAOnly => Some(Method::SplitKciAOnly),
            _ => None,
        }
    }
}

/// Train/test split policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum SplitSpec {
    /// Select the test ratio with the rejection-rate heuristic.
    Auto,
    /// Train and test on all rows (in-sample).
    None,
    /// Fixed test ratio β.
    Ratio(f64),
    /// Fixed number of test rows.
    TestN(usize),
}

impl SplitSpec {
    /// Per-method defaults: GCM tests in-sample, KCI and RBPT2 hold out a
    /// fixed 100 test rows, the split variants pick their ratio
    /// automatically.
    pub fn default_for(method: MethodSelect) -> SplitSpec {
        match method {
            MethodSelect::Gcm => SplitSpec::None,
            MethodSelect::Kci | MethodSelect::Circe | MethodSelect::Rbpt2
            | MethodSelect::Rbpt2Corrected => SplitSpec::TestN(100),
            MethodSelect::SplitKci | MethodSelect::SplitKciAOnly => SplitSpec::Auto,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(SplitSpec::Auto);
        }
        if s == "none" {
            return Ok(SplitSpec::None);
        }
        if let Some(r) = s.strip_prefix("ratio:") {
            let v: f64 = r
                .parse()
                .map_err(|_| Error::Config(format!("bad ratio in split spec '{s}'")))?;
            return Ok(SplitSpec::Ratio(v));
        }
        if let Some(k) = s.strip_prefix("n:") {
            let v: usize =
                k.parse().map_err(|_| Error::Config(format!("bad count in split spec '{s}'")))?;
            return Ok(SplitSpec::TestN(v));
        }
        Err(Error::Config(format!(
            "split spec '{s}' is not one of auto | none | ratio:X | n:K"
        )))
    }
}

/// Dataset source for an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum DatasetSpec {
    Circular {
        n: usize,
        gamma: f64,
        hypothesis: Hypothesis,
    },
    Postnonlinear {
        n: usize,
        d: usize,
        hypothesis: Hypothesis,
    },
    Csv {
        path: PathBuf,
        a_cols: Vec<String>,
        b_cols: Vec<String>,
        c_cols: Vec<String>,
        #[serde(default)]
        standardize: bool,
        /// Apply the cluster shuffle to simulate the null before testing.
        #[serde(default)]
        shuffle_clusters: Option<usize>,
    },
}

impl DatasetSpec {
    /// Realize the dataset for one trial seed. Synthetic sources draw fresh
    /// data; CSV sources reload the file (and re-shuffle when configured).
    pub fn realize(&self, seed: u64) -> Result<Dataset> {
        match self {
            DatasetSpec::Circular { n, gamma, hypothesis } => {
                datagen::gen_circular(*n, *gamma, *hypothesis, seed)
            }
            DatasetSpec::Postnonlinear { n, d, hypothesis } => {
                datagen::gen_postnonlinear(*d, *n, *hypothesis, seed)
            }
            DatasetSpec::Csv { path, a_cols, b_cols, c_cols, standardize, shuffle_clusters } => {
                let ds = datagen::load_csv(path, a_cols, b_cols, c_cols, *standardize)?;
                match shuffle_clusters {
                    Some(k) => datagen::simulate_null_shuffle(&ds, *k, seed),
                    None => Ok(ds),
                }
            }
        }
    }

    pub fn generator_name(&self) -> String {
        match self {
            DatasetSpec::Circular { .. } => "circular".into(),
            DatasetSpec::Postnonlinear { .. } => "postnonlinear".into(),
            DatasetSpec::Csv { path, .. } => path.display().to_string(),
        }
    }

    pub fn hypothesis_name(&self) -> String {
        match self {
            DatasetSpec::Circular { hypothesis, .. }
            | DatasetSpec::Postnonlinear { hypothesis, .. } => hypothesis.name().into(),
            DatasetSpec::Csv { shuffle_clusters, .. } => {
                if shuffle_clusters.is_some() {
                    "simulated_h0".into()
                } else {
                    "data".into()
                }
            }
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            DatasetSpec::Circular { n, .. } => (*n, 2),
            DatasetSpec::Postnonlinear { n, d, .. } => (*n, *d),
            DatasetSpec::Csv { c_cols, .. } => (0, c_cols.len()),
        }
    }
}

fn default_alpha() -> f64 {
    0.05
}
fn default_trials() -> usize {
    100
}
fn default_bootstrap() -> usize {
    1000
}
fn default_calibration() -> Calibration {
    Calibration::WildBootstrap
}
fn default_estimator() -> Estimator {
    Estimator::VBiased
}
fn default_center() -> bool {
    true
}
fn default_split_resamples() -> usize {
    20
}
fn default_mc_draws() -> usize {
    10_000
}

/// Full experiment description; serializable as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: MethodSelect,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub split: Option<SplitSpec>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_calibration")]
    pub calibration: Calibration,
    #[serde(default = "default_estimator")]
    pub estimator: Estimator,
    #[serde(default = "default_center")]
    pub center_with_h: bool,
    #[serde(default)]
    pub kernels: Option<KernelConfig>,
    #[serde(default = "default_split_resamples")]
    pub split_resamples: usize,
    #[serde(default)]
    pub split_ratio_grid: Option<Vec<f64>>,
    /// Monte-Carlo draws for multi-dimensional GCM calibration.
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
    pub base_seed: u64,
}

impl ExperimentConfig {
    pub fn new(method: MethodSelect, dataset: DatasetSpec, base_seed: u64) -> Self {
        ExperimentConfig {
            method,
            dataset,
            split: None,
            alpha: default_alpha(),
            trials: default_trials(),
            bootstrap: default_bootstrap(),
            calibration: default_calibration(),
            estimator: default_estimator(),
            center_with_h: default_center(),
            kernels: None,
            split_resamples: default_split_resamples(),
            split_ratio_grid: None,
            mc_draws: default_mc_draws(),
            base_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if self.trials < 1 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.bootstrap < 1 {
            return Err(Error::Config("bootstrap resamples must be >= 1".into()));
        }
        Ok(())
    }

    fn split_spec(&self) -> SplitSpec {
        self.split.unwrap_or_else(|| SplitSpec::default_for(self.method))
    }

    fn pipeline_settings(&self) -> Result<PipelineSettings> {
        let method = self
            .method
            .kernel_method()
            .ok_or_else(|| Error::Config("pipeline settings apply to kernel methods only".into()))?;
        Ok(PipelineSettings {
            stat: StatisticConfig {
                method,
                estimator: self.estimator,
                center_with_h: self.center_with_h,
            },
            kernels: self.kernels.clone().unwrap_or_default(),
            calibration: self.calibration,
            num_resamples: self.bootstrap,
        })
    }
}

/// Outcome of one test run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub method: String,
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub n: usize,
    pub m: usize,
    /// Selected test ratio when the split heuristic ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub models: Vec<ModelInfo>,
    pub seed: u64,
}

/// Resolve the split policy into concrete train/test indices.
///
/// Auto selection is resolved by the caller (it needs a frozen β); this
/// function accepts only concrete policies.
fn resolve_split(
    spec: SplitSpec,
    n_total: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Option<f64>)> {
    match spec {
        SplitSpec::Auto => Err(Error::Config(
            "auto split must be resolved to a ratio before running a test".into(),
        )),
        SplitSpec::None => {
            let all: Vec<usize> = (0..n_total).collect();
            Ok((all.clone(), all, None))
        }
        SplitSpec::Ratio(beta) => {
            let mut rng = stream_rng(seed, "split-assignment", 0);
            let plan = SplitPlan::random(n_total, beta, &mut rng)?;
            Ok((plan.train_indices().to_vec(), plan.test_indices().to_vec(), Some(beta)))
        }
        SplitSpec::TestN(k) => {
            if n_total <= k {
                return Err(Error::Config(format!(
                    "dataset has {n_total} rows, not enough for {k} test points plus training data"
                )));
            }
            let beta = k as f64 / n_total as f64;
            let mut rng = stream_rng(seed, "split-assignment", 0);
            let plan = SplitPlan::random(n_total, beta, &mut rng)?;
            Ok((plan.train_indices().to_vec(), plan.test_indices().to_vec(), Some(beta)))
        }
    }
}

/// Select the test ratio for an auto-split experiment: the heuristic runs
/// once, on the given seed, and the chosen β is frozen for all trials.
pub fn resolve_auto_ratio(config: &ExperimentConfig, dataset: &Dataset) -> Result<f64> {
    let settings = config.pipeline_settings()?;
    let grid = config
        .split_ratio_grid
        .clone()
        .unwrap_or_else(|| default_ratio_grid(dataset.len()));
    let selection = select_split_ratio(
        dataset,
        &settings,
        &SplitSelectConfig {
            ratio_grid: grid,
            alpha: config.alpha,
            resamples: config.split_resamples,
            rng_seed: derive_seed(config.base_seed, "split-select", 0),
        },
    )?;
    Ok(selection.beta)
}

/// Run the configured test once on the given dataset.
///
/// The split spec must be concrete (`Auto` is resolved by `run_experiment`
/// or the CLI before calling this). Deterministic in (config, dataset, seed).
pub fn run_single_test(config: &ExperimentConfig, dataset: &Dataset, seed: u64) -> Result<TestResult> {
    config.validate()?;
    let spec = config.split_spec();
    match config.method {
        MethodSelect::Gcm => run_gcm(config, dataset, seed, spec),
        MethodSelect::Rbpt2 => run_rbpt2(config, dataset, seed, spec, false),
        MethodSelect::Rbpt2Corrected => run_rbpt2(config, dataset, seed, spec, true),
        _ => {
            let settings = config.pipeline_settings()?;
            let (train_idx, test_idx, beta) = resolve_split(spec, dataset.len(), seed)?;
            let outcome = run_with_indices(dataset, &train_idx, &test_idx, &settings, seed)?;
            Ok(TestResult {
                method: config.method.name().into(),
                statistic: outcome.statistic,
                p_value: outcome.p_value,
                reject: outcome.p_value <= config.alpha,
                alpha: config.alpha,
                n: outcome.n,
                m: outcome.m,
                beta,
                models: outcome.models,
                seed,
            })
        }
    }
}

fn hstack(left: &Mat<f64>, right: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(left.nrows(), left.ncols() + right.ncols(), |i, j| {
        if j < left.ncols() {
            left[(i, j)]
        } else {
            right[(i, j - left.ncols())]
        }
    })
}

fn kernel_config(config: &ExperimentConfig) -> KernelConfig {
    config.kernels.clone().unwrap_or_default()
}

/// GCM: conditional means of A and B given C by ridge regression with
/// finite-dimensional (linear-kernel) outputs, residual products studentized.
fn run_gcm(
    config: &ExperimentConfig,
    dataset: &Dataset,
    seed: u64,
    spec: SplitSpec,
) -> Result<TestResult> {
    let (train_idx, test_idx, beta) = resolve_split(spec, dataset.len(), seed)?;
    let split = crate::pipeline::split_and_standardize(dataset, &train_idx, &test_idx);
    let kernels = kernel_config(config);
    let lambda_grid = match &kernels.lambda_grid {
        Some(g) => g.clone(),
        None => cme::default_lambda_grid_for(split.c_train.as_ref(), &kernels.c_kernel_grid)?,
    };
    let linear = KernelSpec::Linear;
    let models = cme::fit_krr_multi(
        split.c_train.as_ref(),
        &[
            RegressionTarget { targets: split.a_train.as_ref(), kernel: &linear },
            RegressionTarget { targets: split.b_train.as_ref(), kernel: &linear },
        ],
        &kernels.c_kernel_grid,
        &lambda_grid,
    )?;
    let f_pred = models[0].predict_mean(split.c_test.as_ref())?;
    let g_pred = models[1].predict_mean(split.c_test.as_ref())?;
    let result = baselines::gcm_test(
        split.a_test.as_ref(),
        split.b_test.as_ref(),
        f_pred.as_ref(),
        g_pred.as_ref(),
        config.mc_draws,
        derive_seed(seed, "gcm-mc", 0),
    )?;
    let infos = vec![
        ModelInfo {
            role: "gcm_f".into(),
            c_kernel: models[0].c_kernel().clone(),
            lambda: models[0].lambda(),
            loo: models[0].loo_score_value(),
        },
        ModelInfo {
            role: "gcm_g".into(),
            c_kernel: models[1].c_kernel().clone(),
            lambda: models[1].lambda(),
            loo: models[1].loo_score_value(),
        },
    ];
    Ok(TestResult {
        method: config.method.name().into(),
        statistic: result.s,
        p_value: result.p_value,
        reject: result.p_value <= config.alpha,
        alpha: config.alpha,
        n: test_idx.len(),
        m: train_idx.len(),
        beta,
        models: infos,
        seed,
    })
}

/// RBPT2: g predicts A from (B, C) with a linear kernel, h predicts g's
/// outputs from C with the Gaussian kernel grid; their held-out losses are
/// compared, optionally with the ‖g - h‖² bias correction.
fn run_rbpt2(
    config: &ExperimentConfig,
    dataset: &Dataset,
    seed: u64,
    spec: SplitSpec,
    corrected: bool,
) -> Result<TestResult> {
    let (train_idx, test_idx, beta) = resolve_split(spec, dataset.len(), seed)?;
    let split = crate::pipeline::split_and_standardize(dataset, &train_idx, &test_idx);
    let kernels = kernel_config(config);
    let linear = KernelSpec::Linear;

    let bc_train = hstack(&split.b_train, &split.c_train);
    let bc_test = hstack(&split.b_test, &split.c_test);
    let g_lambda = match &kernels.lambda_grid {
        Some(g) => g.clone(),
        None => cme::default_lambda_grid_for(bc_train.as_ref(), std::slice::from_ref(&linear))?,
    };
    let g_model = cme::fit_krr(
        bc_train.as_ref(),
        split.a_train.as_ref(),
        &linear,
        std::slice::from_ref(&linear),
        &g_lambda,
    )?;
    let g_train_pred = g_model.predict_mean(bc_train.as_ref())?;
    let h_lambda = match &kernels.lambda_grid {
        Some(g) => g.clone(),
        None => cme::default_lambda_grid_for(split.c_train.as_ref(), &kernels.c_kernel_grid)?,
    };
    let h_model = cme::fit_krr(
        split.c_train.as_ref(),
        g_train_pred.as_ref(),
        &linear,
        &kernels.c_kernel_grid,
        &h_lambda,
    )?;
    let g_pred = g_model.predict_mean(bc_test.as_ref())?;
    let h_pred = h_model.predict_mean(split.c_test.as_ref())?;
    let result =
        baselines::rbpt2_test(split.a_test.as_ref(), g_pred.as_ref(), h_pred.as_ref(), corrected)?;
    let infos = vec![
        ModelInfo {
            role: "rbpt_g".into(),
            c_kernel: g_model.c_kernel().clone(),
            lambda: g_model.lambda(),
            loo: g_model.loo_score_value(),
        },
        ModelInfo {
            role: "rbpt_h".into(),
            c_kernel: h_model.c_kernel().clone(),
            lambda: h_model.lambda(),
            loo: h_model.loo_score_value(),
        },
    ];
    Ok(TestResult {
        method: config.method.name().into(),
        statistic: result.s,
        p_value: result.p_value,
        reject: result.p_value <= config.alpha,
        alpha: config.alpha,
        n: test_idx.len(),
        m: train_idx.len(),
        beta,
        models: infos,
        seed,
    })
}

/// One row of an experiment's error-rate table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorRateRow {
    pub method: String,
    pub generator: String,
    pub hypothesis: String,
    pub n: usize,
    pub d: usize,
    pub beta: Option<f64>,
    pub rejection_rate: f64,
    pub standard_error: f64,
    pub trials: usize,
    pub base_seed: u64,
}

/// Aggregated rejection rates with binomial standard errors.
#[derive(Debug, Clone, Default)]
pub struct ErrorRateTable {
    pub rows: Vec<ErrorRateRow>,
    /// (trial index, error message) for trials that failed.
    pub failures: Vec<(usize, String)>,
}

/// Run `trials` independent tests with derived seeds and aggregate the
/// rejection rate. With an auto split, the ratio is selected once on the
/// base seed's dataset and then frozen for every trial.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ErrorRateTable> {
    config.validate()?;
    let mut effective = config.clone();
    let mut frozen_beta = None;
    if effective.split_spec() == SplitSpec::Auto {
        let selection_dataset = config.dataset.realize(derive_seed(config.base_seed, "data", 0))?;
        let beta = resolve_auto_ratio(config, &selection_dataset)?;
        frozen_beta = Some(beta);
        effective.split = Some(SplitSpec::Ratio(beta));
    }

    let results: Vec<(usize, Result<TestResult>)> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let run = || -> Result<TestResult> {
                let data_seed = derive_seed(config.base_seed, "data", t as u64);
                let dataset = effective.dataset.realize(data_seed)?;
                let trial_seed = derive_seed(config.base_seed, "trial", t as u64);
                run_single_test(&effective, &dataset, trial_seed)
            };
            (t, run())
        })
        .collect();

    let mut rejections = 0usize;
    let mut successes = 0usize;
    let mut failures = Vec::new();
    let mut results = results;
    results.sort_by_key(|(t, _)| *t);
    for (t, r) in results {
        match r {
            Ok(res) => {
                successes += 1;
                if res.reject {
                    rejections += 1;
                }
            }
            Err(e) => failures.push((t, e.to_string())),
        }
    }
    if failures.len() * 2 >= config.trials && !failures.is_empty() {
        return Err(Error::Experiment(format!(
            "{} of {} trials failed; first failure: {}",
            failures.len(),
            config.trials,
            failures[0].1
        )));
    }
    let rate = rejections as f64 / successes as f64;
    let se = (rate * (1.0 - rate) / successes as f64).sqrt();
    let (n, d) = config.dataset.dims();
    let row = ErrorRateRow {
        method: config.method.name().into(),
        generator: config.dataset.generator_name(),
        hypothesis: config.dataset.hypothesis_name(),
        n,
        d,
        beta: frozen_beta.or(match effective.split_spec() {
            SplitSpec::Ratio(b) => Some(b),
            _ => None,
        }),
        rejection_rate: rate,
        standard_error: se,
        trials: successes,
        base_seed: config.base_seed,
    };
    Ok(ErrorRateTable { rows: vec![row], failures })
}

/// Append experiment rows to a CSV file, writing the header only when the
/// file is new or empty. Identical config and base seed reproduce identical
/// rows, so re-runs are safe to append.
pub fn write_error_rate_csv(table: &ErrorRateTable, path: &Path) -> Result<()> {
    let exists = path.exists() && std::fs::metadata(path)?.len() > 0;
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut out = std::io::BufWriter::new(file);
    if !exists {
        writeln!(
            out,
            "method,generator,hypothesis,N,d,beta,rejection_rate,standard_error,trials,base_seed"
        )?;
    }
    for r in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.generator,
            r.hypothesis,
            r.n,
            r.d,
            r.beta.map(|b| format!("{b}")).unwrap_or_default(),
            r.rejection_rate,
            r.standard_error,
            r.trials,
            r.base_seed
        )?;
    }
    out.flush()?;
    Ok(())
}
