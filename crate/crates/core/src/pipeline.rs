//! The shared test pipeline: split and standardize a dataset, fit the
//! conditional-mean-embedding models a method needs, assemble test-set
//! matrices, and turn a statistic into a p-value.

use faer::Mat;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    self, pvalue_from_resamples, rademacher_draws, wild_bootstrap_pvalue, BootstrapConfig,
};
use crate::cme::{self, centered_gram, CenteredGram, CmeModel, RegressionTarget};
use crate::datagen::{apply_standardization, column_stats, Dataset};
use crate::error::{Error, Result};
use crate::kernels::{gram_self, GramMatrix, KernelSpec};
use crate::seeding::stream_rng;
use crate::split_heuristic::SplitPlan;
use crate::stats::{compute_statistic, prepared_a_matrix, Estimator, Method, StatisticConfig};

/// Kernel choices for the pipeline: fixed target kernels over A and B, a
/// candidate grid for the conditioning kernel, and an optional explicit λ
/// grid (the default is re-anchored per training set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub a_kernel: KernelSpec,
    pub b_kernel: KernelSpec,
    pub c_kernel_grid: Vec<KernelSpec>,
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            a_kernel: KernelSpec::gaussian(1.0),
            b_kernel: KernelSpec::gaussian(1.0),
            c_kernel_grid: cme::default_c_kernel_grid(),
            lambda_grid: None,
        }
    }
}

impl KernelConfig {
    fn lambda_grid_for(&self, c_train: faer::MatRef<'_, f64>) -> Result<Vec<f64>> {
        match &self.lambda_grid {
            Some(g) => Ok(g.clone()),
            None => cme::default_lambda_grid_for(c_train, &self.c_kernel_grid),
        }
    }
}

/// How a statistic is converted into a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    WildBootstrap,
    Gamma,
}

/// The predictors occupying the two slots of one side of the statistic.
#[derive(Debug)]
#[allow(clippy::large_enum_variant)] // fitted models dwarf the Zero variant by design
pub enum SidePredictors {
    /// Zero predictor in both slots (raw kernel matrix on this side).
    Zero,
    /// One model in both slots.
    Single(CmeModel),
    /// Two models fitted on disjoint halves of the training set.
    Pair(CmeModel, CmeModel),
}

impl SidePredictors {
    pub fn slots(&self) -> (Option<&CmeModel>, Option<&CmeModel>) {
        match self {
            SidePredictors::Zero => (None, None),
            SidePredictors::Single(m) => (Some(m), Some(m)),
            SidePredictors::Pair(m1, m2) => (Some(m1), Some(m2)),
        }
    }

    fn primary(&self) -> Option<&CmeModel> {
        self.slots().0
    }

    fn describe(&self, side: &str) -> Vec<ModelInfo> {
        match self {
            SidePredictors::Zero => vec![],
            SidePredictors::Single(m) => vec![ModelInfo::from_model(side.to_string(), m)],
            SidePredictors::Pair(m1, m2) => vec![
                ModelInfo::from_model(format!("{side}1"), m1),
                ModelInfo::from_model(format!("{side}2"), m2),
            ],
        }
    }
}

/// Selected hyperparameters of one fitted model, for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub role: String,
    pub c_kernel: KernelSpec,
    pub lambda: f64,
    pub loo: Option<f64>,
}

impl ModelInfo {
    fn from_model(role: String, m: &CmeModel) -> Self {
        ModelInfo {
            role,
            c_kernel: m.c_kernel().clone(),
            lambda: m.lambda(),
            loo: m.loo_score_value(),
        }
    }
}

/// Train/test views of a dataset, standardized with statistics fitted on the
/// training rows only.
pub struct SplitData {
    pub a_train: Mat<f64>,
    pub b_train: Mat<f64>,
    pub c_train: Mat<f64>,
    pub a_test: Mat<f64>,
    pub b_test: Mat<f64>,
    pub c_test: Mat<f64>,
}

impl SplitData {
    pub fn n(&self) -> usize {
        self.a_test.nrows()
    }

    pub fn m(&self) -> usize {
        self.a_train.nrows()
    }
}

/// Split by explicit row indices (which may coincide for in-sample testing)
/// and standardize every variable on the training rows.
pub fn split_and_standardize(dataset: &Dataset, train_idx: &[usize], test_idx: &[usize]) -> SplitData {
    let train = dataset.subset(train_idx);
    let test = dataset.subset(test_idx);
    let sa = column_stats(train.a.as_ref());
    let sb = column_stats(train.b.as_ref());
    let sc = column_stats(train.c.as_ref());
    SplitData {
        a_train: apply_standardization(train.a.as_ref(), &sa),
        b_train: apply_standardization(train.b.as_ref(), &sb),
        c_train: apply_standardization(train.c.as_ref(), &sc),
        a_test: apply_standardization(test.a.as_ref(), &sa),
        b_test: apply_standardization(test.b.as_ref(), &sb),
        c_test: apply_standardization(test.c.as_ref(), &sc),
    }
}

#[derive(Debug)]
pub struct FittedSides {
    pub a_side: SidePredictors,
    pub b_side: SidePredictors,
}

impl FittedSides {
    pub fn model_infos(&self) -> Vec<ModelInfo> {
        let mut out = self.a_side.describe("a");
        out.extend(self.b_side.describe("b"));
        out
    }
}

/// Shuffle training indices and split them into two equal halves by even/odd
/// position (the leftover odd element goes to the first half's parity).
fn half_split(m: usize, halves_seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..m).collect();
    let mut rng = stream_rng(halves_seed, "train-halves", 0);
    idx.shuffle(&mut rng);
    let first: Vec<usize> = idx.iter().copied().step_by(2).collect();
    let second: Vec<usize> = idx.iter().copied().skip(1).step_by(2).collect();
    (first, second)
}

fn take_rows(m: &Mat<f64>, idx: &[usize]) -> Mat<f64> {
    Mat::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

/// Fit the models a method needs on the (already standardized) training data.
///
/// KCI fits one model per side on the full training set; CIRCE keeps the A
/// side at zero; SplitKCI fits each side twice on disjoint halves; the
/// A-only variant splits just the C→A regression.
pub fn fit_sides(
    method: Method,
    split: &SplitData,
    kernels: &KernelConfig,
    halves_seed: u64,
) -> Result<FittedSides> {
    let m = split.m();
    let needs_halves = matches!(method, Method::SplitKci | Method::SplitKciAOnly);
    if needs_halves && m < 4 {
        return Err(Error::Config(format!(
            "{} needs at least 4 training points (2 per half), got {m}",
            method.name()
        )));
    }
    if m < 2 {
        return Err(Error::Config(format!("need at least 2 training points, got {m}")));
    }

    let fit_pair_on = |idx: &[usize]| -> Result<(CmeModel, CmeModel)> {
        let c = take_rows(&split.c_train, idx);
        let a = take_rows(&split.a_train, idx);
        let b = take_rows(&split.b_train, idx);
        let lambda_grid = kernels.lambda_grid_for(c.as_ref())?;
        let mut models = cme::fit_krr_multi(
            c.as_ref(),
            &[
                RegressionTarget { targets: a.as_ref(), kernel: &kernels.a_kernel },
                RegressionTarget { targets: b.as_ref(), kernel: &kernels.b_kernel },
            ],
            &kernels.c_kernel_grid,
            &lambda_grid,
        )?;
        let b_model = models.pop().expect("two targets");
        let a_model = models.pop().expect("two targets");
        Ok((a_model, b_model))
    };

    let all: Vec<usize> = (0..m).collect();
    match method {
        Method::Kci => {
            let (a_model, b_model) = fit_pair_on(&all)?;
            Ok(FittedSides {
                a_side: SidePredictors::Single(a_model),
                b_side: SidePredictors::Single(b_model),
            })
        }
        Method::Circe => {
            let lambda_grid = kernels.lambda_grid_for(split.c_train.as_ref())?;
            let b_model = cme::fit_krr(
                split.c_train.as_ref(),
                split.b_train.as_ref(),
                &kernels.b_kernel,
                &kernels.c_kernel_grid,
                &lambda_grid,
            )?;
            Ok(FittedSides { a_side: SidePredictors::Zero, b_side: SidePredictors::Single(b_model) })
        }
        Method::SplitKci => {
            let (h1, h2) = half_split(m, halves_seed);
            let (a1, b1) = fit_pair_on(&h1)?;
            let (a2, b2) = fit_pair_on(&h2)?;
            Ok(FittedSides {
                a_side: SidePredictors::Pair(a1, a2),
                b_side: SidePredictors::Pair(b1, b2),
            })
        }
        Method::SplitKciAOnly => {
            let (h1, h2) = half_split(m, halves_seed);
            let c1 = take_rows(&split.c_train, &h1);
            let a1 = take_rows(&split.a_train, &h1);
            let g1 = kernels.lambda_grid_for(c1.as_ref())?;
            let a_model1 =
                cme::fit_krr(c1.as_ref(), a1.as_ref(), &kernels.a_kernel, &kernels.c_kernel_grid, &g1)?;
            let c2 = take_rows(&split.c_train, &h2);
            let a2 = take_rows(&split.a_train, &h2);
            let g2 = kernels.lambda_grid_for(c2.as_ref())?;
            let a_model2 =
                cme::fit_krr(c2.as_ref(), a2.as_ref(), &kernels.a_kernel, &kernels.c_kernel_grid, &g2)?;
            let gf = kernels.lambda_grid_for(split.c_train.as_ref())?;
            let b_model = cme::fit_krr(
                split.c_train.as_ref(),
                split.b_train.as_ref(),
                &kernels.b_kernel,
                &kernels.c_kernel_grid,
                &gf,
            )?;
            Ok(FittedSides {
                a_side: SidePredictors::Pair(a_model1, a_model2),
                b_side: SidePredictors::Single(b_model),
            })
        }
    }
}

/// The kernel used for the conditioning Gram matrix of the statistic: the one
/// selected by the primary C→B regression, falling back to the primary C→A
/// regression (marginal tests), then to a unit-bandwidth Gaussian.
pub fn statistic_c_kernel(sides: &FittedSides) -> KernelSpec {
    sides
        .b_side
        .primary()
        .or_else(|| sides.a_side.primary())
        .map(|m| m.c_kernel().clone())
        .unwrap_or(KernelSpec::Gaussian { bandwidth_sq: 1.0 })
}

/// Test-set matrices feeding the statistic.
pub struct TestMatrices {
    pub centered_a: CenteredGram,
    pub kc: GramMatrix,
    pub centered_b: CenteredGram,
}

pub fn test_matrices(sides: &FittedSides, split: &SplitData, kernels: &KernelConfig) -> Result<TestMatrices> {
    let (a1, a2) = sides.a_side.slots();
    let (b1, b2) = sides.b_side.slots();
    let centered_a =
        centered_gram(a1, a2, &kernels.a_kernel, split.a_test.as_ref(), split.c_test.as_ref())?;
    let centered_b =
        centered_gram(b1, b2, &kernels.b_kernel, split.b_test.as_ref(), split.c_test.as_ref())?;
    let kc = gram_self(&statistic_c_kernel(sides), split.c_test.as_ref())?;
    Ok(TestMatrices { centered_a, kc, centered_b })
}

/// Which variable's residual is tested for marginal dependence on C.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginalSide {
    A,
    B,
}

/// Matrices for the marginal residual-vs-C dependence test used by the split
/// heuristic: a one-sided test of C against the tested variable's residuals,
/// with a constant kernel over the (dropped) conditioning slot. The raw C
/// Gram takes the centered slot — it plays the raw-feature role — while the
/// residual Gram rides uncentered, being centered through the regression
/// itself. The statistic equals the squared covariance between the residual
/// embedding and φ(C), and the Rademacher mask sees the calibrated
/// arrangement.
pub fn marginal_test_matrices(
    sides: &FittedSides,
    split: &SplitData,
    kernels: &KernelConfig,
    which: MarginalSide,
) -> Result<TestMatrices> {
    let n = split.n();
    let residual = match which {
        MarginalSide::A => {
            let (a1, a2) = sides.a_side.slots();
            centered_gram(a1, a2, &kernels.a_kernel, split.a_test.as_ref(), split.c_test.as_ref())?
        }
        MarginalSide::B => {
            let (b1, b2) = sides.b_side.slots();
            centered_gram(b1, b2, &kernels.b_kernel, split.b_test.as_ref(), split.c_test.as_ref())?
        }
    };
    let c_kernel = match which {
        MarginalSide::A => sides
            .a_side
            .primary()
            .map(|m| m.c_kernel().clone())
            .unwrap_or(KernelSpec::Gaussian { bandwidth_sq: 1.0 }),
        MarginalSide::B => statistic_c_kernel(sides),
    };
    let kc_raw = gram_self(&c_kernel, split.c_test.as_ref())?;
    let ones = GramMatrix::from_entries(Mat::from_fn(n, n, |_, _| 1.0), true);
    Ok(TestMatrices {
        centered_a: CenteredGram::from_entries(kc_raw.into_entries()),
        kc: ones,
        centered_b: residual,
    })
}

pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

/// Compute the configured statistic and its p-value from assembled matrices.
pub fn statistic_and_pvalue(
    matrices: &TestMatrices,
    stat_cfg: &StatisticConfig,
    calibration: Calibration,
    boot: &BootstrapConfig,
) -> Result<TestOutcome> {
    let observed =
        compute_statistic(&matrices.centered_a, &matrices.kc, &matrices.centered_b, stat_cfg)?;
    let ka = prepared_a_matrix(&matrices.centered_a, stat_cfg);
    let n = ka.nrows();
    let p_value = match calibration {
        Calibration::WildBootstrap => match stat_cfg.estimator {
            Estimator::VBiased => wild_bootstrap_pvalue(
                ka.as_ref(),
                matrices.kc.entries(),
                matrices.centered_b.entries(),
                observed,
                boot,
            )?,
            Estimator::UUnbiased => {
                // Same Rademacher masking, same estimator: resamples replace
                // K with (qqᵀ) ⊙ K and reuse the unbiased form, so q = 1
                // reproduces the observed statistic exactly.
                if boot.num_resamples < 1 {
                    return Err(Error::Config("wild bootstrap needs at least one resample".into()));
                }
                let l = Mat::from_fn(n, n, |i, j| {
                    matrices.kc.entries()[(i, j)] * matrices.centered_b.entries()[(i, j)]
                });
                let draws = rademacher_draws(boot, n);
                let mut stats = Vec::with_capacity(draws.len());
                for q in &draws {
                    let masked = Mat::from_fn(n, n, |i, j| (q[i] * q[j]) * ka[(i, j)]);
                    stats.push(crate::stats::u_statistic(masked.as_ref(), l.as_ref())?);
                }
                pvalue_from_resamples(observed, &stats)
            }
        },
        Calibration::Gamma => {
            let l = Mat::from_fn(n, n, |i, j| {
                matrices.kc.entries()[(i, j)] * matrices.centered_b.entries()[(i, j)]
            });
            calibration::gamma_pvalue(ka.as_ref(), l.as_ref(), observed)?
        }
    };
    Ok(TestOutcome { statistic: observed, p_value })
}

/// Everything a single pipeline run needs besides the data.
#[derive(Debug, Clone)]
pub struct PipelineSettings {
    pub stat: StatisticConfig,
    pub kernels: KernelConfig,
    pub calibration: Calibration,
    pub num_resamples: usize,
}

impl PipelineSettings {
    pub fn new(method: Method) -> Self {
        PipelineSettings {
            stat: StatisticConfig::new(method),
            kernels: KernelConfig::default(),
            calibration: Calibration::WildBootstrap,
            num_resamples: 1000,
        }
    }
}

pub struct PlanOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub m: usize,
    pub models: Vec<ModelInfo>,
}

/// Run the full pipeline on explicit train/test row indices.
///
/// `run_seed` drives the training-half shuffle and the bootstrap stream.
pub fn run_with_indices(
    dataset: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    settings: &PipelineSettings,
    run_seed: u64,
) -> Result<PlanOutcome> {
    let split = split_and_standardize(dataset, train_idx, test_idx);
    let sides = fit_sides(
        settings.stat.method,
        &split,
        &settings.kernels,
        crate::seeding::derive_seed(run_seed, "halves", 0),
    )?;
    let matrices = test_matrices(&sides, &split, &settings.kernels)?;
    let boot = BootstrapConfig {
        num_resamples: settings.num_resamples,
        rng_seed: crate::seeding::derive_seed(run_seed, "bootstrap", 0),
    };
    let outcome = statistic_and_pvalue(&matrices, &settings.stat, settings.calibration, &boot)?;
    Ok(PlanOutcome {
        statistic: outcome.statistic,
        p_value: outcome.p_value,
        n: test_idx.len(),
        m: train_idx.len(),
        models: sides.model_infos(),
    })
}

/// Run the pipeline on a train/test split plan.
pub fn run_plan(
    dataset: &Dataset,
    plan: &SplitPlan,
    settings: &PipelineSettings,
    run_seed: u64,
) -> Result<PlanOutcome> {
    run_with_indices(dataset, plan.train_indices(), plan.test_indices(), settings, run_seed)
}

/// Marginal residual-vs-C p-values (p_A, p_B) on a split plan, sharing one
/// set of fitted models. p_A never depends on the B columns and vice versa:
/// each side's models, matrices, and bootstrap stream are derived
/// independently of the other variable.
pub fn run_plan_marginal_pair(
    dataset: &Dataset,
    plan: &SplitPlan,
    settings: &PipelineSettings,
    run_seed: u64,
) -> Result<(f64, f64)> {
    let split = split_and_standardize(dataset, plan.train_indices(), plan.test_indices());
    let sides = fit_sides(
        settings.stat.method,
        &split,
        &settings.kernels,
        crate::seeding::derive_seed(run_seed, "halves", 0),
    )?;
    let mut pvalues = [0.0; 2];
    for (slot, which, stream) in [
        (0, MarginalSide::A, "bootstrap-marginal-a"),
        (1, MarginalSide::B, "bootstrap-marginal-b"),
    ] {
        let matrices = marginal_test_matrices(&sides, &split, &settings.kernels, which)?;
        let boot = BootstrapConfig {
            num_resamples: settings.num_resamples,
            rng_seed: crate::seeding::derive_seed(run_seed, stream, 0),
        };
        let outcome = statistic_and_pvalue(&matrices, &settings.stat, settings.calibration, &boot)?;
        pvalues[slot] = outcome.p_value;
    }
    Ok((pvalues[0], pvalues[1]))
}
