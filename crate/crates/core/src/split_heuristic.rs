//! Train/test split-ratio selection via the marginal-dependence rejection
//! rate: a split ratio is acceptable when, over resampled splits, the test
//! that the regression residuals still depend on C rejects at no more than
//! the target level for both variables at once.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::{run_plan_marginal_pair, PipelineSettings};
use crate::seeding::{derive_seed, stream_rng};

/// A train/test assignment: a permutation of the sample indices with the
/// first `n` rows designated as the test set.
#[derive(Debug, Clone)]
pub struct SplitPlan {
    test_ratio: f64,
    n: usize,
    m: usize,
    assignment: Vec<usize>,
}

impl SplitPlan {
    /// Random assignment with n = round(β N).
    pub fn random(n_total: usize, beta: f64, rng: &mut impl Rng) -> Result<SplitPlan> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Config(format!("test ratio must be in (0, 1), got {beta}")));
        }
        let n = (beta * n_total as f64).round() as usize;
        if n == 0 || n >= n_total {
            return Err(Error::Config(format!(
                "test ratio {beta} leaves an empty train or test set for N = {n_total}"
            )));
        }
        let mut assignment: Vec<usize> = (0..n_total).collect();
        assignment.shuffle(rng);
        Ok(SplitPlan { test_ratio: beta, n, m: n_total - n, assignment })
    }

    /// Deterministic assignment taking the first n rows as the test set.
    pub fn head_test(n_total: usize, n_test: usize) -> Result<SplitPlan> {
        if n_test == 0 || n_test >= n_total {
            return Err(Error::Config(format!(
                "test size {n_test} must be strictly between 0 and {n_total}"
            )));
        }
        SplitPlan::validate_counts(n_total, n_test)?;
        Ok(SplitPlan {
            test_ratio: n_test as f64 / n_total as f64,
            n: n_test,
            m: n_total - n_test,
            assignment: (0..n_total).collect(),
        })
    }

    fn validate_counts(n_total: usize, n_test: usize) -> Result<()> {
        if n_total < 2 || n_test == 0 {
            return Err(Error::Config("split needs at least one train and one test row".into()));
        }
        Ok(())
    }

    pub fn test_ratio(&self) -> f64 {
        self.test_ratio
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn test_indices(&self) -> &[usize] {
        &self.assignment[..self.n]
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.assignment[self.n..]
    }
}

/// p_A and p_B: the full pipeline run with the non-tested side's factor
/// replaced by a constant matrix, so each p-value measures only whether that
/// variable's regression residuals still depend on C.
pub fn marginal_dependence_pvalues(
    dataset: &Dataset,
    plan: &SplitPlan,
    settings: &PipelineSettings,
    run_seed: u64,
) -> Result<(f64, f64)> {
    run_plan_marginal_pair(dataset, plan, settings, run_seed)
}

#[derive(Debug, Clone)]
pub struct SplitSelectConfig {
    /// Candidate test ratios; evaluated from the largest down.
    pub ratio_grid: Vec<f64>,
    /// Rejection-rate threshold (and the level of the marginal tests).
    pub alpha: f64,
    /// Number of resampled splits per ratio.
    pub resamples: usize,
    pub rng_seed: u64,
}

#[derive(Debug, Clone)]
pub struct SplitSelection {
    pub beta: f64,
    /// (beta, omega) for every ratio that was evaluated, in evaluation order.
    pub evaluated: Vec<(f64, f64)>,
}

/// Generic selector: walk the ratio grid from the largest β down, estimate
/// the joint marginal rejection rate ω over `resamples` random splits, and
/// return the first β with ω ≤ α. Falls back to the smallest grid value when
/// every ratio rejects too often.
pub fn select_split_ratio_with<F>(
    n_total: usize,
    config: &SplitSelectConfig,
    pvalue_source: F,
) -> Result<SplitSelection>
where
    F: Fn(&SplitPlan, u64) -> Result<(f64, f64)> + Sync,
{
    if config.ratio_grid.is_empty() {
        return Err(Error::Config("split ratio grid is empty".into()));
    }
    if config.resamples < 1 {
        return Err(Error::Config("split selection needs at least one resample".into()));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::Config(format!("alpha must be in (0, 1), got {}", config.alpha)));
    }
    for &b in &config.ratio_grid {
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::Config(format!("split ratios must be in (0, 1), got {b}")));
        }
    }
    let mut grid = config.ratio_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut evaluated = Vec::new();
    for (bi, &beta) in grid.iter().enumerate().rev() {
        // Replicates are independent jobs with derived seeds; results are
        // combined by counting, so execution order does not matter.
        let rejects: usize = (0..config.resamples)
            .into_par_iter()
            .map(|rep| {
                let rep_seed =
                    derive_seed(config.rng_seed, "split-replicate", (bi * config.resamples + rep) as u64);
                let mut rng = stream_rng(rep_seed, "split-assignment", 0);
                let plan = SplitPlan::random(n_total, beta, &mut rng)?;
                let (p_a, p_b) = pvalue_source(&plan, rep_seed)?;
                Ok(usize::from(p_a <= config.alpha && p_b <= config.alpha))
            })
            .collect::<Result<Vec<usize>>>()?
            .into_iter()
            .sum();
        let omega = rejects as f64 / config.resamples as f64;
        evaluated.push((beta, omega));
        if omega <= config.alpha {
            return Ok(SplitSelection { beta, evaluated });
        }
    }
    Ok(SplitSelection { beta: grid[0], evaluated })
}

/// Select the train/test split ratio by running the marginal-dependence
/// pipeline for every resampled split.
pub fn select_split_ratio(
    dataset: &Dataset,
    settings: &PipelineSettings,
    config: &SplitSelectConfig,
) -> Result<SplitSelection> {
    select_split_ratio_with(dataset.len(), config, |plan, rep_seed| {
        marginal_dependence_pvalues(dataset, plan, settings, rep_seed)
    })
}

/// Default test-ratio grid: test sizes from max(100, 0.1 N) up to N/2 in
/// steps of 50. Falls back to a single 1/2 ratio when the dataset is too
/// small for that constraint.
pub fn default_ratio_grid(n_total: usize) -> Vec<f64> {
    let lo = (100.0f64).max(0.1 * n_total as f64).ceil() as usize;
    let hi = n_total / 2;
    let mut out = Vec::new();
    let mut n = lo;
    while n <= hi {
        out.push(n as f64 / n_total as f64);
        n += 50;
    }
    if out.is_empty() {
        out.push(0.5);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_counts_add_up() {
        let mut rng = stream_rng(1, "test", 0);
        let plan = SplitPlan::random(100, 0.25, &mut rng).unwrap();
        assert_eq!(plan.n(), 25);
        assert_eq!(plan.m(), 75);
        let mut all: Vec<usize> = plan.test_indices().iter().chain(plan.train_indices()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn always_accept_stub_returns_largest_ratio() {
        let cfg = SplitSelectConfig {
            ratio_grid: vec![0.1, 0.3, 0.5],
            alpha: 0.05,
            resamples: 5,
            rng_seed: 3,
        };
        let sel = select_split_ratio_with(200, &cfg, |_, _| Ok((1.0, 1.0))).unwrap();
        assert_eq!(sel.beta, 0.5);
        assert_eq!(sel.evaluated.len(), 1);
        assert_eq!(sel.evaluated[0], (0.5, 0.0));
    }

    #[test]
    fn always_reject_stub_falls_back_to_smallest_ratio() {
        let cfg = SplitSelectConfig {
            ratio_grid: vec![0.5, 0.1, 0.3],
            alpha: 0.05,
            resamples: 4,
            rng_seed: 3,
        };
        let sel = select_split_ratio_with(200, &cfg, |_, _| Ok((0.0, 0.0))).unwrap();
        assert_eq!(sel.beta, 0.1);
        assert_eq!(sel.evaluated.len(), 3);
        for &(_, omega) in &sel.evaluated {
            assert_eq!(omega, 1.0);
        }
    }

    #[test]
    fn omega_is_a_multiple_of_one_over_r() {
        // a stub that rejects for roughly half the replicate seeds
        let cfg = SplitSelectConfig {
            ratio_grid: vec![0.2, 0.4],
            alpha: 0.01,
            resamples: 8,
            rng_seed: 9,
        };
        let sel = select_split_ratio_with(100, &cfg, |_, seed| {
            let p = if seed % 2 == 0 { 0.0 } else { 1.0 };
            Ok((p, p))
        })
        .unwrap();
        for &(_, omega) in &sel.evaluated {
            let scaled = omega * 8.0;
            assert!((scaled - scaled.round()).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&omega));
        }
        assert!(cfg.ratio_grid.contains(&sel.beta));
    }

    #[test]
    fn selection_is_deterministic() {
        let cfg = SplitSelectConfig {
            ratio_grid: vec![0.2, 0.3, 0.4],
            alpha: 0.5,
            resamples: 6,
            rng_seed: 77,
        };
        let source = |plan: &SplitPlan, seed: u64| {
            // pseudo p-values depending on the plan and seed only
            let x = (seed % 100) as f64 / 100.0;
            let y = plan.test_indices()[0] as f64 / plan.n() as f64 / 10.0;
            Ok(((x + y) % 1.0, (x * 0.5 + y) % 1.0))
        };
        let s1 = select_split_ratio_with(120, &cfg, source).unwrap();
        let s2 = select_split_ratio_with(120, &cfg, source).unwrap();
        assert_eq!(s1.beta, s2.beta);
        assert_eq!(s1.evaluated, s2.evaluated);
    }

    #[test]
    fn empty_grid_is_config_error() {
        let cfg = SplitSelectConfig { ratio_grid: vec![], alpha: 0.05, resamples: 2, rng_seed: 0 };
        assert!(matches!(
            select_split_ratio_with(100, &cfg, |_, _| Ok((1.0, 1.0))),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn default_grid_follows_the_constraint() {
        // N = 400: test sizes 100, 150, 200
        assert_eq!(default_ratio_grid(400), vec![0.25, 0.375, 0.5]);
        // N = 1000: 100 to 500 in steps of 50
        let g = default_ratio_grid(1000);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[8], 0.5);
        // too small for the constraint: single fallback ratio
        assert_eq!(default_ratio_grid(150), vec![0.5]);
    }
}
