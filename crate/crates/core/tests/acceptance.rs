//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities (run with `--nocapture` to see them).
//!
//! Monte-Carlo checks use fixed seeds and are fully deterministic; tolerances
//! are stated inline next to each assertion.

mod common;

use common::{brute_force_loo, gamma_cdf_quadrature, ks_distance, scalar_krr_predict, sign_test_pvalue, TestRng};
use faer::Mat;
use splitkci::calibration::{
    pvalue_from_resamples, rademacher_draws, resample_stats, BootstrapConfig,
};
use splitkci::cme::{centered_gram, fit_krr, fit_krr_multi, loo_score, RegressionTarget};
use splitkci::datagen::{
    apply_standardization, column_stats, gen_circular, gen_postnonlinear, Hypothesis,
};
use splitkci::harness::{
    resolve_auto_ratio, run_experiment, run_single_test, DatasetSpec, ExperimentConfig,
    MethodSelect, SplitSpec,
};
use splitkci::kernels::{gram_self, KernelSpec};
use splitkci::pipeline::{
    fit_sides, split_and_standardize, test_matrices, Calibration, PipelineSettings,
};
use splitkci::special::gamma_cdf;
use splitkci::split_heuristic::{
    select_split_ratio, select_split_ratio_with, SplitPlan, SplitSelectConfig,
};
use splitkci::stats::{compute_statistic, prepared_a_matrix, u_statistic, Method};

const ALPHA: f64 = 0.05;

fn circular_config(method: MethodSelect, n: usize, gamma: f64, hyp: Hypothesis) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        method,
        DatasetSpec::Circular { n, gamma, hypothesis: hyp },
        20260810,
    );
    cfg.trials = 100;
    cfg
}

#[test]
fn criterion_01_level_control_wild_bootstrap() {
    // Circular task under the null, γ = 0.05, N = 400, β = 0.25, 100 trials:
    // SplitKCI and KCI rejection rates within [0, 0.12] (3 binomial SEs
    // around α = 0.05).
    let mut rates = Vec::new();
    for method in [MethodSelect::SplitKci, MethodSelect::Kci] {
        let mut cfg = circular_config(method, 400, 0.05, Hypothesis::Null);
        cfg.split = Some(SplitSpec::Ratio(0.25));
        let table = run_experiment(&cfg).unwrap();
        let row = &table.rows[0];
        assert_eq!(row.trials, 100, "all trials must succeed");
        assert!(
            (0.0..=0.12).contains(&row.rejection_rate),
            "{} rejection rate {} outside [0, 0.12]",
            row.method,
            row.rejection_rate
        );
        rates.push((row.method.clone(), row.rejection_rate));
    }
    println!(
        "criterion 1 (level control, wild bootstrap): PASS — {} = {:.3}, {} = {:.3}, bound [0, 0.12]",
        rates[0].0, rates[0].1, rates[1].0, rates[1].1
    );
}

#[test]
fn criterion_02_power_circular_alternative() {
    // Circular task under the alternative, γ = 0.05, N = 1000, 100 trials:
    // SplitKCI rejects at least 80% of the time. The split ratio comes from
    // the selection heuristic run once and then frozen.
    let mut cfg = circular_config(MethodSelect::SplitKci, 1000, 0.05, Hypothesis::Alternative);
    cfg.split = Some(SplitSpec::Auto);
    let table = run_experiment(&cfg).unwrap();
    let row = &table.rows[0];
    assert_eq!(row.trials, 100);
    assert!(
        row.rejection_rate >= 0.8,
        "power {} below 0.8 (beta = {:?})",
        row.rejection_rate,
        row.beta
    );
    println!(
        "criterion 2 (power under the alternative): PASS — rejection {:.3} ≥ 0.8 at selected beta {:?}",
        row.rejection_rate, row.beta
    );
}

#[test]
fn criterion_03_gamma_miscalibration_direction() {
    // Same null setup as criterion 1 with Gamma p-values for KCI: the Gamma
    // rejection rate exceeds the wild-bootstrap rate by at least 0.05 in at
    // least 2 of 3 noise settings.
    let mut passes = 0;
    let mut detail = String::new();
    for gamma in [0.05, 0.1, 0.2] {
        let mut rates = [0.0; 2];
        for (i, calibration) in [Calibration::WildBootstrap, Calibration::Gamma].iter().enumerate() {
            let mut cfg = circular_config(MethodSelect::Kci, 400, gamma, Hypothesis::Null);
            cfg.split = Some(SplitSpec::Ratio(0.25));
            cfg.calibration = *calibration;
            let table = run_experiment(&cfg).unwrap();
            rates[i] = table.rows[0].rejection_rate;
        }
        let excess = rates[1] - rates[0];
        if excess >= 0.05 {
            passes += 1;
        }
        detail.push_str(&format!(
            " [γ={gamma}: gamma {:.3} vs wild {:.3}, excess {excess:+.3}]",
            rates[1], rates[0]
        ));
    }
    assert!(passes >= 2, "gamma over-rejection seen in only {passes} of 3 settings:{detail}");
    println!("criterion 3 (Gamma mis-calibration direction): PASS — {passes}/3 settings{detail}");
}

#[test]
fn criterion_04_bias_ordering() {
    // 200 paired seeds on the circular null: the mean KCI statistic is at
    // least the mean SplitKCI statistic, with a one-sided sign test at
    // p < 0.05.
    let seeds = 200u64;
    let mut positives = 0usize;
    let mut nonzero = 0usize;
    let mut mean_kci = 0.0;
    let mut mean_split = 0.0;
    let results: Vec<(f64, f64)> = (0..seeds)
        .map(|s| {
            let ds = gen_circular(400, 0.05, Hypothesis::Null, 40000 + s).unwrap();
            let mut rng = splitkci::seeding::stream_rng(s, "c4-assign", 0);
            let plan = SplitPlan::random(400, 0.25, &mut rng).unwrap();
            let split = split_and_standardize(&ds, plan.train_indices(), plan.test_indices());
            let stat_of = |method: Method| {
                let settings = PipelineSettings::new(method);
                let sides = fit_sides(method, &split, &settings.kernels, s).unwrap();
                let mats = test_matrices(&sides, &split, &settings.kernels).unwrap();
                compute_statistic(&mats.centered_a, &mats.kc, &mats.centered_b, &settings.stat)
                    .unwrap()
            };
            (stat_of(Method::Kci), stat_of(Method::SplitKci))
        })
        .collect();
    for (k, s) in &results {
        mean_kci += k / seeds as f64;
        mean_split += s / seeds as f64;
        if k != s {
            nonzero += 1;
            if k > s {
                positives += 1;
            }
        }
    }
    let p = sign_test_pvalue(positives, nonzero);
    assert!(
        mean_kci >= mean_split,
        "mean KCI statistic {mean_kci:.3e} below mean SplitKCI {mean_split:.3e}"
    );
    assert!(p < 0.05, "sign test p = {p:.3e} (positives {positives}/{nonzero})");
    println!(
        "criterion 4 (bias ordering): PASS — KCI > SplitKCI in {positives}/{nonzero} pairs, \
         sign-test p = {p:.2e}, means {mean_kci:.3e} vs {mean_split:.3e}"
    );
}

#[test]
fn criterion_05_wild_bootstrap_equivalence() {
    // (a) A all-ones sign vector reproduces the observed statistic
    // bit-exactly. (b) With m = n² training points, the across-seed
    // distribution of n·V̂ and the pooled bootstrap distribution of n·V̂*
    // have Kolmogorov-Smirnov distance below 0.15 at n = 100 over 100 seeds.
    let n = 100usize;

    // (a) exact reproduction on a small fitted case
    {
        let ds = gen_circular(150, 0.05, Hypothesis::Null, 123).unwrap();
        let train: Vec<usize> = (50..150).collect();
        let test: Vec<usize> = (0..50).collect();
        let settings = PipelineSettings::new(Method::SplitKci);
        let split = split_and_standardize(&ds, &train, &test);
        let sides = fit_sides(Method::SplitKci, &split, &settings.kernels, 3).unwrap();
        let mats = test_matrices(&sides, &split, &settings.kernels).unwrap();
        let observed =
            compute_statistic(&mats.centered_a, &mats.kc, &mats.centered_b, &settings.stat).unwrap();
        let ka = prepared_a_matrix(&mats.centered_a, &settings.stat);
        let ones = vec![vec![1.0; 50]; 7];
        let stats =
            resample_stats(ka.as_ref(), mats.kc.entries(), mats.centered_b.entries(), &ones)
                .unwrap();
        for s in &stats {
            assert_eq!(s.to_bits(), observed.to_bits(), "q = 1 must reproduce V̂ bit-exactly");
        }
    }

    // (b) fit once on m = n² points, then compare distributions
    let m_total = n * n;
    let train = gen_circular(m_total, 0.05, Hypothesis::Null, 99991).unwrap();
    let sa = column_stats(train.a.as_ref());
    let sb = column_stats(train.b.as_ref());
    let sc = column_stats(train.c.as_ref());
    let a_tr = apply_standardization(train.a.as_ref(), &sa);
    let b_tr = apply_standardization(train.b.as_ref(), &sb);
    let c_tr = apply_standardization(train.c.as_ref(), &sc);
    let spec = KernelSpec::gaussian(1.0);
    // fixed mid-scale ridge; the selection grid is exercised elsewhere and a
    // single candidate keeps the one-time m³ factorization affordable
    let kernel_grid = [KernelSpec::gaussian(1.0)];
    let lambda_grid = [1e-7];
    let take = |m: &Mat<f64>, idx: &[usize]| Mat::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)]);
    let half1: Vec<usize> = (0..m_total).step_by(2).collect();
    let half2: Vec<usize> = (0..m_total).skip(1).step_by(2).collect();
    let mut halves = Vec::new();
    for idx in [&half1, &half2] {
        let c = take(&c_tr, idx);
        let a = take(&a_tr, idx);
        let b = take(&b_tr, idx);
        let fitted = fit_krr_multi(
            c.as_ref(),
            &[
                RegressionTarget { targets: a.as_ref(), kernel: &spec },
                RegressionTarget { targets: b.as_ref(), kernel: &spec },
            ],
            &kernel_grid,
            &lambda_grid,
        )
        .unwrap();
        halves.push(fitted);
    }
    let (a1, b1) = (&halves[0][0], &halves[0][1]);
    let (a2, b2) = (&halves[1][0], &halves[1][1]);
    let settings = PipelineSettings::new(Method::SplitKci);

    use rayon::prelude::*;
    let seeds: Vec<u64> = (0..100).collect();
    let per_seed: Vec<(f64, Vec<f64>)> = seeds
        .par_iter()
        .map(|&s| {
            let test = gen_circular(n, 0.05, Hypothesis::Null, 70001 + s).unwrap();
            let a_te = apply_standardization(test.a.as_ref(), &sa);
            let b_te = apply_standardization(test.b.as_ref(), &sb);
            let c_te = apply_standardization(test.c.as_ref(), &sc);
            let ca = centered_gram(Some(a1), Some(a2), &spec, a_te.as_ref(), c_te.as_ref()).unwrap();
            let cb = centered_gram(Some(b1), Some(b2), &spec, b_te.as_ref(), c_te.as_ref()).unwrap();
            let kc = gram_self(&spec, c_te.as_ref()).unwrap();
            let stat = compute_statistic(&ca, &kc, &cb, &settings.stat).unwrap();
            let ka = prepared_a_matrix(&ca, &settings.stat);
            let cfg = BootstrapConfig { num_resamples: 100, rng_seed: 5000 + s };
            let draws = rademacher_draws(&cfg, n);
            let stats = resample_stats(ka.as_ref(), kc.entries(), cb.entries(), &draws).unwrap();
            (n as f64 * stat, stats.iter().map(|v| n as f64 * v).collect())
        })
        .collect();
    let observed: Vec<f64> = per_seed.iter().map(|(o, _)| *o).collect();
    let pooled: Vec<f64> = per_seed.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let d = ks_distance(&observed, &pooled);
    assert!(d < 0.15, "KS distance {d:.4} not below 0.15");
    println!(
        "criterion 5 (wild-bootstrap equivalence): PASS — q=1 bit-exact; KS distance {d:.4} < 0.15 \
         ({} observed vs {} pooled resamples, m = n²)",
        observed.len(),
        pooled.len()
    );
}

#[test]
fn criterion_06_rbpt2_debiasing() {
    // Simulated null with a deliberately imperfect first regressor:
    // A = C + ε_a, B = C + ε_b, g(b, c) = c + δ sin(b), and the exact
    // conditional mean h(c) = c + δ sin(c) e^{-1/2}. Over 200 seeds the
    // uncorrected per-seed mean loss difference is negative (sign test
    // p < 0.05) while the corrected version is centered at zero.
    let seeds = 200;
    let n = 400;
    let delta = 0.5;
    let mut unc_means = Vec::new();
    let mut cor_means = Vec::new();
    for seed in 0..seeds {
        let mut rng = TestRng::new(8100 + seed as u64);
        let mut a = Mat::<f64>::zeros(n, 1);
        let mut g_pred = Mat::<f64>::zeros(n, 1);
        let mut h_pred = Mat::<f64>::zeros(n, 1);
        for i in 0..n {
            let c = rng.normal();
            let b = c + rng.normal();
            a[(i, 0)] = c + rng.normal();
            g_pred[(i, 0)] = c + delta * b.sin();
            h_pred[(i, 0)] = c + delta * c.sin() * (-0.5f64).exp();
        }
        let unc =
            splitkci::baselines::rbpt2_test(a.as_ref(), g_pred.as_ref(), h_pred.as_ref(), false)
                .unwrap();
        let cor =
            splitkci::baselines::rbpt2_test(a.as_ref(), g_pred.as_ref(), h_pred.as_ref(), true)
                .unwrap();
        unc_means.push(unc.t_values.iter().sum::<f64>() / n as f64);
        cor_means.push(cor.t_values.iter().sum::<f64>() / n as f64);
    }
    let negatives = unc_means.iter().filter(|m| **m < 0.0).count();
    let p = sign_test_pvalue(negatives, seeds);
    let grand_unc = unc_means.iter().sum::<f64>() / seeds as f64;
    let grand_cor = cor_means.iter().sum::<f64>() / seeds as f64;
    let sd_cor = (cor_means.iter().map(|m| (m - grand_cor) * (m - grand_cor)).sum::<f64>()
        / seeds as f64)
        .sqrt();
    let t_cor = grand_cor / (sd_cor / (seeds as f64).sqrt());
    assert!(grand_unc < 0.0, "uncorrected mean {grand_unc:.4e} should be negative");
    assert!(p < 0.05, "sign test p = {p:.3e} ({negatives}/{seeds} negative)");
    assert!(
        t_cor.abs() < 3.0,
        "corrected mean {grand_cor:.4e} not within 3 standard errors of zero (t = {t_cor:.2})"
    );
    println!(
        "criterion 6 (RBPT2' debiasing): PASS — uncorrected mean {grand_unc:.3e} negative in \
         {negatives}/{seeds} seeds (sign-test p = {p:.2e}), corrected mean {grand_cor:.3e} \
         within 3 SEs of zero (t = {t_cor:.2})"
    );
}

#[test]
fn criterion_07_oracle_equivalences() {
    // (a) leave-one-out shortcut vs brute-force refit, 1e-8 relative
    let mut rng = TestRng::new(600);
    let mut checked = 0;
    for &m in &[5usize, 10, 20] {
        for seed in 0..20 {
            let c = rng.matrix(m, 1);
            let a = Mat::from_fn(m, 1, |i, _| (1.5 * c[(i, 0)]).sin() + 0.3 * rng.normal());
            let lambda = [1e-4, 1e-2, 1.0][seed % 3];
            let spec = KernelSpec::gaussian(0.8);
            let target = KernelSpec::gaussian(1.0);
            let fast = loo_score(&spec, lambda, c.as_ref(), a.as_ref(), &target).unwrap();
            let brute = brute_force_loo(&spec, lambda, &c, &a, &target);
            assert!(
                (fast - brute).abs() <= 1e-8 * brute.abs(),
                "m={m} seed={seed}: shortcut {fast} vs refit {brute}"
            );
            checked += 1;
        }
    }

    // (b) unbiased statistic vs brute-force three-term formula, 1e-10
    for n in 4..=8usize {
        let vals = rng.matrix(n, n);
        let k = Mat::from_fn(n, n, |i, j| if i <= j { vals[(i, j)] } else { vals[(j, i)] });
        let vals2 = rng.matrix(n, n);
        let l = Mat::from_fn(n, n, |i, j| if i <= j { vals2[(i, j)] } else { vals2[(j, i)] });
        let ours = u_statistic(k.as_ref(), l.as_ref()).unwrap();
        // independent brute force with explicit loops, diagonals dropped
        let nf = n as f64;
        let kt = |i: usize, j: usize| if i == j { 0.0 } else { k[(i, j)] };
        let lt = |i: usize, j: usize| if i == j { 0.0 } else { l[(i, j)] };
        let mut tr = 0.0;
        let mut sk = 0.0;
        let mut sl = 0.0;
        let mut cross = 0.0;
        for i in 0..n {
            for j in 0..n {
                tr += kt(i, j) * lt(j, i);
                sk += kt(i, j);
                sl += lt(i, j);
                for r in 0..n {
                    cross += kt(i, j) * lt(j, r);
                }
            }
        }
        let oracle =
            (tr + sk * sl / ((nf - 1.0) * (nf - 2.0)) - 2.0 / (nf - 2.0) * cross) / (nf * (nf - 3.0));
        assert!((ours - oracle).abs() < 1e-10, "n={n}: {ours} vs brute force {oracle}");
    }

    // (c) centered Gram with a linear target kernel vs scalar residual
    // products, 1e-10
    {
        let m = 15;
        let nq = 10;
        let lambda = 4e-3;
        let c1 = rng.matrix(m, 1);
        let a1 = Mat::from_fn(m, 1, |i, _| c1[(i, 0)] + 0.25 * rng.normal());
        let c2 = rng.matrix(m, 1);
        let a2 = Mat::from_fn(m, 1, |i, _| c2[(i, 0)] + 0.25 * rng.normal());
        let lin = KernelSpec::Linear;
        let ck = KernelSpec::gaussian(0.9);
        let m1 = fit_krr(c1.as_ref(), a1.as_ref(), &lin, &[ck.clone()], &[lambda]).unwrap();
        let m2 = fit_krr(c2.as_ref(), a2.as_ref(), &lin, &[ck.clone()], &[lambda]).unwrap();
        let c_test = rng.matrix(nq, 1);
        let a_test = rng.matrix(nq, 1);
        let cg =
            centered_gram(Some(&m1), Some(&m2), &lin, a_test.as_ref(), c_test.as_ref()).unwrap();
        let y1: Vec<f64> = (0..m).map(|i| a1[(i, 0)]).collect();
        let y2: Vec<f64> = (0..m).map(|i| a2[(i, 0)]).collect();
        let f1 = scalar_krr_predict(&ck, lambda, &c1, &y1, &c_test);
        let f2 = scalar_krr_predict(&ck, lambda, &c2, &y2, &c_test);
        for i in 0..nq {
            for j in 0..nq {
                let expected = 0.5
                    * ((a_test[(i, 0)] - f1[i]) * (a_test[(j, 0)] - f2[j])
                        + (a_test[(i, 0)] - f2[i]) * (a_test[(j, 0)] - f1[j]));
                assert!(
                    (cg.entries()[(i, j)] - expected).abs() < 1e-10,
                    "({i}, {j}): {} vs {expected}",
                    cg.entries()[(i, j)]
                );
            }
        }
    }

    // (d) Gamma CDF vs Simpson quadrature, 1e-6 absolute
    let triples: [(f64, f64, f64); 20] = [
        (0.5, 0.2, 0.05),
        (0.5, 0.2, 0.3),
        (0.5, 1.0, 1.5),
        (0.7, 0.5, 0.2),
        (0.9, 2.0, 5.0),
        (1.0, 1.0, 0.5),
        (1.0, 0.3, 2.0),
        (1.5, 1.0, 0.7),
        (2.0, 0.5, 0.4),
        (2.0, 0.5, 3.0),
        (2.5, 1.5, 6.0),
        (3.0, 1.0, 1.0),
        (3.0, 1.0, 8.0),
        (4.0, 0.25, 1.2),
        (5.0, 2.0, 30.0),
        (6.5, 0.8, 4.0),
        (8.0, 1.0, 7.5),
        (10.0, 0.1, 1.5),
        (12.0, 0.5, 4.0),
        (20.0, 0.2, 5.5),
    ];
    for &(k, theta, x) in &triples {
        let ours = gamma_cdf(k, theta, x).unwrap();
        let oracle = gamma_cdf_quadrature(k, theta, x);
        assert!((ours - oracle).abs() < 1e-6, "gamma_cdf({k},{theta},{x}): {ours} vs {oracle}");
    }
    println!(
        "criterion 7 (oracle equivalences): PASS — {checked} LOO refits at 1e-8, U-statistic \
         n=4..8 at 1e-10, centered-Gram residual products at 1e-10, 20 Gamma CDF points at 1e-6"
    );
}

#[test]
fn criterion_08_postnonlinear_sanity() {
    // d = 1, N = 400, 50 trials: SplitKCI holds level under the null
    // (≤ 0.12) and reaches power ≥ 0.5 under the alternative; the split
    // heuristic picks a ratio from the configured grid and the frozen-ratio
    // protocol reproduces bit-identically.
    let mut cfg = ExperimentConfig::new(
        MethodSelect::SplitKci,
        DatasetSpec::Postnonlinear { n: 400, d: 1, hypothesis: Hypothesis::Null },
        20260811,
    );
    cfg.trials = 50;
    cfg.split = Some(SplitSpec::Auto);

    let selection_ds = cfg
        .dataset
        .realize(splitkci::seeding::derive_seed(cfg.base_seed, "data", 0))
        .unwrap();
    let beta = resolve_auto_ratio(&cfg, &selection_ds).unwrap();
    let grid = splitkci::split_heuristic::default_ratio_grid(400);
    assert!(grid.contains(&beta), "selected beta {beta} not in grid {grid:?}");
    let beta_again = resolve_auto_ratio(&cfg, &selection_ds).unwrap();
    assert_eq!(beta.to_bits(), beta_again.to_bits(), "selection must be deterministic");

    // frozen-ratio protocol reproduces per-trial results bit-identically
    let mut frozen = cfg.clone();
    frozen.split = Some(SplitSpec::Ratio(beta));
    let ds0 = frozen.dataset.realize(777).unwrap();
    let r1 = run_single_test(&frozen, &ds0, 42).unwrap();
    let r2 = run_single_test(&frozen, &ds0, 42).unwrap();
    assert_eq!(r1.statistic.to_bits(), r2.statistic.to_bits());
    assert_eq!(r1.p_value.to_bits(), r2.p_value.to_bits());

    let h0 = run_experiment(&cfg).unwrap();
    assert_eq!(h0.rows[0].trials, 50);
    let h0_rate = h0.rows[0].rejection_rate;
    assert!(h0_rate <= 0.12, "null rejection {h0_rate} above 0.12");

    let mut cfg_h1 = cfg.clone();
    cfg_h1.dataset =
        DatasetSpec::Postnonlinear { n: 400, d: 1, hypothesis: Hypothesis::Alternative };
    let h1 = run_experiment(&cfg_h1).unwrap();
    let h1_rate = h1.rows[0].rejection_rate;
    assert!(h1_rate >= 0.5, "alternative rejection {h1_rate} below 0.5");
    println!(
        "criterion 8 (post-nonlinear sanity): PASS — beta {beta} from {grid:?}, H0 rejection \
         {h0_rate:.3} ≤ 0.12, H1 rejection {h1_rate:.3} ≥ 0.5, frozen-ratio runs bit-identical"
    );
}

#[test]
fn criterion_09_split_heuristic_behavior() {
    // (a) stub fallback paths: an always-accepting p-value source returns
    // the largest ratio after one sweep; an always-rejecting source falls
    // back to the smallest.
    let cfg = SplitSelectConfig {
        ratio_grid: vec![0.25, 0.375, 0.5],
        alpha: ALPHA,
        resamples: 5,
        rng_seed: 11,
    };
    let accept = select_split_ratio_with(400, &cfg, |_, _| Ok((1.0, 1.0))).unwrap();
    assert_eq!(accept.beta, 0.5);
    assert_eq!(accept.evaluated, vec![(0.5, 0.0)]);
    let reject = select_split_ratio_with(400, &cfg, |_, _| Ok((0.0, 0.0))).unwrap();
    assert_eq!(reject.beta, 0.25);
    assert_eq!(reject.evaluated.len(), 3);

    // (b) monotone trend: on the circular task the selected ratio decreases
    // as the noise scale grows over {0.05, 0.15, 0.3} (the range where CME
    // estimation difficulty grows with γ), by majority over 20 seeds.
    let gammas = [0.05, 0.15, 0.3];
    let seeds = 20u64;
    use rayon::prelude::*;
    let betas: Vec<Vec<f64>> = gammas
        .iter()
        .map(|&gamma| {
            (0..seeds)
                .into_par_iter()
                .map(|seed| {
                    let ds = gen_circular(400, gamma, Hypothesis::Null, 60000 + seed).unwrap();
                    let mut settings = PipelineSettings::new(Method::SplitKci);
                    settings.num_resamples = 400;
                    let sel = select_split_ratio(
                        &ds,
                        &settings,
                        &SplitSelectConfig {
                            ratio_grid: vec![0.25, 0.375, 0.5],
                            alpha: ALPHA,
                            resamples: 20,
                            rng_seed: 1234 + seed,
                        },
                    )
                    .unwrap();
                    sel.beta
                })
                .collect()
        })
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let means: Vec<f64> = betas.iter().map(|v| mean(v)).collect();
    let mut down = 0;
    let mut up = 0;
    for lo in 0..3 {
        for hi in lo + 1..3 {
            for s in 0..seeds as usize {
                if betas[lo][s] > betas[hi][s] {
                    down += 1;
                }
                if betas[lo][s] < betas[hi][s] {
                    up += 1;
                }
            }
        }
    }
    assert!(
        down > up,
        "no majority downward trend: {down} decreasing vs {up} increasing pairs (means {means:?})"
    );
    assert!(
        means[0] > means[2],
        "mean selected ratio did not decrease over the noise ladder: {means:?}"
    );
    println!(
        "criterion 9 (split heuristic): PASS — fallbacks exact; trend means {means:?}, \
         {down} decreasing vs {up} increasing seed pairs"
    );
}
