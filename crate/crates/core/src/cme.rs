//! Conditional mean embedding regressors fitted by kernel ridge regression,
//! with leave-one-out hyperparameter selection, and residual inner-product
//! (centered) Gram matrices between fitted models on test data.
//!
//! A fitted model represents μ̂(c) = K_{cC} (K_C + λ m I)⁻¹ Φ_A, the ridge
//! estimate of the conditional mean embedding of the targets given c. All
//! evaluations go through the kernel trick, so targets may live in any RKHS.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};
use crate::kernels::{gram, gram_self, KernelSpec};

/// Candidates with a hat-matrix diagonal this close to 1 are rejected: the
/// leave-one-out denominator (1 - H_ii)² is no longer trustworthy.
const HAT_DIAG_LIMIT: f64 = 1.0 - 1e-12;

/// One-shot diagonal jitter applied when the SPD factorization fails,
/// relative to the mean diagonal of the matrix being factored.
const JITTER_REL: f64 = 1e-10;

/// A fitted conditional-mean-embedding regressor. Immutable after fitting.
#[derive(Debug, Clone)]
pub struct CmeModel {
    c_train: Mat<f64>,
    a_train: Mat<f64>,
    c_kernel: KernelSpec,
    a_kernel: KernelSpec,
    lambda: f64,
    loo: Option<f64>,
    llt: Llt<f64>,
}

impl CmeModel {
    pub fn train_size(&self) -> usize {
        self.c_train.nrows()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn c_kernel(&self) -> &KernelSpec {
        &self.c_kernel
    }

    pub fn a_kernel(&self) -> &KernelSpec {
        &self.a_kernel
    }

    /// Leave-one-out score of the selected candidate; `None` when the grid
    /// had a single candidate and selection was skipped.
    pub fn loo_score_value(&self) -> Option<f64> {
        self.loo
    }

    /// Inner products ⟨μ̂(c_i), φ(a'_j)⟩ between predicted embeddings at the
    /// query points and feature maps of the query targets:
    /// K_{c_i C} (K_C + λ m I)⁻¹ K_{A, a'_j}.
    pub fn predict_cross_kernel(
        &self,
        c_query: MatRef<'_, f64>,
        a_other: MatRef<'_, f64>,
    ) -> Result<Mat<f64>> {
        let z = self.solved_cross_c(c_query)?;
        let kao = gram(&self.a_kernel, self.a_train.as_ref(), a_other)?;
        Ok(z.transpose() * kao.entries())
    }

    /// In-input-space predictions K_{c_i C} (K_C + λ m I)⁻¹ A_train.
    ///
    /// This is the estimate of E[A | C = c_i] when the target kernel is
    /// linear; for other target kernels it returns the dual-weighted
    /// combination of raw training targets.
    pub fn predict_mean(&self, c_query: MatRef<'_, f64>) -> Result<Mat<f64>> {
        let z = self.solved_cross_c(c_query)?;
        Ok(z.transpose() * self.a_train.as_ref())
    }

    /// (K_C + λ m I)⁻¹ K_{C, c_query}, an m×n matrix.
    fn solved_cross_c(&self, c_query: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if c_query.ncols() != self.c_train.ncols() {
            return Err(Error::Input(format!(
                "query dimension {} does not match training dimension {}",
                c_query.ncols(),
                self.c_train.ncols()
            )));
        }
        let kq = gram(&self.c_kernel, self.c_train.as_ref(), c_query)?;
        let mut z = kq.into_entries();
        self.llt.solve_in_place(&mut z);
        Ok(z)
    }

    /// Squared RKHS norms of the in-sample residuals φ(a_i) - μ̂(c_i).
    pub fn train_residual_sq_norms(&self) -> Result<Vec<f64>> {
        let kc = gram_self(&self.c_kernel, self.c_train.as_ref())?;
        let ka = gram_self(&self.a_kernel, self.a_train.as_ref())?;
        let mut y = kc.entries().to_owned();
        self.llt.solve_in_place(&mut y);
        let m = self.train_size();
        let hk = y.transpose() * ka.entries();
        let mut out = Vec::with_capacity(m);
        for i in 0..m {
            let mut hkh = 0.0;
            for j in 0..m {
                hkh += hk[(i, j)] * y[(i, j)];
            }
            out.push(ka.entries()[(i, i)] - 2.0 * hk[(i, i)] + hkh);
        }
        Ok(out)
    }
}

/// Factor K + λmI, retrying once with a small diagonal jitter.
fn factor_ridge(kc: MatRef<'_, f64>, lambda_m: f64) -> Result<Llt<f64>> {
    let m = kc.nrows();
    let mut b = kc.to_owned();
    for i in 0..m {
        b[(i, i)] += lambda_m;
    }
    match b.llt(Side::Lower) {
        Ok(llt) => Ok(llt),
        Err(_) => {
            let mean_diag = (0..m).map(|i| b[(i, i)]).sum::<f64>() / m as f64;
            let jitter = JITTER_REL * mean_diag;
            for i in 0..m {
                b[(i, i)] += jitter;
            }
            b.llt(Side::Lower).map_err(|_| {
                Error::DegenerateRegularization(format!(
                    "SPD factorization failed even with jitter {jitter:.3e} (lambda*m = {lambda_m:.3e})"
                ))
            })
        }
    }
}

/// Leave-one-out scores of one ridge candidate for several regression targets
/// sharing the same conditioning Gram matrix.
///
/// Uses the hat-matrix identity: the held-out residual of point i equals the
/// in-sample residual divided by (1 - H_ii), H = K_C (K_C + λmI)⁻¹, so that
/// LOO = Σ_i ‖φ(a_i) - μ̂(c_i)‖² / (1 - H_ii)², with the numerator expanded
/// through the kernel trick.
fn candidate_scores(kc: MatRef<'_, f64>, ka_list: &[MatRef<'_, f64>], lambda: f64) -> Result<Vec<f64>> {
    let m = kc.nrows();
    let llt = factor_ridge(kc, lambda * m as f64)?;
    let mut y = kc.to_owned();
    llt.solve_in_place(&mut y);
    // H = K_C B⁻¹ = Yᵀ for Y = B⁻¹ K_C, so H_ii = Y_ii.
    let mut denom = Vec::with_capacity(m);
    for i in 0..m {
        let h = y[(i, i)];
        if h >= HAT_DIAG_LIMIT {
            return Err(Error::DegenerateRegularization(format!(
                "hat diagonal {h} at index {i} (lambda = {lambda:.3e} too small for this kernel matrix)"
            )));
        }
        let d = 1.0 - h;
        denom.push(d * d);
    }
    let mut scores = Vec::with_capacity(ka_list.len());
    for ka in ka_list {
        let hk = y.transpose() * *ka;
        let mut total = 0.0;
        for i in 0..m {
            let mut hkh = 0.0;
            for j in 0..m {
                hkh += hk[(i, j)] * y[(i, j)];
            }
            // The numerator is a squared RKHS norm; a value negative beyond
            // round-off means the solve itself is numerically degenerate and
            // the candidate cannot be scored.
            let numerator = ka[(i, i)] - 2.0 * hk[(i, i)] + hkh;
            let term_scale = ka[(i, i)].abs() + 2.0 * hk[(i, i)].abs() + hkh.abs();
            if numerator < -1e-8 * term_scale {
                return Err(Error::DegenerateRegularization(format!(
                    "residual norm {numerator:.3e} at index {i} is negative beyond round-off \
                     (lambda = {lambda:.3e} too small for this kernel matrix)"
                )));
            }
            total += numerator.max(0.0) / denom[i];
        }
        if !total.is_finite() {
            return Err(Error::Numerical(format!(
                "leave-one-out score is not finite (lambda = {lambda:.3e})"
            )));
        }
        scores.push(total);
    }
    Ok(scores)
}

/// Leave-one-out score for a single (c_kernel, lambda) candidate.
pub fn loo_score(
    c_kernel: &KernelSpec,
    lambda: f64,
    c_train: MatRef<'_, f64>,
    a_train: MatRef<'_, f64>,
    a_kernel: &KernelSpec,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    if c_train.nrows() < 2 {
        return Err(Error::Config("leave-one-out needs at least 2 training points".into()));
    }
    if a_train.nrows() != c_train.nrows() {
        return Err(Error::Input(format!(
            "target rows {} do not match input rows {}",
            a_train.nrows(),
            c_train.nrows()
        )));
    }
    let kc = gram_self(c_kernel, c_train)?;
    let ka = gram_self(a_kernel, a_train)?;
    Ok(candidate_scores(kc.entries(), &[ka.entries()], lambda)?[0])
}

/// A regression problem that shares its conditioning inputs with others.
pub struct RegressionTarget<'a> {
    pub targets: MatRef<'a, f64>,
    pub kernel: &'a KernelSpec,
}

/// Fit conditional-mean-embedding regressors for several targets over the
/// same conditioning inputs, selecting (c_kernel, λ) per target by
/// leave-one-out.
///
/// Ties are broken towards the larger λ, then towards the earlier grid
/// position. Candidates that fail (non-SPD system, degenerate hat diagonal)
/// are skipped; if every candidate fails for some target the whole fit fails
/// with the per-candidate reasons.
pub fn fit_krr_multi(
    c_train: MatRef<'_, f64>,
    targets: &[RegressionTarget<'_>],
    c_kernel_grid: &[KernelSpec],
    lambda_grid: &[f64],
) -> Result<Vec<CmeModel>> {
    let m = c_train.nrows();
    if m < 2 {
        return Err(Error::Config(format!("need at least 2 training points, got {m}")));
    }
    if c_kernel_grid.is_empty() || lambda_grid.is_empty() {
        return Err(Error::Config("kernel and lambda grids must be non-empty".into()));
    }
    if targets.is_empty() {
        return Err(Error::Config("no regression targets given".into()));
    }
    for t in targets {
        if t.targets.nrows() != m {
            return Err(Error::Input(format!(
                "target rows {} do not match input rows {m}",
                t.targets.nrows()
            )));
        }
        t.kernel.validate(t.targets.ncols())?;
    }
    for l in lambda_grid {
        if !(*l > 0.0) {
            return Err(Error::Config(format!("lambda grid entries must be positive, got {l}")));
        }
    }

    let ka_grams: Vec<Mat<f64>> = targets
        .iter()
        .map(|t| gram_self(t.kernel, t.targets).map(|g| g.into_entries()))
        .collect::<Result<_>>()?;
    let ka_refs: Vec<MatRef<'_, f64>> = ka_grams.iter().map(|g| g.as_ref()).collect();

    struct Best {
        score: Option<f64>,
        kernel_idx: usize,
        lambda: f64,
    }
    let mut best: Vec<Option<Best>> = targets.iter().map(|_| None).collect();
    let mut failures: Vec<String> = Vec::new();
    let single_candidate = c_kernel_grid.len() == 1 && lambda_grid.len() == 1;

    if single_candidate {
        // No choice to make; skip scoring entirely.
        for b in best.iter_mut() {
            *b = Some(Best { score: None, kernel_idx: 0, lambda: lambda_grid[0] });
        }
    } else {
        for (ki, c_kernel) in c_kernel_grid.iter().enumerate() {
            c_kernel.validate(c_train.ncols())?;
            let kc = gram_self(c_kernel, c_train)?;
            for &lambda in lambda_grid {
                match candidate_scores(kc.entries(), &ka_refs, lambda) {
                    Ok(scores) => {
                        for (ti, score) in scores.into_iter().enumerate() {
                            let replace = match &best[ti] {
                                None => true,
                                Some(b) => {
                                    let bs = b.score.expect("scored candidates have scores");
                                    score < bs || (score == bs && lambda > b.lambda)
                                }
                            };
                            if replace {
                                best[ti] = Some(Best { score: Some(score), kernel_idx: ki, lambda });
                            }
                        }
                    }
                    Err(e) => {
                        failures.push(format!("kernel #{ki} {c_kernel:?}, lambda {lambda:.6e}: {e}"));
                    }
                }
            }
        }
    }

    let mut models = Vec::with_capacity(targets.len());
    for (ti, target) in targets.iter().enumerate() {
        let Some(b) = &best[ti] else {
            return Err(Error::Fit(failures.join("\n")));
        };
        let c_kernel = c_kernel_grid[b.kernel_idx].clone();
        let kc = gram_self(&c_kernel, c_train)?;
        let llt = factor_ridge(kc.entries(), b.lambda * m as f64)?;
        models.push(CmeModel {
            c_train: c_train.to_owned(),
            a_train: target.targets.to_owned(),
            c_kernel,
            a_kernel: target.kernel.clone(),
            lambda: b.lambda,
            loo: b.score,
            llt,
        });
    }
    Ok(models)
}

/// Fit a single conditional-mean-embedding regressor.
pub fn fit_krr(
    c_train: MatRef<'_, f64>,
    a_train: MatRef<'_, f64>,
    a_kernel: &KernelSpec,
    c_kernel_grid: &[KernelSpec],
    lambda_grid: &[f64],
) -> Result<CmeModel> {
    let mut models = fit_krr_multi(
        c_train,
        &[RegressionTarget { targets: a_train, kernel: a_kernel }],
        c_kernel_grid,
        lambda_grid,
    )?;
    Ok(models.pop().expect("one target yields one model"))
}

/// Residual inner-product Gram matrix on test data:
/// entry (i, j) of the unsymmetrized matrix is
/// k_a(a_i, a_j) - ⟨μ̂₁(c_i), φ(a_j)⟩ - ⟨φ(a_i), μ̂₂(c_j)⟩ + ⟨μ̂₁(c_i), μ̂₂(c_j)⟩,
/// and the result is symmetrized by averaging with the swapped-model
/// transpose. `None` stands for the zero predictor, which keeps the raw
/// kernel matrix on that side.
#[derive(Debug, Clone)]
pub struct CenteredGram {
    entries: Mat<f64>,
    zero_pair: (bool, bool),
}

impl CenteredGram {
    pub fn entries(&self) -> MatRef<'_, f64> {
        self.entries.as_ref()
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Which of the two predictor slots were the zero predictor.
    pub fn zero_pair(&self) -> (bool, bool) {
        self.zero_pair
    }

    /// Wrap a precomputed matrix (e.g. a constant matrix standing in for a
    /// dropped factor in marginal-dependence tests).
    pub fn from_entries(entries: Mat<f64>) -> Self {
        CenteredGram { entries, zero_pair: (true, true) }
    }
}

pub fn centered_gram(
    model1: Option<&CmeModel>,
    model2: Option<&CmeModel>,
    a_kernel: &KernelSpec,
    a_test: MatRef<'_, f64>,
    c_test: MatRef<'_, f64>,
) -> Result<CenteredGram> {
    if a_test.nrows() != c_test.nrows() {
        return Err(Error::Input(format!(
            "test targets have {} rows but conditioning points have {}",
            a_test.nrows(),
            c_test.nrows()
        )));
    }
    for model in [model1, model2].into_iter().flatten() {
        if model.a_kernel() != a_kernel {
            return Err(Error::Config(
                "centered_gram models must share the target kernel".into(),
            ));
        }
    }
    let n = a_test.nrows();
    let base = gram_self(a_kernel, a_test)?;
    let mut raw = base.into_entries();

    if let Some(m1) = model1 {
        let p1 = m1.predict_cross_kernel(c_test, a_test)?;
        for j in 0..n {
            for i in 0..n {
                raw[(i, j)] -= p1[(i, j)];
            }
        }
    }
    if let Some(m2) = model2 {
        let p2 = m2.predict_cross_kernel(c_test, a_test)?;
        for j in 0..n {
            for i in 0..n {
                raw[(i, j)] -= p2[(j, i)];
            }
        }
    }
    if let (Some(m1), Some(m2)) = (model1, model2) {
        let z1 = m1.solved_cross_c(c_test)?;
        let z2 = m2.solved_cross_c(c_test)?;
        let k12 = gram(a_kernel, m1.a_train.as_ref(), m2.a_train.as_ref())?;
        let q = z1.transpose() * (k12.entries() * &z2);
        for j in 0..n {
            for i in 0..n {
                raw[(i, j)] += q[(i, j)];
            }
        }
    }

    // Symmetrize: ½(K + Kᵀ), which is exact whenever the two models coincide.
    let sym = Mat::from_fn(n, n, |i, j| 0.5 * (raw[(i, j)] + raw[(j, i)]));
    for j in 0..n {
        for i in 0..n {
            if !sym[(i, j)].is_finite() {
                return Err(Error::Numerical(format!(
                    "centered Gram entry ({i}, {j}) is not finite"
                )));
            }
        }
    }
    Ok(CenteredGram { entries: sym, zero_pair: (model1.is_none(), model2.is_none()) })
}

/// Spectral norm of a symmetric matrix by power iteration with a
/// deterministic start vector.
pub fn spectral_norm_sym(m: MatRef<'_, f64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Mat::from_fn(n, 1, |_, _| 1.0 / (n as f64).sqrt());
    let mut norm = 0.0;
    for _ in 0..100 {
        let w = m * &v;
        let wn = (0..n).map(|i| w[(i, 0)] * w[(i, 0)]).sum::<f64>().sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        let prev = norm;
        norm = wn;
        for i in 0..n {
            v[(i, 0)] = w[(i, 0)] / wn;
        }
        if (norm - prev).abs() <= 1e-12 * norm {
            break;
        }
    }
    norm
}

/// The default λ grid {10δ, 10²δ, ..., 10⁷δ} anchored at δ = ‖K_C‖₂ ε for
/// single-precision machine ε.
///
/// The single-precision anchor is what makes the grid span a useful
/// regularization range (λ·m from ~1e-2 up to ~1e4 at typical scales);
/// anchoring at the f64 ε caps the whole grid nine decades lower, every
/// candidate quasi-interpolates, and tests on noisy targets lose level
/// control. All arithmetic stays in f64.
pub fn default_lambda_grid(kc_spectral_norm: f64) -> Vec<f64> {
    let delta = kc_spectral_norm * f32::EPSILON as f64;
    (1..=7).map(|k| 10f64.powi(k) * delta).collect()
}

/// Default bandwidths σ² for the conditioning kernel search.
pub fn default_bandwidth_grid() -> Vec<f64> {
    vec![0.1, 0.2, 0.5, 1.0, 1.5, 2.0]
}

/// Default conditioning kernel grid: Gaussians over the bandwidth grid.
pub fn default_c_kernel_grid() -> Vec<KernelSpec> {
    default_bandwidth_grid().into_iter().map(KernelSpec::gaussian).collect()
}

/// Default λ grid anchored at the largest spectral norm over the candidate
/// conditioning kernels on this training set.
pub fn default_lambda_grid_for(
    c_train: MatRef<'_, f64>,
    c_kernel_grid: &[KernelSpec],
) -> Result<Vec<f64>> {
    let mut max_norm: f64 = 0.0;
    for k in c_kernel_grid {
        let g = gram_self(k, c_train)?;
        max_norm = max_norm.max(spectral_norm_sym(g.entries()));
    }
    if max_norm == 0.0 {
        return Err(Error::Degenerate("all candidate kernel matrices are zero".into()));
    }
    Ok(default_lambda_grid(max_norm))
}
