//! Regression-based baseline tests: the generalised covariance measure (GCM)
//! and the regression-based predictor test RBPT2, with its bias-corrected
//! variant.

use faer::{Mat, MatRef, Side};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::stream_rng;
use crate::special::normal_cdf;

/// Result of a GCM test.
///
/// `t` holds the standardized statistics T_kl for every pair of residual
/// coordinates; `sigma` is their correlation matrix in the multi-dimensional
/// regime (unit diagonal by construction).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GcmResult {
    pub t: Vec<Vec<f64>>,
    pub s: f64,
    pub p_value: f64,
    pub sigma: Option<Vec<Vec<f64>>>,
}

/// GCM from regression predictions: residual products
/// R_ikl = (a_i - f̂(c_i))_k (b_i - ĝ(c_i))_l are studentized per (k, l) as
/// T_kl = √n R̄_kl / sd(R_kl). With one-dimensional A and B the p-value is
/// the two-sided normal tail of T₁₁; otherwise S = max_kl |T_kl| is
/// calibrated by Monte-Carlo draws from N(0, Σ̂).
pub fn gcm_test(
    a_test: MatRef<'_, f64>,
    b_test: MatRef<'_, f64>,
    f_pred: MatRef<'_, f64>,
    g_pred: MatRef<'_, f64>,
    mc_draws: usize,
    rng_seed: u64,
) -> Result<GcmResult> {
    let n = a_test.nrows();
    if n < 2 {
        return Err(Error::Input("gcm needs at least 2 test rows".into()));
    }
    if f_pred.nrows() != n || g_pred.nrows() != n || b_test.nrows() != n {
        return Err(Error::Input("gcm inputs must share the row count".into()));
    }
    if f_pred.ncols() != a_test.ncols() || g_pred.ncols() != b_test.ncols() {
        return Err(Error::Input("gcm predictions must match the target dimensions".into()));
    }
    let da = a_test.ncols();
    let db = b_test.ncols();
    let pairs = da * db;
    let nf = n as f64;

    // residual products, flattened over (k, l)
    let mut rbar = vec![0.0; pairs];
    let mut rsq = vec![0.0; pairs];
    let mut products = Mat::<f64>::zeros(n, pairs);
    for i in 0..n {
        for k in 0..da {
            let ra = a_test[(i, k)] - f_pred[(i, k)];
            for l in 0..db {
                let rb = b_test[(i, l)] - g_pred[(i, l)];
                let v = ra * rb;
                let idx = k * db + l;
                products[(i, idx)] = v;
                rbar[idx] += v;
                rsq[idx] += v * v;
            }
        }
    }
    let mut t_flat = vec![0.0; pairs];
    let mut sd = vec![0.0; pairs];
    for idx in 0..pairs {
        rbar[idx] /= nf;
        let var = rsq[idx] / nf - rbar[idx] * rbar[idx];
        if !(var > 0.0) {
            return Err(Error::Degenerate(format!(
                "residual-product variance is {var} for coordinate pair {idx}"
            )));
        }
        sd[idx] = var.sqrt();
        t_flat[idx] = nf.sqrt() * rbar[idx] / sd[idx];
    }
    let t: Vec<Vec<f64>> =
        (0..da).map(|k| (0..db).map(|l| t_flat[k * db + l]).collect()).collect();

    if pairs == 1 {
        let s = t_flat[0].abs();
        let p_value = 2.0 * (1.0 - normal_cdf(s));
        return Ok(GcmResult { t, s, p_value, sigma: None });
    }

    // correlation matrix of the residual products
    let mut sigma = Mat::<f64>::zeros(pairs, pairs);
    for p in 0..pairs {
        for q in 0..pairs {
            let mut cross = 0.0;
            for i in 0..n {
                cross += products[(i, p)] * products[(i, q)];
            }
            sigma[(p, q)] = (cross / nf - rbar[p] * rbar[q]) / (sd[p] * sd[q]);
        }
    }
    // force exact unit diagonal and symmetry against round-off
    for p in 0..pairs {
        sigma[(p, p)] = 1.0;
        for q in 0..p {
            let avg = 0.5 * (sigma[(p, q)] + sigma[(q, p)]);
            sigma[(p, q)] = avg;
            sigma[(q, p)] = avg;
        }
    }

    let s = t_flat.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if mc_draws == 0 {
        return Err(Error::Config("multi-dimensional gcm needs mc_draws >= 1".into()));
    }
    // sample max |z| for z ~ N(0, Σ̂) through the eigendecomposition,
    // clamping tiny negative eigenvalues
    let eig = sigma
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::Numerical("eigendecomposition of the GCM correlation matrix failed".into()))?;
    let u = eig.U();
    let scale: Vec<f64> = (0..pairs).map(|i| eig.S()[i].max(0.0).sqrt()).collect();
    let mut rng = stream_rng(rng_seed, "gcm-null-draws", 0);
    let mut exceed = 0usize;
    for _ in 0..mc_draws {
        let g: Vec<f64> = (0..pairs).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut max_abs = 0.0f64;
        for p in 0..pairs {
            let mut z = 0.0;
            for q in 0..pairs {
                z += u[(p, q)] * scale[q] * g[q];
            }
            max_abs = max_abs.max(z.abs());
        }
        if max_abs >= s {
            exceed += 1;
        }
    }
    let p_value = (1 + exceed) as f64 / (mc_draws + 1) as f64;
    let sigma_rows: Vec<Vec<f64>> =
        (0..pairs).map(|p| (0..pairs).map(|q| sigma[(p, q)]).collect()).collect();
    Ok(GcmResult { t, s, p_value, sigma: Some(sigma_rows) })
}

/// Result of an RBPT2 test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RbptResult {
    /// Per-sample loss differences T_i.
    pub t_values: Vec<f64>,
    pub s: f64,
    pub p_value: f64,
    pub corrected: bool,
}

/// RBPT2 from predictions of the two regressors on held-out rows:
/// T_i = ‖h(c_i) - a_i‖² - ‖g(b_i, c_i) - a_i‖², plus ‖g - h‖² when the bias
/// correction is on; S = √n T̄ / sd(T) and p = 1 - Φ(S), one-sided.
///
/// Both prediction matrices must come from models fitted on training rows
/// disjoint from these test rows.
pub fn rbpt2_test(
    a_test: MatRef<'_, f64>,
    g_pred: MatRef<'_, f64>,
    h_pred: MatRef<'_, f64>,
    corrected: bool,
) -> Result<RbptResult> {
    let n = a_test.nrows();
    if n < 2 {
        return Err(Error::Input("rbpt2 needs at least 2 test rows".into()));
    }
    let d = a_test.ncols();
    if g_pred.nrows() != n || h_pred.nrows() != n || g_pred.ncols() != d || h_pred.ncols() != d {
        return Err(Error::Input("rbpt2 predictions must match the test targets' shape".into()));
    }
    let mut t_values = Vec::with_capacity(n);
    for i in 0..n {
        let mut loss_h = 0.0;
        let mut loss_g = 0.0;
        let mut gap = 0.0;
        for j in 0..d {
            let dh = h_pred[(i, j)] - a_test[(i, j)];
            let dg = g_pred[(i, j)] - a_test[(i, j)];
            let dgh = g_pred[(i, j)] - h_pred[(i, j)];
            loss_h += dh * dh;
            loss_g += dg * dg;
            gap += dgh * dgh;
        }
        let mut t = loss_h - loss_g;
        if corrected {
            t += gap;
        }
        t_values.push(t);
    }
    let nf = n as f64;
    let mean = t_values.iter().sum::<f64>() / nf;
    let var = t_values.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / nf;
    if !(var > 0.0) {
        return Err(Error::Degenerate(format!("loss differences have zero variance (mean {mean})")));
    }
    let s = nf.sqrt() * mean / var.sqrt();
    let p_value = 1.0 - normal_cdf(s);
    Ok(RbptResult { t_values, s, p_value, corrected })
}
