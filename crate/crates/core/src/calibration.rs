//! p-value calibration: wild bootstrap with Rademacher signs, and the
//! moment-matched Gamma approximation.

use faer::{Mat, MatRef};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::stream_rng;
use crate::special::gamma_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of resamples K.
    pub num_resamples: usize,
    pub rng_seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { num_resamples: 1000, rng_seed: 0 }
    }
}

/// Draw K Rademacher vectors of length n from a dedicated stream.
pub fn rademacher_draws(config: &BootstrapConfig, n: usize) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(config.rng_seed, "wild-bootstrap", 0);
    (0..config.num_resamples)
        .map(|_| (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect())
        .collect()
}

/// Resampled statistics V̂*_k = (1/n²) Σ_ij q_i q_j (Ka ⊙ Kc ⊙ Kb)_ij for the
/// given sign vectors. With q = 1 this reproduces the observed V-statistic
/// bit-exactly.
pub fn resample_stats(
    ka: MatRef<'_, f64>,
    kc: MatRef<'_, f64>,
    kb: MatRef<'_, f64>,
    draws: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let n = ka.nrows();
    for m in [&ka, &kc, &kb] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::Input("resample matrices must be square and same-size".into()));
        }
    }
    // Same association as v_statistic: (q_i q_j) * (ka*kc*kb).
    let prod = Mat::from_fn(n, n, |i, j| ka[(i, j)] * kc[(i, j)] * kb[(i, j)]);
    let nf = n as f64 * n as f64;
    let mut out = Vec::with_capacity(draws.len());
    for q in draws {
        if q.len() != n {
            return Err(Error::Input("sign vector length does not match matrices".into()));
        }
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                total += (q[i] * q[j]) * prod[(i, j)];
            }
        }
        out.push(total / nf);
    }
    Ok(out)
}

/// Add-one p-value: (1 + #{k : observed ≤ V̂*_k}) / (K + 1).
///
/// Small negative observed values (round-off) are clamped to zero before the
/// comparison; the raw resample values are used as-is.
pub fn pvalue_from_resamples(observed: f64, resamples: &[f64]) -> f64 {
    let obs = observed.max(0.0);
    let exceed = resamples.iter().filter(|v| obs <= **v).count();
    (1 + exceed) as f64 / (resamples.len() + 1) as f64
}

/// Wild-bootstrap p-value for a statistic computed from these matrices with
/// q = 1 (including any H-centering already applied to `ka`).
pub fn wild_bootstrap_pvalue(
    ka: MatRef<'_, f64>,
    kc: MatRef<'_, f64>,
    kb: MatRef<'_, f64>,
    observed: f64,
    config: &BootstrapConfig,
) -> Result<f64> {
    if config.num_resamples < 1 {
        return Err(Error::Config("wild bootstrap needs at least one resample".into()));
    }
    let draws = rademacher_draws(config, ka.nrows());
    let stats = resample_stats(ka, kc, kb, &draws)?;
    Ok(pvalue_from_resamples(observed, &stats))
}

/// Moment-matched Gamma parameters for the statistic (1/n²) tr(KL) under the
/// null, treating the two matrices as independent: μ = tr(K) tr(L) / n² and
/// σ² = 2 tr(K²) tr(L²) / n⁴ estimate the mean and variance of n times the
/// statistic, and the fit has shape k = μ²/σ² and scale θ = σ²/(nμ)
/// (fitted mean μ/n, fitted variance σ²/n²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub scale: f64,
    pub mean: f64,
    pub variance: f64,
    pub n: usize,
}

pub fn gamma_params(k_mat: MatRef<'_, f64>, l_mat: MatRef<'_, f64>) -> Result<GammaParams> {
    let n = k_mat.nrows();
    if n == 0 || k_mat.ncols() != n || l_mat.nrows() != n || l_mat.ncols() != n {
        return Err(Error::Input("gamma approximation needs square same-size matrices".into()));
    }
    let nf = n as f64;
    let trace = |m: MatRef<'_, f64>| (0..n).map(|i| m[(i, i)]).sum::<f64>();
    let trace_sq = |m: MatRef<'_, f64>| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += m[(i, j)] * m[(j, i)];
            }
        }
        s
    };
    let mean = trace(k_mat) * trace(l_mat) / (nf * nf);
    let var = 2.0 * trace_sq(k_mat) * trace_sq(l_mat) / (nf * nf * nf * nf);
    if !(mean > 0.0) {
        return Err(Error::Degenerate(format!(
            "gamma approximation needs a positive mean, got {mean}"
        )));
    }
    if !(var > 0.0) {
        return Err(Error::Degenerate(format!(
            "gamma approximation needs a positive variance, got {var}"
        )));
    }
    Ok(GammaParams { shape: mean * mean / var, scale: var / (nf * mean), mean, variance: var, n })
}

/// Upper-tail Gamma p-value 1 - CDF(observed) under the moment-matched fit.
pub fn gamma_pvalue(k_mat: MatRef<'_, f64>, l_mat: MatRef<'_, f64>, observed: f64) -> Result<f64> {
    let p = gamma_params(k_mat, l_mat)?;
    let cdf = gamma_cdf(p.shape, p.scale, observed.max(0.0))?;
    Ok(1.0 - cdf)
}
