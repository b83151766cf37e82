//! Kernel evaluation and Gram-matrix construction.
//!
//! The Gaussian kernel uses the convention k(x, x') = exp(-‖x - x'‖² / σ²).
//! Note that σ² is *not* multiplied by two; bandwidths taken from the
//! literature may need rescaling.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A kernel family together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    /// k(x, y) = exp(-‖x - y‖² / σ²), bounded by 1.
    Gaussian { bandwidth_sq: f64 },
    /// k(x, y) = exp(-Σᵢ (xᵢ - yᵢ)² γᵢ² / d), one weight per coordinate.
    ArdGaussian { weights: Vec<f64> },
    /// k(x, y) = ⟨x, y⟩.
    Linear,
    /// k(x, y) = 1 if x = y else 0.
    Delta,
    /// k(x, y) = 1.
    Constant,
    /// k(x, y) = (⟨x, y⟩ + offset)^degree.
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    pub fn gaussian(bandwidth_sq: f64) -> Self {
        KernelSpec::Gaussian { bandwidth_sq }
    }

    /// Whether |k| ≤ 1 for all inputs.
    pub fn is_bounded_by_one(&self) -> bool {
        matches!(
            self,
            KernelSpec::Gaussian { .. }
                | KernelSpec::ArdGaussian { .. }
                | KernelSpec::Delta
                | KernelSpec::Constant
        )
    }

    /// Validate the parameters against an input dimension.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::Input("kernel input dimension must be >= 1".into()));
        }
        match self {
            KernelSpec::Gaussian { bandwidth_sq } => {
                if !(*bandwidth_sq > 0.0) {
                    return Err(Error::Config(format!(
                        "gaussian bandwidth_sq must be positive, got {bandwidth_sq}"
                    )));
                }
            }
            KernelSpec::ArdGaussian { weights } => {
                if weights.is_empty() {
                    return Err(Error::Config("ard_gaussian needs at least one weight".into()));
                }
                if weights.len() != dim {
                    return Err(Error::Input(format!(
                        "ard_gaussian has {} weights but inputs have dimension {dim}",
                        weights.len()
                    )));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(Error::Config("ard_gaussian weights must be non-negative".into()));
                }
            }
            KernelSpec::Polynomial { degree, .. } => {
                if *degree == 0 {
                    return Err(Error::Config("polynomial degree must be positive".into()));
                }
            }
            KernelSpec::Linear | KernelSpec::Delta | KernelSpec::Constant => {}
        }
        Ok(())
    }

    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            KernelSpec::Gaussian { bandwidth_sq } => {
                let mut d2 = 0.0;
                for k in 0..x.len() {
                    let d = x[k] - y[k];
                    d2 += d * d;
                }
                (-d2 / bandwidth_sq).exp()
            }
            KernelSpec::ArdGaussian { weights } => {
                let d = x.len() as f64;
                let mut s = 0.0;
                for k in 0..x.len() {
                    let diff = x[k] - y[k];
                    s += diff * diff * weights[k] * weights[k];
                }
                (-s / d).exp()
            }
            KernelSpec::Linear => dot(x, y),
            KernelSpec::Delta => {
                if x == y {
                    1.0
                } else {
                    0.0
                }
            }
            KernelSpec::Constant => 1.0,
            KernelSpec::Polynomial { degree, offset } => (dot(x, y) + offset).powi(*degree as i32),
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..x.len() {
        s += x[k] * y[k];
    }
    s
}

/// Evaluate k(x, y) for a single pair of points.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Input(format!(
            "kernel arguments have mismatched dimensions {} and {}",
            x.len(),
            y.len()
        )));
    }
    spec.validate(x.len())?;
    Ok(spec.eval_unchecked(x, y))
}

/// Pairwise kernel evaluations over two sample sets.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    entries: Mat<f64>,
    /// Row and column points were the same sample set.
    same_points: bool,
}

impl GramMatrix {
    pub fn entries(&self) -> MatRef<'_, f64> {
        self.entries.as_ref()
    }

    pub fn into_entries(self) -> Mat<f64> {
        self.entries
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn same_points(&self) -> bool {
        self.same_points
    }

    /// Wrap a precomputed matrix, e.g. a constant matrix standing in for a
    /// kernel over a dropped variable.
    pub fn from_entries(entries: Mat<f64>, same_points: bool) -> Self {
        GramMatrix { entries, same_points }
    }
}

/// Copy the rows of a column-major matrix into contiguous row slices.
fn to_rows(x: MatRef<'_, f64>) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .map(|i| (0..x.ncols()).map(|j| x[(i, j)]).collect())
        .collect()
}

/// Gram matrix of kernel evaluations between the rows of `x` and the rows of `y`.
///
/// Entry (i, j) is exactly `eval_kernel(spec, x_i, y_j)`.
pub fn gram(spec: &KernelSpec, x: MatRef<'_, f64>, y: MatRef<'_, f64>) -> Result<GramMatrix> {
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::Input("gram matrix over an empty sample set".into()));
    }
    if x.ncols() != y.ncols() {
        return Err(Error::Input(format!(
            "gram inputs have mismatched dimensions {} and {}",
            x.ncols(),
            y.ncols()
        )));
    }
    spec.validate(x.ncols())?;
    let xr = to_rows(x);
    let yr = to_rows(y);
    let entries = Mat::from_fn(x.nrows(), y.nrows(), |i, j| spec.eval_unchecked(&xr[i], &yr[j]));
    let same = x.nrows() == y.nrows() && xr == yr;
    Ok(GramMatrix { entries, same_points: same })
}

/// Gram matrix of a sample set against itself.
pub fn gram_self(spec: &KernelSpec, x: MatRef<'_, f64>) -> Result<GramMatrix> {
    gram(spec, x, x)
}
