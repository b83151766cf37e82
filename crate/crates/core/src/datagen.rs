//! Synthetic dataset generators, the cluster-shuffle simulated null, and CSV
//! ingestion.

use std::path::Path;

use faer::{Mat, MatRef};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::stream_rng;

/// Aligned samples of (A, B, C) with a shared row count.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub a: Mat<f64>,
    pub b: Mat<f64>,
    pub c: Mat<f64>,
    /// Generator name and parameters, or source file path.
    pub provenance: String,
}

impl Dataset {
    pub fn new(a: Mat<f64>, b: Mat<f64>, c: Mat<f64>, provenance: String) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::Input("dataset must have at least one row".into()));
        }
        if b.nrows() != n || c.nrows() != n {
            return Err(Error::Input(format!(
                "A, B, C must share a row count, got {n}, {}, {}",
                b.nrows(),
                c.nrows()
            )));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c)] {
            if m.ncols() == 0 {
                return Err(Error::Input(format!("{name} must have at least one column")));
            }
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    if !m[(i, j)].is_finite() {
                        return Err(Error::Input(format!(
                            "{name}[{i}, {j}] is not finite"
                        )));
                    }
                }
            }
        }
        Ok(Dataset { a, b, c, provenance })
    }

    pub fn len(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let take = |m: &Mat<f64>| Mat::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)]);
        Dataset {
            a: take(&self.a),
            b: take(&self.b),
            c: take(&self.c),
            provenance: self.provenance.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    Null,
    Alternative,
}

impl Hypothesis {
    pub fn name(&self) -> &'static str {
        match self {
            Hypothesis::Null => "h0",
            Hypothesis::Alternative => "h1",
        }
    }
}

/// A convex combination of x, tanh(x), and tanh(x³); every component is
/// non-decreasing, so the combination is too.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RandomMonotone {
    weights: [f64; 3],
}

impl RandomMonotone {
    /// Weights drawn uniformly on the simplex (normalized exponentials).
    pub(crate) fn draw(rng: &mut impl Rng) -> Self {
        let mut w = [0.0; 3];
        let mut total = 0.0;
        for wi in w.iter_mut() {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            *wi = -u.ln();
            total += *wi;
        }
        for wi in w.iter_mut() {
            *wi /= total;
        }
        RandomMonotone { weights: w }
    }

    pub(crate) fn eval(&self, x: f64) -> f64 {
        self.weights[0] * x + self.weights[1] * x.tanh() + self.weights[2] * (x * x * x).tanh()
    }
}

// the noise draws are only inspected by tests
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct PostNonlinearNoise {
    pub xi_a: Vec<f64>,
    pub xi_b: Vec<f64>,
}

pub(crate) fn gen_postnonlinear_with_noise(
    d: usize,
    n: usize,
    hyp: Hypothesis,
    rng_seed: u64,
) -> Result<(Dataset, PostNonlinearNoise)> {
    if d < 1 {
        return Err(Error::Config("post-nonlinear model needs d >= 1".into()));
    }
    if n < 2 {
        return Err(Error::Config("post-nonlinear model needs N >= 2".into()));
    }
    let mut fn_rng = stream_rng(rng_seed, "postnonlinear-functions", 0);
    let g_a = RandomMonotone::draw(&mut fn_rng);
    let f_a: Vec<RandomMonotone> = (0..d).map(|_| RandomMonotone::draw(&mut fn_rng)).collect();
    let g_b = RandomMonotone::draw(&mut fn_rng);
    let f_b: Vec<RandomMonotone> = (0..d).map(|_| RandomMonotone::draw(&mut fn_rng)).collect();

    let mut rng = stream_rng(rng_seed, "postnonlinear-noise", 0);
    let c_std = (1.0 / d as f64).sqrt();
    let mut c = Mat::<f64>::zeros(n, d);
    let mut a = Mat::<f64>::zeros(n, 1);
    let mut b = Mat::<f64>::zeros(n, 1);
    let mut xi_a_all = Vec::with_capacity(n);
    let mut xi_b_all = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            c[(i, j)] = c_std * z;
        }
        let e_a: f64 = rng.sample(StandardNormal);
        let e_b: f64 = rng.sample(StandardNormal);
        // Hidden noise lives only on the first coordinate; shared under the
        // alternative, independent under the null.
        let (xi_a, xi_b) = match hyp {
            Hypothesis::Null => {
                let xa: f64 = rng.sample(StandardNormal);
                let xb: f64 = rng.sample(StandardNormal);
                (xa, xb)
            }
            Hypothesis::Alternative => {
                let shared: f64 = rng.sample(StandardNormal);
                (shared, shared)
            }
        };
        xi_a_all.push(xi_a);
        xi_b_all.push(xi_b);
        let scale = 1.0 / (d as f64 + 1.0);
        let mut sum_a = e_a;
        let mut sum_b = e_b;
        for j in 0..d {
            let noise_a = if j == 0 { xi_a } else { 0.0 };
            let noise_b = if j == 0 { xi_b } else { 0.0 };
            sum_a += f_a[j].eval(c[(i, j)] + noise_a);
            sum_b += f_b[j].eval(c[(i, j)] + noise_b);
        }
        a[(i, 0)] = g_a.eval(scale * sum_a);
        b[(i, 0)] = g_b.eval(scale * sum_b);
    }
    let ds = Dataset::new(
        a,
        b,
        c,
        format!("postnonlinear(d={d}, n={n}, hyp={}, seed={rng_seed})", hyp.name()),
    )?;
    Ok((ds, PostNonlinearNoise { xi_a: xi_a_all, xi_b: xi_b_all }))
}

/// Post-nonlinear model: A and B are random monotone functions of noisy
/// linear views of a d-dimensional C ~ N(0, I/d), with the conditional
/// dependence hidden in the first coordinate's noise.
pub fn gen_postnonlinear(d: usize, n: usize, hyp: Hypothesis, rng_seed: u64) -> Result<Dataset> {
    gen_postnonlinear_with_noise(d, n, hyp, rng_seed).map(|(ds, _)| ds)
}

/// Circular task: C is uniform on the unit circle, A and B are noisy copies
/// of C; under the alternative the first coordinate's noise is shared.
pub fn gen_circular(n: usize, gamma: f64, hyp: Hypothesis, rng_seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Config("circular task needs N >= 2".into()));
    }
    if !(gamma >= 0.0) {
        return Err(Error::Config(format!("gamma must be non-negative, got {gamma}")));
    }
    let mut rng = stream_rng(rng_seed, "circular", 0);
    let normal2 = |rng: &mut rand_chacha::ChaCha8Rng| -> [f64; 2] {
        [rng.sample(StandardNormal), rng.sample(StandardNormal)]
    };
    let mut a = Mat::<f64>::zeros(n, 2);
    let mut b = Mat::<f64>::zeros(n, 2);
    let mut c = Mat::<f64>::zeros(n, 2);
    for i in 0..n {
        let mut xi1 = normal2(&mut rng);
        let mut norm = (xi1[0] * xi1[0] + xi1[1] * xi1[1]).sqrt();
        while norm < 1e-12 {
            xi1 = normal2(&mut rng);
            norm = (xi1[0] * xi1[0] + xi1[1] * xi1[1]).sqrt();
        }
        let ci = [xi1[0] / norm, xi1[1] / norm];
        let xi2 = normal2(&mut rng);
        let xi3 = normal2(&mut rng);
        let (na, nb) = match hyp {
            Hypothesis::Null => (normal2(&mut rng), normal2(&mut rng)),
            Hypothesis::Alternative => {
                let shared: f64 = rng.sample(StandardNormal);
                let aa: f64 = rng.sample(StandardNormal);
                let bb: f64 = rng.sample(StandardNormal);
                ([shared, aa], [shared, bb])
            }
        };
        for k in 0..2 {
            c[(i, k)] = ci[k];
            a[(i, k)] = ci[k] + gamma * xi2[k] + gamma * na[k];
            b[(i, k)] = ci[k] + gamma * xi3[k] + gamma * nb[k];
        }
    }
    Dataset::new(
        a,
        b,
        c,
        format!("circular(n={n}, gamma={gamma}, hyp={}, seed={rng_seed})", hyp.name()),
    )
}

/// Simulated null: bin the first C column into equal-frequency clusters and
/// permute the A rows uniformly within each cluster, leaving B and C alone.
pub fn simulate_null_shuffle(dataset: &Dataset, n_clusters: usize, rng_seed: u64) -> Result<Dataset> {
    let n = dataset.len();
    if n_clusters < 1 {
        return Err(Error::Config("need at least one cluster".into()));
    }
    if n_clusters > n {
        return Err(Error::Config(format!(
            "n_clusters = {n_clusters} exceeds the dataset size {n}"
        )));
    }
    // Stable order by the first conditioning column.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        dataset.c[(i, 0)]
            .partial_cmp(&dataset.c[(j, 0)])
            .expect("dataset values are finite")
            .then(i.cmp(&j))
    });

    let mut rng = stream_rng(rng_seed, "cluster-shuffle", 0);
    let base = n / n_clusters;
    let extra = n % n_clusters;
    let mut dest: Vec<usize> = (0..n).collect();
    let mut start = 0;
    for cluster in 0..n_clusters {
        let size = base + if cluster < extra { 1 } else { 0 };
        let bin = &order[start..start + size];
        // Fisher-Yates within the bin: dest[original row] = shuffled source row.
        let mut shuffled: Vec<usize> = bin.to_vec();
        for i in (1..shuffled.len()).rev() {
            let j = rng.gen_range(0..=i);
            shuffled.swap(i, j);
        }
        for (pos, &row) in bin.iter().enumerate() {
            dest[row] = shuffled[pos];
        }
        start += size;
    }
    let a = Mat::from_fn(n, dataset.a.ncols(), |i, j| dataset.a[(dest[i], j)]);
    Dataset::new(
        a,
        dataset.b.clone(),
        dataset.c.clone(),
        format!(
            "{} | cluster-shuffled(A, clusters={n_clusters}, seed={rng_seed})",
            dataset.provenance
        ),
    )
}

/// Per-column means and population standard deviations.
#[derive(Debug, Clone)]
pub struct ColumnStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

pub fn column_stats(m: MatRef<'_, f64>) -> ColumnStats {
    let n = m.nrows() as f64;
    let mut means = Vec::with_capacity(m.ncols());
    let mut stds = Vec::with_capacity(m.ncols());
    for j in 0..m.ncols() {
        let mean = (0..m.nrows()).map(|i| m[(i, j)]).sum::<f64>() / n;
        let var = (0..m.nrows()).map(|i| (m[(i, j)] - mean) * (m[(i, j)] - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        means.push(mean);
        stds.push(if std > 0.0 { std } else { 1.0 });
    }
    ColumnStats { means, stds }
}

pub fn apply_standardization(m: MatRef<'_, f64>, stats: &ColumnStats) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] - stats.means[j]) / stats.stds[j])
}

/// Zero-mean unit-variance per column, fitted and applied on the same data.
pub fn standardize(m: MatRef<'_, f64>) -> Mat<f64> {
    apply_standardization(m, &column_stats(m))
}

/// Standardize a dataset's columns using statistics from the dataset itself.
pub fn standardize_dataset(ds: &Dataset) -> Dataset {
    Dataset {
        a: standardize(ds.a.as_ref()),
        b: standardize(ds.b.as_ref()),
        c: standardize(ds.c.as_ref()),
        provenance: ds.provenance.clone(),
    }
}

/// Load named numeric columns from a headed CSV file.
pub fn load_csv(
    path: &Path,
    a_cols: &[String],
    b_cols: &[String],
    c_cols: &[String],
    standardize_cols: bool,
) -> Result<Dataset> {
    if a_cols.is_empty() || b_cols.is_empty() || c_cols.is_empty() {
        return Err(Error::Config("each of A, B, C needs at least one column".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Ingest(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Ingest(format!("cannot read header of {}: {e}", path.display())))?
        .clone();
    let col_index = |name: &String| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Ingest(format!("missing column '{name}' in {}", path.display())))
    };
    let a_idx: Vec<usize> = a_cols.iter().map(col_index).collect::<Result<_>>()?;
    let b_idx: Vec<usize> = b_cols.iter().map(col_index).collect::<Result<_>>()?;
    let c_idx: Vec<usize> = c_cols.iter().map(col_index).collect::<Result<_>>()?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Ingest(format!("row {}: {e}", row_no + 2)))?;
        let mut parsed = Vec::with_capacity(a_idx.len() + b_idx.len() + c_idx.len());
        for &idx in a_idx.iter().chain(&b_idx).chain(&c_idx) {
            let cell = record.get(idx).unwrap_or("");
            let value: f64 = cell.trim().parse().map_err(|_| {
                Error::Ingest(format!(
                    "non-numeric cell '{cell}' at row {}, column '{}'",
                    row_no + 2,
                    headers.get(idx).unwrap_or("?")
                ))
            })?;
            parsed.push(value);
        }
        rows.push(parsed);
    }
    if rows.is_empty() {
        return Err(Error::Ingest(format!("{} contains no data rows", path.display())));
    }
    let n = rows.len();
    let slice_mat = |offset: usize, width: usize| {
        Mat::from_fn(n, width, |i, j| rows[i][offset + j])
    };
    let mut a = slice_mat(0, a_idx.len());
    let mut b = slice_mat(a_idx.len(), b_idx.len());
    let mut c = slice_mat(a_idx.len() + b_idx.len(), c_idx.len());
    if standardize_cols {
        a = standardize(a.as_ref());
        b = standardize(b.as_ref());
        c = standardize(c.as_ref());
    }
    Dataset::new(a, b, c, path.display().to_string())
}

/// Write a dataset as CSV with columns a0.., b0.., c0.. at 17 significant
/// digits, which round-trips f64 exactly.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Ingest(format!("cannot create {}: {e}", path.display())))?;
    let mut header = Vec::new();
    for (tag, m) in [("a", &dataset.a), ("b", &dataset.b), ("c", &dataset.c)] {
        for j in 0..m.ncols() {
            header.push(format!("{tag}{j}"));
        }
    }
    writer.write_record(&header).map_err(|e| Error::Ingest(e.to_string()))?;
    for i in 0..dataset.len() {
        let mut row = Vec::with_capacity(header.len());
        for m in [&dataset.a, &dataset.b, &dataset.c] {
            for j in 0..m.ncols() {
                row.push(format!("{:.16e}", m[(i, j)]));
            }
        }
        writer.write_record(&row).map_err(|e| Error::Ingest(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Column names (a0.., b0.., c0..) matching `write_csv` output.
pub fn default_column_names(d_a: usize, d_b: usize, d_c: usize) -> (Vec<String>, Vec<String>, Vec<String>) {
    let names = |tag: &str, d: usize| (0..d).map(|j| format!("{tag}{j}")).collect();
    (names("a", d_a), names("b", d_b), names("c", d_c))
}
