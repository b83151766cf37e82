//! Shared oracles and helpers for the integration suites. Everything here is
//! deliberately independent of the library's computation paths: dense solves
//! use plain Gaussian elimination, integrals use Simpson quadrature, and
//! random data comes from a local generator.

#![allow(dead_code)]

use faer::Mat;
use splitkci::kernels::{eval_kernel, KernelSpec};

/// Minimal deterministic RNG (splitmix64 + Box-Muller), independent of the
/// library's seeding module.
pub struct TestRng {
    state: u64,
}

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng { state: seed.wrapping_mul(2654435769).wrapping_add(1) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> Mat<f64> {
        let vals: Vec<f64> = (0..rows * cols).map(|_| self.normal()).collect();
        Mat::from_fn(rows, cols, |i, j| vals[i * cols + j])
    }
}

/// Dense linear solve by Gaussian elimination with partial pivoting.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if m[row][col].abs() > m[pivot][col].abs() {
                pivot = row;
            }
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        assert!(m[col][col].abs() > 1e-300, "singular system in test oracle");
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for k in row + 1..n {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    x
}

pub fn rows_of(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Brute-force leave-one-out: refit on the m-1 remaining points with the same
/// absolute ridge λm and measure the held-out squared RKHS residual through
/// the kernel trick.
pub fn brute_force_loo(
    c_kernel: &KernelSpec,
    lambda: f64,
    c_train: &Mat<f64>,
    a_train: &Mat<f64>,
    a_kernel: &KernelSpec,
) -> f64 {
    let m = c_train.nrows();
    let c_rows = rows_of(c_train);
    let a_rows = rows_of(a_train);
    let ridge = lambda * m as f64;
    let mut total = 0.0;
    for held in 0..m {
        let keep: Vec<usize> = (0..m).filter(|&i| i != held).collect();
        let q = keep.len();
        // (K_C(-i) + λm I) α = K_{C(-i), c_held}
        let mut system = vec![vec![0.0; q]; q];
        for (r, &i) in keep.iter().enumerate() {
            for (s, &j) in keep.iter().enumerate() {
                system[r][s] = eval_kernel(c_kernel, &c_rows[i], &c_rows[j]).unwrap();
            }
            system[r][r] += ridge;
        }
        let k_held: Vec<f64> = keep
            .iter()
            .map(|&i| eval_kernel(c_kernel, &c_rows[i], &c_rows[held]).unwrap())
            .collect();
        let alpha = solve_dense(&system, &k_held);
        // ‖φ(a_held) - Σ_r α_r φ(a_r)‖² expanded with the target kernel
        let k_aa = eval_kernel(a_kernel, &a_rows[held], &a_rows[held]).unwrap();
        let mut cross = 0.0;
        for (r, &i) in keep.iter().enumerate() {
            cross += alpha[r] * eval_kernel(a_kernel, &a_rows[i], &a_rows[held]).unwrap();
        }
        let mut quad = 0.0;
        for (r, &i) in keep.iter().enumerate() {
            for (s, &j) in keep.iter().enumerate() {
                quad += alpha[r] * alpha[s] * eval_kernel(a_kernel, &a_rows[i], &a_rows[j]).unwrap();
            }
        }
        total += k_aa - 2.0 * cross + quad;
    }
    total
}

/// Scalar kernel ridge predictions f(x) = K_{xX}(K_X + λmI)⁻¹ y via the
/// dense test solver; used as the oracle for linear-target-kernel models.
pub fn scalar_krr_predict(
    c_kernel: &KernelSpec,
    lambda: f64,
    c_train: &Mat<f64>,
    y_train: &[f64],
    c_query: &Mat<f64>,
) -> Vec<f64> {
    let m = c_train.nrows();
    let c_rows = rows_of(c_train);
    let q_rows = rows_of(c_query);
    let mut system = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            system[i][j] = eval_kernel(c_kernel, &c_rows[i], &c_rows[j]).unwrap();
        }
        system[i][i] += lambda * m as f64;
    }
    let alpha = solve_dense(&system, y_train);
    q_rows
        .iter()
        .map(|qr| {
            (0..m)
                .map(|i| eval_kernel(c_kernel, qr, &c_rows[i]).unwrap() * alpha[i])
                .sum::<f64>()
        })
        .collect()
}

/// One-sided sign test: P(Bin(n, 1/2) >= k) computed from log binomial terms.
pub fn sign_test_pvalue(positives: usize, n: usize) -> f64 {
    let ln_gamma = splitkci::special::ln_gamma;
    let mut p = 0.0;
    for k in positives..=n {
        let ln_term = ln_gamma(n as f64 + 1.0)
            - ln_gamma(k as f64 + 1.0)
            - ln_gamma((n - k) as f64 + 1.0)
            - n as f64 * std::f64::consts::LN_2;
        p += ln_term.exp();
    }
    p.min(1.0)
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Simpson-quadrature oracle for the Gamma CDF; the normalization cancels
/// Γ(k) and θ^k by dividing two integrals of the unnormalized density.
pub fn gamma_cdf_quadrature(k: f64, theta: f64, x: f64) -> f64 {
    let integrand: Box<dyn Fn(f64) -> f64> = if k < 1.0 {
        Box::new(move |u: f64| (-u.powf(1.0 / k) / theta).exp())
    } else {
        Box::new(move |t: f64| t.powf(k - 1.0) * (-t / theta).exp())
    };
    let transform = |t: f64| if k < 1.0 { t.powf(k) } else { t };
    let simpson = |a: f64, b: f64, half_panels: usize| {
        let n = half_panels * 2;
        let h = (b - a) / n as f64;
        let mut s = integrand(a) + integrand(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * integrand(a + i as f64 * h);
        }
        s * h / 3.0
    };
    let tail = theta * (k + 40.0 * k.sqrt() + 60.0);
    let upper = transform(tail.max(x * 2.0 + 10.0 * theta));
    let num = simpson(0.0, transform(x), 200_000);
    let den = simpson(0.0, upper, 400_000);
    num / den
}
