//! Independent reference computations used by the integration tests.
//!
//! Nothing here calls the library's numerical code: bases come from explicit
//! monomial expansions, least squares from Gaussian elimination on the normal
//! equations, tail moments from the incomplete gamma function.
#![allow(dead_code, clippy::needless_range_loop)]

use statrs::function::gamma::{gamma, gamma_ur};

pub fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// The six lowest polynomials exactly as printed for the literal basis.
pub fn literal_closed_form(a: f64) -> [f64; 6] {
    [
        1.0,
        3f64.sqrt() * a,
        5f64.sqrt() * (3.0 * a * a - 1.0) / 2.0,
        7f64.sqrt() * (5.0 * a.powi(3) - 3.0 * a) / 2.0,
        9f64.sqrt() * (35.0 * a.powi(4) - 30.0 * a * a + 3.0) / 8.0,
        11f64.sqrt() * (63.0 * a.powi(5) - 70.0 * a.powi(3) + 15.0 * a) / 8.0,
    ]
}

/// Monomial coefficients of `sqrt(2n+1) P_n(2a - 1)`.
pub fn shifted_coeffs(n: usize) -> Vec<f64> {
    let norm = ((2 * n + 1) as f64).sqrt();
    (0..=n)
        .map(|j| {
            let sign = if (n + j).is_multiple_of(2) { 1.0 } else { -1.0 };
            norm * sign * binomial(n, j) * binomial(n + j, j)
        })
        .collect()
}

/// Monomial coefficients of `sqrt(2n+1) P_n(a)`.
pub fn literal_coeffs(n: usize) -> Vec<f64> {
    let norm = ((2 * n + 1) as f64).sqrt();
    let mut c = vec![0.0; n + 1];
    for j in 0..=n / 2 {
        let sign = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
        c[n - 2 * j] =
            norm * sign * binomial(n, j) * binomial(2 * n - 2 * j, n) / 2f64.powi(n as i32);
    }
    c
}

pub fn coeffs(n: usize, shifted: bool) -> Vec<f64> {
    if shifted {
        shifted_coeffs(n)
    } else {
        literal_coeffs(n)
    }
}

/// `order`-th derivative of the polynomial with monomial coefficients `c` at `x`.
pub fn poly_deriv(c: &[f64], order: usize, x: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(order)
        .map(|(j, &cj)| cj * factorial(j) / factorial(j - order) * x.powi((j - order) as i32))
        .sum()
}

/// Sum of absolute term magnitudes in `poly_deriv`; bounds its rounding error.
pub fn poly_deriv_magnitude(c: &[f64], order: usize, x: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(order)
        .map(|(j, &cj)| {
            (cj * factorial(j) / factorial(j - order) * x.powi((j - order) as i32)).abs()
        })
        .sum()
}

pub fn basis_row(degree: usize, shifted: bool, a: f64) -> Vec<f64> {
    (0..=degree)
        .map(|n| poly_deriv(&coeffs(n, shifted), 0, a))
        .collect()
}

pub fn basis_deriv_row(degree: usize, shifted: bool, order: usize, a: f64) -> Vec<f64> {
    (0..=degree)
        .map(|n| poly_deriv(&coeffs(n, shifted), order, a))
        .collect()
}

/// Solves `m x = rhs` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for c in col..n {
                m[row][c] -= f * m[col][c];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| m[row][c] * x[c]).sum();
        x[row] = (rhs[row] - s) / m[row][row];
    }
    x
}

pub fn gram(a: &[f64], degree: usize, shifted: bool) -> Vec<Vec<f64>> {
    let dim = degree + 1;
    let n = a.len() as f64;
    let mut g = vec![vec![0.0; dim]; dim];
    for &ai in a {
        let p = basis_row(degree, shifted, ai);
        for i in 0..dim {
            for j in 0..dim {
                g[i][j] += p[i] * p[j] / n;
            }
        }
    }
    g
}

/// Least-squares coefficients from the normal equations.
pub fn brute_force_beta(a: &[f64], b: &[f64], degree: usize, shifted: bool) -> Vec<f64> {
    let dim = degree + 1;
    let n = a.len() as f64;
    let mut xy = vec![0.0; dim];
    for (&ai, &bi) in a.iter().zip(b) {
        for (j, pj) in basis_row(degree, shifted, ai).into_iter().enumerate() {
            xy[j] += pj * bi / n;
        }
    }
    gauss_solve(gram(a, degree, shifted), xy)
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn population_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

#[derive(Debug, Clone, Copy)]
pub struct Reference {
    pub theta_trimmed: f64,
    pub bias_hat: f64,
    pub theta_corrected: f64,
    pub std_error: f64,
}

/// Recomputes the corrected estimate and its standard error from scratch.
pub fn reference_estimate(
    a: &[f64],
    b: &[f64],
    h: f64,
    degree: usize,
    k: usize,
    shifted: bool,
    sandwich: bool,
) -> Reference {
    let n = a.len() as f64;
    let y: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&ai, &bi)| if ai >= h { bi / ai } else { 0.0 })
        .collect();
    let theta_trimmed = mean(&y);
    let c: Vec<f64> = (1..k)
        .map(|kappa| {
            a.iter()
                .filter(|&&ai| ai < h)
                .map(|&ai| ai.powi(kappa as i32 - 1))
                .sum::<f64>()
                / n
                / factorial(kappa)
        })
        .collect();
    let beta = brute_force_beta(a, b, degree, shifted);
    let derivs: Vec<f64> = (1..k)
        .map(|kappa| dot(&basis_deriv_row(degree, shifted, kappa, 0.0), &beta))
        .collect();
    let bias_hat = -dot(&c, &derivs);
    let g = gram(a, degree, shifted);
    let weights: Vec<Vec<f64>> = (1..k)
        .map(|kappa| gauss_solve(g.clone(), basis_deriv_row(degree, shifted, kappa, 0.0)))
        .collect();
    let z: Vec<f64> = a
        .iter()
        .zip(b)
        .zip(&y)
        .map(|((&ai, &bi), &yi)| {
            let p = basis_row(degree, shifted, ai);
            let resid = bi - dot(&p, &beta);
            let correction: f64 = (1..k)
                .map(|kappa| {
                    let lead = if sandwich {
                        dot(&weights[kappa - 1], &p)
                    } else {
                        dot(&basis_deriv_row(degree, shifted, kappa, ai), &p)
                    };
                    c[kappa - 1] * lead * resid
                })
                .sum();
            yi + correction
        })
        .collect();
    Reference {
        theta_trimmed,
        bias_hat,
        theta_corrected: theta_trimmed - bias_hat,
        std_error: (population_variance(&z) / n).sqrt(),
    }
}

/// Unregularised upper incomplete gamma `Γ(s, x)` for real `s` and `x > 0`.
pub fn upper_gamma(s: f64, x: f64) -> f64 {
    if s > 0.0 {
        gamma_ur(s, x) * gamma(s)
    } else {
        (upper_gamma(s + 1.0, x) - x.powf(s) * (-x).exp()) / s
    }
}

/// `E[A^s 1{A >= h}]` for `A ~ Gamma(shape, scale)`.
pub fn gamma_tail_moment(shape: f64, scale: f64, s: f64, h: f64) -> f64 {
    scale.powf(s) * upper_gamma(shape + s, h / scale) / gamma(shape)
}

/// `Var((B/A) 1{A >= h})` with `A ~ Gamma(alpha, beta)`, `B | A ~ N(c1 A, c2 A^d)`.
pub fn gamma_trimmed_variance(alpha: f64, beta: f64, c1: f64, c2: f64, d: f64, h: f64) -> f64 {
    let p = gamma_tail_moment(alpha, beta, 0.0, h);
    c1 * c1 * p + c2 * gamma_tail_moment(alpha, beta, d - 2.0, h) - (c1 * p).powi(2)
}

pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Log-log slope of the closed-form trimmed variance over `grid`.
pub fn reference_variance_slope(alpha: f64, d: f64, grid: &[f64]) -> f64 {
    let xs: Vec<f64> = grid.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = grid
        .iter()
        .map(|&h| gamma_trimmed_variance(alpha, 1.0, 1.0, 1.0, d, h).ln())
        .collect();
    ols_slope(&xs, &ys)
}

/// Deterministic pseudo-random design on `(0, 1]` for fixed-input tests.
pub fn lcg_design(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 + 1.0) / (1u64 << 53) as f64
        })
        .collect()
}
