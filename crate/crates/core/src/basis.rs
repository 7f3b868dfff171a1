//! Orthonormal Legendre polynomial basis and its derivatives.
//!
//! Element `n` of the basis is `sqrt(2n + 1) * P_n(x)` where `P_n` is the
//! Legendre polynomial of degree `n`. Two arguments `x` are supported:
//!
//! - [`DomainMode::ShiftedUnit`]: `x = 2a - 1`, orthonormal under the uniform
//!   measure on `[0, 1]`, the support of the normalised denominator.
//! - [`DomainMode::Literal`]: `x = a`, i.e. the polynomials
//!   `1, sqrt(3) a, sqrt(5) (3a^2 - 1) / 2, ...` evaluated directly. These are
//!   orthonormal under the uniform probability measure on `[-1, 1]`.
//!
//! Values come from the Bonnet recurrence
//! `(n + 1) P_{n+1} = (2n + 1) x P_n - n P_{n-1}` and derivatives from
//! `P'_{n+1} = P'_{n-1} + (2n + 1) P_n`, differentiated repeatedly. No monomial
//! expansion is ever formed.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// Largest supported polynomial degree.
pub const MAX_DEGREE: usize = 30;

/// Argument convention for the Legendre polynomials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainMode {
    /// Polynomials in `a` exactly as `1, sqrt(3) a, ...`; orthonormal on `[-1, 1]`.
    Literal,
    /// Shifted polynomials in `2a - 1`; orthonormal on `[0, 1]`.
    #[default]
    ShiftedUnit,
}

/// How per-observation influence values of the derivative estimates are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfluenceMode {
    /// `p_K^(κ)(A)' p_K(A) (B - p_K(A)'β)`.
    Literal,
    /// `p_K^(κ)(0)' G^{-1} p_K(A) (B - p_K(A)'β)`.
    #[default]
    Sandwich,
}

impl fmt::Display for DomainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainMode::Literal => "literal",
            DomainMode::ShiftedUnit => "shifted",
        })
    }
}

impl fmt::Display for InfluenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InfluenceMode::Literal => "literal",
            InfluenceMode::Sandwich => "sandwich",
        })
    }
}

/// Sieve configuration: polynomial degree `K`, smoothness order `k`, and modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    degree: usize,
    smoothness: usize,
    pub domain_mode: DomainMode,
    pub influence_mode: InfluenceMode,
}

impl BasisSpec {
    /// Validates `2 <= k <= K <= 30`.
    pub fn new(
        degree: usize,
        smoothness: usize,
        domain_mode: DomainMode,
        influence_mode: InfluenceMode,
    ) -> Result<Self> {
        if smoothness < 2 {
            return Err(Error::Config(format!(
                "smoothness order k = {smoothness} must be at least 2 (the bias correction sum is empty otherwise)"
            )));
        }
        if degree < smoothness {
            return Err(Error::Config(format!(
                "basis degree K = {degree} must be at least the smoothness order k = {smoothness}"
            )));
        }
        if degree > MAX_DEGREE {
            return Err(Error::Config(format!(
                "basis degree K = {degree} exceeds the supported maximum {MAX_DEGREE}"
            )));
        }
        Ok(BasisSpec {
            degree,
            smoothness,
            domain_mode,
            influence_mode,
        })
    }

    /// Default modes (shifted basis, sandwich influence).
    pub fn with_defaults(degree: usize, smoothness: usize) -> Result<Self> {
        Self::new(
            degree,
            smoothness,
            DomainMode::default(),
            InfluenceMode::default(),
        )
    }

    /// Highest polynomial degree `K`.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Smoothness order `k`; derivatives `1..k-1` are estimated.
    pub fn smoothness(&self) -> usize {
        self.smoothness
    }

    /// Length of the basis vector, `K + 1`.
    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    /// Number of estimated derivatives, `k - 1`.
    pub fn n_derivs(&self) -> usize {
        self.smoothness - 1
    }

    fn argument(&self, a: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::Domain {
                what: "a",
                value: a,
                interval: "[0, 1]",
            });
        }
        Ok(match self.domain_mode {
            DomainMode::Literal => a,
            DomainMode::ShiftedUnit => 2.0 * a - 1.0,
        })
    }

    /// `d x / d a` for the configured argument map.
    fn chain_factor(&self) -> f64 {
        match self.domain_mode {
            DomainMode::Literal => 1.0,
            DomainMode::ShiftedUnit => 2.0,
        }
    }

    /// `(p_0(a), ..., p_K(a))`.
    pub fn eval(&self, a: f64) -> Result<Vec<f64>> {
        let x = self.argument(a)?;
        let mut out = legendre_values(self.degree, x);
        normalize(&mut out);
        Ok(out)
    }

    /// `kappa`-th derivative in `a` of every basis element.
    pub fn eval_deriv(&self, kappa: usize, a: f64) -> Result<Vec<f64>> {
        if kappa == 0 {
            return Err(Error::Argument(
                "derivative order must be at least 1".into(),
            ));
        }
        let x = self.argument(a)?;
        let mut out = legendre_derivative(self.degree, kappa, x);
        let scale = self.chain_factor().powi(kappa as i32);
        for v in out.iter_mut() {
            *v *= scale;
        }
        normalize(&mut out);
        Ok(out)
    }

    /// Largest `|∫ p_i p_j dμ - δ_ij|` over the basis, where `μ` is the uniform
    /// probability measure on `[0, 1]` (shifted) or `[-1, 1]` (literal).
    ///
    /// Uses a Gauss–Legendre rule with `2K + 2` nodes, far beyond what the
    /// degree-`2K` products need.
    pub fn orthonormality_residual(&self) -> f64 {
        let dim = self.dim();
        let (nodes, weights) = gauss_legendre(2 * dim);
        let mut gram = vec![0.0; dim * dim];
        for (&t, &w) in nodes.iter().zip(&weights) {
            // nodes live on [-1, 1]; both measures reduce to weight w/2 at x = t
            let mut p = legendre_values(self.degree, t);
            normalize(&mut p);
            for i in 0..dim {
                for j in 0..dim {
                    gram[i * dim + j] += 0.5 * w * p[i] * p[j];
                }
            }
        }
        let mut worst: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[i * dim + j] - target).abs());
            }
        }
        worst
    }
}

/// `P_0(x), ..., P_degree(x)` by the Bonnet recurrence.
pub(crate) fn legendre_values(degree: usize, x: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(degree + 1);
    p.push(1.0);
    if degree >= 1 {
        p.push(x);
    }
    for n in 1..degree {
        let nf = n as f64;
        let next = ((2.0 * nf + 1.0) * x * p[n] - nf * p[n - 1]) / (nf + 1.0);
        p.push(next);
    }
    p
}

/// `P_n^(kappa)(x)` for `n = 0..=degree`.
///
/// Built up order by order from `P^(j)_{n+1} = P^(j)_{n-1} + (2n + 1) P^(j-1)_n`,
/// so entries with `n < kappa` are exactly zero.
pub(crate) fn legendre_derivative(degree: usize, kappa: usize, x: f64) -> Vec<f64> {
    let mut lower = legendre_values(degree, x);
    for _ in 0..kappa {
        let mut d = vec![0.0; degree + 1];
        for n in 0..degree {
            let prev = if n >= 1 { d[n - 1] } else { 0.0 };
            d[n + 1] = prev + (2.0 * n as f64 + 1.0) * lower[n];
        }
        lower = d;
    }
    lower
}

fn normalize(p: &mut [f64]) {
    for (n, v) in p.iter_mut().enumerate() {
        *v *= ((2 * n + 1) as f64).sqrt();
    }
}
