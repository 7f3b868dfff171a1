//! Series (sieve) regression of `B` on the Legendre basis in `A`.
//!
//! The fit is ordinary least squares in normal-equation form,
//! `β = G^{-1} E_n[p_K(A) B]` with `G = E_n[p_K(A) p_K(A)']`, solved by Cholesky.
//! Derivatives of `m(a) = E[B | A = a]` at zero are read off as
//! `p_K^(κ)(0)' β`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, InfluenceMode};
use crate::error::{Error, Result};

/// Condition number above which the Gram matrix is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Condition number above which reports carry a warning.
pub const WARN_CONDITION: f64 = 1e8;

/// Paired observations `(A_i, B_i)` with every `A_i > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Joint rescaling applied to a sample: `a -> a / scale`, `b -> b / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub scale: f64,
}

impl Sample {
    /// Builds a sample, rejecting non-positive or non-finite denominators,
    /// non-finite numerators, mismatched lengths and `n < 2`.
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Validation(format!(
                "denominator and numerator lengths differ ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        if a.len() < 2 {
            return Err(Error::Validation(format!(
                "a sample needs at least 2 observations, got {}",
                a.len()
            )));
        }
        let bad: Vec<usize> = a
            .iter()
            .enumerate()
            .filter(|(_, &v)| !(v > 0.0 && v.is_finite()))
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            return Err(Error::Validation(format!(
                "denominator must be positive and finite (A has no mass at 0); offending indices {bad:?}"
            )));
        }
        if let Some(i) = b.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "numerator at index {i} is not finite"
            )));
        }
        Ok(Sample { a, b })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let (a, b) = pairs.iter().copied().unzip();
        Self::new(a, b)
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.a.iter().copied().zip(self.b.iter().copied())
    }

    pub fn max_a(&self) -> f64 {
        self.a.iter().copied().fold(f64::MIN, f64::max)
    }

    /// True when every denominator lies in `(0, 1]`.
    pub fn is_normalized(&self) -> bool {
        self.max_a() <= 1.0
    }

    /// Rescales to `max(a) = 1` when `max(a) > 1`, dividing numerators by the
    /// same factor so every ratio `b / a` is unchanged.
    pub fn normalize(self) -> (Sample, Normalization) {
        let max = self.max_a();
        if max <= 1.0 {
            return (self, Normalization { scale: 1.0 });
        }
        let a = self.a.iter().map(|v| v / max).collect();
        let b = self.b.iter().map(|v| v / max).collect();
        (Sample { a, b }, Normalization { scale: max })
    }

    /// Same denominators, numerators multiplied by `c`.
    pub fn scale_numerator(&self, c: f64) -> Sample {
        Sample {
            a: self.a.clone(),
            b: self.b.iter().map(|v| v * c).collect(),
        }
    }
}

/// Result of [`fit_sieve`].
#[derive(Debug, Clone)]
pub struct SieveFit {
    spec: BasisSpec,
    pub beta_hat: DVector<f64>,
    pub gram: DMatrix<f64>,
    pub gram_condition: f64,
    pub residuals: Vec<f64>,
    /// `(m^(1)(0), ..., m^(k-1)(0))`.
    pub derivs_at_zero: Vec<f64>,
    /// Row `κ - 1` is `G^{-1} p_K^(κ)(0)`, the sandwich weight vector.
    deriv_weights: Vec<DVector<f64>>,
}

impl SieveFit {
    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    /// Whether the Gram condition number crosses the warning threshold.
    pub fn ill_conditioned(&self) -> bool {
        self.gram_condition > WARN_CONDITION
    }
}

/// Least-squares fit of `B` on `p_K(A)` over the whole sample.
pub fn fit_sieve(sample: &Sample, spec: &BasisSpec) -> Result<SieveFit> {
    let n = sample.len();
    let dim = spec.dim();
    if n <= dim {
        return Err(Error::Design(format!(
            "sieve fit with K = {} needs more than {} observations, got {n}",
            spec.degree(),
            dim
        )));
    }

    let design = basis_matrix(sample, spec)?;
    let nf = n as f64;
    let gram = design.tr_mul(&design) / nf;
    let rhs = design.tr_mul(&DVector::from_column_slice(sample.b())) / nf;

    let gram_condition = condition_number(&gram);
    if !(gram_condition <= SINGULAR_CONDITION) {
        return Err(Error::DegenerateDesign {
            condition: gram_condition,
            limit: SINGULAR_CONDITION,
        });
    }
    let chol = gram.clone().cholesky().ok_or(Error::DegenerateDesign {
        condition: gram_condition,
        limit: SINGULAR_CONDITION,
    })?;

    let b = DVector::from_column_slice(sample.b());
    let mut beta_hat = chol.solve(&rhs);
    // refine against residuals formed in the data space
    for _ in 0..2 {
        let r = &b - &design * &beta_hat;
        beta_hat += chol.solve(&(design.tr_mul(&r) / nf));
    }

    let fitted = &design * &beta_hat;
    let residuals: Vec<f64> = sample
        .b()
        .iter()
        .zip(fitted.iter())
        .map(|(b, f)| b - f)
        .collect();

    let mut derivs_at_zero = Vec::with_capacity(spec.n_derivs());
    let mut deriv_weights = Vec::with_capacity(spec.n_derivs());
    for kappa in 1..spec.smoothness() {
        let d0 = DVector::from_vec(spec.eval_deriv(kappa, 0.0)?);
        derivs_at_zero.push(d0.dot(&beta_hat));
        deriv_weights.push(chol.solve(&d0));
    }

    Ok(SieveFit {
        spec: *spec,
        beta_hat,
        gram,
        gram_condition,
        residuals,
        derivs_at_zero,
        deriv_weights,
    })
}

/// `m^(kappa)(0)` for `1 <= kappa <= k - 1`.
pub fn deriv_at_zero(fit: &SieveFit, kappa: usize) -> Result<f64> {
    if kappa == 0 || kappa > fit.derivs_at_zero.len() {
        return Err(Error::Argument(format!(
            "derivative order {kappa} outside 1..={}",
            fit.derivs_at_zero.len()
        )));
    }
    Ok(fit.derivs_at_zero[kappa - 1])
}

/// Per-observation influence values, an `n × (k - 1)` matrix.
pub fn influence_values(fit: &SieveFit, sample: &Sample, spec: &BasisSpec) -> Result<DMatrix<f64>> {
    if sample.len() != fit.residuals.len() {
        return Err(Error::Argument(format!(
            "fit has {} residuals but sample has {} observations",
            fit.residuals.len(),
            sample.len()
        )));
    }
    if spec.degree() != fit.spec.degree() || spec.domain_mode != fit.spec.domain_mode {
        return Err(Error::Argument(
            "influence basis differs from the basis the fit was computed with".into(),
        ));
    }
    let n_derivs = spec.n_derivs().min(fit.derivs_at_zero.len());
    let mut psi = DMatrix::zeros(sample.len(), n_derivs);
    for (i, (&a, &r)) in sample.a().iter().zip(&fit.residuals).enumerate() {
        let p = DVector::from_vec(spec.eval(a)?);
        for kappa in 1..=n_derivs {
            let weight = match spec.influence_mode {
                InfluenceMode::Sandwich => fit.deriv_weights[kappa - 1].dot(&p),
                InfluenceMode::Literal => {
                    let dp = DVector::from_vec(spec.eval_deriv(kappa, a)?);
                    dp.dot(&p)
                }
            };
            psi[(i, kappa - 1)] = weight * r;
        }
    }
    Ok(psi)
}

fn basis_matrix(sample: &Sample, spec: &BasisSpec) -> Result<DMatrix<f64>> {
    let dim = spec.dim();
    let mut x = DMatrix::zeros(sample.len(), dim);
    for (i, &a) in sample.a().iter().enumerate() {
        for (j, v) in spec.eval(a)?.into_iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    Ok(x)
}

/// 2-norm condition number of a symmetric matrix, `λ_max / λ_min`.
fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.iter().copied().fold(f64::MIN, f64::max);
    let min = eig.iter().copied().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
