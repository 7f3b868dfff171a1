//! Quadrature ground truth for known designs.
//!
//! For a design with denominator density `f_A` and regression function
//! `m(a) = E[B | A = a]` with `m(0) = 0`, the trimming bias splits exactly as
//!
//! ```text
//! θ - θ_h = Σ_{κ=1}^{k-1} E[A^{κ-1} 1{A<h}] m^(κ)(0) / κ!
//!         + E[A^{k-1} 1{A<h} ∫_0^1 (1-t)^{k-1} m^(k)(tA) dt] / (k-1)!
//! ```
//!
//! [`exact_trim_bias`] evaluates each piece by adaptive quadrature and checks
//! the left-hand side, computed independently as `∫_0^h m(a)/a f_A(a) da`,
//! against the sum.

use std::cell::RefCell;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::montecarlo::DgpSpec;
use crate::quadrature::{integrate, integrate_to_infinity, Tolerance};

/// Side-effect-free real function.
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Tolerance for the bias identity `total = Σ main + remainder`.
pub const IDENTITY_TOLERANCE: f64 = 1e-8;

/// Population design: density of `A` and `m` with analytic derivatives.
#[derive(Clone)]
pub struct DesignSpec {
    pub name: String,
    density: RealFn,
    /// If the density behaves like `a^(shape-1)` at zero, integrals starting
    /// at zero run in `u = a^shape`.
    endpoint_shape: Option<f64>,
    support_upper: f64,
    m: RealFn,
    /// `m_derivs[j]` is `m^(j+1)`.
    m_derivs: Vec<RealFn>,
}

impl std::fmt::Debug for DesignSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DesignSpec")
            .field("name", &self.name)
            .field("endpoint_shape", &self.endpoint_shape)
            .field("support_upper", &self.support_upper)
            .field("n_derivs", &self.m_derivs.len())
            .finish()
    }
}

impl DesignSpec {
    /// `A ~ Uniform(0, 1)`.
    pub fn uniform(name: &str, m: RealFn, m_derivs: Vec<RealFn>) -> Self {
        DesignSpec {
            name: name.to_string(),
            density: Arc::new(|a| if (0.0..=1.0).contains(&a) { 1.0 } else { 0.0 }),
            endpoint_shape: None,
            support_upper: 1.0,
            m,
            m_derivs,
        }
    }

    /// `A ~ Gamma(shape, scale)` over its full support.
    pub fn gamma(name: &str, shape: f64, scale: f64, m: RealFn, m_derivs: Vec<RealFn>) -> Self {
        DesignSpec {
            name: name.to_string(),
            density: gamma_density(shape, scale),
            endpoint_shape: Some(shape),
            support_upper: f64::INFINITY,
            m,
            m_derivs,
        }
    }

    pub fn m(&self, a: f64) -> f64 {
        (self.m)(a)
    }

    pub fn density(&self, a: f64) -> f64 {
        (self.density)(a)
    }

    /// Highest derivative order supplied.
    pub fn max_deriv(&self) -> usize {
        self.m_derivs.len()
    }

    /// `m^(order)(a)`; order 0 is `m` itself.
    pub fn m_deriv(&self, order: usize, a: f64) -> Option<f64> {
        match order {
            0 => Some(self.m(a)),
            j => self.m_derivs.get(j - 1).map(|f| f(a)),
        }
    }

    /// Checks `m(0) = 0` and that each supplied derivative agrees with a
    /// central difference of the one below it.
    pub fn validate(&self) -> Result<()> {
        let m0 = self.m(0.0);
        if m0.abs() > 1e-12 {
            return Err(Error::Config(format!(
                "design '{}' has m(0) = {m0}; m must vanish at zero",
                self.name
            )));
        }
        let step = 1e-5;
        for order in 1..=self.max_deriv() {
            for &a in &[0.1, 0.3, 0.5, 0.7] {
                let up = self.m_deriv(order - 1, a + step).unwrap();
                let down = self.m_deriv(order - 1, a - step).unwrap();
                let fd = (up - down) / (2.0 * step);
                let exact = self.m_deriv(order, a).unwrap();
                if (fd - exact).abs() > 1e-6 * (1.0 + exact.abs()) {
                    return Err(Error::Config(format!(
                        "design '{}': derivative of order {order} at a = {a} is {exact}, \
                         finite difference gives {fd}",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// `∫_lo^hi g(a) f_A(a) da` for `0 <= lo <= hi <= ∞`.
    pub fn expect_over<G: Fn(f64) -> f64>(&self, g: G, lo: f64, hi: f64) -> Result<f64> {
        let hi = hi.min(self.support_upper);
        if !(lo >= 0.0) || lo > hi {
            return Err(Error::Argument(format!(
                "integration range [{lo}, {hi}] is invalid"
            )));
        }
        let tol = Tolerance::default();
        let f = &self.density;
        let mut total = 0.0;
        let mid = hi.min(1.0);
        if lo < mid {
            total += if lo == 0.0 {
                match self.endpoint_shape {
                    Some(shape) => {
                        // a = u^(1/shape), da = a / (shape u) du
                        let upper = mid.powf(shape);
                        integrate(
                            |u| {
                                let a = u.powf(1.0 / shape);
                                g(a) * f(a) * a / (shape * u)
                            },
                            0.0,
                            upper,
                            tol,
                        )?
                        .value
                    }
                    None => integrate(|a| g(a) * f(a), 0.0, mid, tol)?.value,
                }
            } else {
                // a = e^s flattens power-law behaviour near small lo
                integrate(
                    |s| {
                        let a = s.exp();
                        g(a) * f(a) * a
                    },
                    lo.ln(),
                    mid.ln(),
                    tol,
                )?
                .value
            };
        }
        if hi > 1.0 {
            let start = lo.max(1.0);
            total += if hi.is_infinite() {
                integrate_to_infinity(|a| g(a) * f(a), start, tol)?.value
            } else {
                integrate(|a| g(a) * f(a), start, hi, tol)?.value
            };
        }
        Ok(total)
    }

    /// `P(A > 1)`, zero for designs supported on `[0, 1]`.
    pub fn mass_above_one(&self) -> Result<f64> {
        if self.support_upper <= 1.0 {
            return Ok(0.0);
        }
        self.expect_over(|_| 1.0, 1.0, f64::INFINITY)
    }
}

/// Gamma density with shape `α` and scale `β`.
pub fn gamma_density(shape: f64, scale: f64) -> RealFn {
    let log_norm = ln_gamma(shape) + shape * scale.ln();
    Arc::new(move |a: f64| {
        if a <= 0.0 {
            0.0
        } else {
            ((shape - 1.0) * a.ln() - a / scale - log_norm).exp()
        }
    })
}

/// Named designs for the CLI and tests. Each carries derivatives up to order 6.
pub fn builtin_design(name: &str) -> Option<DesignSpec> {
    fn f(g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> RealFn {
        Arc::new(g)
    }
    fn zeros(from: usize) -> Vec<RealFn> {
        (from..=6).map(|_| f(|_| 0.0)).collect()
    }
    let design = match name {
        "uniform-linear" => {
            let mut d = vec![f(|_| 1.0)];
            d.extend(zeros(2));
            DesignSpec::uniform(name, f(|a| a), d)
        }
        "uniform-quadratic" => {
            let mut d = vec![f(|a| 2.0 * a), f(|_| 2.0)];
            d.extend(zeros(3));
            DesignSpec::uniform(name, f(|a| a * a), d)
        }
        "uniform-cubic" => {
            let mut d = vec![f(|a| 3.0 - 6.0 * a * a), f(|a| -12.0 * a), f(|_| -12.0)];
            d.extend(zeros(4));
            DesignSpec::uniform(name, f(|a| 3.0 * a - 2.0 * a.powi(3)), d)
        }
        "uniform-exp" => DesignSpec::uniform(
            name,
            f(|a: f64| a.exp_m1()),
            (1..=6).map(|_| f(f64::exp)).collect(),
        ),
        "uniform-sin" => DesignSpec::uniform(
            name,
            f(f64::sin),
            vec![
                f(f64::cos),
                f(|a: f64| -a.sin()),
                f(|a: f64| -a.cos()),
                f(f64::sin),
                f(f64::cos),
                f(|a: f64| -a.sin()),
            ],
        ),
        "gamma-linear" => {
            let mut d = vec![f(|_| 1.0)];
            d.extend(zeros(2));
            DesignSpec::gamma(name, 1.5, 1.0, f(|a| a), d)
        }
        "gamma-exp" => DesignSpec::gamma(
            name,
            1.5,
            1.0,
            f(|a: f64| a.exp_m1()),
            (1..=6).map(|_| f(f64::exp)).collect(),
        ),
        _ => return None,
    };
    Some(design)
}

pub const BUILTIN_DESIGNS: [&str; 7] = [
    "uniform-linear",
    "uniform-quadratic",
    "uniform-cubic",
    "uniform-exp",
    "uniform-sin",
    "gamma-linear",
    "gamma-exp",
];

/// Exact split of `θ - θ_h` into Taylor terms and integral remainder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasDecomposition {
    /// `E[A^{κ-1} 1{A<h}] m^(κ)(0) / κ!` for `κ = 1..k-1`.
    pub main_terms: Vec<f64>,
    pub remainder: f64,
    /// `θ - θ_h = ∫_0^h m(a)/a f_A(a) da`.
    pub total: f64,
    /// `total - Σ main_terms - remainder`.
    pub identity_residual: f64,
    pub mass_above_one: f64,
}

impl BiasDecomposition {
    pub fn main_sum(&self) -> f64 {
        self.main_terms.iter().sum()
    }
}

pub fn exact_trim_bias(design: &DesignSpec, h: f64, k: usize) -> Result<BiasDecomposition> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::Argument(format!("h must lie in (0, 1), got {h}")));
    }
    if k < 2 {
        return Err(Error::Argument(format!("k = {k} must be at least 2")));
    }
    if design.max_deriv() < k {
        return Err(Error::Config(format!(
            "design '{}' supplies derivatives up to order {}, k = {k} needs {k}",
            design.name,
            design.max_deriv()
        )));
    }

    let mut main_terms = Vec::with_capacity(k - 1);
    let mut factorial = 1.0;
    for kappa in 1..k {
        factorial *= kappa as f64;
        let moment = design.expect_over(|a| a.powi(kappa as i32 - 1), 0.0, h)?;
        let deriv = design.m_deriv(kappa, 0.0).unwrap();
        main_terms.push(moment * deriv / factorial);
    }

    // (k-1)! after the loop above
    let remainder_scale = factorial;
    let inner_error: RefCell<Option<Error>> = RefCell::new(None);
    let remainder_integral = design.expect_over(
        |a| {
            let inner = integrate(
                |t| (1.0 - t).powi(k as i32 - 1) * design.m_deriv(k, t * a).unwrap(),
                0.0,
                1.0,
                Tolerance::default(),
            );
            match inner {
                Ok(v) => a.powi(k as i32 - 1) * v.value,
                Err(e) => {
                    inner_error.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        },
        0.0,
        h,
    );
    if let Some(e) = inner_error.into_inner() {
        return Err(e);
    }
    let remainder = remainder_integral? / remainder_scale;

    let total = design.expect_over(|a| design.m(a) / a, 0.0, h)?;
    let identity_residual = total - main_terms.iter().sum::<f64>() - remainder;
    if identity_residual.abs() > IDENTITY_TOLERANCE {
        return Err(Error::Numerical(format!(
            "bias identity off by {identity_residual:.3e} for design '{}' at h = {h}, k = {k}",
            design.name
        )));
    }
    Ok(BiasDecomposition {
        main_terms,
        remainder,
        total,
        identity_residual,
        mass_above_one: design.mass_above_one()?,
    })
}

/// Three-valued existence flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Existence {
    Exists,
    NotExists,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpTruth {
    pub theta: f64,
    /// `E[B/A]` is finite iff `2α + d > 2`.
    pub moment_exists: bool,
    /// `Var(B/A)` is infinite when `α + d < 2`.
    pub variance_exists: Existence,
}

pub fn dgp_truth(dgp: &DgpSpec) -> Result<DgpTruth> {
    dgp.check_parameters()?;
    let s = dgp.alpha + dgp.d;
    let variance_exists = if s < 2.0 {
        Existence::NotExists
    } else if s == 2.0 {
        Existence::Indeterminate
    } else {
        Existence::Exists
    };
    Ok(DgpTruth {
        theta: dgp.c1,
        moment_exists: 2.0 * dgp.alpha + dgp.d > 2.0,
        variance_exists,
    })
}

fn dgp_design(dgp: &DgpSpec) -> DesignSpec {
    let c1 = dgp.c1;
    DesignSpec::gamma(
        "dgp",
        dgp.alpha,
        dgp.beta,
        Arc::new(move |a| c1 * a),
        vec![Arc::new(move |_| c1)],
    )
}

/// `Var((B/A) 1{A >= h})` under the DGP, by quadrature.
///
/// Uses `E[(B/A)^2 | A = a] = c1^2 + c2 a^(d-2)`.
pub fn trimmed_ratio_variance(dgp: &DgpSpec, h: f64) -> Result<f64> {
    dgp.check_parameters()?;
    if !(h > 0.0) {
        return Err(Error::Argument(format!("h must be positive, got {h}")));
    }
    let design = dgp_design(dgp);
    let kept = design.expect_over(|_| 1.0, h, f64::INFINITY)?;
    let c2 = if dgp.noiseless { 0.0 } else { dgp.c2 };
    let noise = if c2 == 0.0 {
        0.0
    } else {
        let d = dgp.d;
        design.expect_over(|a| a.powf(d - 2.0), h, f64::INFINITY)?
    };
    let second = dgp.c1 * dgp.c1 * kept + c2 * noise;
    let first = dgp.c1 * kept;
    Ok(second - first * first)
}

/// Least-squares slope of `log Var((B/A) 1{A >= h})` on `log h` over `h_grid`.
pub fn var_trimmed_rate(dgp: &DgpSpec, h_grid: &[f64]) -> Result<f64> {
    if h_grid.len() < 3 {
        return Err(Error::Argument(format!(
            "variance-rate fit needs at least 3 thresholds, got {}",
            h_grid.len()
        )));
    }
    if let Some(h) = h_grid.iter().find(|&&h| !(h > 0.0 && h < 0.5)) {
        return Err(Error::Argument(format!("threshold {h} outside (0, 0.5)")));
    }
    let mut xs = Vec::with_capacity(h_grid.len());
    let mut ys = Vec::with_capacity(h_grid.len());
    for &h in h_grid {
        let v = trimmed_ratio_variance(dgp, h)?;
        if !(v > 0.0) {
            return Err(Error::Numerical(format!(
                "trimmed variance at h = {h} is {v}; log-log fit impossible"
            )));
        }
        xs.push(h.ln());
        ys.push(v.ln());
    }
    Ok(ols_slope(&xs, &ys))
}

fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_linear_bias_is_h() {
        let d = builtin_design("uniform-linear").unwrap();
        for h in [0.05, 0.1, 0.2, 0.4] {
            let b = exact_trim_bias(&d, h, 2).unwrap();
            assert_relative_eq!(b.main_terms[0], h, epsilon = 1e-12);
            assert!(b.remainder.abs() < 1e-14);
            assert_relative_eq!(b.total, h, epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_quadratic_example() {
        let d = builtin_design("uniform-quadratic").unwrap();
        let b = exact_trim_bias(&d, 0.4, 3).unwrap();
        assert!(b.main_terms[0].abs() < 1e-15);
        assert_relative_eq!(b.main_terms[1], 0.08, epsilon = 1e-12);
        assert!(b.remainder.abs() < 1e-14);
        assert_relative_eq!(b.total, 0.08, epsilon = 1e-12);
    }

    #[test]
    fn nonpolynomial_design_has_remainder() {
        let d = builtin_design("uniform-exp").unwrap();
        let b = exact_trim_bias(&d, 0.4, 3).unwrap();
        // ∫_0^h (e^a - 1)/a da, remainder of order h^3
        assert!(b.remainder > 0.0 && b.remainder < 0.4f64.powi(3));
        assert!(b.identity_residual.abs() <= IDENTITY_TOLERANCE);
    }

    #[test]
    fn builtins_validate() {
        for name in BUILTIN_DESIGNS {
            builtin_design(name).unwrap().validate().unwrap();
        }
        assert!(builtin_design("nope").is_none());
    }

    #[test]
    fn inconsistent_derivative_rejected() {
        let d = DesignSpec::uniform("bad", Arc::new(|a| a * a), vec![Arc::new(|a| 3.0 * a)]);
        assert!(matches!(d.validate(), Err(Error::Config(_))));
        let shifted = DesignSpec::uniform("shift", Arc::new(|a| a + 1.0), vec![Arc::new(|_| 1.0)]);
        assert!(shifted.validate().is_err());
    }

    #[test]
    fn argument_checks() {
        let d = builtin_design("uniform-linear").unwrap();
        assert!(exact_trim_bias(&d, 0.0, 2).is_err());
        assert!(exact_trim_bias(&d, 1.0, 2).is_err());
        assert!(exact_trim_bias(&d, 0.2, 1).is_err());
        assert!(matches!(exact_trim_bias(&d, 0.2, 7), Err(Error::Config(_))));
    }

    #[test]
    fn gamma_density_integrates_to_one() {
        for (shape, scale) in [(0.5, 1.0), (1.5, 1.0), (3.0, 0.5)] {
            let d = DesignSpec::gamma("g", shape, scale, Arc::new(|a| a), vec![Arc::new(|_| 1.0)]);
            let total = d.expect_over(|_| 1.0, 0.0, f64::INFINITY).unwrap();
            assert_relative_eq!(total, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn truth_flags() {
        let t = dgp_truth(&DgpSpec::new(1.5, 1.0, 1.0, 1.0, 0.0)).unwrap();
        assert_eq!(t.theta, 1.0);
        assert!(t.moment_exists);
        assert_eq!(t.variance_exists, Existence::NotExists);
        assert_eq!(
            dgp_truth(&DgpSpec::new(3.0, 1.0, 0.0, 1.0, 0.0))
                .unwrap()
                .theta,
            0.0
        );
        assert_eq!(
            dgp_truth(&DgpSpec::new(1.5, 1.0, 2.5, 1.0, 0.0))
                .unwrap()
                .theta,
            2.5
        );
        assert_eq!(
            dgp_truth(&DgpSpec::new(1.5, 1.0, 1.0, 1.0, 0.5))
                .unwrap()
                .variance_exists,
            Existence::Indeterminate
        );
        assert_eq!(
            dgp_truth(&DgpSpec::new(2.5, 1.0, 1.0, 1.0, 0.0))
                .unwrap()
                .variance_exists,
            Existence::Exists
        );
        assert!(dgp_truth(&DgpSpec::new(0.0, 1.0, 1.0, 1.0, 0.0)).is_err());
        assert!(dgp_truth(&DgpSpec::new(1.5, 1.0, -1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn rate_argument_checks() {
        let dgp = DgpSpec::new(1.5, 1.0, 1.0, 1.0, 0.0);
        assert!(var_trimmed_rate(&dgp, &[0.1, 0.2]).is_err());
        assert!(var_trimmed_rate(&dgp, &[0.1, 0.2, 0.5]).is_err());
    }
}
