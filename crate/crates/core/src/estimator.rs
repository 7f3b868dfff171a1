//! Trimmed mean of ratios, trimming-bias estimate, bias-corrected estimate and
//! its self-normalised confidence interval.
//!
//! With `Y = (B / A) 1{A >= h}`, the corrected estimate is
//!
//! ```text
//! θ_h - B_h = E_n[Y] + Σ_{κ=1}^{k-1} c_κ m^(κ)(0),   c_κ = E_n[A^{κ-1} 1{A < h}] / κ!
//! ```
//!
//! and its standard error is `sqrt(Var_n(Z) / n)` with `Z_i = Y_i + c' ψ_i`,
//! `ψ_i` being the per-observation influence values of the sieve derivative
//! estimates. Note the asymmetric indicators: an observation with `A = h` is
//! kept by the trimmed mean and excluded from `c`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::basis::{BasisSpec, DomainMode, InfluenceMode};
use crate::error::{Error, Result};
use crate::sieve::{fit_sieve, influence_values, Sample, SieveFit};

/// `Var_n(Z)` below this is rejected instead of producing a zero-width interval.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// How the trimming threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Use `h` as given.
    Fixed { h: f64 },
    /// `h = C n^{-r}` with `r` from [`threshold_exponent`], clamped so that at
    /// least `K + 2` observations survive trimming.
    Rate { constant: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimConfig {
    pub rule: ThresholdRule,
    pub confidence_level: f64,
    /// Hypothesised value used for the t-statistic.
    pub null_value: f64,
}

impl TrimConfig {
    pub fn fixed(h: f64) -> Result<Self> {
        check_h(h)?;
        Ok(TrimConfig {
            rule: ThresholdRule::Fixed { h },
            confidence_level: 0.95,
            null_value: 0.0,
        })
    }

    pub fn rate(constant: f64) -> Result<Self> {
        if !(constant > 0.0 && constant.is_finite()) {
            return Err(Error::Config(format!(
                "rate-rule constant must be positive, got {constant}"
            )));
        }
        Ok(TrimConfig {
            rule: ThresholdRule::Rate { constant },
            confidence_level: 0.95,
            null_value: 0.0,
        })
    }

    pub fn with_level(mut self, level: f64) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Config(format!(
                "confidence level must lie in (0, 1), got {level}"
            )));
        }
        self.confidence_level = level;
        Ok(self)
    }

    pub fn with_null(mut self, null_value: f64) -> Self {
        self.null_value = null_value;
        self
    }
}

fn check_h(h: f64) -> Result<()> {
    if !(0.0..1.0).contains(&h) {
        return Err(Error::Config(format!(
            "trimming threshold must lie in [0, 1), got {h}"
        )));
    }
    Ok(())
}

/// A threshold after the rule has been applied to a concrete sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedThreshold {
    pub h: f64,
    pub rule: ThresholdRule,
    /// Rate-rule value before the survival clamp.
    pub unclamped: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub gram_condition: f64,
    pub gram_warning: bool,
    pub z_variance: f64,
    pub influence_mode: InfluenceMode,
    pub domain_mode: DomainMode,
    pub n_kept: usize,
    pub threshold_clamped: bool,
}

/// Point estimates without inference.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate {
    pub theta_trimmed: f64,
    pub bias_hat: f64,
    pub theta_corrected: f64,
    pub c_hat: Vec<f64>,
    pub derivs_at_zero: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub theta_trimmed: f64,
    pub bias_hat: f64,
    pub theta_corrected: f64,
    pub c_hat: Vec<f64>,
    pub derivs_at_zero: Vec<f64>,
    pub std_error: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub confidence_level: f64,
    pub t_stat: f64,
    pub null_value: f64,
    pub n: usize,
    pub n_trimmed: usize,
    pub degree: usize,
    pub smoothness: usize,
    pub threshold: ResolvedThreshold,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    pub fn h(&self) -> f64 {
        self.threshold.h
    }
}

/// `E_n[(B / A) 1{A >= h}]`.
pub fn trimmed_mean(sample: &Sample, h: f64) -> Result<f64> {
    check_h(h)?;
    Ok(trimmed_mean_unchecked(sample, h))
}

fn trimmed_mean_unchecked(sample: &Sample, h: f64) -> f64 {
    let total: f64 = sample
        .pairs()
        .map(|(a, b)| if a >= h { b / a } else { 0.0 })
        .sum();
    total / sample.len() as f64
}

/// Untrimmed `E_n[B / A]`; identical to `trimmed_mean(sample, 0)`.
pub fn naive_mean(sample: &Sample) -> f64 {
    trimmed_mean_unchecked(sample, 0.0)
}

/// Number of observations with `A < h`.
pub fn count_trimmed(sample: &Sample, h: f64) -> usize {
    sample.a().iter().filter(|&&a| a < h).count()
}

/// `(E_n[1{A<h}] / 1!, E_n[A 1{A<h}] / 2!, ..., E_n[A^{k-2} 1{A<h}] / (k-1)!)`.
pub fn c_hat(sample: &Sample, h: f64, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::Argument(format!(
            "smoothness order k = {k} must be at least 2"
        )));
    }
    let nf = sample.len() as f64;
    let mut out = Vec::with_capacity(k - 1);
    let mut factorial = 1.0;
    for kappa in 1..k {
        factorial *= kappa as f64;
        let moment: f64 = sample
            .a()
            .iter()
            .filter(|&&a| a < h)
            .map(|&a| a.powi(kappa as i32 - 1))
            .sum();
        out.push(moment / nf / factorial);
    }
    Ok(out)
}

/// `-Σ_κ c_κ derivs[κ]`, the estimated trimming bias `E[θ_h] - θ`.
pub fn bias_hat(sample: &Sample, h: f64, derivs: &[f64]) -> Result<f64> {
    let c = c_hat(sample, h, derivs.len() + 1)?;
    Ok(bias_from_parts(&c, derivs))
}

fn bias_from_parts(c: &[f64], derivs: &[f64]) -> f64 {
    -c.iter().zip(derivs).map(|(c, d)| c * d).sum::<f64>()
}

/// Exponent `r` of the rate rule `h = C n^{-r}`: the midpoint of the admissible
/// window `(1 / (2(k-1)), 1/4)`, which is nonempty only for `k >= 4`.
pub fn threshold_exponent(k: usize) -> Result<f64> {
    if k <= 3 {
        return Err(Error::Config(format!(
            "the rate rule needs smoothness order k >= 4 (got {k}); for k <= 3 no threshold \
             satisfies n^(-1/4) << h <~ n^(-1/(2(k-1)))"
        )));
    }
    Ok((0.25 + 1.0 / (2.0 * (k as f64 - 1.0))) / 2.0)
}

/// `h = C n^{-r}`.
pub fn default_threshold(n: usize, k: usize, constant: f64) -> Result<f64> {
    let r = threshold_exponent(k)?;
    if !(constant > 0.0 && constant.is_finite()) {
        return Err(Error::Config(format!(
            "rate-rule constant must be positive, got {constant}"
        )));
    }
    if n == 0 {
        return Err(Error::Config("sample size must be positive".into()));
    }
    Ok(constant * (n as f64).powf(-r))
}

/// Lowers `h` to the `min_kept`-th largest denominator when fewer than
/// `min_kept` observations would otherwise satisfy `A >= h`.
pub fn clamp_threshold(sample: &Sample, h: f64, min_kept: usize) -> (f64, bool) {
    if min_kept == 0 || min_kept > sample.len() {
        return (h, false);
    }
    let mut a = sample.a().to_vec();
    a.sort_by(|x, y| y.total_cmp(x));
    let cap = a[min_kept - 1];
    if h > cap {
        (cap, true)
    } else {
        (h, false)
    }
}

pub fn resolve_threshold(
    sample: &Sample,
    spec: &BasisSpec,
    config: &TrimConfig,
) -> Result<ResolvedThreshold> {
    match config.rule {
        ThresholdRule::Fixed { h } => {
            check_h(h)?;
            Ok(ResolvedThreshold {
                h,
                rule: config.rule,
                unclamped: h,
                clamped: false,
            })
        }
        ThresholdRule::Rate { constant } => {
            let raw = default_threshold(sample.len(), spec.smoothness(), constant)?;
            let (h, clamped) = clamp_threshold(sample, raw, spec.dim() + 1);
            check_h(h)?;
            Ok(ResolvedThreshold {
                h,
                rule: config.rule,
                unclamped: raw,
                clamped,
            })
        }
    }
}

fn check_design(sample: &Sample, spec: &BasisSpec) -> Result<()> {
    if sample.len() < spec.dim() + 1 {
        return Err(Error::Design(format!(
            "K = {} requires at least {} observations, got {}",
            spec.degree(),
            spec.dim() + 1,
            sample.len()
        )));
    }
    if !sample.is_normalized() {
        return Err(Error::Validation(format!(
            "denominators must lie in (0, 1]; max is {} (normalise the sample first)",
            sample.max_a()
        )));
    }
    Ok(())
}

fn point_from_fit(
    sample: &Sample,
    spec: &BasisSpec,
    fit: &SieveFit,
    h: f64,
) -> Result<PointEstimate> {
    let theta_trimmed = trimmed_mean(sample, h)?;
    let c = c_hat(sample, h, spec.smoothness())?;
    let bias = bias_from_parts(&c, &fit.derivs_at_zero);
    Ok(PointEstimate {
        theta_trimmed,
        bias_hat: bias,
        theta_corrected: theta_trimmed - bias,
        c_hat: c,
        derivs_at_zero: fit.derivs_at_zero.clone(),
    })
}

/// Bias-corrected point estimate at a fixed `h`, skipping the variance step.
pub fn point_estimate(sample: &Sample, spec: &BasisSpec, h: f64) -> Result<PointEstimate> {
    check_h(h)?;
    check_design(sample, spec)?;
    let fit = fit_sieve(sample, spec)?;
    point_from_fit(sample, spec, &fit, h)
}

/// Full estimate with standard error and normal confidence interval.
///
/// The sieve is fitted on every observation, trimmed or not.
pub fn estimate(sample: &Sample, spec: &BasisSpec, config: &TrimConfig) -> Result<EstimateReport> {
    check_design(sample, spec)?;
    let threshold = resolve_threshold(sample, spec, config)?;
    let h = threshold.h;
    let n = sample.len();
    let n_trimmed = count_trimmed(sample, h);
    if n - n_trimmed < 2 {
        return Err(Error::Design(format!(
            "threshold h = {h} leaves {} observation(s); at least 2 are required",
            n - n_trimmed
        )));
    }

    let fit = fit_sieve(sample, spec)?;
    let point = point_from_fit(sample, spec, &fit, h)?;
    let psi = influence_values(&fit, sample, spec)?;

    let z: Vec<f64> = sample
        .pairs()
        .enumerate()
        .map(|(i, (a, b))| {
            let kept = if a >= h { b / a } else { 0.0 };
            let adj: f64 = point
                .c_hat
                .iter()
                .enumerate()
                .map(|(j, c)| c * psi[(i, j)])
                .sum();
            kept + adj
        })
        .collect();
    let z_variance = population_variance(&z);
    if !(z_variance >= VARIANCE_FLOOR) {
        return Err(Error::VarianceFloor {
            variance: z_variance,
            floor: VARIANCE_FLOOR,
        });
    }
    let std_error = (z_variance / n as f64).sqrt();
    let q = normal_quantile(0.5 + config.confidence_level / 2.0);

    Ok(EstimateReport {
        theta_trimmed: point.theta_trimmed,
        bias_hat: point.bias_hat,
        theta_corrected: point.theta_corrected,
        ci_lower: point.theta_corrected - q * std_error,
        ci_upper: point.theta_corrected + q * std_error,
        t_stat: (point.theta_corrected - config.null_value) / std_error,
        c_hat: point.c_hat,
        derivs_at_zero: point.derivs_at_zero,
        std_error,
        confidence_level: config.confidence_level,
        null_value: config.null_value,
        n,
        n_trimmed,
        degree: spec.degree(),
        smoothness: spec.smoothness(),
        threshold,
        diagnostics: Diagnostics {
            gram_condition: fit.gram_condition,
            gram_warning: fit.ill_conditioned(),
            z_variance,
            influence_mode: spec.influence_mode,
            domain_mode: spec.domain_mode,
            n_kept: n - n_trimmed,
            threshold_clamped: threshold.clamped,
        },
    })
}

/// `E_n[(x - E_n x)^2]`.
pub(crate) fn population_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}
