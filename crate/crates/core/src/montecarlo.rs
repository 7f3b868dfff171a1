//! Heavy-tail data generating process and the replication harness.
//!
//! `A ~ Gamma(α, β)` (shape, scale) and `B | A = a ~ Normal(c1 a, c2 a^d)` where
//! the second argument is the variance. Then `θ = E[B/A] = c1`, finite iff
//! `2α + d > 2`, and `Var(B/A)` is infinite when `α + d < 2`.
//!
//! Replication `r` draws from a ChaCha8 stream keyed by `(seed, r)`, so results
//! do not depend on scheduling or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::basis::{BasisSpec, DomainMode, InfluenceMode};
use crate::error::{Error, Result};
use crate::estimator::{
    estimate, naive_mean, normal_quantile, population_variance, resolve_threshold, ThresholdRule,
    TrimConfig,
};
use crate::oracle::dgp_truth;
use crate::sieve::Sample;

/// Minimum replications for the Kolmogorov–Smirnov summary.
pub const KS_MIN_REPS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub alpha: f64,
    pub beta: f64,
    pub c1: f64,
    /// Conditional variance multiplier.
    pub c2: f64,
    pub d: f64,
    /// Draw `B = c1 A` exactly, ignoring `c2`.
    pub noiseless: bool,
}

impl DgpSpec {
    pub fn new(alpha: f64, beta: f64, c1: f64, c2: f64, d: f64) -> Self {
        DgpSpec {
            alpha,
            beta,
            c1,
            c2,
            d,
            noiseless: false,
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.noiseless = true;
        self
    }

    /// Parameter ranges alone, without the existence condition on `θ`.
    pub fn check_parameters(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.alpha) || !positive(self.beta) {
            return Err(Error::Config(format!(
                "Gamma shape and scale must be positive, got α = {}, β = {}",
                self.alpha, self.beta
            )));
        }
        if !(self.c1 >= 0.0 && self.c1.is_finite()) {
            return Err(Error::Config(format!(
                "c1 must be nonnegative, got {}",
                self.c1
            )));
        }
        if !self.noiseless && !positive(self.c2) {
            return Err(Error::Config(format!(
                "c2 must be positive, got {}",
                self.c2
            )));
        }
        if !self.d.is_finite() {
            return Err(Error::Config(format!("d must be finite, got {}", self.d)));
        }
        Ok(())
    }

    /// Parameter ranges plus `2α + d > 2`.
    pub fn validate(&self) -> Result<()> {
        self.check_parameters()?;
        if !(2.0 * self.alpha + self.d > 2.0) {
            return Err(Error::Config(format!(
                "E[B/A] does not exist: 2α + d = {} must exceed 2",
                2.0 * self.alpha + self.d
            )));
        }
        Ok(())
    }
}

/// RNG for replication `r`.
pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// `n` draws of `(A, B)`, denominators on their original scale.
///
/// Identical to replication 0 of [`run_replications`] with the same seed.
pub fn sample_dgp(dgp: &DgpSpec, n: usize, seed: u64) -> Result<Sample> {
    dgp.validate()?;
    draw(dgp, n, &mut replication_rng(seed, 0))
}

fn draw<R: Rng>(dgp: &DgpSpec, n: usize, rng: &mut R) -> Result<Sample> {
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 draws, got {n}")));
    }
    let gamma = Gamma::new(dgp.alpha, dgp.beta)
        .map_err(|e| Error::Config(format!("invalid Gamma parameters: {e}")))?;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    while a.len() < n {
        let ai: f64 = gamma.sample(rng);
        if ai <= 0.0 {
            // underflow for tiny shapes; A has no mass at zero
            continue;
        }
        let mean = dgp.c1 * ai;
        let bi = if dgp.noiseless {
            mean
        } else {
            let z: f64 = StandardNormal.sample(rng);
            mean + (dgp.c2 * ai.powf(dgp.d)).sqrt() * z
        };
        a.push(ai);
        b.push(bi);
    }
    Sample::new(a, b)
}

/// Why a replication's corrected estimate failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    VarianceFloor,
    SingularDesign,
    Other,
}

impl FailureKind {
    fn classify(e: &Error) -> Self {
        match e {
            Error::VarianceFloor { .. } => FailureKind::VarianceFloor,
            Error::DegenerateDesign { .. } | Error::Design(_) => FailureKind::SingularDesign,
            _ => FailureKind::Other,
        }
    }
}

/// One estimator's output in one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
}

impl IntervalEstimate {
    fn from_se(estimate: f64, std_error: f64, q: f64) -> Self {
        IntervalEstimate {
            estimate,
            std_error,
            lower: estimate - q * std_error,
            upper: estimate + q * std_error,
        }
    }

    fn covers(&self, theta: f64) -> bool {
        self.lower <= theta && theta <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub naive: IntervalEstimate,
    pub trimmed: Option<IntervalEstimate>,
    pub corrected: std::result::Result<IntervalEstimate, FailureKind>,
    pub h: Option<f64>,
    pub normalization_scale: f64,
}

/// Across-replication summary for one estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub successes: usize,
    pub mean_bias: f64,
    /// Monte Carlo standard error of `mean_bias`.
    pub bias_mc_se: f64,
    pub rmse: f64,
    pub empirical_sd: f64,
    pub mean_std_error: f64,
    pub coverage: f64,
    pub mean_ci_length: f64,
}

impl EstimatorSummary {
    fn from_estimates<'a>(items: impl Iterator<Item = &'a IntervalEstimate>, theta: f64) -> Self {
        let items: Vec<&IntervalEstimate> = items.collect();
        let m = items.len();
        if m == 0 {
            return EstimatorSummary {
                successes: 0,
                mean_bias: f64::NAN,
                bias_mc_se: f64::NAN,
                rmse: f64::NAN,
                empirical_sd: f64::NAN,
                mean_std_error: f64::NAN,
                coverage: f64::NAN,
                mean_ci_length: f64::NAN,
            };
        }
        let mf = m as f64;
        let mean_est = items.iter().map(|e| e.estimate).sum::<f64>() / mf;
        let sq_dev: f64 = items.iter().map(|e| (e.estimate - mean_est).powi(2)).sum();
        let empirical_sd = if m > 1 {
            (sq_dev / (mf - 1.0)).sqrt()
        } else {
            0.0
        };
        let mse = items
            .iter()
            .map(|e| (e.estimate - theta).powi(2))
            .sum::<f64>()
            / mf;
        EstimatorSummary {
            successes: m,
            mean_bias: mean_est - theta,
            bias_mc_se: empirical_sd / mf.sqrt(),
            rmse: mse.sqrt(),
            empirical_sd,
            mean_std_error: items.iter().map(|e| e.std_error).sum::<f64>() / mf,
            coverage: items.iter().filter(|e| e.covers(theta)).count() as f64 / mf,
            mean_ci_length: items.iter().map(|e| e.upper - e.lower).sum::<f64>() / mf,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureCounts {
    pub total: usize,
    pub variance_floor: usize,
    pub singular_design: usize,
    pub other: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub reps: usize,
    pub n: usize,
    pub seed: u64,
    pub dgp: DgpSpec,
    pub theta: f64,
    #[serde(rename = "K")]
    pub degree: usize,
    pub k: usize,
    pub domain_mode: DomainMode,
    pub influence_mode: InfluenceMode,
    pub threshold: ThresholdRule,
    pub confidence_level: f64,
    pub mean_h: f64,
    pub naive: EstimatorSummary,
    pub trimmed: EstimatorSummary,
    pub corrected: EstimatorSummary,
    pub failures: FailureCounts,
    /// KS distance of the corrected t-statistics to N(0, 1), when enough
    /// replications succeeded.
    pub ks_statistic: Option<f64>,
    #[serde(skip)]
    pub t_stats: Vec<f64>,
    #[serde(skip)]
    pub replications: Vec<Replication>,
}

/// One replication: draw, normalise, then naive, trimmed and corrected estimates.
pub fn run_one(
    dgp: &DgpSpec,
    n: usize,
    spec: &BasisSpec,
    config: &TrimConfig,
    seed: u64,
    replication: u64,
) -> Result<Replication> {
    let raw = draw(dgp, n, &mut replication_rng(seed, replication))?;
    let (sample, norm) = raw.normalize();
    let q = normal_quantile(0.5 + config.confidence_level / 2.0);
    let nf = n as f64;

    let ratios: Vec<f64> = sample.pairs().map(|(a, b)| b / a).collect();
    let naive = IntervalEstimate::from_se(
        naive_mean(&sample),
        (population_variance(&ratios) / nf).sqrt(),
        q,
    );

    let threshold = resolve_threshold(&sample, spec, config).ok();
    let trimmed = threshold.map(|t| {
        let kept: Vec<f64> = sample
            .pairs()
            .map(|(a, b)| if a >= t.h { b / a } else { 0.0 })
            .collect();
        let mean = kept.iter().sum::<f64>() / nf;
        IntervalEstimate::from_se(mean, (population_variance(&kept) / nf).sqrt(), q)
    });

    let corrected = match estimate(&sample, spec, config) {
        Ok(r) => Ok(IntervalEstimate {
            estimate: r.theta_corrected,
            std_error: r.std_error,
            lower: r.ci_lower,
            upper: r.ci_upper,
        }),
        Err(e) => Err(FailureKind::classify(&e)),
    };

    Ok(Replication {
        naive,
        trimmed,
        corrected,
        h: threshold.map(|t| t.h),
        normalization_scale: norm.scale,
    })
}

/// Runs `reps` replications on the current rayon pool and aggregates them in
/// replication order.
pub fn run_replications(
    dgp: &DgpSpec,
    n: usize,
    reps: usize,
    spec: &BasisSpec,
    config: &TrimConfig,
    seed: u64,
) -> Result<MonteCarloReport> {
    dgp.validate()?;
    if reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    if n < spec.dim() + 1 {
        return Err(Error::Config(format!(
            "n = {n} is too small for K = {} (need at least {})",
            spec.degree(),
            spec.dim() + 1
        )));
    }
    if let ThresholdRule::Rate { .. } = config.rule {
        crate::estimator::threshold_exponent(spec.smoothness())?;
    }
    let theta = dgp_truth(dgp)?.theta;

    let replications: Vec<Replication> = (0..reps as u64)
        .into_par_iter()
        .map(|r| run_one(dgp, n, spec, config, seed, r))
        .collect::<Result<_>>()?;

    let mut failures = FailureCounts::default();
    for rep in &replications {
        if let Err(kind) = rep.corrected {
            failures.total += 1;
            match kind {
                FailureKind::VarianceFloor => failures.variance_floor += 1,
                FailureKind::SingularDesign => failures.singular_design += 1,
                FailureKind::Other => failures.other += 1,
            }
        }
    }

    let t_stats: Vec<f64> = replications
        .iter()
        .filter_map(|r| r.corrected.ok())
        .map(|c| (c.estimate - theta) / c.std_error)
        .collect();
    let ks_statistic = if t_stats.len() >= KS_MIN_REPS {
        Some(t_stat_normality(&t_stats)?)
    } else {
        None
    };
    let hs: Vec<f64> = replications.iter().filter_map(|r| r.h).collect();
    let mean_h = hs.iter().sum::<f64>() / hs.len().max(1) as f64;

    Ok(MonteCarloReport {
        reps,
        n,
        seed,
        dgp: *dgp,
        theta,
        degree: spec.degree(),
        k: spec.smoothness(),
        domain_mode: spec.domain_mode,
        influence_mode: spec.influence_mode,
        threshold: config.rule,
        confidence_level: config.confidence_level,
        mean_h,
        naive: EstimatorSummary::from_estimates(replications.iter().map(|r| &r.naive), theta),
        trimmed: EstimatorSummary::from_estimates(
            replications.iter().filter_map(|r| r.trimmed.as_ref()),
            theta,
        ),
        corrected: EstimatorSummary::from_estimates(
            replications
                .iter()
                .filter_map(|r| r.corrected.as_ref().ok()),
            theta,
        ),
        failures,
        ks_statistic,
        t_stats,
        replications,
    })
}

/// Kolmogorov–Smirnov distance between the empirical law of `stats` and N(0, 1).
pub fn t_stat_normality(stats: &[f64]) -> Result<f64> {
    if stats.len() < KS_MIN_REPS {
        return Err(Error::Argument(format!(
            "KS summary needs at least {KS_MIN_REPS} statistics, got {}",
            stats.len()
        )));
    }
    if stats.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("t-statistics must be finite".into()));
    }
    let mut sorted = stats.to_vec();
    sorted.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let m = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = normal.cdf(x);
        d = d.max((i as f64 + 1.0) / m - cdf).max(cdf - i as f64 / m);
    }
    Ok(d)
}
