//! Bias-corrected trimmed estimation of `E[B/A]` when the denominator has
//! density mass near zero.
//!
//! Observations with `A < h` are dropped, and the bias this introduces is
//! estimated from a Legendre sieve regression of `B` on `A`, using the
//! derivatives of the fitted regression at zero. The crate also provides an
//! exact bias oracle by numerical integration and a Monte Carlo harness.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod montecarlo;
pub mod oracle;
pub mod quadrature;
pub mod sieve;

pub use basis::{BasisSpec, DomainMode, InfluenceMode};
pub use error::{Error, Result};
pub use estimator::{estimate, point_estimate, EstimateReport, ThresholdRule, TrimConfig};
pub use montecarlo::{run_replications, sample_dgp, DgpSpec, MonteCarloReport};
pub use oracle::{exact_trim_bias, BiasDecomposition, DesignSpec};
pub use sieve::{fit_sieve, Normalization, Sample, SieveFit};
