//! Normal approximation diagnostics for sums of a random number of
//! independent, non-identically distributed summands.
//!
//! The crate evaluates the classical sufficient conditions (Lyapunov,
//! Lindeberg, Feller, asymptotic infinitesimality) and the weaker Rotar
//! condition, together with their randomly indexed versions, and checks
//! them against Monte Carlo estimates of the distance to the normal law.
//!
//! ```
//! use randsum_core::{ConditionEvaluator, SummandFamily};
//!
//! let ev = ConditionEvaluator::new(SummandFamily::rademacher());
//! let lyapunov = ev.lyapunov(4, 1.0).unwrap();
//! assert_eq!(lyapunov.value, 0.5);
//! ```

pub mod conditions;
pub mod dist;
pub mod error;
pub mod index;
pub mod montecarlo;
pub mod numeric;
pub mod quadrature;
pub mod rates;
pub mod report;
pub mod rng;

pub use conditions::{AuditReport, AuditRow, Condition, ConditionEvaluator, ConditionReport, CERTIFICATION_BUDGET};
pub use dist::{FamilyKind, NormalComparator, Shape, SummandFamily, VarianceProfile};
pub use error::{Error, Result};
pub use index::{IndexKind, IndexSpec, RandomIndexModel, WeightedExpectation};
pub use montecarlo::{clt_sweep, cf_identity_check, kolmogorov_distance, simulate, EmpiricalSample};
pub use quadrature::{IntegralResult, QuadConfig};
pub use rates::{large_o_audit, small_o_audit, smooth_metric, RateCurve, TestFunction};
pub use rng::SimulationSeeds;
