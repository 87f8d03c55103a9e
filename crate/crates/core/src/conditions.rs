//! Lyapunov, Lindeberg, Feller, infinitesimality and Rotar functionals,
//! their randomly indexed versions, and the audit of the inequalities
//! linking them.
//!
//! All functionals are computed from variance shares `sigma_j^2 / B_k^2`, so
//! they stay finite when `B_k^2` itself overflows. The Rotar functional is
//! normalized by `B_n^2`:
//! `(1/B_n^2) sum_j int_{|x| > eps B_n} |x| |F_j(x) - Phi_j(x)| dx`.

use serde::Serialize;

use crate::dist::{NormalComparator, Normalizer, Shape, SummandFamily};
use crate::error::{check_epsilon, check_n, Error, Result};
use crate::index::RandomIndexModel;
use crate::numeric::{self, NeumaierSum, NORMAL_NEGLIGIBLE};
use crate::quadrature::{self, IntegralResult, QuadConfig};

/// Audit rows whose combined error bound exceeds this are not certified.
pub const CERTIFICATION_BUDGET: f64 = 1e-8;

/// Downward sums over summands stop once the rest is bounded by this.
const NEGLIGIBLE_REMAINDER: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Lyapunov,
    Lindeberg,
    Feller,
    Infinitesimality,
    Rotar,
    RandomLindeberg,
    RandomFeller,
    RandomRotar,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Lyapunov => "lyapunov",
            Condition::Lindeberg => "lindeberg",
            Condition::Feller => "feller",
            Condition::Infinitesimality => "infinitesimality",
            Condition::Rotar => "rotar",
            Condition::RandomLindeberg => "random_lindeberg",
            Condition::RandomFeller => "random_feller",
            Condition::RandomRotar => "random_rotar",
        }
    }
}

/// One evaluated functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub n: usize,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub value: f64,
    pub error_bound: f64,
}

/// A value with its error bound.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Bounded {
    value: f64,
    error: f64,
}

impl From<IntegralResult> for Bounded {
    fn from(r: IntegralResult) -> Self {
        Bounded { value: r.value, error: r.error_estimate }
    }
}

fn rounding(value: f64) -> f64 {
    16.0 * f64::EPSILON * value.abs()
}

/// `N(a) = int_{|z| > a} z^2 dPhi(z)`.
pub fn normal_tail_term(a: f64) -> f64 {
    numeric::normal_tail_second_moment(a)
}

/// Evaluates the functionals for one summand family.
#[derive(Debug, Clone)]
pub struct ConditionEvaluator {
    family: SummandFamily,
    comparator: NormalComparator,
    quad: QuadConfig,
}

impl ConditionEvaluator {
    pub fn new(family: SummandFamily) -> Self {
        ConditionEvaluator { comparator: NormalComparator::for_family(&family), family, quad: QuadConfig::default() }
    }

    pub fn with_quad(mut self, quad: QuadConfig) -> Self {
        self.quad = quad;
        self
    }

    pub fn family(&self) -> &SummandFamily {
        &self.family
    }

    pub fn comparator(&self) -> &NormalComparator {
        &self.comparator
    }

    fn shape(&self) -> Shape {
        self.family.shape()
    }

    /// `sum_j share_j term(eps / sqrt(share_j))`, walking `j` downward from `k`
    /// and stopping once the threshold passes `cutoff`. The skipped summands
    /// are charged `tail_bound` per unit share.
    fn share_weighted<F>(&self, k: usize, eps: f64, cutoff: f64, tail_bound: f64, term: F) -> Result<Bounded>
    where
        F: Fn(f64) -> Result<Bounded>,
    {
        if self.family.is_iid() {
            return term(eps * (k as f64).sqrt());
        }
        let norm = self.family.normalizer(k);
        let mut value = NeumaierSum::new();
        let mut error = NeumaierSum::new();
        let mut consumed = NeumaierSum::new();
        // Share of summands 1..=j not yet visited, rounded up.
        let remaining = |consumed: &NeumaierSum| (1.0 - consumed.value()).max(0.0) + 4.0 * f64::EPSILON;
        for j in (1..=k).rev() {
            let share = norm.share(j);
            let u = eps / share.sqrt();
            if u >= cutoff {
                error.add(remaining(&consumed) * tail_bound);
                break;
            }
            let t = term(u)?;
            value.add(share * t.value);
            error.add(share * t.error);
            consumed.add(share);
            // `term` is nonincreasing in the threshold, so the summands left
            // contribute at most their share times the current term.
            let rest = remaining(&consumed) * (t.value + t.error);
            if j > 1 && rest <= NEGLIGIBLE_REMAINDER {
                error.add(rest);
                break;
            }
        }
        Ok(Bounded { value: value.value(), error: error.value() })
    }

    fn lyapunov_k(&self, k: usize, delta: f64) -> Result<Bounded> {
        let m = self.shape().abs_moment(2.0 + delta)?;
        let value = if self.family.is_iid() {
            m * (k as f64).powf(-0.5 * delta)
        } else {
            let norm = self.family.normalizer(k);
            let s: NeumaierSum = (1..=k).map(|j| norm.share(j).powf(1.0 + 0.5 * delta)).collect();
            m * s.value()
        };
        Ok(Bounded { value, error: rounding(value) })
    }

    fn lindeberg_k(&self, k: usize, eps: f64) -> Result<Bounded> {
        let shape = self.shape();
        let exact = shape.is_discrete();
        let term = |u: f64| {
            let v = shape.tail_second_moment(u);
            Ok(Bounded { value: v, error: if exact { 0.0 } else { rounding(v) } })
        };
        let cutoff = shape.tail_cutoff();
        self.share_weighted(k, eps, cutoff, shape.tail_second_moment(cutoff), term)
    }

    fn feller_k(&self, k: usize) -> Bounded {
        let value = if self.family.is_iid() { 1.0 / k as f64 } else { self.family.normalizer(k).max_share() };
        Bounded { value, error: if k == 1 { 0.0 } else { rounding(value) } }
    }

    fn infinitesimality_k(&self, k: usize, eps: f64) -> Bounded {
        let shape = self.shape();
        let exact = shape.is_discrete();
        let finish = |log_survival: f64, certain: bool| {
            let value = if certain { 1.0 } else { -log_survival.exp_m1() };
            Bounded { value, error: if exact { 0.0 } else { rounding(value) } }
        };
        if self.family.is_iid() {
            let q = shape.tail_probability(eps * (k as f64).sqrt());
            return finish(k as f64 * (-q).ln_1p(), q >= 1.0);
        }
        let norm: Normalizer = self.family.normalizer(k);
        let cutoff = shape.tail_cutoff();
        let mut log_survival = NeumaierSum::new();
        for j in (1..=k).rev() {
            let u = eps / norm.share(j).sqrt();
            if u >= cutoff {
                break;
            }
            let q = shape.tail_probability(u);
            if q >= 1.0 {
                return finish(0.0, true);
            }
            log_survival.add((-q).ln_1p());
        }
        finish(log_survival.value(), false)
    }

    fn rotar_k(&self, k: usize, eps: f64) -> Result<Bounded> {
        let shape = self.shape();
        if shape == Shape::Normal {
            return Ok(Bounded::default());
        }
        let quad = self.quad;
        let (cutoff, tail_bound) = match shape {
            Shape::Rademacher => (NORMAL_NEGLIGIBLE, 0.0),
            _ => {
                let c = quadrature::envelope_cutoff(shape, quad.tolerance / 10.0);
                (c, quadrature::rotar_envelope(shape, c))
            }
        };
        self.share_weighted(k, eps, cutoff, tail_bound, |u| {
            quadrature::unit_rotar_tail(shape, u, &quad).map(Bounded::from)
        })
    }

    fn report(&self, condition: Condition, n: usize, epsilon: Option<f64>, delta: Option<f64>, b: Bounded) -> ConditionReport {
        ConditionReport { condition, n, epsilon, delta, value: b.value, error_bound: b.error }
    }

    /// `B_n^{-(2+delta)} sum_j E|X_j|^{2+delta}`.
    pub fn lyapunov(&self, n: usize, delta: f64) -> Result<ConditionReport> {
        check_n(n)?;
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Domain(format!("delta must be positive and finite, got {delta}")));
        }
        let b = self.lyapunov_k(n, delta)?;
        Ok(self.report(Condition::Lyapunov, n, None, Some(delta), b))
    }

    /// `B_n^{-2} sum_j E[X_j^2; |X_j| > eps B_n]`.
    pub fn lindeberg(&self, n: usize, eps: f64) -> Result<ConditionReport> {
        check_n(n)?;
        check_epsilon(eps)?;
        let b = self.lindeberg_k(n, eps)?;
        Ok(self.report(Condition::Lindeberg, n, Some(eps), None, b))
    }

    /// `max_j sigma_j^2 / B_n^2`.
    pub fn feller(&self, n: usize) -> Result<ConditionReport> {
        check_n(n)?;
        Ok(self.report(Condition::Feller, n, None, None, self.feller_k(n)))
    }

    /// `P(max_j |X_j| > eps B_n)`.
    pub fn infinitesimality(&self, n: usize, eps: f64) -> Result<ConditionReport> {
        check_n(n)?;
        check_epsilon(eps)?;
        Ok(self.report(Condition::Infinitesimality, n, Some(eps), None, self.infinitesimality_k(n, eps)))
    }

    /// `B_n^{-2} sum_j int_{|x| > eps B_n} |x| |F_j(x) - Phi_j(x)| dx`.
    pub fn rotar(&self, n: usize, eps: f64) -> Result<ConditionReport> {
        check_n(n)?;
        check_epsilon(eps)?;
        let b = self.rotar_k(n, eps)?;
        Ok(self.report(Condition::Rotar, n, Some(eps), None, b))
    }

    fn random<F>(&self, index: &RandomIndexModel, abs_bound: f64, f: F) -> Result<Bounded>
    where
        F: Fn(usize) -> Result<Bounded> + Sync,
    {
        let out = index.expect_many(
            |k| {
                let b = f(k)?;
                Ok([b.value, b.error])
            },
            [abs_bound, 0.0],
        )?;
        Ok(Bounded { value: out[0].value, error: out[1].value + out[0].truncation_error_bound })
    }

    /// `E[lindeberg(nu_n, eps)]`.
    pub fn random_lindeberg(&self, index: &RandomIndexModel, eps: f64) -> Result<ConditionReport> {
        check_epsilon(eps)?;
        let b = self.random(index, 1.0, |k| self.lindeberg_k(k, eps))?;
        Ok(self.report(Condition::RandomLindeberg, index.n(), Some(eps), None, b))
    }

    /// `E[feller(nu_n)]`.
    pub fn random_feller(&self, index: &RandomIndexModel) -> Result<ConditionReport> {
        let b = self.random(index, 1.0, |k| Ok(self.feller_k(k)))?;
        Ok(self.report(Condition::RandomFeller, index.n(), None, None, b))
    }

    /// `E[rotar(nu_n, eps)]`.
    pub fn random_rotar(&self, index: &RandomIndexModel, eps: f64) -> Result<ConditionReport> {
        check_epsilon(eps)?;
        let b = self.random(index, 2.0, |k| self.rotar_k(k, eps))?;
        Ok(self.report(Condition::RandomRotar, index.n(), Some(eps), None, b))
    }

    /// Evaluate the implications between the functionals at `(n, eps, delta)`
    /// and, for the randomly indexed versions, under `index`.
    pub fn implication_audit(
        &self,
        index: &RandomIndexModel,
        n: usize,
        eps: f64,
        delta: f64,
    ) -> Result<AuditReport> {
        let lyap = self.lyapunov(n, delta)?;
        let lind = self.lindeberg(n, eps)?;
        let fel = self.feller(n)?;
        let rot = self.rotar(n, eps)?;
        let eps_pow = eps.powf(-delta);
        let normal_at_n = normal_tail_term(eps / fel.value.sqrt());

        let per_k = index.expect_many(
            |k| {
                let l = self.lindeberg_k(k, eps)?;
                let f = self.feller_k(k);
                let r = self.rotar_k(k, eps)?;
                let nt = normal_tail_term(eps / f.value.sqrt());
                Ok([l.value, l.error, f.value, f.error, r.value, r.error, nt])
            },
            [1.0, 0.0, 1.0, 0.0, 2.0, 0.0, 1.0],
        )?;
        let e = |i: usize| per_k[i].value;
        let trunc = |i: usize| per_k[i].truncation_error_bound;

        let rows = vec![
            AuditRow::new(
                "lindeberg_le_lyapunov",
                lind.value,
                eps_pow * lyap.value,
                lind.error_bound + eps_pow * lyap.error_bound,
            ),
            AuditRow::new(
                "feller_le_eps2_plus_lindeberg",
                fel.value,
                eps * eps + lind.value,
                fel.error_bound + lind.error_bound + rounding(eps * eps),
            ),
            AuditRow::new(
                "rotar_le_lindeberg_plus_normal_tail",
                rot.value,
                lind.value + normal_at_n,
                rot.error_bound + lind.error_bound + rounding(normal_at_n),
            ),
            AuditRow::new(
                "random_feller_le_eps2_plus_random_lindeberg",
                e(2),
                eps * eps + e(0),
                e(3) + trunc(2) + e(1) + trunc(0) + rounding(eps * eps),
            ),
            AuditRow::new(
                "random_rotar_le_random_lindeberg_plus_normal_tail",
                e(4),
                e(0) + e(6),
                e(5) + trunc(4) + e(1) + trunc(0) + trunc(6) + rounding(e(6)),
            ),
        ];
        Ok(AuditReport {
            family: self.family.to_string(),
            index: index.to_string(),
            n,
            epsilon: eps,
            delta,
            rows,
        })
    }
}

/// One inequality `lhs <= rhs` with its combined numerical error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub inequality: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub slack: f64,
    pub error_bound: f64,
    /// `error_bound <= CERTIFICATION_BUDGET`.
    pub certified: bool,
    pub pass: bool,
}

impl AuditRow {
    fn new(inequality: &str, lhs: f64, rhs: f64, error_bound: f64) -> Self {
        let slack = rhs - lhs;
        let certified = error_bound <= CERTIFICATION_BUDGET;
        AuditRow {
            inequality: inequality.to_string(),
            lhs,
            rhs,
            slack,
            error_bound,
            certified,
            pass: certified && slack >= -error_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub family: String,
    pub index: String,
    pub n: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub rows: Vec<AuditRow>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}
