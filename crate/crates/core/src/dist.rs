//! Summand families, the matched normal comparison sequence and
//! partial-variance bookkeeping.
//!
//! Every built-in summand is `X_j = sigma_j * U` where `U` is a zero-mean,
//! unit-variance [`Shape`] and `sigma_j^2` comes from a [`VarianceProfile`].

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};
use crate::numeric::{self, NeumaierSum, NORMAL_NEGLIGIBLE};

pub(crate) const SQRT_3: f64 = 1.732_050_807_568_877_2;
const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Zero-mean, unit-variance base law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    /// Symmetric `+-1`.
    Rademacher,
    /// Uniform on `[-sqrt 3, sqrt 3]`.
    Uniform,
    Normal,
    /// `Exp(1) - 1`.
    CenteredExponential,
}

impl Shape {
    pub fn is_discrete(self) -> bool {
        matches!(self, Shape::Rademacher)
    }

    /// Right-continuous `P(U <= v)`.
    pub fn cdf(self, v: f64) -> f64 {
        match self {
            Shape::Rademacher => {
                if v < -1.0 {
                    0.0
                } else if v < 1.0 {
                    0.5
                } else {
                    1.0
                }
            }
            Shape::Uniform => ((v + SQRT_3) / (2.0 * SQRT_3)).clamp(0.0, 1.0),
            Shape::Normal => numeric::normal_cdf(v),
            Shape::CenteredExponential => {
                if v < -1.0 {
                    0.0
                } else {
                    -(-(v + 1.0)).exp_m1()
                }
            }
        }
    }

    /// `P(U > v)`, computed without cancellation in the upper tail.
    pub fn sf(self, v: f64) -> f64 {
        match self {
            Shape::Rademacher | Shape::Uniform => 1.0 - self.cdf(v),
            Shape::Normal => numeric::normal_sf(v),
            Shape::CenteredExponential => {
                if v < -1.0 {
                    1.0
                } else {
                    (-(v + 1.0)).exp()
                }
            }
        }
    }

    /// Lebesgue density, `None` for the discrete shape.
    pub fn pdf(self, v: f64) -> Option<f64> {
        match self {
            Shape::Rademacher => None,
            Shape::Uniform => Some(if v.abs() <= SQRT_3 { 0.5 / SQRT_3 } else { 0.0 }),
            Shape::Normal => Some(numeric::normal_pdf(v)),
            Shape::CenteredExponential => Some(if v < -1.0 { 0.0 } else { (-(v + 1.0)).exp() }),
        }
    }

    /// Point masses `(location, mass)` of a discrete shape.
    pub fn atoms(self) -> &'static [(f64, f64)] {
        match self {
            Shape::Rademacher => &[(-1.0, 0.5), (1.0, 0.5)],
            _ => &[],
        }
    }

    /// Closed support interval (infinite ends allowed).
    pub fn support(self) -> (f64, f64) {
        match self {
            Shape::Rademacher => (-1.0, 1.0),
            Shape::Uniform => (-SQRT_3, SQRT_3),
            Shape::Normal => (f64::NEG_INFINITY, f64::INFINITY),
            Shape::CenteredExponential => (-1.0, f64::INFINITY),
        }
    }

    /// Threshold past which `P(|U| > u)` and all tail moments are zero in `f64`.
    pub fn tail_cutoff(self) -> f64 {
        match self {
            Shape::Rademacher => 1.0,
            Shape::Uniform => SQRT_3,
            Shape::Normal => NORMAL_NEGLIGIBLE,
            Shape::CenteredExponential => 745.0,
        }
    }

    /// `P(|U| > u)`; atoms sitting exactly at `u` are excluded.
    pub fn tail_probability(self, u: f64) -> f64 {
        let u = u.max(0.0);
        match self {
            Shape::Rademacher => {
                if u < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Uniform => (1.0 - u / SQRT_3).max(0.0),
            Shape::Normal => 2.0 * numeric::normal_sf(u),
            Shape::CenteredExponential => {
                let upper = (-(u + 1.0)).exp();
                let lower = if u < 1.0 { -(-(1.0 - u)).exp_m1() } else { 0.0 };
                upper + lower
            }
        }
    }

    /// `E[U^2; |U| > u]`.
    pub fn tail_second_moment(self, u: f64) -> f64 {
        let u = u.max(0.0);
        match self {
            Shape::Rademacher => {
                if u < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Uniform => {
                if u < SQRT_3 {
                    1.0 - u * u * u / (3.0 * SQRT_3)
                } else {
                    0.0
                }
            }
            Shape::Normal => numeric::normal_tail_second_moment(u),
            Shape::CenteredExponential => {
                let a = 1.0 + u;
                let upper = (-a).exp() * (a * a + 1.0);
                let lower = if u < 1.0 {
                    let b = 1.0 - u;
                    1.0 - (-b).exp() * (b * b + 1.0)
                } else {
                    0.0
                };
                upper + lower
            }
        }
    }

    /// `E|U|^order`.
    pub fn abs_moment(self, order: f64) -> Result<f64> {
        self.tail_abs_moment(0.0, order)
    }

    /// `E[|U|^order; |U| > u]` (`u = 0` includes the whole line).
    pub fn tail_abs_moment(self, u: f64, order: f64) -> Result<f64> {
        if !order.is_finite() || order < 1.0 {
            return Err(Error::Domain(format!(
                "moment order must be finite and at least 1, got {order}"
            )));
        }
        if u.is_nan() {
            return Err(Error::Domain("threshold is NaN".into()));
        }
        let u = u.max(0.0);
        let r = order;
        let value = match self {
            Shape::Rademacher => {
                if u < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Uniform => {
                if u < SQRT_3 {
                    (3f64.powf(0.5 * (r + 1.0)) - u.powf(r + 1.0)) / ((r + 1.0) * SQRT_3)
                } else {
                    0.0
                }
            }
            Shape::Normal => {
                let a = 0.5 * (r + 1.0);
                2f64.powf(0.5 * r) / SQRT_PI * gamma(a) * upper_regularized_gamma(a, 0.5 * u * u)
            }
            Shape::CenteredExponential => {
                let e_inv = (-1.0f64).exp();
                let upper = e_inv * gamma(r + 1.0) * upper_regularized_gamma(r + 1.0, u);
                let lower = if u < 1.0 { e_inv * exp_power_integral(u, r) } else { 0.0 };
                upper + lower
            }
        };
        Ok(value)
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Shape::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Shape::Uniform => SQRT_3 * (2.0 * rng.random::<f64>() - 1.0),
            Shape::Normal => rng.sample(StandardNormal),
            Shape::CenteredExponential => {
                let e: f64 = rng.sample(Exp1);
                e - 1.0
            }
        }
    }
}

/// `Q(a, x)` with the `x = 0` and `x = inf` edges handled.
fn upper_regularized_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x == f64::INFINITY {
        0.0
    } else {
        gamma_ur(a, x)
    }
}

/// `int_u^1 s^r e^s ds` by its power series.
fn exp_power_integral(u: f64, r: f64) -> f64 {
    let mut acc = NeumaierSum::new();
    let mut inv_fact = 1.0;
    for m in 0..60 {
        let p = r + m as f64 + 1.0;
        let term = inv_fact * (1.0 - u.powf(p)) / p;
        acc.add(term);
        if term < 1e-18 * acc.value() {
            break;
        }
        inv_fact /= (m + 1) as f64;
    }
    acc.value()
}

/// How `sigma_j^2` depends on the summand position `j >= 1`.
///
/// All profiles are nondecreasing in `j`, so the largest variance share in the
/// first `k` summands is always the last one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case")]
pub enum VarianceProfile {
    Constant { variance: f64 },
    /// `sigma_j^2 = j^exponent`.
    Power { exponent: f64 },
    /// `sigma_j^2 = ratio^(j-1)`.
    Geometric { ratio: f64 },
}

impl VarianceProfile {
    pub fn validate(&self) -> Result<()> {
        match *self {
            VarianceProfile::Constant { variance } if !(variance.is_finite() && variance > 0.0) => {
                Err(Error::Config(format!("variance must be positive and finite, got {variance}")))
            }
            VarianceProfile::Power { exponent } if !(exponent.is_finite() && exponent >= 0.0) => {
                Err(Error::Config(format!("power must be finite and nonnegative, got {exponent}")))
            }
            VarianceProfile::Geometric { ratio } if !(ratio.is_finite() && ratio > 1.0) => {
                Err(Error::Config(format!("ratio must be finite and greater than 1, got {ratio}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, VarianceProfile::Constant { .. })
    }

    pub fn variance(&self, j: usize) -> f64 {
        assert!(j >= 1, "summand index starts at 1");
        match *self {
            VarianceProfile::Constant { variance } => variance,
            VarianceProfile::Power { exponent } => power_term(j, exponent),
            VarianceProfile::Geometric { ratio } => ratio.powf((j - 1) as f64),
        }
    }

    /// `B_k^2`. Overflows to infinity for long geometric sequences; use
    /// [`Normalizer::share`] for normalized quantities.
    pub fn b_squared(&self, k: usize) -> f64 {
        let kf = k as f64;
        match *self {
            VarianceProfile::Constant { variance } => kf * variance,
            // Integer sums, exact below 2^53.
            VarianceProfile::Power { exponent } if exponent == 0.0 => kf,
            VarianceProfile::Power { exponent } if exponent == 1.0 => kf * (kf + 1.0) / 2.0,
            VarianceProfile::Power { exponent } if exponent == 2.0 => kf * (kf + 1.0) * (2.0 * kf + 1.0) / 6.0,
            // Summing term by term would hit inf - inf in the compensation.
            VarianceProfile::Geometric { ratio } => (ratio.powf(kf) - 1.0) / (ratio - 1.0),
            _ => (1..=k).map(|j| self.variance(j)).collect::<NeumaierSum>().value(),
        }
    }

    pub fn normalizer(&self, k: usize) -> Normalizer {
        assert!(k >= 1, "normalizer needs at least one summand");
        let b_squared = match self {
            VarianceProfile::Power { .. } => self.b_squared(k),
            _ => f64::NAN,
        };
        Normalizer { profile: *self, k, b_squared }
    }
}

fn power_term(j: usize, exponent: f64) -> f64 {
    if exponent == 0.0 {
        1.0
    } else if exponent == 1.0 {
        j as f64
    } else {
        (j as f64).powf(exponent)
    }
}

/// Variance shares `sigma_j^2 / B_k^2` for a fixed number of summands `k`.
#[derive(Debug, Clone, Copy)]
pub struct Normalizer {
    profile: VarianceProfile,
    k: usize,
    b_squared: f64,
}

impl Normalizer {
    pub fn k(&self) -> usize {
        self.k
    }

    /// `sigma_j^2 / B_k^2` for `1 <= j <= k`, stable for any `k`.
    pub fn share(&self, j: usize) -> f64 {
        debug_assert!(j >= 1 && j <= self.k);
        if self.k == 1 {
            return 1.0;
        }
        match self.profile {
            VarianceProfile::Constant { .. } => 1.0 / self.k as f64,
            VarianceProfile::Power { exponent } => power_term(j, exponent) / self.b_squared,
            VarianceProfile::Geometric { ratio } => {
                let tail = ratio.powi(-(self.k as i32));
                (ratio - 1.0) * ratio.powi(j as i32 - 1 - self.k as i32) / (1.0 - tail)
            }
        }
    }

    /// Largest share among the first `k` summands.
    pub fn max_share(&self) -> f64 {
        self.share(self.k)
    }

    /// Sum of the shares of summands `1..=j` (the remainder left when a
    /// downward loop stops at `j + 1`).
    pub fn prefix_share(&self, j: usize) -> f64 {
        if j == 0 {
            return 0.0;
        }
        match self.profile {
            VarianceProfile::Constant { .. } => j as f64 / self.k as f64,
            VarianceProfile::Power { .. } => {
                (self.profile.b_squared(j) / self.b_squared).min(1.0)
            }
            VarianceProfile::Geometric { ratio } => {
                // (r^j - 1) / (r^k - 1)
                (ratio.powi(j as i32 - self.k as i32) * (1.0 - ratio.powi(-(j as i32))))
                    / (1.0 - ratio.powi(-(self.k as i32)))
            }
        }
    }
}

/// Identifier of a built-in family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Rademacher,
    Uniform,
    Normal,
    /// Normal summands with geometrically growing variances.
    Geonormal,
    /// Symmetric two-point summands `+-sigma_j` with growing variances.
    Twopoint,
    /// Centered exponential summands.
    Exponential,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 6] = [
        FamilyKind::Rademacher,
        FamilyKind::Uniform,
        FamilyKind::Normal,
        FamilyKind::Geonormal,
        FamilyKind::Twopoint,
        FamilyKind::Exponential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Rademacher => "rademacher",
            FamilyKind::Uniform => "uniform",
            FamilyKind::Normal => "normal",
            FamilyKind::Geonormal => "geonormal",
            FamilyKind::Twopoint => "twopoint",
            FamilyKind::Exponential => "exponential",
        }
    }

    fn shape(self) -> Shape {
        match self {
            FamilyKind::Rademacher | FamilyKind::Twopoint => Shape::Rademacher,
            FamilyKind::Uniform => Shape::Uniform,
            FamilyKind::Normal | FamilyKind::Geonormal => Shape::Normal,
            FamilyKind::Exponential => Shape::CenteredExponential,
        }
    }

    fn default_profile(self) -> VarianceProfile {
        match self {
            FamilyKind::Geonormal => VarianceProfile::Geometric { ratio: 2.0 },
            FamilyKind::Twopoint => VarianceProfile::Power { exponent: 1.0 },
            _ => VarianceProfile::Constant { variance: 1.0 },
        }
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FamilyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown family kind '{s}' (expected one of rademacher, uniform, normal, \
                     geonormal, twopoint, exponential)"
                ))
            })
    }
}

/// A sequence of independent zero-mean summands `X_1, X_2, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummandFamily {
    kind: FamilyKind,
    shape: Shape,
    profile: VarianceProfile,
}

/// `(B_n^2, B_n)` for the first `n` summands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartialVariance {
    pub n: usize,
    pub b_squared: f64,
    pub b: f64,
}

impl SummandFamily {
    /// Built-in family with its default variance profile.
    pub fn builtin(kind: FamilyKind) -> Self {
        SummandFamily { kind, shape: kind.shape(), profile: kind.default_profile() }
    }

    /// Built-in family with an explicit variance profile.
    pub fn with_profile(kind: FamilyKind, profile: VarianceProfile) -> Result<Self> {
        profile.validate()?;
        let allowed = match kind {
            FamilyKind::Geonormal => matches!(profile, VarianceProfile::Geometric { .. }),
            FamilyKind::Twopoint => !profile.is_constant(),
            _ => profile.is_constant(),
        };
        if !allowed {
            return Err(Error::Config(format!(
                "variance profile {profile:?} is not available for family '{}'",
                kind.name()
            )));
        }
        Ok(SummandFamily { kind, shape: kind.shape(), profile })
    }

    pub fn rademacher() -> Self {
        Self::builtin(FamilyKind::Rademacher)
    }
    pub fn uniform() -> Self {
        Self::builtin(FamilyKind::Uniform)
    }
    pub fn normal() -> Self {
        Self::builtin(FamilyKind::Normal)
    }
    pub fn geonormal() -> Self {
        Self::builtin(FamilyKind::Geonormal)
    }
    pub fn twopoint() -> Self {
        Self::builtin(FamilyKind::Twopoint)
    }
    pub fn exponential() -> Self {
        Self::builtin(FamilyKind::Exponential)
    }

    /// The six built-in families with default parameters.
    pub fn builtins() -> Vec<Self> {
        FamilyKind::ALL.into_iter().map(Self::builtin).collect()
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }
    pub fn shape(&self) -> Shape {
        self.shape
    }
    pub fn profile(&self) -> VarianceProfile {
        self.profile
    }

    /// True when all summands share one law.
    pub fn is_iid(&self) -> bool {
        self.profile.is_constant()
    }

    pub fn variance(&self, j: usize) -> f64 {
        self.profile.variance(j)
    }

    pub fn sigma(&self, j: usize) -> f64 {
        self.variance(j).sqrt()
    }

    /// `P(X_j <= x)`.
    pub fn cdf(&self, j: usize, x: f64) -> f64 {
        self.shape.cdf(x / self.sigma(j))
    }

    /// `E|X_j|^order`.
    pub fn abs_moment(&self, j: usize, order: f64) -> Result<f64> {
        let unit = self.shape.abs_moment(order)?;
        Ok(self.sigma(j).powf(order) * unit)
    }

    pub fn partial_variance(&self, n: usize) -> Result<PartialVariance> {
        crate::error::check_n(n)?;
        let b_squared = self.profile.b_squared(n);
        Ok(PartialVariance { n, b_squared, b: b_squared.sqrt() })
    }

    pub fn normalizer(&self, k: usize) -> Normalizer {
        self.profile.normalizer(k)
    }

    pub fn sample<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> f64 {
        self.sigma(j) * self.shape.sample(rng)
    }

    /// Parse `[family=]<kind>[,<key>=<value>]*`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let spec = spec.strip_prefix("family=").unwrap_or(spec);
        let mut parts = spec.split(',');
        let kind: FamilyKind = parts.next().unwrap_or("").trim().parse()?;
        let mut profile = kind.default_profile();
        for part in parts {
            let (key, value) = part.split_once('=').ok_or_else(|| {
                Error::Config(format!("malformed family parameter '{part}' (expected key=value)"))
            })?;
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::Config(format!("family parameter '{key}' is not a number: '{value}'"))
            })?;
            profile = match key.trim() {
                "variance" => VarianceProfile::Constant { variance: value },
                "power" => VarianceProfile::Power { exponent: value },
                "ratio" => VarianceProfile::Geometric { ratio: value },
                other => {
                    return Err(Error::Config(format!(
                        "unknown family parameter '{other}' (expected variance, power or ratio)"
                    )))
                }
            };
        }
        Self::with_profile(kind, profile)
    }
}

impl FromStr for SummandFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl fmt::Display for SummandFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())?;
        if self.profile != self.kind.default_profile() {
            match self.profile {
                VarianceProfile::Constant { variance } => write!(f, ",variance={variance}")?,
                VarianceProfile::Power { exponent } => write!(f, ",power={exponent}")?,
                VarianceProfile::Geometric { ratio } => write!(f, ",ratio={ratio}")?,
            }
        }
        Ok(())
    }
}

/// Independent normals `X*_j ~ N(0, sigma_j^2)` matched to a family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalComparator {
    profile: VarianceProfile,
}

impl NormalComparator {
    pub fn for_family(family: &SummandFamily) -> Self {
        NormalComparator { profile: family.profile }
    }

    pub fn sigma(&self, j: usize) -> f64 {
        self.profile.variance(j).sqrt()
    }

    pub fn cdf(&self, j: usize, x: f64) -> f64 {
        numeric::normal_cdf(x / self.sigma(j))
    }

    /// `E|X*_j| = sigma_j sqrt(2/pi)`.
    pub fn abs_first_moment(&self, j: usize) -> f64 {
        self.sigma(j) * numeric::SQRT_2_OVER_PI
    }
}
