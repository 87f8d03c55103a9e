//! Smooth-function metric `|E f(S_nu / B_nu) - E f(Z)|`, the modulus of
//! continuity, and order fits against the large-O and small-o rate shapes.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::conditions::ConditionEvaluator;
use crate::dist::SummandFamily;
use crate::error::{Error, Result};
use crate::index::{IndexSpec, RandomIndexModel};
use crate::montecarlo::run_chunks;
use crate::numeric::{self, linear_fit, NeumaierSum, SQRT_2_OVER_PI};
use crate::quadrature::{integrate, IntegralResult, QuadConfig};
use crate::rng::SimulationSeeds;

/// Metric points below this many standard errors are treated as noise.
pub const NOISE_SIGMAS: f64 = 4.0;

/// Built-in bounded test functions with bounded derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum TestFunction {
    Sin,
    Cos,
    /// `x / (1 + x^2)`.
    Clamp,
    /// `(1 - x^2)^2` on `|x| < 1`, zero outside.
    Bump,
    Constant { value: f64 },
}

impl TestFunction {
    pub const NAMED: [TestFunction; 4] = [TestFunction::Sin, TestFunction::Cos, TestFunction::Clamp, TestFunction::Bump];

    pub fn evaluate(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Sin => x.sin(),
            TestFunction::Cos => x.cos(),
            TestFunction::Clamp => x / (1.0 + x * x),
            TestFunction::Bump => {
                if x.abs() < 1.0 {
                    let s = 1.0 - x * x;
                    s * s
                } else {
                    0.0
                }
            }
            TestFunction::Constant { value } => value,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Sin => x.cos(),
            TestFunction::Cos => -x.sin(),
            TestFunction::Clamp => {
                let d = 1.0 + x * x;
                (1.0 - x * x) / (d * d)
            }
            TestFunction::Bump => {
                if x.abs() < 1.0 {
                    -4.0 * x * (1.0 - x * x)
                } else {
                    0.0
                }
            }
            TestFunction::Constant { .. } => 0.0,
        }
    }

    /// `sup |f|`.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            TestFunction::Sin | TestFunction::Cos | TestFunction::Bump => 1.0,
            TestFunction::Clamp => 0.5,
            TestFunction::Constant { value } => value.abs(),
        }
    }

    /// `sup |f'|`.
    pub fn derivative_sup_norm(&self) -> f64 {
        match *self {
            TestFunction::Sin | TestFunction::Cos | TestFunction::Clamp => 1.0,
            TestFunction::Bump => 8.0 / (3.0 * 3f64.sqrt()),
            TestFunction::Constant { .. } => 0.0,
        }
    }

    /// `(alpha, K)` with `|f'(x) - f'(y)| <= K |x - y|^alpha`, from `sup |f''|`.
    pub fn lipschitz(&self) -> (f64, f64) {
        let k = match *self {
            TestFunction::Sin | TestFunction::Cos => 1.0,
            TestFunction::Clamp => {
                // |f''| peaks at x = sqrt 2 - 1.
                let x = std::f64::consts::SQRT_2 - 1.0;
                let d = 1.0 + x * x;
                (2.0 * x * (x * x - 3.0) / (d * d * d)).abs()
            }
            TestFunction::Bump => 8.0,
            TestFunction::Constant { .. } => 0.0,
        };
        (1.0, k)
    }

    /// Hoelder constant of `f'` of order `alpha <= 1`:
    /// `min(K h, 2 ||f'||) <= K^alpha (2 ||f'||)^(1 - alpha) h^alpha`.
    pub fn holder_constant(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        let (_, k) = self.lipschitz();
        Ok(k.powf(alpha) * (2.0 * self.derivative_sup_norm()).powf(1.0 - alpha))
    }

    /// `E f(Z)` for a standard normal `Z`: closed form where one exists,
    /// quadrature otherwise.
    pub fn normal_expectation(&self) -> Result<IntegralResult> {
        let exact = |v: f64| IntegralResult { value: v, error_estimate: 0.0, subdivisions: 0 };
        match *self {
            TestFunction::Sin | TestFunction::Clamp => Ok(exact(0.0)),
            TestFunction::Cos => Ok(IntegralResult { error_estimate: 1e-16, ..exact((-0.5f64).exp()) }),
            TestFunction::Constant { value } => Ok(exact(value)),
            TestFunction::Bump => self.normal_expectation_by_quadrature(),
        }
    }

    /// `int f(x) phi(x) dx` over `[-40, 40]`.
    pub fn normal_expectation_by_quadrature(&self) -> Result<IntegralResult> {
        let cfg = QuadConfig { tolerance: 1e-12, ..QuadConfig::default() };
        let mut r = integrate(|x| self.evaluate(x) * numeric::normal_pdf(x), &[-40.0, -1.0, 0.0, 1.0, 40.0], &cfg)?;
        r.error_estimate += self.sup_norm() * 2.0 * numeric::normal_sf(40.0);
        Ok(r)
    }
}

impl FromStr for TestFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sin" => Ok(TestFunction::Sin),
            "cos" => Ok(TestFunction::Cos),
            "clamp" => Ok(TestFunction::Clamp),
            "bump" => Ok(TestFunction::Bump),
            "const" => Ok(TestFunction::Constant { value: 1.0 }),
            other => match other.strip_prefix("const=") {
                Some(v) => v
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(|value| TestFunction::Constant { value })
                    .ok_or_else(|| Error::Config(format!("bad constant in test function '{other}'"))),
                None => Err(Error::Config(format!(
                    "unknown test function '{other}' (expected sin, cos, clamp, bump or const=<c>)"
                ))),
            },
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Sin => f.write_str("sin"),
            TestFunction::Cos => f.write_str("cos"),
            TestFunction::Clamp => f.write_str("clamp"),
            TestFunction::Bump => f.write_str("bump"),
            TestFunction::Constant { value } => write!(f, "const={value}"),
        }
    }
}

/// Grid estimate of a modulus of continuity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModulusEstimate {
    /// Largest `|g(x + d) - g(x)|` found; a lower bound of the supremum.
    pub value: f64,
    /// Change produced by the last refinement level.
    pub error_estimate: f64,
}

/// `sup { |g(x) - g(y)| : |x - y| <= eps, x, y in [-half_width, half_width + eps] }`
/// by a coarse grid followed by local refinement around the best pair.
pub fn modulus_of_continuity<G: Fn(f64) -> f64>(g: G, eps: f64, half_width: f64) -> Result<ModulusEstimate> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive and finite, got {eps}")));
    }
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(Error::Domain("probe half-width must be positive".into()));
    }
    let gap = |x: f64, d: f64| (g(x + d) - g(x)).abs();
    let (nx, nd) = (4001usize, 20usize);
    let mut hx = 2.0 * half_width / (nx - 1) as f64;
    let mut hd = eps / nd as f64;
    let (mut bx, mut bd, mut best) = (-half_width, eps, f64::NEG_INFINITY);
    for i in 0..nx {
        let x = -half_width + i as f64 * hx;
        for m in 1..=nd {
            let d = m as f64 * hd;
            let v = gap(x, d);
            if v > best {
                (bx, bd, best) = (x, d, v);
            }
        }
    }
    let mut previous = best;
    for _ in 0..8 {
        previous = best;
        let (cx, cd) = (bx, bd);
        let (wx, wd) = (hx, hd);
        hx = wx / 10.0;
        hd = wd / 10.0;
        for i in -20..=20 {
            let x = (cx + i as f64 * hx).clamp(-half_width, half_width);
            for m in -10..=10 {
                let d = (cd + m as f64 * hd).clamp(0.0, eps);
                let v = gap(x, d);
                if v > best {
                    (bx, bd, best) = (x, d, v);
                }
            }
        }
    }
    Ok(ModulusEstimate { value: best.max(0.0), error_estimate: (best - previous).abs() })
}

/// Monte Carlo estimate of `|E f(S_nu / B_nu) - E f(Z)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothMetric {
    pub metric: f64,
    pub mc_stderr: f64,
    pub sample_mean: f64,
    pub normal_expectation: f64,
    pub trials: u64,
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn of(xs: impl Iterator<Item = f64>) -> Self {
        let mut m = Moments { count: 0.0, mean: 0.0, m2: 0.0 };
        for x in xs {
            m.count += 1.0;
            let d = x - m.mean;
            m.mean += d / m.count;
            m.m2 += d * (x - m.mean);
        }
        m
    }

    fn merge(self, o: Moments) -> Moments {
        if o.count == 0.0 {
            return self;
        }
        let count = self.count + o.count;
        let d = o.mean - self.mean;
        Moments {
            count,
            mean: self.mean + d * (o.count / count),
            m2: self.m2 + o.m2 + d * d * self.count * o.count / count,
        }
    }
}

pub fn smooth_metric(
    family: &SummandFamily,
    index: &RandomIndexModel,
    f: &TestFunction,
    trials: u64,
    seed: u64,
) -> Result<SmoothMetric> {
    let reference = f.normal_expectation()?.value;
    let chunks = run_chunks(family, index, trials, SimulationSeeds::from_seed(seed), |d| {
        Moments::of(d.iter().map(|&(_, y)| f.evaluate(y)))
    })?;
    let total = chunks.into_iter().fold(Moments { count: 0.0, mean: 0.0, m2: 0.0 }, Moments::merge);
    let var = if total.count > 1.0 { total.m2 / (total.count - 1.0) } else { 0.0 };
    Ok(SmoothMetric {
        metric: (total.mean - reference).abs(),
        mc_stderr: (var / total.count).sqrt(),
        sample_mean: total.mean,
        normal_expectation: reference,
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateAudit {
    LargeO,
    SmallO,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Majorant {
    pub epsilon: f64,
    /// `eps + E[rotar(nu_n, eps)]`.
    pub value: f64,
    pub random_rotar: f64,
    pub error_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub n: usize,
    pub metric: f64,
    pub mc_stderr: f64,
    /// `E[B_nu^-(1+alpha)]` (large-O) or `E[B_nu^-1]` (small-o).
    pub rate_scale: f64,
    /// Large-O: fitted constant times `rate_scale`. Small-o: smallest majorant.
    pub bound: f64,
    /// `metric / rate_scale`.
    pub ratio: f64,
    pub ratio_stderr: f64,
    /// Prefix sum of the moment premise at `n`.
    pub premise_sum: f64,
    /// Large-O only: `E[M(nu) K B_nu^-(1+alpha)]` with the premise sum `M(k)`.
    pub moment_bound: Option<f64>,
    pub majorants: Vec<Majorant>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCurve {
    pub audit: RateAudit,
    pub function: String,
    pub alpha: f64,
    pub points: Vec<RatePoint>,
    /// Least-squares constant of `metric ~ C rate_scale` over the first half of the grid.
    pub fitted_constant: f64,
    /// Log-log slope of metric against `n`, over points above the noise floor.
    pub fitted_order: Option<f64>,
    pub fit_residual: Option<f64>,
    /// Log-log slope of `rate_scale` against `n`.
    pub bound_order: Option<f64>,
    /// Grid points where `metric > bound + 4 stderr` (large-O only).
    pub flagged: Vec<usize>,
}

impl RateCurve {
    /// Consecutive ratios fall by more than `sigmas` combined standard errors.
    pub fn ratio_decreasing_beyond_noise(&self, sigmas: f64) -> bool {
        self.points.windows(2).all(|w| {
            let se = w[0].ratio_stderr.hypot(w[1].ratio_stderr);
            w[0].ratio - w[1].ratio > sigmas * se
        })
    }

    /// Some consecutive ratio rises by more than `sigmas` combined standard errors.
    pub fn ratio_increasing_beyond_noise(&self, sigmas: f64) -> bool {
        self.points.windows(2).any(|w| {
            let se = w[0].ratio_stderr.hypot(w[1].ratio_stderr);
            w[1].ratio - w[0].ratio > sigmas * se
        })
    }

    /// Every point's ratio lies within `sigmas` standard errors of 0.
    pub fn ratio_statistically_zero(&self, sigmas: f64) -> bool {
        self.points.iter().all(|p| p.ratio <= sigmas * p.ratio_stderr)
    }

    /// Nonincreasing smallest-majorant random Rotar values along the grid.
    pub fn rotar_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| {
            let a = w[0].majorants.iter().map(|m| m.random_rotar);
            let b = w[1].majorants.iter().map(|m| m.random_rotar);
            a.zip(b).all(|(x, y)| y <= x)
        })
    }
}

fn loglog_slope(ns: &[usize], ys: &[f64]) -> Option<(f64, f64)> {
    let (xs, ls): (Vec<f64>, Vec<f64>) = ns
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y > 0.0 && y.is_finite())
        .map(|(n, y)| ((*n as f64).ln(), y.ln()))
        .unzip();
    linear_fit(&xs, &ls).map(|(_, slope, resid)| (slope, resid))
}

fn check_grid(n_grid: &[usize], trials: u64) -> Result<()> {
    if n_grid.is_empty() || n_grid.contains(&0) {
        return Err(Error::Config("n grid must be nonempty with entries >= 1".into()));
    }
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    Ok(())
}

/// Prefix sums `(sum sigma_j, B_k^2)` for `k = 1..=max_k`.
fn prefix_scales(family: &SummandFamily, max_k: usize) -> Vec<(f64, f64)> {
    let mut s = NeumaierSum::new();
    let mut v = NeumaierSum::new();
    let mut out = Vec::with_capacity(max_k + 1);
    out.push((0.0, 0.0));
    for j in 1..=max_k {
        let var = family.variance(j);
        s.add(var.sqrt());
        v.add(var);
        out.push((s.value(), v.value()));
    }
    out
}

/// Metric against the `E[B_nu^-(1+alpha)]` rate with a fitted constant.
pub fn large_o_audit(
    family: &SummandFamily,
    index: &IndexSpec,
    f: &TestFunction,
    alpha: f64,
    n_grid: &[usize],
    trials: u64,
    seed: u64,
) -> Result<RateCurve> {
    check_grid(n_grid, trials)?;
    let holder = f.holder_constant(alpha)?;
    let m1_unit = family.shape().abs_moment(1.0)? + SQRT_2_OVER_PI;
    let mut points = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let model = index.model(n)?;
        let sm = smooth_metric(family, &model, f, trials, seed)?;
        let prefix = prefix_scales(family, model.max_support().max(n));
        let decay = -0.5 * (1.0 + alpha);
        let scale = model.expect(|k| prefix[k].1.powf(decay), family.variance(1).powf(decay))?;
        let premise = |k: usize| m1_unit * prefix[k].0 + 2.0 * prefix[k].1;
        let moment_term = |k: usize| premise(k) * holder * prefix[k].1.powf(-0.5 * (1.0 + alpha));
        let sup_term = model.support().map(|(k, _)| moment_term(k)).fold(0.0, f64::max);
        let moment_bound = if sup_term.is_finite() {
            model.expect(moment_term, sup_term).ok().map(|w| w.value + w.truncation_error_bound)
        } else {
            None
        };

        points.push(RatePoint {
            n,
            metric: sm.metric,
            mc_stderr: sm.mc_stderr,
            rate_scale: scale.value,
            bound: f64::NAN,
            ratio: sm.metric / scale.value,
            ratio_stderr: sm.mc_stderr / scale.value,
            premise_sum: premise(n),
            moment_bound,
            majorants: Vec::new(),
        });
    }
    let fit_len = (points.len() / 2).max(1);
    let (num, den) = points[..fit_len]
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p.metric * p.rate_scale, b + p.rate_scale * p.rate_scale));
    let fitted_constant = if den > 0.0 { num / den } else { 0.0 };
    let mut flagged = Vec::new();
    for p in &mut points {
        p.bound = fitted_constant * p.rate_scale;
        if p.metric > p.bound + NOISE_SIGMAS * p.mc_stderr {
            flagged.push(p.n);
        }
    }
    Ok(finish_curve(RateAudit::LargeO, f, alpha, points, fitted_constant, flagged))
}

fn finish_curve(
    audit: RateAudit,
    f: &TestFunction,
    alpha: f64,
    points: Vec<RatePoint>,
    fitted_constant: f64,
    flagged: Vec<usize>,
) -> RateCurve {
    let above: Vec<&RatePoint> = points.iter().filter(|p| p.metric > NOISE_SIGMAS * p.mc_stderr).collect();
    let fit = loglog_slope(
        &above.iter().map(|p| p.n).collect::<Vec<_>>(),
        &above.iter().map(|p| p.metric).collect::<Vec<_>>(),
    );
    let bound_order = loglog_slope(
        &points.iter().map(|p| p.n).collect::<Vec<_>>(),
        &points.iter().map(|p| p.rate_scale).collect::<Vec<_>>(),
    )
    .map(|(s, _)| s);
    RateCurve {
        audit,
        function: f.to_string(),
        alpha,
        points,
        fitted_constant,
        fitted_order: fit.map(|(s, _)| s),
        fit_residual: fit.map(|(_, r)| r),
        bound_order,
        flagged,
    }
}

/// Metric divided by `E[B_nu^-1]`, alongside the `eps + random rotar` majorants.
/// Restricted to test functions with `||f'|| >= 1`.
#[allow(clippy::too_many_arguments)]
pub fn small_o_audit(
    evaluator: &ConditionEvaluator,
    index: &IndexSpec,
    f: &TestFunction,
    n_grid: &[usize],
    epsilon_grid: &[f64],
    trials: u64,
    seed: u64,
) -> Result<RateCurve> {
    check_grid(n_grid, trials)?;
    if f.derivative_sup_norm() < 1.0 {
        return Err(Error::Domain(format!(
            "small-o audit needs a test function with sup |f'| >= 1; '{f}' has {}",
            f.derivative_sup_norm()
        )));
    }
    if epsilon_grid.is_empty() {
        return Err(Error::Config("epsilon grid must be nonempty".into()));
    }
    let family = evaluator.family();
    let m2_unit = family.shape().abs_moment(1.0)? + SQRT_2_OVER_PI;
    let mut points = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let model = index.model(n)?;
        let sm = smooth_metric(family, &model, f, trials, seed)?;
        let prefix = prefix_scales(family, model.max_support().max(n));
        let scale = model.expect(|k| prefix[k].1.sqrt().recip(), family.sigma(1).recip())?;
        let majorants = epsilon_grid
            .iter()
            .map(|&eps| {
                let r = evaluator.random_rotar(&model, eps)?;
                Ok(Majorant { epsilon: eps, value: eps + r.value, random_rotar: r.value, error_bound: r.error_bound })
            })
            .collect::<Result<Vec<_>>>()?;
        let bound = majorants.iter().map(|m| m.value).fold(f64::INFINITY, f64::min);
        points.push(RatePoint {
            n,
            metric: sm.metric,
            mc_stderr: sm.mc_stderr,
            rate_scale: scale.value,
            bound,
            ratio: sm.metric / scale.value,
            ratio_stderr: sm.mc_stderr / scale.value,
            premise_sum: m2_unit * prefix[n].0,
            moment_bound: None,
            majorants,
        });
    }
    let fit_len = (points.len() / 2).max(1);
    let (num, den) = points[..fit_len]
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p.metric * p.rate_scale, b + p.rate_scale * p.rate_scale));
    let fitted_constant = if den > 0.0 { num / den } else { 0.0 };
    Ok(finish_curve(RateAudit::SmallO, f, 1.0, points, fitted_constant, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cosine_modulus() {
        let m = modulus_of_continuity(f64::cos, 0.1, 10.0).unwrap();
        assert_abs_diff_eq!(m.value, 2.0 * 0.05f64.sin(), epsilon = 1e-10);
        assert!(m.error_estimate < 1e-10);
    }

    #[test]
    fn constant_has_zero_modulus() {
        let c = TestFunction::Constant { value: 3.0 };
        assert_eq!(modulus_of_continuity(|x| c.evaluate(x), 0.5, 10.0).unwrap().value, 0.0);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["sin", "cos", "clamp", "bump", "const=2.5"] {
            let f: TestFunction = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!("tanh".parse::<TestFunction>().is_err());
    }

    #[test]
    fn clamp_lipschitz_constant() {
        assert_abs_diff_eq!(TestFunction::Clamp.lipschitz().1, 1.4571, epsilon = 1e-4);
    }
}
