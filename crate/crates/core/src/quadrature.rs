//! Adaptive Gauss-Kronrod integration and the per-summand tail integrals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use serde::Serialize;

use crate::dist::{NormalComparator, Shape, SummandFamily};
use crate::error::{Error, Result};
use crate::numeric::{self, NeumaierSum, NORMAL_NEGLIGIBLE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegralResult {
    pub value: f64,
    pub error_estimate: f64,
    pub subdivisions: usize,
}

impl IntegralResult {
    pub const ZERO: IntegralResult = IntegralResult { value: 0.0, error_estimate: 0.0, subdivisions: 0 };

    fn exact(value: f64) -> Self {
        IntegralResult { value, error_estimate: 0.0, subdivisions: 0 }
    }

    /// A closed-form value: only floating-point rounding contributes.
    fn closed_form(value: f64) -> Self {
        IntegralResult { value, error_estimate: 16.0 * f64::EPSILON * value.abs(), subdivisions: 0 }
    }

    fn scaled(self, factor: f64) -> Self {
        IntegralResult {
            value: self.value * factor,
            error_estimate: self.error_estimate * factor.abs(),
            subdivisions: self.subdivisions,
        }
    }
}

/// Tolerance settings for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadConfig {
    /// Target absolute error of one integral.
    pub tolerance: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig { tolerance: 1e-10, max_subdivisions: 10_000 }
    }
}

impl QuadConfig {
    pub fn with_tolerance(tolerance: f64) -> Result<Self> {
        if !(tolerance.is_finite() && tolerance > 0.0) {
            return Err(Error::Config(format!("quadrature tolerance must be positive, got {tolerance}")));
        }
        Ok(QuadConfig { tolerance, ..Default::default() })
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

/// Gauss weights for the odd-indexed Kronrod nodes (and the centre).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 15-point Kronrod panel with the QUADPACK error heuristic.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_g = fc * WG[3];
    let mut res_k = fc * WGK[7];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let scale = half.abs();
    res_abs *= scale;
    res_asc *= scale;
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Panel { a, b, value: res_k * half, error: err }
}

/// Integrate `f` over `[points[0], points.last()]`, treating every interior
/// point as a breakpoint. `points` must be sorted and finite.
pub fn integrate<F: Fn(f64) -> f64>(f: F, points: &[f64], cfg: &QuadConfig) -> Result<IntegralResult> {
    if points.len() < 2 {
        return Ok(IntegralResult::ZERO);
    }
    if points.iter().any(|x| !x.is_finite()) || points.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("integration breakpoints must be finite and sorted".into()));
    }
    let mut heap = BinaryHeap::new();
    let mut total_err = 0.0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            let p = gk15(&f, w[0], w[1]);
            total_err += p.error;
            heap.push(p);
        }
    }
    let mut subdivisions = 0;
    while total_err > cfg.tolerance {
        if subdivisions >= cfg.max_subdivisions {
            let (value, error_estimate) = totals(&heap);
            return Err(Error::NotConverged { value, error_estimate, subdivisions });
        }
        let worst = heap.pop().expect("nonempty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // The panel cannot be split further in f64.
            heap.push(worst);
            let (value, error_estimate) = totals(&heap);
            return Err(Error::NotConverged { value, error_estimate, subdivisions });
        }
        let left = gk15(&f, worst.a, mid);
        let right = gk15(&f, mid, worst.b);
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        subdivisions += 1;
        if subdivisions % 64 == 0 {
            total_err = totals(&heap).1;
        }
    }
    let (value, error_estimate) = totals(&heap);
    if !value.is_finite() {
        return Err(Error::Numeric("integrand produced a non-finite value".into()));
    }
    Ok(IntegralResult { value, error_estimate, subdivisions })
}

fn totals(heap: &BinaryHeap<Panel>) -> (f64, f64) {
    let mut v = NeumaierSum::new();
    let mut e = NeumaierSum::new();
    for p in heap.iter() {
        v.add(p.value);
        e.add(p.error);
    }
    (v.value(), e.value())
}

/// `E[X_j^2; |X_j| > threshold]`.
pub fn tail_second_moment(family: &SummandFamily, j: usize, threshold: f64) -> IntegralResult {
    let var = family.variance(j);
    let shape = family.shape();
    let unit = shape.tail_second_moment(unit_threshold(threshold, var));
    if shape.is_discrete() {
        IntegralResult::exact(var * unit)
    } else {
        IntegralResult::closed_form(var * unit)
    }
}

/// `E[|X_j|^order; |X_j| > threshold]`.
pub fn tail_abs_moment(
    family: &SummandFamily,
    j: usize,
    threshold: f64,
    order: f64,
) -> Result<IntegralResult> {
    let var = family.variance(j);
    let shape = family.shape();
    let unit = shape.tail_abs_moment(unit_threshold(threshold, var), order)?;
    let value = family.sigma(j).powf(order) * unit;
    Ok(if shape.is_discrete() { IntegralResult::exact(value) } else { IntegralResult::closed_form(value) })
}

fn unit_threshold(threshold: f64, variance: f64) -> f64 {
    if threshold <= 0.0 {
        0.0
    } else {
        threshold / variance.sqrt()
    }
}

/// `int_{|x| > threshold} |x| |F_j(x) - Phi_j(x)| dx`, where `Phi_j` is the
/// comparator's law for summand `j`.
pub fn rotar_tail_integral(
    family: &SummandFamily,
    comparator: &NormalComparator,
    j: usize,
    threshold: f64,
    cfg: &QuadConfig,
) -> Result<IntegralResult> {
    let sigma = family.sigma(j);
    if comparator.sigma(j) != sigma {
        return Err(Error::Config("comparator does not match the summand variances".into()));
    }
    if threshold.is_nan() {
        return Err(Error::Domain("threshold is NaN".into()));
    }
    match unit_rotar_tail(family.shape(), threshold.max(0.0) / sigma, cfg) {
        Ok(unit) => Ok(unit.scaled(sigma * sigma)),
        Err(Error::NotConverged { value, error_estimate, subdivisions }) => Err(Error::NotConverged {
            value: value * sigma * sigma,
            error_estimate: error_estimate * sigma * sigma,
            subdivisions,
        }),
        Err(e) => Err(e),
    }
}

/// `R_U(u) = int_{|v| > u} |v| |F_U(v) - Phi(v)| dv` for the unit shape.
pub(crate) fn unit_rotar_tail(shape: Shape, u: f64, cfg: &QuadConfig) -> Result<IntegralResult> {
    let u = if u.is_nan() { return Err(Error::Domain("threshold is NaN".into())) } else { u.max(0.0) };
    match shape {
        Shape::Normal => Ok(IntegralResult::exact(0.0)),
        Shape::Rademacher => Ok(IntegralResult::closed_form(rademacher_rotar_tail(u))),
        Shape::Uniform | Shape::CenteredExponential => continuous_rotar_tail(shape, u, cfg),
    }
}

/// Closed form of `R_U(u)` for symmetric `+-1`.
fn rademacher_rotar_tail(u: f64) -> f64 {
    // g(a) = int_a^inf v (1 - Phi(v)) dv
    let g = numeric::normal_sf_first_moment;
    if u >= NORMAL_NEGLIGIBLE {
        0.0
    } else if u >= 1.0 {
        2.0 * g(u)
    } else {
        // On [u, 1): integrand v (Phi(v) - 1/2) with antiderivative a(v).
        let a = |v: f64| {
            0.5 * ((v * v - 1.0) * numeric::normal_cdf(v) + v * numeric::normal_pdf(v)) - 0.25 * v * v
        };
        2.0 * (a(1.0) - a(u) + g(1.0))
    }
}

/// `|F_U(v) - Phi(v)|`, evaluated on the side where neither term is close to 1.
fn cdf_gap(shape: Shape, v: f64) -> f64 {
    if v > 0.0 {
        (shape.sf(v) - numeric::normal_sf(v)).abs()
    } else {
        (shape.cdf(v) - numeric::normal_cdf(v)).abs()
    }
}

/// Bound on `int_{|v| > t} |v| |F_U - Phi| dv`: half the tail second moments.
pub(crate) fn rotar_envelope(shape: Shape, t: f64) -> f64 {
    0.5 * (shape.tail_second_moment(t) + numeric::normal_tail_second_moment(t))
}

/// Smallest (to bisection accuracy) `T` with `rotar_envelope(T) <= budget`.
pub(crate) fn envelope_cutoff(shape: Shape, budget: f64) -> f64 {
    let mut hi = 1.0;
    while rotar_envelope(shape, hi) > budget {
        hi *= 2.0;
        if hi > 1e4 {
            return hi;
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if rotar_envelope(shape, mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 * hi {
            break;
        }
    }
    hi
}

/// Points where `F_U - Phi` changes sign (or the support has an edge).
fn breakpoints(shape: Shape) -> &'static [f64] {
    static UNIFORM: OnceLock<Vec<f64>> = OnceLock::new();
    static EXPONENTIAL: OnceLock<Vec<f64>> = OnceLock::new();
    let cell = match shape {
        Shape::Uniform => &UNIFORM,
        Shape::CenteredExponential => &EXPONENTIAL,
        _ => return &[],
    };
    cell.get_or_init(|| {
        let mut pts = sign_changes(|v| shape.cdf(v) - numeric::normal_cdf(v), -8.0, 8.0, 16_000);
        let (lo, hi) = shape.support();
        pts.extend([lo, hi].into_iter().filter(|x| x.is_finite()));
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        pts
    })
}

fn sign_changes<F: Fn(f64) -> f64>(d: F, lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    let h = (hi - lo) / steps as f64;
    let mut out = Vec::new();
    let mut x0 = lo;
    let mut d0 = d(x0);
    for i in 1..=steps {
        let x1 = lo + i as f64 * h;
        let d1 = d(x1);
        if d1 == 0.0 {
            out.push(x1);
        } else if d0 != 0.0 && d0.signum() != d1.signum() {
            let (mut a, mut b, da) = (x0, x1, d0);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                let dm = d(m);
                if dm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if dm.signum() == da.signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            out.push(0.5 * (a + b));
        }
        x0 = x1;
        d0 = d1;
    }
    out
}

fn continuous_rotar_tail(shape: Shape, u: f64, cfg: &QuadConfig) -> Result<IntegralResult> {
    let budget = cfg.tolerance / 10.0;
    let cutoff = envelope_cutoff(shape, budget);
    if u >= cutoff {
        return Ok(IntegralResult { value: 0.0, error_estimate: rotar_envelope(shape, u), subdivisions: 0 });
    }
    let side_cfg = QuadConfig { tolerance: 0.45 * cfg.tolerance, ..*cfg };
    let bps = breakpoints(shape);
    let upper_pts = interval_points(u, cutoff, bps);
    let lower_pts = interval_points(-cutoff, -u, bps);
    let integrand = |v: f64| v.abs() * cdf_gap(shape, v);
    let upper = integrate(integrand, &upper_pts, &side_cfg);
    let lower = integrate(integrand, &lower_pts, &side_cfg);
    let converged = upper.is_ok() && lower.is_ok();
    let (upper, lower) = (partial(upper)?, partial(lower)?);
    let total = IntegralResult {
        value: upper.value + lower.value,
        error_estimate: upper.error_estimate + lower.error_estimate + rotar_envelope(shape, cutoff),
        subdivisions: upper.subdivisions + lower.subdivisions,
    };
    if converged {
        Ok(total)
    } else {
        Err(Error::NotConverged {
            value: total.value,
            error_estimate: total.error_estimate,
            subdivisions: total.subdivisions,
        })
    }
}

/// The best available estimate, partial or not; other errors pass through.
fn partial(r: Result<IntegralResult>) -> Result<IntegralResult> {
    match r {
        Err(Error::NotConverged { value, error_estimate, subdivisions }) => {
            Ok(IntegralResult { value, error_estimate, subdivisions })
        }
        other => other,
    }
}

fn interval_points(a: f64, b: f64, bps: &[f64]) -> Vec<f64> {
    let mut pts = vec![a];
    pts.extend(bps.iter().copied().filter(|&x| x > a && x < b));
    pts.push(b);
    pts
}
