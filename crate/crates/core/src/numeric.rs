//! Standard normal helpers and compensated summation.

use std::f64::consts::FRAC_1_SQRT_2;

use libm::erfc;

/// `1 / sqrt(2 pi)`.
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `sqrt(2 / pi)`, the mean absolute value of a standard normal.
pub const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Beyond this many standard deviations every normal tail quantity underflows.
pub const NORMAL_NEGLIGIBLE: f64 = 40.0;

pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Phi(x)`, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// `E[Z^2; |Z| > u]` for a standard normal `Z`.
pub fn normal_tail_second_moment(u: f64) -> f64 {
    if u <= 0.0 {
        1.0
    } else if u >= NORMAL_NEGLIGIBLE {
        0.0
    } else {
        2.0 * (u * normal_pdf(u) + normal_sf(u))
    }
}

/// `int_a^inf z (1 - Phi(z)) dz`.
pub fn normal_sf_first_moment(a: f64) -> f64 {
    if a >= NORMAL_NEGLIGIBLE {
        return 0.0;
    }
    (0.5 * ((1.0 - a * a) * normal_sf(a) + a * normal_pdf(a))).max(0.0)
}

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn neumaier_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<NeumaierSum>().value()
}

/// Least-squares line `y = a + b x`; returns `(a, b, rms residual)`.
pub(crate) fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let m = xs.len();
    if m < 2 || ys.len() != m {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / m as f64;
    let my = ys.iter().sum::<f64>() / m as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    Some((intercept, slope, (rss / m as f64).sqrt()))
}
