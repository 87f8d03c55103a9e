//! Monte Carlo sampling of normalized random sums, Kolmogorov distance
//! estimates and the characteristic-function identity for the matched
//! normal sums.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dist::{Shape, SummandFamily};
use crate::error::{Error, Result};
use crate::index::{IndexSpec, RandomIndexModel};
use crate::numeric::{self, NeumaierSum};
use crate::rng::{SimulationSeeds, StreamFamily};

/// Trials are processed in fixed blocks so every reduction has the same
/// association order whatever the thread count.
pub(crate) const CHUNK: u64 = 4096;

/// Default confidence level of the DKW band.
pub const DEFAULT_CONFIDENCE: f64 = 0.999;

/// Sorted draws of `S_nu / B_nu` plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalSample {
    /// Draws in increasing order.
    pub values: Vec<f64>,
    pub trials: u64,
    pub seeds: SimulationSeeds,
    /// Count of each drawn index value.
    pub index_histogram: BTreeMap<usize, u64>,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
}

/// `S_k / B_k` for one draw of the first `k` summands.
pub fn normalized_sum<R: Rng + ?Sized>(family: &SummandFamily, k: usize, rng: &mut R) -> f64 {
    let shape = family.shape();
    if family.is_iid() {
        let total = if shape == Shape::Rademacher {
            rademacher_sum(k, rng) as f64
        } else {
            let mut s = 0.0;
            for _ in 0..k {
                s += shape.sample(rng);
            }
            s
        };
        return total / (k as f64).sqrt();
    }
    let norm = family.normalizer(k);
    let mut s = 0.0;
    if shape == Shape::Rademacher {
        let mut word = 0u64;
        for j in 1..=k {
            let bit = (j - 1) % 64;
            if bit == 0 {
                word = rng.next_u64();
            }
            let w = norm.share(j).sqrt();
            s += if (word >> bit) & 1 == 1 { w } else { -w };
        }
    } else {
        for j in 1..=k {
            s += norm.share(j).sqrt() * shape.sample(rng);
        }
    }
    s
}

/// Sum of `k` independent signs, 64 per random word.
fn rademacher_sum<R: Rng + ?Sized>(k: usize, rng: &mut R) -> i64 {
    let mut ones = 0u64;
    let full = k / 64;
    for _ in 0..full {
        ones += u64::from(rng.next_u64().count_ones());
    }
    let rem = k % 64;
    if rem > 0 {
        let mask = (1u64 << rem) - 1;
        ones += u64::from((rng.next_u64() & mask).count_ones());
    }
    2 * ones as i64 - k as i64
}

/// Runs trials `0..trials` in fixed chunks, handing each chunk's
/// `(index, value)` pairs to `reduce`. Chunk results come back in order.
pub(crate) fn run_chunks<T, F>(
    family: &SummandFamily,
    index: &RandomIndexModel,
    trials: u64,
    seeds: SimulationSeeds,
    reduce: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&[(usize, f64)]) -> T + Sync,
{
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let index_streams = StreamFamily::new(seeds.index);
    let summand_streams = StreamFamily::new(seeds.summand);
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(trials);
            let mut draws = Vec::with_capacity((hi - lo) as usize);
            for t in lo..hi {
                let k = index.sample(&mut index_streams.stream(t))?;
                let y = normalized_sum(family, k, &mut summand_streams.stream(t));
                draws.push((k, y));
            }
            Ok(reduce(&draws))
        })
        .collect()
}

pub fn simulate(family: &SummandFamily, index: &RandomIndexModel, trials: u64, seed: u64) -> Result<EmpiricalSample> {
    simulate_with_seeds(family, index, trials, SimulationSeeds::from_seed(seed))
}

/// As [`simulate`], with the index and summand lanes keyed separately.
pub fn simulate_with_seeds(
    family: &SummandFamily,
    index: &RandomIndexModel,
    trials: u64,
    seeds: SimulationSeeds,
) -> Result<EmpiricalSample> {
    let chunks = run_chunks(family, index, trials, seeds, |d| d.to_vec())?;
    let mut values = Vec::with_capacity(trials as usize);
    let mut index_histogram = BTreeMap::new();
    for (k, y) in chunks.into_iter().flatten() {
        *index_histogram.entry(k).or_insert(0) += 1;
        values.push(y);
    }
    if values.iter().any(|y| !y.is_finite()) {
        return Err(Error::Numeric("simulated sum is not finite".into()));
    }
    let (mean, variance) = welford(&values);
    values.sort_by(f64::total_cmp);
    Ok(EmpiricalSample { values, trials, seeds, index_histogram, mean, variance })
}

fn welford(xs: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let d = x - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (x - mean);
    }
    let var = if xs.len() > 1 { m2 / (xs.len() - 1) as f64 } else { 0.0 };
    (mean, var)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KolmogorovEstimate {
    /// `sup_x |F_m(x) - Phi(x)|`.
    pub d_hat: f64,
    /// DKW half-width at `confidence`.
    pub dkw_band: f64,
    pub confidence: f64,
    pub trials: u64,
}

/// `sqrt(ln(2 / (1 - confidence)) / (2 m))`.
pub fn dkw_band(m: u64, confidence: f64) -> f64 {
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * m as f64)).sqrt()
}

/// Kolmogorov distance between a sorted sample and the standard normal.
pub fn kolmogorov_distance(sample: &EmpiricalSample, confidence: f64) -> Result<KolmogorovEstimate> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Config(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    let m = sample.values.len();
    if m == 0 {
        return Err(Error::Config("empty sample".into()));
    }
    Ok(KolmogorovEstimate {
        d_hat: sup_distance_sorted(&sample.values),
        dkw_band: dkw_band(m as u64, confidence),
        confidence,
        trials: m as u64,
    })
}

/// `max_i max(|i/m - Phi(x_i)|, |(i-1)/m - Phi(x_i)|)` for sorted `x`.
pub fn sup_distance_sorted(sorted: &[f64]) -> f64 {
    let m = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let p = numeric::normal_cdf(x);
            ((i as f64 + 1.0) / m - p).abs().max((p - i as f64 / m).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov p-value for distance `d` at sample size `m`.
pub fn ks_p_value(d: f64, m: u64) -> f64 {
    let sm = (m as f64).sqrt();
    let lambda = (sm + 0.12 + 0.11 / sm) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut acc = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        acc += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CfRow {
    pub t: f64,
    /// `sum_k P(nu = k) prod_j E exp(i t X*_j / B_k)`.
    pub mixture: f64,
    /// `exp(-t^2 / 2)`.
    pub target: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CfCheck {
    pub family: String,
    pub index: String,
    pub rows: Vec<CfRow>,
    pub max_deviation: f64,
    /// Index mass left out of the enumeration.
    pub truncation_tail_mass: f64,
}

/// Compare the characteristic function of `S*_nu / B_nu` (matched normal
/// summands) with that of the standard normal over `t_grid`.
pub fn cf_identity_check(family: &SummandFamily, index: &RandomIndexModel, t_grid: &[f64]) -> Result<CfCheck> {
    if t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::Config("t grid must be finite".into()));
    }
    // Variance ratio sum_j sigma_j^2 / B_k^2 for every k in the support.
    let max_k = index.max_support();
    let mut ratios = vec![f64::NAN; max_k + 1];
    let mut acc = NeumaierSum::new();
    let mut wanted = vec![false; max_k + 1];
    for (k, _) in index.support() {
        wanted[k] = true;
    }
    for k in 1..=max_k {
        acc.add(family.variance(k));
        if !wanted[k] {
            continue;
        }
        let num = acc.value();
        let den = if family.is_iid() { family.partial_variance(k)?.b_squared } else { num };
        ratios[k] = if num.is_finite() && den.is_finite() && den > 0.0 {
            num / den
        } else {
            let norm = family.normalizer(k);
            numeric::neumaier_sum((1..=k).map(|j| norm.share(j)))
        };
    }
    let rows: Vec<CfRow> = t_grid
        .iter()
        .map(|&t| {
            let half_t2 = 0.5 * t * t;
            let mixture: NeumaierSum = index.support().map(|(k, p)| p * (-half_t2 * ratios[k]).exp()).collect();
            let mixture = mixture.value();
            let target = (-half_t2).exp();
            CfRow { t, mixture, target, deviation: (mixture - target).abs() }
        })
        .collect();
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    Ok(CfCheck {
        family: family.to_string(),
        index: index.to_string(),
        rows,
        max_deviation,
        truncation_tail_mass: index.tail_mass(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub n: usize,
    pub trials: u64,
    pub seed: u64,
    pub d_hat: f64,
    pub dkw_band: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Kolmogorov distance of `S_nu / B_nu` for each `n` in the grid.
pub fn clt_sweep(
    family: &SummandFamily,
    index: &IndexSpec,
    n_grid: &[usize],
    trials: u64,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    n_grid
        .iter()
        .map(|&n| {
            let model = index.model(n)?;
            let sample = simulate(family, &model, trials, seed)?;
            let est = kolmogorov_distance(&sample, DEFAULT_CONFIDENCE)?;
            Ok(SweepPoint {
                n,
                trials,
                seed,
                d_hat: est.d_hat,
                dkw_band: est.dkw_band,
                mean: sample.mean,
                variance: sample.variance,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_mass_at_zero_has_distance_one_half() {
        assert_eq!(sup_distance_sorted(&vec![0.0; 1000]), 0.5);
    }

    #[test]
    fn rademacher_sum_parity_and_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in [1usize, 63, 64, 65, 200] {
            let s = rademacher_sum(k, &mut rng);
            assert!(s.unsigned_abs() as usize <= k);
            assert_eq!((s + k as i64) % 2, 0);
        }
    }

    #[test]
    fn zero_trials_is_a_configuration_error() {
        let idx = RandomIndexModel::deterministic(5).unwrap();
        assert!(matches!(simulate(&SummandFamily::normal(), &idx, 0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn dkw_band_value() {
        assert!((dkw_band(100_000, 0.999) - 0.006_165).abs() < 1e-6);
    }
}
