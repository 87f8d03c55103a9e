//! Random index laws `nu_n` on `{1, 2, ...}` and expectations over them.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Geometric, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::numeric::NeumaierSum;

/// Enumeration of an unbounded index law stops once this much mass is left.
pub const TRUNCATION_MASS: f64 = 1e-12;

/// Hard cap on enumerated (and sampled) index values.
pub const MAX_TERMS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexKind {
    /// `nu_n = n`.
    Deterministic,
    /// `nu_n = 1 + Poisson(n)`.
    ShiftedPoisson,
    /// Geometric on `{1, 2, ...}` with mean `n`.
    ShiftedGeometric,
    /// Uniform on `{1, ..., n}`.
    Uniform,
}

impl IndexKind {
    pub const ALL: [IndexKind; 4] = [
        IndexKind::Deterministic,
        IndexKind::ShiftedPoisson,
        IndexKind::ShiftedGeometric,
        IndexKind::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IndexKind::Deterministic => "det",
            IndexKind::ShiftedPoisson => "poisson",
            IndexKind::ShiftedGeometric => "geom",
            IndexKind::Uniform => "uniform",
        }
    }

    pub fn model(self, n: usize) -> Result<RandomIndexModel> {
        RandomIndexModel::new(self, n)
    }
}

impl FromStr for IndexKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "det" | "deterministic" => Ok(IndexKind::Deterministic),
            "poisson" => Ok(IndexKind::ShiftedPoisson),
            "geom" | "geometric" => Ok(IndexKind::ShiftedGeometric),
            "uniform" => Ok(IndexKind::Uniform),
            other => Err(Error::Config(format!(
                "unknown index kind '{other}' (expected det, poisson, geom or uniform)"
            ))),
        }
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Result of `E[g(nu_n)]` over the truncated support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedExpectation {
    pub value: f64,
    /// `tail mass * sup |g|` over the part of the support not enumerated.
    pub truncation_error_bound: f64,
    pub terms_used: usize,
}

#[derive(Debug)]
struct Table {
    first: usize,
    pmf: Vec<f64>,
    tail_mass: f64,
}

/// The law of `nu_n` for one `n`.
#[derive(Debug)]
pub struct RandomIndexModel {
    kind: IndexKind,
    n: usize,
    table: OnceLock<Table>,
}

impl Clone for RandomIndexModel {
    fn clone(&self) -> Self {
        RandomIndexModel { kind: self.kind, n: self.n, table: OnceLock::new() }
    }
}

impl PartialEq for RandomIndexModel {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.n == other.n
    }
}

impl RandomIndexModel {
    pub fn new(kind: IndexKind, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("index parameter n must be at least 1".into()));
        }
        if kind == IndexKind::Uniform && n > MAX_TERMS {
            return Err(Error::Config(format!("uniform index needs n <= {MAX_TERMS}")));
        }
        Ok(RandomIndexModel { kind, n, table: OnceLock::new() })
    }

    pub fn deterministic(n: usize) -> Result<Self> {
        Self::new(IndexKind::Deterministic, n)
    }
    pub fn shifted_poisson(n: usize) -> Result<Self> {
        Self::new(IndexKind::ShiftedPoisson, n)
    }
    pub fn shifted_geometric(n: usize) -> Result<Self> {
        Self::new(IndexKind::ShiftedGeometric, n)
    }
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(IndexKind::Uniform, n)
    }

    pub fn kind(&self) -> IndexKind {
        self.kind
    }
    pub fn n(&self) -> usize {
        self.n
    }

    fn geometric_p(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// `P(nu_n = k)`.
    pub fn pmf(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self.kind {
            IndexKind::Deterministic => f64::from(u8::from(k == self.n)),
            IndexKind::Uniform => {
                if k <= self.n {
                    1.0 / self.n as f64
                } else {
                    0.0
                }
            }
            IndexKind::ShiftedGeometric => {
                let p = self.geometric_p();
                p * (1.0 - p).powf((k - 1) as f64)
            }
            IndexKind::ShiftedPoisson => {
                poisson_pmf((k - 1) as f64, self.n as f64)
            }
        }
    }

    /// `P(nu_n <= k)` in closed form.
    pub fn cdf(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self.kind {
            IndexKind::Deterministic => f64::from(u8::from(k >= self.n)),
            IndexKind::Uniform => k.min(self.n) as f64 / self.n as f64,
            IndexKind::ShiftedGeometric => -(k as f64 * (-self.geometric_p()).ln_1p()).exp_m1(),
            // P(Poisson(n) <= k - 1) = Q(k, n)
            IndexKind::ShiftedPoisson => gamma_ur(k as f64, self.n as f64),
        }
    }

    /// `E[nu_n]`.
    pub fn mean(&self) -> f64 {
        match self.kind {
            IndexKind::Deterministic | IndexKind::ShiftedGeometric => self.n as f64,
            IndexKind::ShiftedPoisson => self.n as f64 + 1.0,
            IndexKind::Uniform => (self.n as f64 + 1.0) / 2.0,
        }
    }

    fn table(&self) -> &Table {
        self.table.get_or_init(|| self.build_table())
    }

    fn build_table(&self) -> Table {
        match self.kind {
            IndexKind::Deterministic => Table { first: self.n, pmf: vec![1.0], tail_mass: 0.0 },
            IndexKind::Uniform => {
                Table { first: 1, pmf: vec![1.0 / self.n as f64; self.n], tail_mass: 0.0 }
            }
            IndexKind::ShiftedGeometric => {
                let p = self.geometric_p();
                if p >= 1.0 {
                    return Table { first: 1, pmf: vec![1.0], tail_mass: 0.0 };
                }
                let log_q = (-p).ln_1p();
                let needed = (TRUNCATION_MASS.ln() / log_q).ceil().max(1.0) as usize;
                let len = needed.min(MAX_TERMS);
                let pmf = (0..len).map(|i| p * (i as f64 * log_q).exp()).collect();
                Table { first: 1, pmf, tail_mass: (len as f64 * log_q).exp() }
            }
            IndexKind::ShiftedPoisson => {
                let lambda = self.n as f64;
                let mut pmf = Vec::new();
                let mut cum = NeumaierSum::new();
                let mut k = 1usize;
                loop {
                    let p = self.pmf(k);
                    pmf.push(p);
                    cum.add(p);
                    let past_mode = (k - 1) as f64 > lambda;
                    if (past_mode && cum.value() >= 1.0 - TRUNCATION_MASS) || pmf.len() >= MAX_TERMS
                    {
                        break;
                    }
                    k += 1;
                }
                // P(nu > k) = P(Poisson >= k) = P(k, lambda); keep the larger of
                // the closed form and the enumerated defect.
                let closed = gamma_lr(k as f64, lambda);
                let tail_mass = closed.max(1.0 - cum.value()).max(0.0);
                Table { first: 1, pmf, tail_mass }
            }
        }
    }

    /// `(k, P(nu_n = k))` over the truncated support, in increasing `k`.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let t = self.table();
        t.pmf.iter().enumerate().map(move |(i, &p)| (t.first + i, p))
    }

    /// Largest enumerated index value.
    pub fn max_support(&self) -> usize {
        let t = self.table();
        t.first + t.pmf.len() - 1
    }

    /// Probability mass beyond the enumerated support.
    pub fn tail_mass(&self) -> f64 {
        self.table().tail_mass
    }

    /// `E[g(nu_n)]` where `|g| <= abs_bound` everywhere.
    pub fn expect<G>(&self, g: G, abs_bound: f64) -> Result<WeightedExpectation>
    where
        G: Fn(usize) -> f64 + Sync,
    {
        let mut out = self.expect_many(|k| Ok([g(k)]), [abs_bound])?;
        Ok(out.pop().expect("one component"))
    }

    /// Componentwise `E[g(nu_n)]` for a vector-valued `g`, evaluating `g`
    /// once per support point. Component `i` satisfies `|g_i| <= abs_bounds[i]`.
    pub fn expect_many<G, const N: usize>(
        &self,
        g: G,
        abs_bounds: [f64; N],
    ) -> Result<Vec<WeightedExpectation>>
    where
        G: Fn(usize) -> Result<[f64; N]> + Sync,
    {
        if let Some(b) = abs_bounds.iter().find(|b| !b.is_finite() || **b < 0.0) {
            return Err(Error::Domain(format!("abs_bound must be finite and nonnegative, got {b}")));
        }
        let t = self.table();
        let values: Vec<[f64; N]> = t
            .pmf
            .par_iter()
            .enumerate()
            .map(|(i, &p)| if p == 0.0 { Ok([0.0; N]) } else { g(t.first + i) })
            .collect::<Result<_>>()?;
        let mut sums = [NeumaierSum::new(); N];
        for (&p, v) in t.pmf.iter().zip(&values) {
            if p == 0.0 {
                continue;
            }
            for (s, &x) in sums.iter_mut().zip(v) {
                s.add(p * x);
            }
        }
        let out = sums
            .iter()
            .zip(abs_bounds)
            .map(|(s, b)| WeightedExpectation {
                value: s.value(),
                truncation_error_bound: t.tail_mass * b,
                terms_used: t.pmf.len(),
            })
            .collect::<Vec<_>>();
        if out.iter().any(|w| !w.value.is_finite()) {
            return Err(Error::Numeric("index expectation is not finite".into()));
        }
        Ok(out)
    }

    /// Draw one index value.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let k = match self.kind {
            IndexKind::Deterministic => self.n,
            IndexKind::Uniform => rng.random_range(1..=self.n),
            IndexKind::ShiftedPoisson => {
                let d = Poisson::new(self.n as f64)
                    .map_err(|e| Error::Config(format!("poisson index: {e}")))?;
                let x: f64 = d.sample(rng);
                1 + x as usize
            }
            IndexKind::ShiftedGeometric => {
                let d = Geometric::new(self.geometric_p())
                    .map_err(|e| Error::Config(format!("geometric index: {e}")))?;
                let failures: u64 = d.sample(rng);
                usize::try_from(failures).unwrap_or(usize::MAX).saturating_add(1)
            }
        };
        if k > MAX_TERMS {
            return Err(Error::Numeric(format!(
                "sampled index {k} exceeds the cap of {MAX_TERMS} summands"
            )));
        }
        Ok(k)
    }
}

/// Poisson pmf in Loader's saddle-point form, which stays accurate to a few
/// ulps where the naive log form loses digits to cancellation (large lambda).
fn poisson_pmf(m: f64, lambda: f64) -> f64 {
    if m == 0.0 {
        return (-lambda).exp();
    }
    (-stirling_error(m) - deviance_term(m, lambda)).exp() / (std::f64::consts::TAU * m).sqrt()
}

/// `ln m! - [(m + 1/2) ln m - m + ln sqrt(2 pi)]`.
fn stirling_error(m: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if m <= 15.0 {
        return ln_gamma(m + 1.0) - (m + 0.5) * m.ln() + m - 0.5 * std::f64::consts::TAU.ln();
    }
    let m2 = m * m;
    (S0 - (S1 - (S2 - (S3 - S4 / m2) / m2) / m2) / m2) / m
}

/// `m ln(m / lambda) + lambda - m`, with a series near `m = lambda`.
fn deviance_term(m: f64, lambda: f64) -> f64 {
    if (m - lambda).abs() < 0.1 * (m + lambda) {
        let v = (m - lambda) / (m + lambda);
        let mut s = (m - lambda) * v;
        let mut ej = 2.0 * m * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let next = s + ej / f64::from(2 * j + 1);
            if next == s {
                break;
            }
            s = next;
        }
        return s;
    }
    m * (m / lambda).ln() + lambda - m
}

impl fmt::Display for RandomIndexModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.name(), self.n)
    }
}

/// Index kind with an optional fixed parameter, as written on the command
/// line (`geom`, `geom:50`, `index=det:5`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSpec {
    pub kind: IndexKind,
    pub n: Option<usize>,
}

impl IndexSpec {
    /// Model for grid point `n`, unless the spec pins its own parameter.
    pub fn model(&self, grid_n: usize) -> Result<RandomIndexModel> {
        RandomIndexModel::new(self.kind, self.n.unwrap_or(grid_n))
    }
}

impl From<IndexKind> for IndexSpec {
    fn from(kind: IndexKind) -> Self {
        IndexSpec { kind, n: None }
    }
}

impl FromStr for IndexSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let s = s.strip_prefix("index=").unwrap_or(s);
        let (kind, n) = match s.split_once(':') {
            Some((k, n)) => {
                let n: usize = n
                    .parse()
                    .map_err(|_| Error::Config(format!("index parameter is not an integer: '{n}'")))?;
                if n == 0 {
                    return Err(Error::Config("index parameter n must be at least 1".into()));
                }
                (k, Some(n))
            }
            None => (s, None),
        };
        Ok(IndexSpec { kind: kind.parse()?, n })
    }
}

impl fmt::Display for IndexSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.n {
            Some(n) => write!(f, "{}:{}", self.kind.name(), n),
            None => f.write_str(self.kind.name()),
        }
    }
}
