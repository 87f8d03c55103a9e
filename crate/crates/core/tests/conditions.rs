use approx::assert_relative_eq;
use proptest::prelude::*;
use randsum_core::index::IndexKind;
use randsum_core::{ConditionEvaluator, Error, RandomIndexModel, SummandFamily};
use statrs::function::erf::erfc;

const EPS_GRID: [f64; 5] = [0.05, 0.1, 0.2, 0.5, 1.0];
const N_GRID: [usize; 4] = [1, 10, 100, 1000];

fn phi_cdf(v: f64) -> f64 {
    0.5 * erfc(-v / std::f64::consts::SQRT_2)
}

fn phi_pdf(v: f64) -> f64 {
    (-0.5 * v * v).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn ev(f: SummandFamily) -> ConditionEvaluator {
    ConditionEvaluator::new(f)
}

/// Composite Simpson rule for `2 int_a^b z^2 phi(z) dz`.
fn simpson_normal_tail(a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let g = |z: f64| z * z * phi_pdf(z);
    let mut s = g(a) + g(b);
    for i in 1..panels {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(a + i as f64 * h);
    }
    2.0 * s * h / 3.0
}

#[test]
fn lyapunov_examples() {
    let e = ev(SummandFamily::rademacher());
    assert_relative_eq!(e.lyapunov(4, 1.0).unwrap().value, 0.5, max_relative = 1e-15);
    assert_relative_eq!(e.lyapunov(10_000, 1.0).unwrap().value, 0.01, max_relative = 1e-14);
    assert_eq!(e.lyapunov(1, 1.0).unwrap().value, 1.0);
    assert!(matches!(e.lyapunov(4, 0.0), Err(Error::Domain(_))));
}

#[test]
fn lindeberg_examples() {
    let e = ev(SummandFamily::rademacher());
    assert_eq!(e.lindeberg(3, 0.5).unwrap().value, 1.0);
    assert_eq!(e.lindeberg(5, 0.5).unwrap().value, 0.0);
    let oracle = simpson_normal_tail(1.0, 40.0, 400_000);
    assert_relative_eq!(oracle, 0.801_251_956_901_2, max_relative = 1e-11);
    let r = ev(SummandFamily::normal()).lindeberg(1, 1.0).unwrap();
    assert_relative_eq!(r.value, oracle, max_relative = 1e-12);
    assert!(matches!(e.lindeberg(3, 0.0), Err(Error::Domain(_))));
    assert!(matches!(e.lindeberg(0, 0.5), Err(Error::Domain(_))));
}

#[test]
fn feller_examples() {
    assert_relative_eq!(ev(SummandFamily::uniform()).feller(25).unwrap().value, 0.04, max_relative = 1e-15);
    assert_relative_eq!(ev(SummandFamily::geonormal()).feller(10).unwrap().value, 512.0 / 1023.0, max_relative = 1e-15);
    for f in SummandFamily::builtins() {
        assert_eq!(ev(f).feller(1).unwrap().value, 1.0);
    }
}

#[test]
fn infinitesimality_examples() {
    let e = ev(SummandFamily::rademacher());
    assert_eq!(e.infinitesimality(5, 0.5).unwrap().value, 0.0);
    assert_eq!(e.infinitesimality(3, 0.5).unwrap().value, 1.0);
    // 1 - prod_j P(|X_j| <= B_10) with sigma_j = 2^{(j-1)/2}.
    let b = 1023f64.sqrt();
    let survive: f64 = (1..=10).map(|j| 2.0 * phi_cdf(b / 2f64.powf((j - 1) as f64 / 2.0)) - 1.0).product();
    let r = ev(SummandFamily::geonormal()).infinitesimality(10, 1.0).unwrap();
    assert_relative_eq!(r.value, 1.0 - survive, max_relative = 1e-9);
}

#[test]
fn rotar_examples() {
    for n in N_GRID {
        for eps in EPS_GRID {
            assert_eq!(ev(SummandFamily::normal()).rotar(n, eps).unwrap().value, 0.0);
            assert_eq!(ev(SummandFamily::geonormal()).rotar(n, eps).unwrap().value, 0.0);
        }
    }
    // For u >= 1: 2 int_u^inf v (1 - Phi(v)) dv = 2 [A(u) - u^2/2 + 1/2], A the antiderivative of v Phi.
    let a = |v: f64| 0.5 * ((v * v - 1.0) * phi_cdf(v) + v * phi_pdf(v));
    let oracle = 2.0 * (a(2.0) - 2.0 + 0.5);
    let r = ev(SummandFamily::rademacher()).rotar(1, 2.0).unwrap();
    assert_relative_eq!(r.value, oracle, max_relative = 1e-9);
}

#[test]
fn functionals_are_nonincreasing_in_epsilon() {
    for f in SummandFamily::builtins() {
        let e = ev(f.clone());
        for n in N_GRID {
            let mut prev: Option<[(f64, f64); 3]> = None;
            for eps in EPS_GRID {
                let l = e.lindeberg(n, eps).unwrap();
                let r = e.rotar(n, eps).unwrap();
                let i = e.infinitesimality(n, eps).unwrap();
                let cur = [(l.value, l.error_bound), (r.value, r.error_bound), (i.value, i.error_bound)];
                if let Some(p) = prev {
                    for ((v0, e0), (v1, e1)) in p.iter().zip(cur.iter()) {
                        assert!(v1 <= &(v0 + e0 + e1), "{f} n={n} eps={eps}: {v1} after {v0}");
                    }
                }
                prev = Some(cur);
            }
        }
    }
}

#[test]
fn doubling_epsilon_never_increases_rotar() {
    for f in SummandFamily::builtins() {
        let e = ev(f.clone());
        for eps in [0.01, 0.1, 0.3, 1.0] {
            let a = e.rotar(50, eps).unwrap();
            let b = e.rotar(50, 2.0 * eps).unwrap();
            assert!(b.value <= a.value + a.error_bound + b.error_bound, "{f} eps={eps}");
        }
    }
}

#[test]
fn deterministic_index_reduces_exactly() {
    for f in SummandFamily::builtins() {
        let e = ev(f.clone());
        for n in [1, 10, 100] {
            let det = RandomIndexModel::deterministic(n).unwrap();
            for eps in [0.1, 0.5] {
                let (a, b) = (e.random_lindeberg(&det, eps).unwrap(), e.lindeberg(n, eps).unwrap());
                assert_eq!((a.value, a.error_bound), (b.value, b.error_bound), "{f} n={n}");
                let (a, b) = (e.random_rotar(&det, eps).unwrap(), e.rotar(n, eps).unwrap());
                assert_eq!((a.value, a.error_bound), (b.value, b.error_bound), "{f} n={n}");
            }
            let (a, b) = (e.random_feller(&det).unwrap(), e.feller(n).unwrap());
            assert_eq!((a.value, a.error_bound), (b.value, b.error_bound), "{f} n={n}");
        }
    }
}

#[test]
fn random_feller_examples() {
    let e = ev(SummandFamily::normal());
    assert_relative_eq!(
        e.random_feller(&RandomIndexModel::deterministic(8).unwrap()).unwrap().value,
        0.125,
        max_relative = 1e-15
    );
    for n in [1usize, 7, 100, 1000] {
        let harmonic: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
        let r = e.random_feller(&RandomIndexModel::uniform(n).unwrap()).unwrap();
        assert_relative_eq!(r.value, harmonic / n as f64, max_relative = 1e-13);
    }
    // Exploding variances keep the largest share near one half.
    let g = ev(SummandFamily::geonormal());
    for kind in IndexKind::ALL {
        let r = g.random_feller(&kind.model(100).unwrap()).unwrap();
        assert!(r.value >= 0.5 - r.error_bound, "{kind:?}: {}", r.value);
    }
}

#[test]
fn random_lindeberg_decays_for_iid_families() {
    let eps = 0.1;
    for f in SummandFamily::builtins().into_iter().filter(SummandFamily::is_iid) {
        let e = ev(f.clone());
        for kind in [IndexKind::ShiftedPoisson, IndexKind::ShiftedGeometric, IndexKind::Uniform] {
            let vals: Vec<_> = [10, 100, 1000]
                .iter()
                .map(|&n| e.random_lindeberg(&kind.model(n).unwrap(), eps).unwrap())
                .collect();
            for w in vals.windows(2) {
                assert!(w[1].value + w[1].error_bound < w[0].value - w[0].error_bound, "{f} {kind:?}: {vals:?}");
            }
        }
        let far = e.random_lindeberg(&IndexKind::ShiftedGeometric.model(10).unwrap(), 1e6).unwrap();
        if f.shape().support().1.is_finite() {
            assert_eq!(far.value, 0.0, "{f}");
        }
    }
}

#[test]
fn random_rotar_examples() {
    let geom = |n| RandomIndexModel::shifted_geometric(n).unwrap();
    for kind in IndexKind::ALL {
        let r = ev(SummandFamily::normal()).random_rotar(&kind.model(50).unwrap(), 0.3).unwrap();
        assert_eq!(r.value, 0.0);
    }
    let e = ev(SummandFamily::rademacher());
    let (small, large) = (e.random_rotar(&geom(10), 0.1).unwrap(), e.random_rotar(&geom(1000), 0.1).unwrap());
    assert!(large.value + large.error_bound < small.value - small.error_bound, "{small:?} {large:?}");
}

#[test]
fn audit_passes_on_rademacher() {
    let e = ev(SummandFamily::rademacher());
    let report = e.implication_audit(&RandomIndexModel::deterministic(10).unwrap(), 10, 0.5, 1.0).unwrap();
    assert_eq!(report.rows.len(), 5);
    assert!(report.passed(), "{report:?}");
    for row in &report.rows {
        assert!(row.slack >= -row.error_bound);
        assert_relative_eq!(row.slack, row.rhs - row.lhs);
    }
}

#[test]
fn audit_on_normal_summands_has_zero_rotar_side() {
    let e = ev(SummandFamily::normal());
    for kind in IndexKind::ALL {
        let report = e.implication_audit(&kind.model(10).unwrap(), 10, 0.5, 1.0).unwrap();
        assert!(report.passed());
        let rotar_rows: Vec<_> = report.rows.iter().filter(|r| r.inequality.contains("rotar_le")).collect();
        assert_eq!(rotar_rows.len(), 2);
        assert!(rotar_rows.iter().all(|r| r.lhs == 0.0));
    }
}

#[test]
fn non_classical_signature() {
    let e = ev(SummandFamily::geonormal());
    assert_eq!(e.rotar(30, 0.5).unwrap().value, 0.0);
    assert!(e.feller(30).unwrap().value > 0.49);
    assert!(e.infinitesimality(30, 0.5).unwrap().value > 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn feller_is_a_share(f in prop::sample::select(SummandFamily::builtins()), n in 1usize..5000) {
        let v = ev(f).feller(n).unwrap().value;
        prop_assert!(v > 0.0 && v <= 1.0);
    }

    #[test]
    fn lindeberg_lies_in_unit_interval(f in prop::sample::select(SummandFamily::builtins()), n in 1usize..400, eps in 0.01f64..3.0) {
        let r = ev(f).lindeberg(n, eps).unwrap();
        prop_assert!(r.value >= 0.0 && r.value <= 1.0 + r.error_bound);
    }

    #[test]
    fn audit_rows_pass_at_random_points(
        f in prop::sample::select(SummandFamily::builtins()),
        kind in prop::sample::select(IndexKind::ALL.to_vec()),
        n in 1usize..60,
        eps in 0.02f64..2.0,
        delta in 0.1f64..=1.0,
    ) {
        let report = ev(f).implication_audit(&kind.model(n).unwrap(), n, eps, delta).unwrap();
        prop_assert!(report.passed(), "{:?}", report);
    }
}
