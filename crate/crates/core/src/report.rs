//! CSV rendering of every tabular output.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so equal
//! values always render to equal bytes.

use crate::conditions::{AuditReport, ConditionReport};
use crate::error::{Error, Result};
use crate::montecarlo::{CfCheck, SweepPoint};
use crate::rates::RateCurve;

pub const CONDITIONS_HEADER: [&str; 6] = ["condition", "n", "epsilon", "delta", "value", "error_bound"];
pub const SIMULATE_HEADER: [&str; 5] = ["n", "trials", "seed", "d_hat", "dkw_band"];
pub const RATES_HEADER: [&str; 5] = ["n", "metric", "mc_stderr", "bound", "ratio"];
pub const CF_HEADER: [&str; 5] = ["index", "t", "mixture", "target", "deviation"];
pub const AUDIT_HEADER: [&str; 10] =
    ["n", "epsilon", "delta", "inequality", "lhs", "rhs", "slack", "error_bound", "certified", "pass"];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn render<const N: usize>(header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Numeric(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numeric(format!("csv encoding failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Numeric(e.to_string()))
}

pub fn conditions_csv(rows: &[ConditionReport]) -> Result<String> {
    render(
        CONDITIONS_HEADER,
        rows.iter().map(|r| {
            [
                r.condition.name().to_string(),
                r.n.to_string(),
                opt(r.epsilon),
                opt(r.delta),
                r.value.to_string(),
                r.error_bound.to_string(),
            ]
        }),
    )
}

pub fn simulate_csv(points: &[SweepPoint]) -> Result<String> {
    render(
        SIMULATE_HEADER,
        points.iter().map(|p| {
            [p.n.to_string(), p.trials.to_string(), p.seed.to_string(), p.d_hat.to_string(), p.dkw_band.to_string()]
        }),
    )
}

pub fn rates_csv(curve: &RateCurve) -> Result<String> {
    render(
        RATES_HEADER,
        curve.points.iter().map(|p| {
            [p.n.to_string(), p.metric.to_string(), p.mc_stderr.to_string(), p.bound.to_string(), p.ratio.to_string()]
        }),
    )
}

pub fn cf_csv(checks: &[CfCheck]) -> Result<String> {
    render(
        CF_HEADER,
        checks.iter().flat_map(|c| {
            c.rows.iter().map(|r| {
                [c.index.clone(), r.t.to_string(), r.mixture.to_string(), r.target.to_string(), r.deviation.to_string()]
            })
        }),
    )
}

pub fn audit_csv(reports: &[AuditReport]) -> Result<String> {
    render(
        AUDIT_HEADER,
        reports.iter().flat_map(|rep| {
            rep.rows.iter().map(|r| {
                [
                    rep.n.to_string(),
                    rep.epsilon.to_string(),
                    rep.delta.to_string(),
                    r.inequality.clone(),
                    r.lhs.to_string(),
                    r.rhs.to_string(),
                    r.slack.to_string(),
                    r.error_bound.to_string(),
                    r.certified.to_string(),
                    r.pass.to_string(),
                ]
            })
        }),
    )
}
