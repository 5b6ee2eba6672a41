//! Workload evaluation: per-query q-errors, nearest-rank percentile
//! summaries, timing separation and report rendering.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::TruthRecord;
use crate::dnf::DEFAULT_DNF_CAP;
use crate::error::{Error, Result};
use crate::estimators::{Estimator, UniquenessModel};
use crate::gencrd::{gen_crd, GenCrdOptions};
use crate::punq::{q_error, PREDICTION_EPSILON};
use crate::query::{to_conjunctive, BoolExpr, QueryAst};
use crate::store::Database;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Bag cardinality of conjunctive queries.
    Dup,
    /// Set-theoretic cardinality via the uniqueness wrapper.
    Distinct,
    /// General AND/OR/NOT queries via inclusion-exclusion.
    General,
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EvalMode::Dup => "dup",
            EvalMode::Distinct => "distinct",
            EvalMode::General => "general",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub mode: EvalMode,
    pub parallel: bool,
    pub dnf_cap: usize,
}

impl EvalOptions {
    pub fn new(mode: EvalMode) -> EvalOptions {
        EvalOptions {
            mode,
            parallel: false,
            dnf_cap: DEFAULT_DNF_CAP,
        }
    }
}

/// One evaluated query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEval {
    pub id: usize,
    pub joins: usize,
    pub dnf_size: usize,
    pub truth: f64,
    pub estimate: f64,
    pub q_error: f64,
    pub total_us: u64,
    /// Time spent inside the limited model.
    pub subroutine_us: u64,
    /// Everything else: wrapper arithmetic, uniqueness prediction,
    /// rewriting.
    pub overhead_us: u64,
    pub estimator_calls: u64,
    pub pruned: u64,
}

/// Percentile summary of clamped q-errors. Percentiles use the
/// nearest-rank definition: the value at index `ceil(p/100 * n)` (1-based)
/// of the sorted list. Box-plot whisker/box percentiles (5/25) are
/// included alongside the reporting ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub p05: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
    pub mean: f64,
}

impl Summary {
    fn empty() -> Summary {
        Summary {
            count: 0,
            p05: 0.0,
            p25: 0.0,
            p50: 0.0,
            p75: 0.0,
            p90: 0.0,
            p95: 0.0,
            p99: 0.0,
            max: 0.0,
            mean: 0.0,
        }
    }

    pub fn from_qerrors(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary::empty();
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pct = |p: f64| nearest_rank(&sorted, p);
        Summary {
            count: sorted.len(),
            p05: pct(5.0),
            p25: pct(25.0),
            p50: pct(50.0),
            p75: pct(75.0),
            p90: pct(90.0),
            p95: pct(95.0),
            p99: pct(99.0),
            max: *sorted.last().unwrap(),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        }
    }
}

/// Nearest-rank percentile over a sorted slice.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub estimator: String,
    pub rows: Vec<QueryEval>,
    pub overall: Summary,
    pub by_joins: BTreeMap<usize, Summary>,
    pub by_dnf_size: BTreeMap<usize, Summary>,
}

impl EvalReport {
    pub fn assemble(mode: EvalMode, estimator: String, rows: Vec<QueryEval>) -> EvalReport {
        let qerrs: Vec<f64> = rows.iter().map(|r| r.q_error).collect();
        let overall = Summary::from_qerrors(&qerrs);
        let mut by_joins: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut by_dnf: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in &rows {
            by_joins.entry(r.joins).or_default().push(r.q_error);
            by_dnf.entry(r.dnf_size).or_default().push(r.q_error);
        }
        EvalReport {
            mode,
            estimator,
            rows,
            overall,
            by_joins: by_joins
                .into_iter()
                .map(|(k, v)| (k, Summary::from_qerrors(&v)))
                .collect(),
            by_dnf_size: by_dnf
                .into_iter()
                .map(|(k, v)| (k, Summary::from_qerrors(&v)))
                .collect(),
        }
    }
}

/// q-error with both sides clamped to the prediction epsilon, making it
/// total over zero truths and zero estimates.
pub fn clamped_q_error(truth: f64, estimate: f64) -> f64 {
    q_error(
        truth.max(PREDICTION_EPSILON),
        estimate.max(PREDICTION_EPSILON),
    )
    .expect("clamped inputs are positive")
}

fn workload_has_inequality_join(queries: &[QueryAst]) -> bool {
    fn walk(e: &BoolExpr) -> bool {
        match e {
            BoolExpr::And(cs) | BoolExpr::Or(cs) => cs.iter().any(walk),
            BoolExpr::Not(c) => walk(c),
            BoolExpr::Join(j) => !j.is_equality(),
            BoolExpr::Pred(_) => false,
        }
    }
    queries
        .iter()
        .filter_map(|q| q.where_clause.as_ref())
        .any(walk)
}

/// Runs one estimator over a labeled workload.
///
/// `Dup` compares the bag estimate against `card_dup` (conjunctive
/// queries only). `Distinct` multiplies the bag estimate by the
/// uniqueness model's rate and compares against `card_distinct`, timing
/// the two parts separately. `General` runs the inclusion-exclusion
/// recursion and compares against `card_dup`.
pub fn evaluate(
    db: &Database,
    queries: &[QueryAst],
    labels: &[TruthRecord],
    est: &(dyn Estimator + Sync),
    uniqueness: Option<&(dyn UniquenessModel + Sync)>,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if queries.len() != labels.len() {
        return Err(Error::ValidationError(format!(
            "workload has {} queries but {} labels",
            queries.len(),
            labels.len()
        )));
    }
    if opts.mode == EvalMode::Distinct && uniqueness.is_none() {
        return Err(Error::CapabilityError(
            "distinct mode requires a uniqueness model".into(),
        ));
    }
    if workload_has_inequality_join(queries) {
        if !est.capabilities().supports_inequality_join {
            return Err(Error::CapabilityError(format!(
                "estimator {} does not support inequality joins",
                est.name()
            )));
        }
        if let Some(u) = uniqueness {
            if !u.supports_inequality_join() {
                return Err(Error::CapabilityError(format!(
                    "uniqueness model {} does not support inequality joins",
                    u.name()
                )));
            }
        }
    }
    if opts.parallel && !est.capabilities().thread_safe {
        return Err(Error::CapabilityError(format!(
            "estimator {} is not declared thread-safe",
            est.name()
        )));
    }

    let schema = db.schema();
    let eval_one = |(q, label): (&QueryAst, &TruthRecord)| -> Result<QueryEval> {
        let t0 = Instant::now();
        let (estimate, truth, sub_us, calls, pruned) = match opts.mode {
            EvalMode::Dup => {
                crate::store::require_conjunctive(q)?;
                let cq = to_conjunctive(q, schema)?;
                let s0 = Instant::now();
                let estimate = est.estimate(&cq)?;
                let sub = s0.elapsed().as_micros() as u64;
                (estimate, label.card_dup as f64, sub, 1, 0)
            }
            EvalMode::Distinct => {
                crate::store::require_conjunctive(q)?;
                let cq = to_conjunctive(q, schema)?;
                let u_model = uniqueness.expect("checked above");
                let u = u_model.uniqueness(&cq)?;
                let s0 = Instant::now();
                let c = est.estimate(&cq)?;
                let sub = s0.elapsed().as_micros() as u64;
                (u * c, label.card_distinct as f64, sub, 1, 0)
            }
            EvalMode::General => {
                let out = gen_crd(
                    q,
                    schema,
                    est,
                    GenCrdOptions {
                        dnf_cap: opts.dnf_cap,
                        parallel: false,
                    },
                )?;
                (
                    out.estimate,
                    label.card_dup as f64,
                    out.subroutine_time.as_micros() as u64,
                    out.stats.estimator_calls,
                    out.stats.pruned_by_implyfalse,
                )
            }
        };
        let total_us = t0.elapsed().as_micros() as u64;
        Ok(QueryEval {
            id: label.id,
            joins: label.joins,
            dnf_size: label.dnf_size,
            truth,
            estimate,
            q_error: clamped_q_error(truth, estimate),
            total_us,
            subroutine_us: sub_us,
            overhead_us: total_us.saturating_sub(sub_us),
            estimator_calls: calls,
            pruned,
        })
    };

    let rows: Vec<QueryEval> = if opts.parallel {
        let results: Vec<Result<QueryEval>> = queries
            .par_iter()
            .zip(labels.par_iter())
            .map(eval_one)
            .collect();
        results.into_iter().collect::<Result<Vec<_>>>()?
    } else {
        queries
            .iter()
            .zip(labels.iter())
            .map(eval_one)
            .collect::<Result<Vec<_>>>()?
    };

    Ok(EvalReport::assemble(
        opts.mode,
        est.name().to_string(),
        rows,
    ))
}

/// Output format for [`render_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Table,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<ReportFormat> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "table" => Ok(ReportFormat::Table),
            other => Err(Error::ConfigError(format!("unknown format {other}"))),
        }
    }
}

/// Renders a report deterministically. Timing columns are only included
/// on request: they vary run to run, and default output is byte-stable
/// under fixed seeds.
pub fn render_report(report: &EvalReport, format: ReportFormat, timing: bool) -> String {
    match format {
        ReportFormat::Csv => render_csv(report, timing),
        ReportFormat::Json => render_json(report, timing),
        ReportFormat::Table => render_table(report),
    }
}

const CSV_HEADER: &str = "id,joins,dnf_size,truth,estimate,q_error";
const CSV_TIMING: &str = ",total_us,subroutine_us,overhead_us,estimator_calls,pruned";

fn render_csv(report: &EvalReport, timing: bool) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    if timing {
        out.push_str(CSV_TIMING);
    }
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            r.id, r.joins, r.dnf_size, r.truth, r.estimate, r.q_error
        ));
        if timing {
            out.push_str(&format!(
                ",{},{},{},{},{}",
                r.total_us, r.subroutine_us, r.overhead_us, r.estimator_calls, r.pruned
            ));
        }
        out.push('\n');
    }
    out
}

/// Parses rows back out of [`render_csv`] output (timing columns optional).
pub fn parse_report_csv(text: &str) -> Result<Vec<QueryEval>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::ConfigError("empty report".into()))?;
    let timing = match header {
        h if h == CSV_HEADER => false,
        h if h == format!("{CSV_HEADER}{CSV_TIMING}") => true,
        other => {
            return Err(Error::ConfigError(format!(
                "unrecognized report header {other:?}"
            )))
        }
    };
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let want = if timing { 11 } else { 6 };
        if cells.len() != want {
            return Err(Error::ConfigError(format!(
                "report line {}: expected {want} cells, found {}",
                i + 2,
                cells.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::ConfigError(format!("bad float {s:?}")))
        };
        let parse_u = |s: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| Error::ConfigError(format!("bad integer {s:?}")))
        };
        out.push(QueryEval {
            id: parse_u(cells[0])? as usize,
            joins: parse_u(cells[1])? as usize,
            dnf_size: parse_u(cells[2])? as usize,
            truth: parse_f(cells[3])?,
            estimate: parse_f(cells[4])?,
            q_error: parse_f(cells[5])?,
            total_us: if timing { parse_u(cells[6])? } else { 0 },
            subroutine_us: if timing { parse_u(cells[7])? } else { 0 },
            overhead_us: if timing { parse_u(cells[8])? } else { 0 },
            estimator_calls: if timing { parse_u(cells[9])? } else { 0 },
            pruned: if timing { parse_u(cells[10])? } else { 0 },
        });
    }
    Ok(out)
}

fn render_json(report: &EvalReport, timing: bool) -> String {
    if timing {
        return serde_json::to_string_pretty(report).expect("report is serializable");
    }
    // strip the run-to-run-noisy fields
    let mut stripped = report.clone();
    for r in stripped.rows.iter_mut() {
        r.total_us = 0;
        r.subroutine_us = 0;
        r.overhead_us = 0;
    }
    serde_json::to_string_pretty(&stripped).expect("report is serializable")
}

fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "q-error percentiles  mode={}  estimator={}\n",
        report.mode, report.estimator
    ));
    out.push_str(&format!(
        "{:<10} {:>6} {:>9} {:>9} {:>9} {:>9} {:>9} {:>10} {:>9}\n",
        "group", "n", "50th", "75th", "90th", "95th", "99th", "max", "mean"
    ));
    let mut line = |name: String, s: &Summary| {
        out.push_str(&format!(
            "{:<10} {:>6} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>9.2} {:>10.2} {:>9.2}\n",
            name, s.count, s.p50, s.p75, s.p90, s.p95, s.p99, s.max, s.mean
        ));
    };
    line("overall".into(), &report.overall);
    for (j, s) in &report.by_joins {
        line(format!("joins={j}"), s);
    }
    for (d, s) in &report.by_dnf_size {
        line(format!("dnf={d}"), s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: usize, q: f64) -> QueryEval {
        QueryEval {
            id,
            joins: id % 3,
            dnf_size: 1 + id % 5,
            truth: 10.0,
            estimate: 10.0 * q,
            q_error: q,
            total_us: 5,
            subroutine_us: 3,
            overhead_us: 2,
            estimator_calls: 1,
            pruned: 0,
        }
    }

    #[test]
    fn nearest_rank_matches_hand_computation() {
        // frozen by hand: sorted 10 values, nearest-rank indices
        // p50 -> ceil(0.5*10)=5th value; p90 -> 9th; p99 -> 10th
        // p75 -> ceil(0.75*10)=8th value
        let vals: Vec<f64> = vec![1.0, 1.1, 1.2, 1.5, 2.0, 2.5, 3.0, 4.0, 8.0, 20.0];
        let s = Summary::from_qerrors(&vals);
        assert_eq!(s.p50, 2.0);
        assert_eq!(s.p75, 4.0);
        assert_eq!(s.p90, 8.0);
        assert_eq!(s.p95, 20.0);
        assert_eq!(s.p99, 20.0);
        assert_eq!(s.max, 20.0);
        assert!((s.mean - 4.43).abs() < 1e-9);
    }

    #[test]
    fn clamped_qerror_handles_zeros() {
        assert_eq!(clamped_q_error(0.0, 0.0), 1.0);
        let q = clamped_q_error(0.0, 5.0);
        assert_eq!(q, 5.0 / PREDICTION_EPSILON);
        assert_eq!(clamped_q_error(5.0, 0.0), q);
    }

    #[test]
    fn csv_json_round_trip_preserves_rows() {
        let rows: Vec<QueryEval> = (0..10).map(|i| row(i, 1.0 + i as f64)).collect();
        let report = EvalReport::assemble(EvalMode::Dup, "oracle".into(), rows);
        for timing in [false, true] {
            let csv = render_csv(&report, timing);
            let parsed = parse_report_csv(&csv).unwrap();
            assert_eq!(parsed.len(), report.rows.len());
            for (a, b) in parsed.iter().zip(&report.rows) {
                assert_eq!((a.id, a.joins, a.dnf_size), (b.id, b.joins, b.dnf_size));
                assert_eq!(a.truth, b.truth);
                assert_eq!(a.estimate, b.estimate);
                assert_eq!(a.q_error, b.q_error);
                if timing {
                    assert_eq!(a.total_us, b.total_us);
                }
            }
            let json = render_json(&report, timing);
            let back: EvalReport = serde_json::from_str(&json).unwrap();
            assert_eq!(back.rows.len(), report.rows.len());
        }
    }

    #[test]
    fn empty_workload_renders_without_crash() {
        let report = EvalReport::assemble(EvalMode::Dup, "oracle".into(), vec![]);
        let csv = render_csv(&report, false);
        assert_eq!(csv, format!("{CSV_HEADER}\n"));
        let table = render_table(&report);
        assert!(table.contains("overall"));
        let json = render_json(&report, false);
        assert!(json.contains("\"rows\": []"));
    }

    #[test]
    fn summary_groups_by_joins_and_dnf() {
        let rows: Vec<QueryEval> = (0..30).map(|i| row(i, 1.0 + (i % 4) as f64)).collect();
        let report = EvalReport::assemble(EvalMode::General, "histogram".into(), rows);
        assert_eq!(report.by_joins.len(), 3);
        assert_eq!(report.by_dnf_size.len(), 5);
        let n: usize = report.by_joins.values().map(|s| s.count).sum();
        assert_eq!(n, 30);
    }
}
