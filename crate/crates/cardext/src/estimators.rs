//! The pluggable conjunctive-estimator interface, built-in baselines, and
//! the set-theoretic wrapper that multiplies a bag estimate by a predicted
//! uniqueness rate.
//!
//! Three baselines span the accuracy spectrum: an exact oracle backed by
//! the executor, a Bernoulli sampling estimator, and an attribute-value-
//! independence histogram estimator.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::query::{CmpOp, ConjunctiveQuery, PredAtom};
use crate::store::{execute, Database, Table};

/// What an estimator declares about itself. `thread_safe` gates the
/// parallel recursion mode; `supports_inequality_join` gates workloads
/// with non-equality join atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub supports_inequality_join: bool,
    pub thread_safe: bool,
}

/// A limited cardinality estimation model: conjunctive queries in, bag
/// cardinality estimate out. Estimates must be finite, non-negative and
/// deterministic given construction-time configuration.
pub trait Estimator {
    fn name(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    fn estimate(&self, q: &ConjunctiveQuery) -> Result<f64>;
}

/// A model producing the expected fraction of distinct rows in a query's
/// bag result, in [0,1].
pub trait UniquenessModel {
    fn name(&self) -> &str;
    fn uniqueness(&self, q: &ConjunctiveQuery) -> Result<f64>;
    fn supports_inequality_join(&self) -> bool;
}

/// Ground-truth estimator: runs the exact executor.
pub struct OracleEstimator {
    db: Arc<Database>,
}

impl OracleEstimator {
    pub fn new(db: Arc<Database>) -> Self {
        OracleEstimator { db }
    }
}

impl Estimator for OracleEstimator {
    fn name(&self) -> &str {
        "oracle"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            supports_inequality_join: true,
            thread_safe: true,
        }
    }

    fn estimate(&self, q: &ConjunctiveQuery) -> Result<f64> {
        Ok(execute(&self.db, q)?.card_dup as f64)
    }
}

/// Ground-truth uniqueness: runs the exact executor and reads the rate.
pub struct ExactUniquenessOracle {
    db: Arc<Database>,
}

impl ExactUniquenessOracle {
    pub fn new(db: Arc<Database>) -> Self {
        ExactUniquenessOracle { db }
    }
}

impl UniquenessModel for ExactUniquenessOracle {
    fn name(&self) -> &str {
        "uniqueness-oracle"
    }

    fn uniqueness(&self, q: &ConjunctiveQuery) -> Result<f64> {
        Ok(execute(&self.db, q)?.uniqueness_rate)
    }

    fn supports_inequality_join(&self) -> bool {
        true
    }
}

/// Constant uniqueness rate; `ConstUniqueness(1.0)` turns the wrapper into
/// an identity.
pub struct ConstUniqueness(pub f64);

impl UniquenessModel for ConstUniqueness {
    fn name(&self) -> &str {
        "uniqueness-const"
    }

    fn uniqueness(&self, _q: &ConjunctiveQuery) -> Result<f64> {
        Ok(self.0)
    }

    fn supports_inequality_join(&self) -> bool {
        true
    }
}

/// Bernoulli-samples every base table once at construction, then answers
/// queries exactly over the sample, scaled by `1/rate` per joined table.
pub struct SamplingEstimator {
    sampled: Database,
    rate: f64,
}

impl SamplingEstimator {
    pub fn new(db: &Database, rate: f64, seed: u64) -> Result<SamplingEstimator> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::ConfigError(format!(
                "sampling rate must be in (0,1], got {rate}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tables = Vec::new();
        for def in &db.schema().tables {
            let table = db.table(&def.name).expect("schema table present");
            let keep = sample_rows(&mut rng, table.row_count(), rate);
            let columns: Vec<(String, Vec<i64>)> = table
                .column_names()
                .map(|n| {
                    let src = table.column(n).unwrap();
                    (
                        n.to_string(),
                        keep.iter().map(|&r| src[r]).collect::<Vec<i64>>(),
                    )
                })
                .collect();
            tables.push(Table::new(def.name.clone(), columns)?);
        }
        Ok(SamplingEstimator {
            sampled: Database::new(db.schema().clone(), tables)?,
            rate,
        })
    }
}

/// The Bernoulli keep-decision sequence for one table; exposed so tests
/// can replay the exact sample.
pub fn sample_rows(rng: &mut ChaCha8Rng, row_count: usize, rate: f64) -> Vec<usize> {
    (0..row_count)
        .filter(|_| rng.gen::<f64>() < rate)
        .collect()
}

impl Estimator for SamplingEstimator {
    fn name(&self) -> &str {
        "sampling"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            supports_inequality_join: true,
            thread_safe: true,
        }
    }

    fn estimate(&self, q: &ConjunctiveQuery) -> Result<f64> {
        let sampled = execute(&self.sampled, q)?.card_dup as f64;
        let scale = (1.0 / self.rate).powi(q.tables.len() as i32);
        Ok(sampled * scale)
    }
}

/// Per-column equi-width histogram.
#[derive(Debug, Clone)]
struct ColumnHistogram {
    min: i64,
    max: i64,
    width: f64,
    counts: Vec<u64>,
    rows: u64,
    distinct: u64,
}

impl ColumnHistogram {
    fn build(values: &[i64], buckets: usize) -> Option<ColumnHistogram> {
        if values.is_empty() {
            return None;
        }
        let min = *values.iter().min().unwrap();
        let max = *values.iter().max().unwrap();
        let width = (max - min + 1) as f64 / buckets as f64;
        let mut counts = vec![0u64; buckets];
        let mut distinct = std::collections::HashSet::new();
        for &v in values {
            let k = (((v - min) as f64) / width).floor() as usize;
            counts[k.min(buckets - 1)] += 1;
            distinct.insert(v);
        }
        Some(ColumnHistogram {
            min,
            max,
            width,
            counts,
            rows: values.len() as u64,
            distinct: distinct.len() as u64,
        })
    }

    fn bucket(&self, v: i64) -> usize {
        let k = (((v - self.min) as f64) / self.width).floor() as usize;
        k.min(self.counts.len() - 1)
    }

    /// Fraction of rows strictly below `v`, assuming uniformity within the
    /// bucket holding `v`.
    fn fraction_below(&self, v: i64) -> f64 {
        if v <= self.min {
            return 0.0;
        }
        if v > self.max {
            return 1.0;
        }
        let k = self.bucket(v);
        let below: u64 = self.counts[..k].iter().sum();
        let lo = self.min as f64 + k as f64 * self.width;
        let partial = self.counts[k] as f64 * ((v as f64 - lo) / self.width).clamp(0.0, 1.0);
        (below as f64 + partial) / self.rows as f64
    }

    fn fraction_equal(&self, v: i64) -> f64 {
        if v < self.min || v > self.max {
            return 0.0;
        }
        let k = self.bucket(v);
        let per_bucket_distinct = (self.distinct as f64 / self.counts.len() as f64).max(1.0);
        (self.counts[k] as f64 / self.rows as f64) / per_bucket_distinct
    }

    fn selectivity(&self, op: CmpOp, v: i64) -> f64 {
        match op {
            CmpOp::Lt => self.fraction_below(v),
            CmpOp::Eq => self.fraction_equal(v),
            CmpOp::Gt => (1.0 - self.fraction_below(v) - self.fraction_equal(v)).max(0.0),
        }
    }
}

/// Default bucket count for [`HistogramEstimator`].
pub const DEFAULT_HISTOGRAM_BUCKETS: usize = 100;

/// Selectivity assumed for an inequality join atom.
const INEQUALITY_JOIN_SELECTIVITY: f64 = 1.0 / 3.0;

/// Attribute-value-independence baseline: per-predicate selectivities from
/// equi-width histograms, multiplied together; equality joins use
/// `1 / max(distinct)`.
pub struct HistogramEstimator {
    histograms: std::collections::BTreeMap<crate::query::QualifiedColumn, ColumnHistogram>,
    table_rows: std::collections::BTreeMap<String, u64>,
}

impl HistogramEstimator {
    pub fn new(db: &Database, buckets: usize) -> Result<HistogramEstimator> {
        if buckets == 0 {
            return Err(Error::ConfigError("bucket count must be >= 1".into()));
        }
        let mut histograms = std::collections::BTreeMap::new();
        let mut table_rows = std::collections::BTreeMap::new();
        for def in &db.schema().tables {
            let table = db.table(&def.name).expect("schema table present");
            table_rows.insert(def.name.clone(), table.row_count() as u64);
            for cdef in &def.columns {
                let values = table.column(&cdef.name).unwrap();
                if let Some(h) = ColumnHistogram::build(values, buckets) {
                    histograms.insert(
                        crate::query::QualifiedColumn::new(def.name.clone(), cdef.name.clone()),
                        h,
                    );
                }
            }
        }
        Ok(HistogramEstimator {
            histograms,
            table_rows,
        })
    }

    fn pred_selectivity(&self, p: &PredAtom) -> f64 {
        match self.histograms.get(&p.col) {
            Some(h) => h.selectivity(p.op, p.value),
            None => 0.0, // empty column means an empty table
        }
    }
}

impl Estimator for HistogramEstimator {
    fn name(&self) -> &str {
        "histogram"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            supports_inequality_join: true,
            thread_safe: true,
        }
    }

    fn estimate(&self, q: &ConjunctiveQuery) -> Result<f64> {
        let mut rows = 1.0f64;
        for t in &q.tables {
            rows *= *self.table_rows.get(t).ok_or_else(|| {
                Error::EstimatorError(format!("no statistics for table {t}"))
            })? as f64;
        }
        let mut sel = 1.0f64;
        for j in &q.joins {
            if j.op == CmpOp::Eq {
                let d1 = self.histograms.get(&j.left).map(|h| h.distinct).unwrap_or(1);
                let d2 = self
                    .histograms
                    .get(&j.right)
                    .map(|h| h.distinct)
                    .unwrap_or(1);
                sel *= 1.0 / d1.max(d2).max(1) as f64;
            } else {
                sel *= INEQUALITY_JOIN_SELECTIVITY;
            }
        }
        for p in &q.preds {
            sel *= self.pred_selectivity(p);
        }
        Ok(rows * sel)
    }
}

/// `U * C`: multiplies the inner model's bag estimate by a predicted
/// uniqueness rate, producing a set-theoretic estimate.
pub struct PunqExtendedEstimator<M: ?Sized, U: ?Sized> {
    name: String,
    inner: Arc<M>,
    uniqueness: Arc<U>,
}

impl<M: Estimator + ?Sized, U: UniquenessModel + ?Sized> PunqExtendedEstimator<M, U> {
    pub fn new(inner: Arc<M>, uniqueness: Arc<U>) -> Self {
        let name = format!("punq({})", inner.name());
        PunqExtendedEstimator {
            name,
            inner,
            uniqueness,
        }
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    pub fn uniqueness_model(&self) -> &U {
        &self.uniqueness
    }
}

impl<M: Estimator + ?Sized, U: UniquenessModel + ?Sized> Estimator
    for PunqExtendedEstimator<M, U>
{
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> Capabilities {
        let inner = self.inner.capabilities();
        Capabilities {
            supports_inequality_join: inner.supports_inequality_join
                && self.uniqueness.supports_inequality_join(),
            thread_safe: inner.thread_safe,
        }
    }

    fn estimate(&self, q: &ConjunctiveQuery) -> Result<f64> {
        let u = self.uniqueness.uniqueness(q)?;
        let c = self.inner.estimate(q)?;
        Ok(u * c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{to_conjunctive, QualifiedColumn, QueryAst, SelectList};
    use crate::store::test_fixtures::*;

    fn col(t: &str, c: &str) -> QualifiedColumn {
        QualifiedColumn::new(t, c)
    }

    fn select_all_w(db: &Database) -> ConjunctiveQuery {
        let ast = QueryAst::new(
            false,
            SelectList::Columns(vec![col("W", "v")]),
            ["W".to_string()],
            None,
        );
        to_conjunctive(&ast, db.schema()).unwrap()
    }

    #[test]
    fn oracle_matches_executor() {
        let db = Arc::new(skewed_single_column_db());
        let est = OracleEstimator::new(db.clone());
        let q = select_all_w(&db);
        assert_eq!(est.estimate(&q).unwrap(), 15.0);
    }

    #[test]
    fn oracle_contradiction_is_zero() {
        let db = Arc::new(skewed_single_column_db());
        let est = OracleEstimator::new(db.clone());
        let mut q = select_all_w(&db);
        q.preds.insert(PredAtom::new(col("W", "v"), CmpOp::Gt, 5));
        q.preds.insert(PredAtom::new(col("W", "v"), CmpOp::Lt, 5));
        assert_eq!(est.estimate(&q).unwrap(), 0.0);
    }

    #[test]
    fn sampling_rate_one_is_exact() {
        let db = toy_join_db();
        let est = SamplingEstimator::new(&db, 1.0, 7).unwrap();
        let oracle = OracleEstimator::new(Arc::new(db.clone()));
        let ast = QueryAst::new(
            false,
            SelectList::Columns(vec![col("R", "a")]),
            ["R".to_string(), "S".to_string()],
            Some(crate::query::BoolExpr::Join(crate::query::JoinAtom::new(
                col("R", "b"),
                CmpOp::Eq,
                col("S", "b"),
            ))),
        );
        let q = to_conjunctive(&ast, db.schema()).unwrap();
        assert_eq!(est.estimate(&q).unwrap(), oracle.estimate(&q).unwrap());
    }

    #[test]
    fn sampling_matches_replayed_sample() {
        let db = skewed_single_column_db();
        let seed = 42;
        let rate = 0.5;
        let est = SamplingEstimator::new(&db, rate, seed).unwrap();
        let q = select_all_w(&db);

        // replay the keep decisions with the same stream
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = sample_rows(&mut rng, 15, rate);
        let expected = keep.len() as f64 * 2.0;
        assert_eq!(est.estimate(&q).unwrap(), expected);
    }

    #[test]
    fn sampling_is_unbiased_over_seeds() {
        // 200-seed Monte-Carlo against a selection with true card >= 100
        let mut values = Vec::new();
        for i in 0..400i64 {
            values.push(i % 40);
        }
        let schema = crate::store::Schema {
            tables: vec![crate::store::TableDef {
                name: "T".into(),
                columns: vec![crate::store::ColumnDef {
                    name: "x".into(),
                    min: 0,
                    max: 39,
                }],
            }],
            join_edges: vec![],
        };
        let table = Table::new("T", vec![("x".into(), values)]).unwrap();
        let db = Database::new(schema, vec![table]).unwrap();
        let ast = QueryAst::new(
            false,
            SelectList::Columns(vec![col("T", "x")]),
            ["T".to_string()],
            Some(crate::query::BoolExpr::Pred(PredAtom::new(
                col("T", "x"),
                CmpOp::Lt,
                20,
            ))),
        );
        let q = to_conjunctive(&ast, db.schema()).unwrap();
        let truth = execute(&db, &q).unwrap().card_dup as f64;
        assert!(truth >= 100.0);

        let mean = (0..200)
            .map(|seed| {
                SamplingEstimator::new(&db, 0.5, seed)
                    .unwrap()
                    .estimate(&q)
                    .unwrap()
            })
            .sum::<f64>()
            / 200.0;
        assert!(
            (mean - truth).abs() / truth < 0.10,
            "mean {mean} vs truth {truth}"
        );
    }

    #[test]
    fn histogram_equality_with_one_bucket_is_rows_over_distinct() {
        let db = skewed_single_column_db();
        let est = HistogramEstimator::new(&db, 1).unwrap();
        let mut q = select_all_w(&db);
        q.preds.insert(PredAtom::new(col("W", "v"), CmpOp::Eq, 2));
        // 15 rows, 3 distinct -> 15 * (1/3) = 5
        assert!((est.estimate(&q).unwrap() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn histogram_no_predicates_returns_row_count() {
        let db = skewed_single_column_db();
        let est = HistogramEstimator::new(&db, 10).unwrap();
        let q = select_all_w(&db);
        assert_eq!(est.estimate(&q).unwrap(), 15.0);
    }

    #[test]
    fn histogram_join_formula_and_oracle_comparison() {
        let db = toy_join_db();
        let est = HistogramEstimator::new(&db, DEFAULT_HISTOGRAM_BUCKETS).unwrap();
        let ast = QueryAst::new(
            false,
            SelectList::Columns(vec![col("R", "a")]),
            ["R".to_string(), "S".to_string()],
            Some(crate::query::BoolExpr::Join(crate::query::JoinAtom::new(
                col("R", "b"),
                CmpOp::Eq,
                col("S", "b"),
            ))),
        );
        let q = to_conjunctive(&ast, db.schema()).unwrap();
        // rows(R) * rows(S) / max(d1, d2) = 3 * 3 / 2
        let estimate = est.estimate(&q).unwrap();
        assert!((estimate - 4.5).abs() < 1e-9);
        // characterize against the oracle; no tolerance asserted
        let truth = execute(&db, &q).unwrap().card_dup as f64;
        let q_err = (estimate / truth).max(truth / estimate);
        println!("histogram join q-error on toy fixture: {q_err:.3}");
    }

    #[test]
    fn histogram_out_of_range_constants() {
        let db = skewed_single_column_db();
        let est = HistogramEstimator::new(&db, 4).unwrap();
        let base = select_all_w(&db);

        let mut below = base.clone();
        below.preds.insert(PredAtom::new(col("W", "v"), CmpOp::Lt, -5));
        assert_eq!(est.estimate(&below).unwrap(), 0.0);

        let mut above = base.clone();
        above.preds.insert(PredAtom::new(col("W", "v"), CmpOp::Lt, 99));
        assert_eq!(est.estimate(&above).unwrap(), 15.0);

        let mut gt_above = base;
        gt_above
            .preds
            .insert(PredAtom::new(col("W", "v"), CmpOp::Gt, 99));
        assert_eq!(est.estimate(&gt_above).unwrap(), 0.0);
    }

    #[test]
    fn identity_wrapper_equals_inner() {
        let db = Arc::new(skewed_single_column_db());
        let oracle = Arc::new(OracleEstimator::new(db.clone()));
        let wrapped = PunqExtendedEstimator::new(oracle.clone(), Arc::new(ConstUniqueness(1.0)));
        let mut q = select_all_w(&db);
        q.preds.insert(PredAtom::new(col("W", "v"), CmpOp::Lt, 3));
        assert_eq!(
            wrapped.estimate(&q).unwrap(),
            oracle.estimate(&q).unwrap()
        );
    }

    #[test]
    fn exact_uniqueness_wrapper_recovers_distinct_count() {
        let db = Arc::new(skewed_single_column_db());
        let oracle = Arc::new(OracleEstimator::new(db.clone()));
        let wrapped =
            PunqExtendedEstimator::new(oracle, Arc::new(ExactUniquenessOracle::new(db.clone())));
        let q = select_all_w(&db);
        let truth = execute(&db, &q).unwrap();
        assert_eq!(wrapped.estimate(&q).unwrap(), truth.card_distinct as f64);
    }

    #[test]
    fn estimators_respect_structural_equality() {
        let db = Arc::new(toy_join_db());
        let est = HistogramEstimator::new(&db, 8).unwrap();
        // same atoms inserted in different orders
        let ast1 = QueryAst::new(
            false,
            SelectList::Columns(vec![col("R", "a")]),
            ["R".to_string()],
            Some(crate::query::BoolExpr::And(vec![
                crate::query::BoolExpr::Pred(PredAtom::new(col("R", "a"), CmpOp::Gt, 0)),
                crate::query::BoolExpr::Pred(PredAtom::new(col("R", "b"), CmpOp::Lt, 3)),
            ])),
        );
        let ast2 = QueryAst::new(
            false,
            SelectList::Columns(vec![col("R", "a")]),
            ["R".to_string()],
            Some(crate::query::BoolExpr::And(vec![
                crate::query::BoolExpr::Pred(PredAtom::new(col("R", "b"), CmpOp::Lt, 3)),
                crate::query::BoolExpr::Pred(PredAtom::new(col("R", "a"), CmpOp::Gt, 0)),
            ])),
        );
        let q1 = to_conjunctive(&ast1, db.schema()).unwrap();
        let q2 = to_conjunctive(&ast2, db.schema()).unwrap();
        assert_eq!(q1, q2);
        assert_eq!(est.estimate(&q1).unwrap(), est.estimate(&q2).unwrap());
    }
}
