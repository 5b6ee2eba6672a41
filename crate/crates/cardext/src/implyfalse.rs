//! Linear-time detection of contradictory conjunctive queries.
//!
//! Sound but deliberately incomplete: a `true` verdict guarantees zero
//! cardinality on every database; `false` carries no guarantee. The check
//! runs in four stages: initialize per-column classes, union the classes of
//! equality-joined columns, fold column predicates into per-class bounds,
//! then sweep the classes for an empty interval or an out-of-bounds exact
//! value.
//!
//! Bounds are strict on both sides because they come from the strict `<`
//! and `>` operators. The exact-value sweep therefore requires
//! `min < exact < max` rather than the non-strict variant; this flags
//! boundary contradictions like `{a = 5, a > 5}` and remains sound. No
//! integer-gap tightening is applied (`{a > 5, a < 6}` is not flagged).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::query::{CmpOp, ConjunctiveQuery, QualifiedColumn};

/// Work counter for the linearity property: one unit per union-find hop
/// and per atom visited.
#[derive(Debug, Clone, Copy, Default)]
pub struct ImplyFalseStats {
    pub ops: u64,
}

/// Union-find over the columns of one query, with per-class strict bounds
/// and exact values.
struct ColumnClasses {
    parent: Vec<usize>,
    size: Vec<usize>,
    /// Lexicographically smallest member of each class, tracked so the
    /// representative reported in traces is stable.
    min_member: Vec<usize>,
    /// Strict lower bound: members must be > this value.
    lower: Vec<Option<i64>>,
    /// Strict upper bound: members must be < this value.
    upper: Vec<Option<i64>>,
    exact: Vec<Option<i64>>,
    ops: u64,
}

impl ColumnClasses {
    fn new(n: usize) -> Self {
        ColumnClasses {
            parent: (0..n).collect(),
            size: vec![1; n],
            min_member: (0..n).collect(),
            lower: vec![None; n],
            upper: vec![None; n],
            exact: vec![None; n],
            ops: 0,
        }
    }

    fn find(&mut self, i: usize) -> usize {
        self.ops += 1;
        if self.parent[i] == i {
            i
        } else {
            let root = self.find(self.parent[i]);
            self.parent[i] = root;
            root
        }
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        self.ops += 1;
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.min_member[big] = self.min_member[big].min(self.min_member[small]);
    }
}

/// Returns `true` if the conjunctive query provably has zero cardinality
/// on every database. Requires equality joins; an inequality join atom is
/// an error.
pub fn imply_false(q: &ConjunctiveQuery) -> Result<bool> {
    imply_false_with_stats(q).map(|(v, _)| v)
}

/// [`imply_false`] plus the operation count used by the linearity tests.
pub fn imply_false_with_stats(q: &ConjunctiveQuery) -> Result<(bool, ImplyFalseStats)> {
    // Register every column used by the query. Atom sets iterate in sorted
    // order, so indices are deterministic.
    let mut index: HashMap<&QualifiedColumn, usize> = HashMap::new();
    let used = q
        .joins
        .iter()
        .flat_map(|j| [&j.left, &j.right])
        .chain(q.preds.iter().map(|p| &p.col));
    for col in used {
        let next = index.len();
        index.entry(col).or_insert(next);
    }

    let mut classes = ColumnClasses::new(index.len());

    // Stage 2: union equality-joined columns.
    for j in &q.joins {
        if j.op != CmpOp::Eq {
            return Err(Error::UnsupportedJoin(format!(
                "{j}: contradiction check requires equality joins"
            )));
        }
        classes.union(index[&j.left], index[&j.right]);
    }

    // Stage 3: fold predicates into per-class bounds.
    for p in &q.preds {
        let root = classes.find(index[&p.col]);
        classes.ops += 1;
        match p.op {
            CmpOp::Gt => {
                let lo = classes.lower[root];
                classes.lower[root] = Some(lo.map_or(p.value, |v| v.max(p.value)));
            }
            CmpOp::Lt => {
                let hi = classes.upper[root];
                classes.upper[root] = Some(hi.map_or(p.value, |v| v.min(p.value)));
            }
            CmpOp::Eq => {
                if let Some(e) = classes.exact[root] {
                    if e != p.value {
                        return Ok((true, ImplyFalseStats { ops: classes.ops }));
                    }
                }
                classes.exact[root] = Some(p.value);
            }
        }
    }

    // Stage 4: contradiction sweep over class representatives.
    for i in 0..classes.parent.len() {
        if classes.parent[i] != i {
            continue;
        }
        classes.ops += 1;
        let (lo, hi, exact) = (classes.lower[i], classes.upper[i], classes.exact[i]);
        if let (Some(lo), Some(hi)) = (lo, hi) {
            if hi <= lo {
                return Ok((true, ImplyFalseStats { ops: classes.ops }));
            }
        }
        if let Some(e) = exact {
            let above_lower = lo.is_none_or(|lo| lo < e);
            let below_upper = hi.is_none_or(|hi| e < hi);
            if !(above_lower && below_upper) {
                return Ok((true, ImplyFalseStats { ops: classes.ops }));
            }
        }
    }

    Ok((false, ImplyFalseStats { ops: classes.ops }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{JoinAtom, PredAtom};
    use std::collections::BTreeSet;

    fn col(t: &str, c: &str) -> QualifiedColumn {
        QualifiedColumn::new(t, c)
    }

    fn cq(joins: Vec<JoinAtom>, preds: Vec<PredAtom>) -> ConjunctiveQuery {
        let mut tables = BTreeSet::new();
        for j in &joins {
            tables.insert(j.left.table.clone());
            tables.insert(j.right.table.clone());
        }
        for p in &preds {
            tables.insert(p.col.table.clone());
        }
        ConjunctiveQuery {
            attrs: BTreeSet::new(),
            tables,
            joins: joins.into_iter().collect(),
            preds: preds.into_iter().collect(),
        }
    }

    #[test]
    fn empty_interval_is_contradiction() {
        let q = cq(
            vec![],
            vec![
                PredAtom::new(col("R", "a"), CmpOp::Gt, 5),
                PredAtom::new(col("R", "a"), CmpOp::Lt, 5),
            ],
        );
        assert!(imply_false(&q).unwrap());
    }

    #[test]
    fn conflicting_exact_values_across_join() {
        let q = cq(
            vec![JoinAtom::new(col("R", "a"), CmpOp::Eq, col("S", "b"))],
            vec![
                PredAtom::new(col("R", "a"), CmpOp::Eq, 3),
                PredAtom::new(col("S", "b"), CmpOp::Eq, 7),
            ],
        );
        assert!(imply_false(&q).unwrap());
    }

    #[test]
    fn exact_on_strict_boundary_is_contradiction() {
        let q = cq(
            vec![],
            vec![
                PredAtom::new(col("R", "a"), CmpOp::Eq, 5),
                PredAtom::new(col("R", "a"), CmpOp::Gt, 5),
            ],
        );
        assert!(imply_false(&q).unwrap());
    }

    #[test]
    fn integer_gap_is_not_detected() {
        // only a = 6 could qualify, but real-valued semantics keep this open
        let q = cq(
            vec![],
            vec![
                PredAtom::new(col("R", "a"), CmpOp::Gt, 5),
                PredAtom::new(col("R", "a"), CmpOp::Lt, 7),
            ],
        );
        assert!(!imply_false(&q).unwrap());
    }

    #[test]
    fn transitive_classes_merge() {
        let q = cq(
            vec![
                JoinAtom::new(col("R", "a"), CmpOp::Eq, col("S", "b")),
                JoinAtom::new(col("S", "b"), CmpOp::Eq, col("T", "c")),
            ],
            vec![
                PredAtom::new(col("R", "a"), CmpOp::Eq, 1),
                PredAtom::new(col("T", "c"), CmpOp::Eq, 2),
            ],
        );
        assert!(imply_false(&q).unwrap());
    }

    #[test]
    fn bounds_flow_through_classes() {
        let q = cq(
            vec![JoinAtom::new(col("R", "a"), CmpOp::Eq, col("S", "b"))],
            vec![
                PredAtom::new(col("R", "a"), CmpOp::Gt, 10),
                PredAtom::new(col("S", "b"), CmpOp::Lt, 10),
            ],
        );
        assert!(imply_false(&q).unwrap());
    }

    #[test]
    fn satisfiable_query_passes() {
        let q = cq(
            vec![JoinAtom::new(col("R", "a"), CmpOp::Eq, col("S", "b"))],
            vec![
                PredAtom::new(col("R", "a"), CmpOp::Gt, 0),
                PredAtom::new(col("S", "b"), CmpOp::Lt, 100),
                PredAtom::new(col("R", "a"), CmpOp::Eq, 50),
            ],
        );
        assert!(!imply_false(&q).unwrap());
    }

    #[test]
    fn inequality_join_rejected() {
        let q = cq(
            vec![JoinAtom::new(col("R", "a"), CmpOp::Lt, col("S", "b"))],
            vec![],
        );
        assert!(matches!(imply_false(&q), Err(Error::UnsupportedJoin(_))));
    }

    #[test]
    fn op_count_grows_linearly_on_ladders() {
        // chain of equality joins R.c0 = R.c1 = ... with one predicate per column
        let ladder = |n: usize| {
            let joins: Vec<JoinAtom> = (0..n)
                .map(|i| {
                    JoinAtom::new(
                        col("R", &format!("c{i:04}")),
                        CmpOp::Eq,
                        col("R", &format!("c{:04}", i + 1)),
                    )
                })
                .collect();
            let preds: Vec<PredAtom> = (0..=n)
                .map(|i| PredAtom::new(col("R", &format!("c{i:04}")), CmpOp::Gt, 0))
                .collect();
            cq(joins, preds)
        };
        let (_, small) = imply_false_with_stats(&ladder(100)).unwrap();
        let (_, big) = imply_false_with_stats(&ladder(200)).unwrap();
        // linear growth: doubling atoms should not triple the work
        assert!(
            big.ops <= small.ops * 3,
            "ops grew superlinearly: {} -> {}",
            small.ops,
            big.ops
        );
    }
}
