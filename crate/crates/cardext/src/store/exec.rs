//! Exact query execution over the columnar store.
//!
//! Joins are driven by hash lookups on equality atoms with a nested-loop
//! fallback for everything else. The join product is never materialized:
//! bag counts are streamed and distinct counts tracked through a hash set
//! of projected tuples.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::query::{
    BoolExpr, CmpOp, ConjunctiveQuery, JoinAtom, PredAtom, QualifiedColumn, QueryAst, SelectList,
};
use crate::store::{Database, ExecResult, Table};

/// Executes a conjunctive query, returning bag count, distinct count and
/// uniqueness rate.
pub fn execute(db: &Database, q: &ConjunctiveQuery) -> Result<ExecResult> {
    let ast = q.to_ast();
    let plan = Plan::compile(db, &ast)?;
    Ok(plan.run())
}

/// Executes a query whose WHERE clause may contain AND, OR and NOT,
/// evaluating the boolean tree per joined tuple.
pub fn execute_general(db: &Database, q: &QueryAst) -> Result<ExecResult> {
    let plan = Plan::compile(db, q)?;
    Ok(plan.run())
}

/// Column reference resolved to (table slot, column index).
#[derive(Debug, Clone, Copy)]
struct ColRef {
    slot: usize,
    col: usize,
}

/// Boolean tree with all column references resolved.
enum Compiled {
    And(Vec<Compiled>),
    Or(Vec<Compiled>),
    Not(Box<Compiled>),
    Join(ColRef, CmpOp, ColRef),
    Pred(ColRef, CmpOp, i64),
}

impl Compiled {
    fn eval(&self, rows: &[u32], cols: &TableColumns) -> bool {
        match self {
            Compiled::And(cs) => cs.iter().all(|c| c.eval(rows, cols)),
            Compiled::Or(cs) => cs.iter().any(|c| c.eval(rows, cols)),
            Compiled::Not(c) => !c.eval(rows, cols),
            Compiled::Join(l, op, r) => op.eval(cols.value(*l, rows), cols.value(*r, rows)),
            Compiled::Pred(c, op, v) => op.eval(cols.value(*c, rows), *v),
        }
    }
}

/// Borrowed column arrays per table slot.
struct TableColumns<'a> {
    columns: Vec<Vec<&'a [i64]>>,
}

impl<'a> TableColumns<'a> {
    fn value(&self, r: ColRef, rows: &[u32]) -> i64 {
        self.columns[r.slot][r.col][rows[r.slot] as usize]
    }
}

/// One step of the join order: which table to place and how to find its
/// matching rows.
struct Stage {
    slot: usize,
    /// Probe-side key parts, resolved against already-placed tables.
    probe: Vec<ColRef>,
    /// Hash index over this table's surviving rows; `None` means no
    /// equality link exists and candidates are scanned.
    index: Option<HashMap<Vec<i64>, Vec<u32>>>,
    candidates: Vec<u32>,
    /// Cross-table comparisons decidable once this table is placed.
    checks: Vec<(ColRef, CmpOp, ColRef)>,
}

struct Plan<'a> {
    tables: Vec<&'a Table>,
    cols: TableColumns<'a>,
    stages: Vec<Stage>,
    residual: Vec<Compiled>,
    projection: Vec<ColRef>,
    /// Short-circuit: some filter or stage has no surviving rows.
    empty: bool,
}

impl<'a> Plan<'a> {
    fn compile(db: &'a Database, q: &QueryAst) -> Result<Plan<'a>> {
        crate::query::validate(q, db.schema())?;

        let table_names: Vec<&str> = q.from.iter().map(|s| s.as_str()).collect();
        let tables: Vec<&Table> = table_names
            .iter()
            .map(|n| db.table(n).expect("validated table"))
            .collect();
        let slot_of = |name: &str| table_names.iter().position(|t| *t == name).unwrap();
        let col_of = |slot: usize, name: &str| -> usize {
            tables[slot]
                .column_names()
                .position(|c| c == name)
                .expect("validated column")
        };
        let resolve = |c: &QualifiedColumn| -> ColRef {
            let slot = slot_of(&c.table);
            ColRef {
                slot,
                col: col_of(slot, &c.column),
            }
        };

        let cols = TableColumns {
            columns: tables
                .iter()
                .map(|t| {
                    t.column_names()
                        .map(|n| t.column(n).unwrap())
                        .collect::<Vec<_>>()
                })
                .collect(),
        };

        // Split the top-level conjunction into driver atoms and residual
        // subtrees.
        let mut table_preds: Vec<Vec<PredAtom>> = vec![Vec::new(); tables.len()];
        let mut same_table_joins: Vec<Vec<(usize, CmpOp, usize)>> = vec![Vec::new(); tables.len()];
        let mut cross_eq: Vec<(JoinAtom, ColRef, ColRef)> = Vec::new();
        let mut cross_other: Vec<(ColRef, CmpOp, ColRef)> = Vec::new();
        let mut residual = Vec::new();

        let mut conjuncts: Vec<&BoolExpr> = Vec::new();
        if let Some(expr) = &q.where_clause {
            match expr {
                BoolExpr::And(cs) => conjuncts.extend(cs.iter()),
                other => conjuncts.push(other),
            }
        }
        for c in conjuncts {
            match c {
                BoolExpr::Pred(p) => {
                    table_preds[slot_of(&p.col.table)].push(p.clone());
                }
                BoolExpr::Join(j) => {
                    let l = resolve(&j.left);
                    let r = resolve(&j.right);
                    if l.slot == r.slot {
                        same_table_joins[l.slot].push((l.col, j.op, r.col));
                    } else if j.op == CmpOp::Eq {
                        cross_eq.push((j.clone(), l, r));
                    } else {
                        cross_other.push((l, j.op, r));
                    }
                }
                other => residual.push(compile_expr(other, &resolve)),
            }
        }

        // Per-table candidate rows after local filters.
        let mut candidates: Vec<Vec<u32>> = Vec::with_capacity(tables.len());
        for (slot, table) in tables.iter().enumerate() {
            let mut rows = Vec::new();
            'rows: for row in 0..table.row_count() {
                for p in &table_preds[slot] {
                    let v = cols.columns[slot][col_of(slot, &p.col.column)][row];
                    if !p.op.eval(v, p.value) {
                        continue 'rows;
                    }
                }
                for &(c1, op, c2) in &same_table_joins[slot] {
                    if !op.eval(cols.columns[slot][c1][row], cols.columns[slot][c2][row]) {
                        continue 'rows;
                    }
                }
                rows.push(row as u32);
            }
            candidates.push(rows);
        }

        // Placement order: smallest candidate set first, then prefer tables
        // reachable through an equality atom.
        let mut order: Vec<usize> = Vec::with_capacity(tables.len());
        let mut remaining: Vec<usize> = (0..tables.len()).collect();
        remaining.sort_by_key(|&s| (candidates[s].len(), s));
        while !remaining.is_empty() {
            let pick = if order.is_empty() {
                0
            } else {
                remaining
                    .iter()
                    .position(|&s| {
                        cross_eq.iter().any(|(_, l, r)| {
                            (l.slot == s && order.contains(&r.slot))
                                || (r.slot == s && order.contains(&l.slot))
                        })
                    })
                    .unwrap_or(0)
            };
            order.push(remaining.remove(pick));
        }

        // Build one stage per placed table.
        let mut placed: Vec<usize> = Vec::new();
        let mut used_eq = vec![false; cross_eq.len()];
        let mut used_other = vec![false; cross_other.len()];
        let mut stages = Vec::with_capacity(order.len());
        let mut empty = false;
        for &slot in &order {
            let mut probe = Vec::new();
            let mut build_cols = Vec::new();
            for (i, (_, l, r)) in cross_eq.iter().enumerate() {
                if used_eq[i] {
                    continue;
                }
                let (this, earlier) = if l.slot == slot && placed.contains(&r.slot) {
                    (l, r)
                } else if r.slot == slot && placed.contains(&l.slot) {
                    (r, l)
                } else {
                    continue;
                };
                probe.push(*earlier);
                build_cols.push(this.col);
                used_eq[i] = true;
            }

            let mut checks = Vec::new();
            for (i, &(l, op, r)) in cross_other.iter().enumerate() {
                if used_other[i] {
                    continue;
                }
                let decidable = (l.slot == slot && placed.contains(&r.slot))
                    || (r.slot == slot && placed.contains(&l.slot));
                if decidable {
                    checks.push((l, op, r));
                    used_other[i] = true;
                }
            }

            let index = if probe.is_empty() {
                None
            } else {
                let mut map: HashMap<Vec<i64>, Vec<u32>> = HashMap::new();
                for &row in &candidates[slot] {
                    let key: Vec<i64> = build_cols
                        .iter()
                        .map(|&c| cols.columns[slot][c][row as usize])
                        .collect();
                    map.entry(key).or_default().push(row);
                }
                Some(map)
            };

            if candidates[slot].is_empty() {
                empty = true;
            }
            stages.push(Stage {
                slot,
                probe,
                index,
                candidates: candidates[slot].clone(),
                checks,
            });
            placed.push(slot);
        }

        let projection: Vec<ColRef> = match &q.select {
            SelectList::Star => db
                .schema()
                .all_columns()
                .into_iter()
                .filter(|c| q.from.contains(&c.table))
                .map(|c| resolve(&c))
                .collect(),
            SelectList::Columns(cs) => cs.iter().map(&resolve).collect(),
        };

        Ok(Plan {
            tables,
            cols,
            stages,
            residual,
            projection,
            empty,
        })
    }

    fn run(&self) -> ExecResult {
        if self.empty {
            return ExecResult::new(0, 0);
        }
        let mut rows = vec![0u32; self.tables.len()];
        let mut card_dup = 0u64;
        let mut distinct: HashSet<Vec<i64>> = HashSet::new();
        self.descend(0, &mut rows, &mut card_dup, &mut distinct);
        ExecResult::new(card_dup, distinct.len() as u64)
    }

    fn descend(
        &self,
        depth: usize,
        rows: &mut Vec<u32>,
        card_dup: &mut u64,
        distinct: &mut HashSet<Vec<i64>>,
    ) {
        if depth == self.stages.len() {
            if self.residual.iter().all(|r| r.eval(rows, &self.cols)) {
                *card_dup += 1;
                let tuple: Vec<i64> = self
                    .projection
                    .iter()
                    .map(|&r| self.cols.value(r, rows))
                    .collect();
                distinct.insert(tuple);
            }
            return;
        }
        let stage = &self.stages[depth];
        let matches: &[u32] = match &stage.index {
            Some(map) => {
                let key: Vec<i64> = stage
                    .probe
                    .iter()
                    .map(|&r| self.cols.value(r, rows))
                    .collect();
                match map.get(&key) {
                    Some(v) => v,
                    None => return,
                }
            }
            None => &stage.candidates,
        };
        for &row in matches {
            rows[stage.slot] = row;
            let ok = stage
                .checks
                .iter()
                .all(|&(l, op, r)| op.eval(self.cols.value(l, rows), self.cols.value(r, rows)));
            if ok {
                self.descend(depth + 1, rows, card_dup, distinct);
            }
        }
    }
}

fn compile_expr(expr: &BoolExpr, resolve: &impl Fn(&QualifiedColumn) -> ColRef) -> Compiled {
    match expr {
        BoolExpr::And(cs) => Compiled::And(cs.iter().map(|c| compile_expr(c, resolve)).collect()),
        BoolExpr::Or(cs) => Compiled::Or(cs.iter().map(|c| compile_expr(c, resolve)).collect()),
        BoolExpr::Not(c) => Compiled::Not(Box::new(compile_expr(c, resolve))),
        BoolExpr::Join(j) => Compiled::Join(resolve(&j.left), j.op, resolve(&j.right)),
        BoolExpr::Pred(p) => Compiled::Pred(resolve(&p.col), p.op, p.value),
    }
}

/// Rejects queries whose WHERE clause is not a pure conjunction of atoms.
/// Callers holding a general tree must DNF-decompose first or use
/// [`execute_general`].
pub fn require_conjunctive(q: &QueryAst) -> Result<()> {
    fn conjunctive(expr: &BoolExpr) -> bool {
        match expr {
            BoolExpr::And(cs) => cs.iter().all(conjunctive),
            BoolExpr::Or(_) | BoolExpr::Not(_) => false,
            _ => true,
        }
    }
    match &q.where_clause {
        Some(expr) if !conjunctive(expr) => Err(Error::UnsupportedQuery(
            "WHERE clause contains OR/NOT; DNF-decompose first".into(),
        )),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{to_conjunctive, SelectList};
    use crate::store::test_fixtures::*;

    fn rcol(t: &str, c: &str) -> QualifiedColumn {
        QualifiedColumn::new(t, c)
    }

    /// Brute-force oracle: full cross product, every atom re-checked per
    /// tuple. Independent of the hash-join path above.
    fn brute_force(db: &Database, q: &QueryAst) -> (u64, u64) {
        let tables: Vec<&Table> = q.from.iter().map(|t| db.table(t).unwrap()).collect();
        if tables.iter().any(|t| t.row_count() == 0) {
            return (0, 0);
        }
        let names: Vec<&String> = q.from.iter().collect();
        let mut rows = vec![0usize; tables.len()];
        let mut dup = 0u64;
        let mut set = HashSet::new();
        let attrs: Vec<QualifiedColumn> = match &q.select {
            SelectList::Star => db
                .schema()
                .all_columns()
                .into_iter()
                .filter(|c| q.from.contains(&c.table))
                .collect(),
            SelectList::Columns(cs) => cs.clone(),
        };
        fn eval_tree(
            e: &BoolExpr,
            get: &impl Fn(&QualifiedColumn) -> i64,
        ) -> bool {
            match e {
                BoolExpr::And(cs) => cs.iter().all(|c| eval_tree(c, get)),
                BoolExpr::Or(cs) => cs.iter().any(|c| eval_tree(c, get)),
                BoolExpr::Not(c) => !eval_tree(c, get),
                BoolExpr::Join(j) => j.op.eval(get(&j.left), get(&j.right)),
                BoolExpr::Pred(p) => p.op.eval(get(&p.col), p.value),
            }
        }
        loop {
            let get = |c: &QualifiedColumn| -> i64 {
                let slot = names.iter().position(|n| **n == c.table).unwrap();
                tables[slot].column(&c.column).unwrap()[rows[slot]]
            };
            let pass = match &q.where_clause {
                Some(e) => eval_tree(e, &get),
                None => true,
            };
            if pass {
                dup += 1;
                set.insert(attrs.iter().map(&get).collect::<Vec<i64>>());
            }
            // odometer
            let mut i = 0;
            loop {
                if i == tables.len() {
                    return (dup, set.len() as u64);
                }
                rows[i] += 1;
                if rows[i] < tables[i].row_count() {
                    break;
                }
                rows[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn uniqueness_rate_skewed_fixture() {
        let db = skewed_single_column_db();
        let ast = QueryAst::new(
            false,
            SelectList::Columns(vec![rcol("W", "v")]),
            ["W".to_string()],
            None,
        );
        let q = to_conjunctive(&ast, db.schema()).unwrap();
        let r = execute(&db, &q).unwrap();
        assert_eq!(r.card_dup, 15);
        assert_eq!(r.card_distinct, 3);
        assert!((r.uniqueness_rate - 0.2).abs() < 1e-12);
    }

    #[test]
    fn empty_result_has_zero_rate() {
        let db = skewed_single_column_db();
        let ast = QueryAst::new(
            false,
            SelectList::Columns(vec![rcol("W", "v")]),
            ["W".to_string()],
            Some(BoolExpr::Pred(PredAtom::new(
                rcol("W", "v"),
                CmpOp::Gt,
                1_000_000_000,
            ))),
        );
        let q = to_conjunctive(&ast, db.schema()).unwrap();
        let r = execute(&db, &q).unwrap();
        assert_eq!(r.card_dup, 0);
        assert_eq!(r.uniqueness_rate, 0.0);
    }

    #[test]
    fn toy_join_counts() {
        let db = toy_join_db();
        let ast = QueryAst::new(
            false,
            SelectList::Columns(vec![rcol("R", "a")]),
            ["R".to_string(), "S".to_string()],
            Some(BoolExpr::Join(JoinAtom::new(
                rcol("R", "b"),
                CmpOp::Eq,
                rcol("S", "b"),
            ))),
        );
        // Frozen from the 3x3 cross-product enumeration.
        let q = to_conjunctive(&ast, db.schema()).unwrap();
        let r = execute(&db, &q).unwrap();
        assert_eq!(r.card_dup, 5);
        assert_eq!(r.card_distinct, 2);
        // and against the independent brute-force path
        assert_eq!(brute_force(&db, &ast), (5, 2));
    }

    #[test]
    fn general_contradiction_is_empty() {
        let db = toy_join_db();
        let ast = QueryAst::new(
            false,
            SelectList::Columns(vec![rcol("R", "a")]),
            ["R".to_string()],
            Some(BoolExpr::And(vec![
                BoolExpr::Pred(PredAtom::new(rcol("R", "a"), CmpOp::Gt, 5)),
                BoolExpr::Pred(PredAtom::new(rcol("R", "a"), CmpOp::Lt, 5)),
            ])),
        );
        let r = execute_general(&db, &ast).unwrap();
        assert_eq!(r.card_dup, 0);
    }

    #[test]
    fn general_true_where_counts_all_rows() {
        let db = toy_join_db();
        let ast = QueryAst::new(false, SelectList::Star, ["R".to_string()], None);
        let r = execute_general(&db, &ast).unwrap();
        assert_eq!(r.card_dup, 3);
    }

    #[test]
    fn general_matches_conjunctive_executor() {
        let db = toy_join_db();
        let ast = QueryAst::new(
            false,
            SelectList::Columns(vec![rcol("R", "a"), rcol("S", "c")]),
            ["R".to_string(), "S".to_string()],
            Some(BoolExpr::And(vec![
                BoolExpr::Join(JoinAtom::new(rcol("R", "b"), CmpOp::Eq, rcol("S", "b"))),
                BoolExpr::Pred(PredAtom::new(rcol("S", "c"), CmpOp::Gt, 15)),
            ])),
        );
        let via_general = execute_general(&db, &ast).unwrap();
        let via_conj = execute(&db, &to_conjunctive(&ast, db.schema()).unwrap()).unwrap();
        assert_eq!(via_general, via_conj);
        assert_eq!(
            brute_force(&db, &ast),
            (via_general.card_dup, via_general.card_distinct)
        );
    }

    #[test]
    fn general_or_tree_matches_brute_force() {
        let db = toy_join_db();
        let ast = QueryAst::new(
            false,
            SelectList::Columns(vec![rcol("R", "a")]),
            ["R".to_string(), "S".to_string()],
            Some(BoolExpr::And(vec![
                BoolExpr::Join(JoinAtom::new(rcol("R", "b"), CmpOp::Eq, rcol("S", "b"))),
                BoolExpr::Or(vec![
                    BoolExpr::Pred(PredAtom::new(rcol("S", "c"), CmpOp::Eq, 10)),
                    BoolExpr::Not(Box::new(BoolExpr::Pred(PredAtom::new(
                        rcol("R", "a"),
                        CmpOp::Eq,
                        1,
                    )))),
                ]),
            ])),
        );
        let r = execute_general(&db, &ast).unwrap();
        assert_eq!(brute_force(&db, &ast), (r.card_dup, r.card_distinct));
    }

    #[test]
    fn select_list_does_not_change_bag_count() {
        let db = toy_join_db();
        let join = BoolExpr::Join(JoinAtom::new(rcol("R", "b"), CmpOp::Eq, rcol("S", "b")));
        let mk = |cols: Vec<QualifiedColumn>| {
            QueryAst::new(
                false,
                SelectList::Columns(cols),
                ["R".to_string(), "S".to_string()],
                Some(join.clone()),
            )
        };
        let a = execute_general(&db, &mk(vec![rcol("R", "a")])).unwrap();
        let b = execute_general(&db, &mk(vec![rcol("R", "a"), rcol("S", "c")])).unwrap();
        assert_eq!(a.card_dup, b.card_dup);
        // projection monotonicity
        assert!(b.card_distinct >= a.card_distinct);
    }

    #[test]
    fn inequality_join_nested_loop() {
        let db = toy_join_db();
        let ast = QueryAst::new(
            false,
            SelectList::Columns(vec![rcol("R", "a")]),
            ["R".to_string(), "S".to_string()],
            Some(BoolExpr::Join(JoinAtom::new(
                rcol("R", "b"),
                CmpOp::Lt,
                rcol("S", "c"),
            ))),
        );
        let r = execute_general(&db, &ast).unwrap();
        assert_eq!(brute_force(&db, &ast), (r.card_dup, r.card_distinct));
        // every R.b (1,2,2) is below every S.c (10,20,30)
        assert_eq!(r.card_dup, 9);
    }

    #[test]
    fn require_conjunctive_flags_or() {
        let ast = QueryAst::new(
            false,
            SelectList::Columns(vec![rcol("R", "a")]),
            ["R".to_string()],
            Some(BoolExpr::Or(vec![
                BoolExpr::Pred(PredAtom::new(rcol("R", "a"), CmpOp::Eq, 1)),
                BoolExpr::Pred(PredAtom::new(rcol("R", "a"), CmpOp::Eq, 2)),
            ])),
        );
        assert!(matches!(
            require_conjunctive(&ast),
            Err(Error::UnsupportedQuery(_))
        ));
    }
}
