//! Query AST, the conjunctive four-set normal form, validation and
//! intersection-query construction.
//!
//! A conjunctive query is held as four sets: selected attributes `A`,
//! tables `T`, join atoms `J` and column predicates `P`. Sets are `BTreeSet`s
//! so iteration order is canonical and structural equality works as set
//! equality.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::Schema;

/// A column reference qualified by its table, e.g. `R.a`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QualifiedColumn {
    pub table: String,
    pub column: String,
}

impl QualifiedColumn {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        QualifiedColumn {
            table: table.into(),
            column: column.into(),
        }
    }

    /// Parses `"table.column"`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.split_once('.') {
            Some((t, c)) if !t.is_empty() && !c.is_empty() => Ok(QualifiedColumn::new(t, c)),
            _ => Err(Error::ValidationError(format!(
                "expected table.column, got {s:?}"
            ))),
        }
    }
}

impl fmt::Display for QualifiedColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

/// Comparison operator used by join atoms and column predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Eq,
    Gt,
}

impl CmpOp {
    pub fn eval(self, left: i64, right: i64) -> bool {
        match self {
            CmpOp::Lt => left < right,
            CmpOp::Eq => left == right,
            CmpOp::Gt => left > right,
        }
    }

    /// Stable index into operator one-hot segments.
    pub fn index(self) -> usize {
        match self {
            CmpOp::Lt => 0,
            CmpOp::Eq => 1,
            CmpOp::Gt => 2,
        }
    }

    /// Number of supported predicate operators.
    pub const COUNT: usize = 3;
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CmpOp::Lt => "<",
            CmpOp::Eq => "=",
            CmpOp::Gt => ">",
        };
        f.write_str(s)
    }
}

/// A join atom `col1 op col2`.
///
/// Constructed through [`JoinAtom::new`], which canonicalizes: equality joins
/// order the column pair lexicographically, and `a > b` becomes `b < a`, so
/// set-dedup is deterministic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JoinAtom {
    pub left: QualifiedColumn,
    pub op: CmpOp,
    pub right: QualifiedColumn,
}

impl JoinAtom {
    pub fn new(left: QualifiedColumn, op: CmpOp, right: QualifiedColumn) -> Self {
        match op {
            CmpOp::Eq => {
                let (left, right) = if left <= right {
                    (left, right)
                } else {
                    (right, left)
                };
                JoinAtom {
                    left,
                    op: CmpOp::Eq,
                    right,
                }
            }
            CmpOp::Lt => JoinAtom {
                left,
                op: CmpOp::Lt,
                right,
            },
            CmpOp::Gt => JoinAtom {
                left: right,
                op: CmpOp::Lt,
                right: left,
            },
        }
    }

    pub fn is_equality(&self) -> bool {
        self.op == CmpOp::Eq
    }
}

impl fmt::Display for JoinAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.left, self.op, self.right)
    }
}

/// A column predicate `col op const`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PredAtom {
    pub col: QualifiedColumn,
    pub op: CmpOp,
    pub value: i64,
}

impl PredAtom {
    pub fn new(col: QualifiedColumn, op: CmpOp, value: i64) -> Self {
        PredAtom { col, op, value }
    }
}

impl fmt::Display for PredAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.col, self.op, self.value)
    }
}

/// Boolean predicate tree of a WHERE clause.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoolExpr {
    And(Vec<BoolExpr>),
    Or(Vec<BoolExpr>),
    Not(Box<BoolExpr>),
    Join(JoinAtom),
    Pred(PredAtom),
}

impl BoolExpr {
    /// Flattens nested `And(And(..))` / `Or(Or(..))` nodes and unwraps
    /// single-child connectives, yielding the canonical n-ary form the
    /// parser produces.
    pub fn canonicalize(self) -> BoolExpr {
        match self {
            BoolExpr::And(children) => {
                let mut flat = Vec::new();
                for c in children {
                    match c.canonicalize() {
                        BoolExpr::And(inner) => flat.extend(inner),
                        other => flat.push(other),
                    }
                }
                if flat.len() == 1 {
                    flat.pop().unwrap()
                } else {
                    BoolExpr::And(flat)
                }
            }
            BoolExpr::Or(children) => {
                let mut flat = Vec::new();
                for c in children {
                    match c.canonicalize() {
                        BoolExpr::Or(inner) => flat.extend(inner),
                        other => flat.push(other),
                    }
                }
                if flat.len() == 1 {
                    flat.pop().unwrap()
                } else {
                    BoolExpr::Or(flat)
                }
            }
            BoolExpr::Not(child) => BoolExpr::Not(Box::new(child.canonicalize())),
            atom => atom,
        }
    }

    /// All column references in the subtree, in first-seen order.
    pub fn columns(&self) -> Vec<&QualifiedColumn> {
        let mut out = Vec::new();
        self.visit_atoms(&mut |expr| match expr {
            BoolExpr::Join(j) => {
                out.push(&j.left);
                out.push(&j.right);
            }
            BoolExpr::Pred(p) => out.push(&p.col),
            _ => {}
        });
        out
    }

    fn visit_atoms<'a>(&'a self, f: &mut impl FnMut(&'a BoolExpr)) {
        match self {
            BoolExpr::And(cs) | BoolExpr::Or(cs) => {
                for c in cs {
                    c.visit_atoms(f);
                }
            }
            BoolExpr::Not(c) => c.visit_atoms(f),
            atom => f(atom),
        }
    }

    /// True if no join atom occurs anywhere in the subtree.
    pub fn is_join_free(&self) -> bool {
        let mut seen_join = false;
        self.visit_atoms(&mut |expr| {
            if matches!(expr, BoolExpr::Join(_)) {
                seen_join = true;
            }
        });
        !seen_join
    }
}

/// SELECT clause: either `*` or an explicit column list (positional,
/// repeats allowed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectList {
    Star,
    Columns(Vec<QualifiedColumn>),
}

/// A SELECT-FROM-WHERE query with an arbitrary AND/OR/NOT predicate tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryAst {
    pub distinct: bool,
    pub select: SelectList,
    pub from: BTreeSet<String>,
    pub where_clause: Option<BoolExpr>,
}

impl QueryAst {
    pub fn new(
        distinct: bool,
        select: SelectList,
        from: impl IntoIterator<Item = String>,
        where_clause: Option<BoolExpr>,
    ) -> Self {
        QueryAst {
            distinct,
            select,
            from: from.into_iter().collect(),
            where_clause,
        }
    }
}

/// The four-set conjunctive form `(A, T, J, P)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ConjunctiveQuery {
    /// SELECT attributes.
    pub attrs: BTreeSet<QualifiedColumn>,
    /// FROM tables.
    pub tables: BTreeSet<String>,
    /// Join atoms.
    pub joins: BTreeSet<JoinAtom>,
    /// Column predicates.
    pub preds: BTreeSet<PredAtom>,
}

impl ConjunctiveQuery {
    /// Re-embeds the four sets as an AST whose WHERE clause is the
    /// conjunction of all atoms.
    pub fn to_ast(&self) -> QueryAst {
        let mut conjuncts: Vec<BoolExpr> = Vec::new();
        conjuncts.extend(self.joins.iter().cloned().map(BoolExpr::Join));
        conjuncts.extend(self.preds.iter().cloned().map(BoolExpr::Pred));
        let where_clause = match conjuncts.len() {
            0 => None,
            1 => Some(conjuncts.pop().unwrap()),
            _ => Some(BoolExpr::And(conjuncts)),
        };
        QueryAst {
            distinct: false,
            select: SelectList::Columns(self.attrs.iter().cloned().collect()),
            from: self.tables.clone(),
            where_clause,
        }
    }

    /// Number of join atoms.
    pub fn join_count(&self) -> usize {
        self.joins.len()
    }
}

/// Checks that every name in `q` resolves against `schema` and that the
/// structural invariants hold. Reports the first offending reference.
pub fn validate(q: &QueryAst, schema: &Schema) -> Result<()> {
    if q.from.is_empty() {
        return Err(Error::ValidationError("FROM clause is empty".into()));
    }
    for t in &q.from {
        if schema.table(t).is_none() {
            return Err(Error::ValidationError(format!("unknown table {t}")));
        }
    }
    let check_col = |c: &QualifiedColumn| -> Result<()> {
        if !q.from.contains(&c.table) {
            return Err(Error::ValidationError(format!(
                "{c} references a table outside the FROM clause"
            )));
        }
        if schema.column(c).is_none() {
            return Err(Error::ValidationError(format!("unknown column {c}")));
        }
        Ok(())
    };
    if let SelectList::Columns(cols) = &q.select {
        if cols.is_empty() {
            return Err(Error::ValidationError("SELECT list is empty".into()));
        }
        for c in cols {
            check_col(c)?;
        }
    }
    if let Some(expr) = &q.where_clause {
        validate_expr(expr, &check_col)?;
    }
    Ok(())
}

fn validate_expr(expr: &BoolExpr, check_col: &impl Fn(&QualifiedColumn) -> Result<()>) -> Result<()> {
    match expr {
        BoolExpr::And(cs) | BoolExpr::Or(cs) => {
            if cs.len() < 2 {
                return Err(Error::ValidationError(format!(
                    "AND/OR node requires at least 2 children, found {}",
                    cs.len()
                )));
            }
            for c in cs {
                validate_expr(c, check_col)?;
            }
            Ok(())
        }
        BoolExpr::Not(c) => validate_expr(c, check_col),
        BoolExpr::Join(j) => {
            check_col(&j.left)?;
            check_col(&j.right)
        }
        BoolExpr::Pred(p) => check_col(&p.col),
    }
}

/// Decomposes a purely conjunctive AST into its `(A, T, J, P)` form.
///
/// `*` expands to every column of the FROM tables, so `A` is always
/// explicit. Duplicate atoms collapse under set semantics.
pub fn to_conjunctive(q: &QueryAst, schema: &Schema) -> Result<ConjunctiveQuery> {
    let attrs: BTreeSet<QualifiedColumn> = match &q.select {
        SelectList::Star => q
            .from
            .iter()
            .flat_map(|t| {
                schema
                    .table(t)
                    .map(|td| {
                        td.columns
                            .iter()
                            .map(|c| QualifiedColumn::new(t.clone(), c.name.clone()))
                            .collect::<Vec<_>>()
                    })
                    .unwrap_or_default()
            })
            .collect(),
        SelectList::Columns(cols) => cols.iter().cloned().collect(),
    };

    let mut joins = BTreeSet::new();
    let mut preds = BTreeSet::new();
    if let Some(expr) = &q.where_clause {
        let mut atoms = Vec::new();
        collect_conjuncts(expr, &mut atoms)?;
        for atom in atoms {
            match atom {
                BoolExpr::Join(j) => {
                    joins.insert(j.clone());
                }
                BoolExpr::Pred(p) => {
                    preds.insert(p.clone());
                }
                _ => unreachable!("collect_conjuncts only yields atoms"),
            }
        }
    }

    Ok(ConjunctiveQuery {
        attrs,
        tables: q.from.clone(),
        joins,
        preds,
    })
}

fn collect_conjuncts<'a>(expr: &'a BoolExpr, out: &mut Vec<&'a BoolExpr>) -> Result<()> {
    match expr {
        BoolExpr::And(cs) => {
            for c in cs {
                collect_conjuncts(c, out)?;
            }
            Ok(())
        }
        BoolExpr::Or(_) => Err(Error::NotConjunctive(
            "WHERE clause contains an OR node".into(),
        )),
        BoolExpr::Not(_) => Err(Error::NotConjunctive(
            "WHERE clause contains a NOT node".into(),
        )),
        atom => {
            out.push(atom);
            Ok(())
        }
    }
}

/// Intersection query of two DNF-list members: same SELECT and FROM,
/// WHERE is the conjunction of both.
pub fn intersect(q1: &ConjunctiveQuery, q2: &ConjunctiveQuery) -> Result<ConjunctiveQuery> {
    if q1.tables != q2.tables {
        return Err(Error::MismatchedFromOrSelect(format!(
            "FROM sets differ: {:?} vs {:?}",
            q1.tables, q2.tables
        )));
    }
    if q1.attrs != q2.attrs {
        return Err(Error::MismatchedFromOrSelect(
            "SELECT attribute sets differ".into(),
        ));
    }
    Ok(ConjunctiveQuery {
        attrs: q1.attrs.clone(),
        tables: q1.tables.clone(),
        joins: q1.joins.union(&q2.joins).cloned().collect(),
        preds: q1.preds.union(&q2.preds).cloned().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::test_fixtures::two_table_schema;

    fn col(t: &str, c: &str) -> QualifiedColumn {
        QualifiedColumn::new(t, c)
    }

    #[test]
    fn join_atom_canonicalizes_equality_order() {
        let a = JoinAtom::new(col("S", "b"), CmpOp::Eq, col("R", "b"));
        let b = JoinAtom::new(col("R", "b"), CmpOp::Eq, col("S", "b"));
        assert_eq!(a, b);
        assert_eq!(a.left, col("R", "b"));
    }

    #[test]
    fn join_atom_flips_gt_to_lt() {
        let a = JoinAtom::new(col("R", "a"), CmpOp::Gt, col("S", "c"));
        assert_eq!(a.op, CmpOp::Lt);
        assert_eq!(a.left, col("S", "c"));
        assert_eq!(a.right, col("R", "a"));
    }

    #[test]
    fn to_conjunctive_direct_mapping() {
        let schema = two_table_schema();
        let q = QueryAst::new(
            false,
            SelectList::Columns(vec![col("R", "a")]),
            ["R".to_string(), "S".to_string()],
            Some(BoolExpr::And(vec![
                BoolExpr::Join(JoinAtom::new(col("R", "b"), CmpOp::Eq, col("S", "b"))),
                BoolExpr::Pred(PredAtom::new(col("R", "a"), CmpOp::Gt, 5)),
            ])),
        );
        let cq = to_conjunctive(&q, &schema).unwrap();
        assert_eq!(cq.attrs.len(), 1);
        assert!(cq.attrs.contains(&col("R", "a")));
        assert_eq!(cq.tables.len(), 2);
        assert_eq!(cq.joins.len(), 1);
        assert_eq!(cq.preds.len(), 1);
        assert!(cq
            .preds
            .contains(&PredAtom::new(col("R", "a"), CmpOp::Gt, 5)));
    }

    #[test]
    fn to_conjunctive_rejects_or() {
        let schema = two_table_schema();
        let q = QueryAst::new(
            false,
            SelectList::Columns(vec![col("R", "a")]),
            ["R".to_string()],
            Some(BoolExpr::Or(vec![
                BoolExpr::Pred(PredAtom::new(col("R", "a"), CmpOp::Eq, 1)),
                BoolExpr::Pred(PredAtom::new(col("R", "a"), CmpOp::Eq, 2)),
            ])),
        );
        assert!(matches!(
            to_conjunctive(&q, &schema),
            Err(Error::NotConjunctive(_))
        ));
    }

    #[test]
    fn to_conjunctive_dedups_atoms() {
        let schema = two_table_schema();
        let p = BoolExpr::Pred(PredAtom::new(col("R", "a"), CmpOp::Gt, 5));
        let q = QueryAst::new(
            false,
            SelectList::Columns(vec![col("R", "a")]),
            ["R".to_string()],
            Some(BoolExpr::And(vec![p.clone(), p])),
        );
        let cq = to_conjunctive(&q, &schema).unwrap();
        assert_eq!(cq.preds.len(), 1);
    }

    #[test]
    fn star_expands_to_all_columns() {
        let schema = two_table_schema();
        let q = QueryAst::new(
            false,
            SelectList::Star,
            ["R".to_string(), "S".to_string()],
            None,
        );
        let cq = to_conjunctive(&q, &schema).unwrap();
        // R(a,b) and S(b,c)
        assert_eq!(cq.attrs.len(), 4);
    }

    #[test]
    fn validate_reports_unknown_column() {
        let schema = two_table_schema();
        let q = QueryAst::new(
            false,
            SelectList::Columns(vec![col("R", "z")]),
            ["R".to_string()],
            None,
        );
        let err = validate(&q, &schema).unwrap_err();
        assert!(err.to_string().contains("R.z"), "{err}");
    }

    #[test]
    fn validate_rejects_single_child_or() {
        let schema = two_table_schema();
        let q = QueryAst::new(
            false,
            SelectList::Columns(vec![col("R", "a")]),
            ["R".to_string()],
            Some(BoolExpr::Or(vec![BoolExpr::Pred(PredAtom::new(
                col("R", "a"),
                CmpOp::Eq,
                1,
            ))])),
        );
        assert!(validate(&q, &schema).is_err());
    }

    #[test]
    fn validate_accepts_well_formed_query() {
        let schema = two_table_schema();
        let q = QueryAst::new(
            false,
            SelectList::Columns(vec![col("R", "a")]),
            ["R".to_string(), "S".to_string()],
            Some(BoolExpr::Join(JoinAtom::new(
                col("R", "b"),
                CmpOp::Eq,
                col("S", "b"),
            ))),
        );
        assert!(validate(&q, &schema).is_ok());
    }

    #[test]
    fn intersect_unions_atom_sets() {
        let schema = two_table_schema();
        let base = |pred: PredAtom| {
            let q = QueryAst::new(
                false,
                SelectList::Columns(vec![col("R", "a")]),
                ["R".to_string()],
                Some(BoolExpr::Pred(pred)),
            );
            to_conjunctive(&q, &schema).unwrap()
        };
        let q1 = base(PredAtom::new(col("R", "a"), CmpOp::Gt, 5));
        let q2 = base(PredAtom::new(col("R", "a"), CmpOp::Lt, 9));
        let both = intersect(&q1, &q2).unwrap();
        assert_eq!(both.preds.len(), 2);

        // idempotence
        assert_eq!(intersect(&q1, &q1).unwrap(), q1);
        // commutativity
        assert_eq!(intersect(&q1, &q2).unwrap(), intersect(&q2, &q1).unwrap());
    }

    #[test]
    fn intersect_rejects_mismatched_sets() {
        let schema = two_table_schema();
        let q1 = to_conjunctive(
            &QueryAst::new(
                false,
                SelectList::Columns(vec![col("R", "a")]),
                ["R".to_string()],
                None,
            ),
            &schema,
        )
        .unwrap();
        let q2 = to_conjunctive(
            &QueryAst::new(
                false,
                SelectList::Columns(vec![col("S", "c")]),
                ["S".to_string()],
                None,
            ),
            &schema,
        )
        .unwrap();
        assert!(matches!(
            intersect(&q1, &q2),
            Err(Error::MismatchedFromOrSelect(_))
        ));
    }
}
