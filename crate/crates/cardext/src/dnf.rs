//! Disjunctive-normal-form rewriting.
//!
//! Pushes NOT inward and distributes AND over OR, producing the ordered
//! list of conjunctive queries whose disjunction is equivalent to the
//! input query's WHERE clause. No minimization is performed beyond atom
//! dedup within a conjunct; overlap between members is the recursive
//! estimator's problem, not ours.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::query::{
    to_conjunctive, BoolExpr, CmpOp, ConjunctiveQuery, JoinAtom, PredAtom, QueryAst,
};
use crate::store::Schema;

/// Default cap on the number of conjuncts a rewrite may produce.
pub const DEFAULT_DNF_CAP: usize = 64;

/// Ordered list of conjunctive queries sharing SELECT and FROM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnfList {
    pub queries: Vec<ConjunctiveQuery>,
}

impl DnfList {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Complement of a column predicate within the {<, =, >} operator set.
///
/// The result is the list of atoms whose disjunction is equivalent to
/// `NOT p` on any integer column.
pub fn negate_atom(p: &PredAtom) -> Vec<PredAtom> {
    let mk = |op: CmpOp| PredAtom::new(p.col.clone(), op, p.value);
    match p.op {
        CmpOp::Eq => vec![mk(CmpOp::Lt), mk(CmpOp::Gt)],
        CmpOp::Lt => vec![mk(CmpOp::Eq), mk(CmpOp::Gt)],
        CmpOp::Gt => vec![mk(CmpOp::Lt), mk(CmpOp::Eq)],
    }
}

/// One conjunct during rewriting: a set of atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Conjunct {
    joins: BTreeSet<JoinAtom>,
    preds: BTreeSet<PredAtom>,
}

impl Conjunct {
    fn empty() -> Self {
        Conjunct {
            joins: BTreeSet::new(),
            preds: BTreeSet::new(),
        }
    }

    fn merged(&self, other: &Conjunct) -> Conjunct {
        Conjunct {
            joins: self.joins.union(&other.joins).cloned().collect(),
            preds: self.preds.union(&other.preds).cloned().collect(),
        }
    }
}

/// Rewrites the WHERE tree into a list of conjuncts. NOT is first pushed
/// down to atoms (splitting column predicates via [`negate_atom`]), then
/// AND distributes over OR bottom-up.
fn to_conjuncts(expr: &BoolExpr, negated: bool, cap: usize) -> Result<Vec<Conjunct>> {
    match expr {
        BoolExpr::Not(child) => to_conjuncts(child, !negated, cap),
        BoolExpr::And(children) if !negated => product(children, false, cap),
        BoolExpr::Or(children) if negated => product(children, true, cap),
        BoolExpr::And(children) | BoolExpr::Or(children) => {
            // disjunction: concatenate member lists in child order
            let mut out = Vec::new();
            for c in children {
                out.extend(to_conjuncts(c, negated, cap)?);
                if out.len() > cap {
                    return Err(Error::DnfBlowup { cap });
                }
            }
            Ok(out)
        }
        BoolExpr::Join(j) => {
            if negated {
                return Err(Error::UnsupportedNegation(format!(
                    "NOT over join atom {j}"
                )));
            }
            let mut c = Conjunct::empty();
            c.joins.insert(j.clone());
            Ok(vec![c])
        }
        BoolExpr::Pred(p) => {
            if negated {
                Ok(negate_atom(p)
                    .into_iter()
                    .map(|atom| {
                        let mut c = Conjunct::empty();
                        c.preds.insert(atom);
                        c
                    })
                    .collect())
            } else {
                let mut c = Conjunct::empty();
                c.preds.insert(p.clone());
                Ok(vec![c])
            }
        }
    }
}

/// Cartesian product of the children's conjunct lists, merging atom sets.
fn product(children: &[BoolExpr], negated: bool, cap: usize) -> Result<Vec<Conjunct>> {
    let mut acc = vec![Conjunct::empty()];
    for child in children {
        let rhs = to_conjuncts(child, negated, cap)?;
        let mut next = Vec::with_capacity(acc.len() * rhs.len());
        for a in &acc {
            for b in &rhs {
                next.push(a.merged(b));
                if next.len() > cap {
                    return Err(Error::DnfBlowup { cap });
                }
            }
        }
        acc = next;
    }
    Ok(acc)
}

/// Converts a general query into its DNF-list with the default cap.
pub fn get_dnf_list(q: &QueryAst, schema: &Schema) -> Result<DnfList> {
    get_dnf_list_capped(q, schema, DEFAULT_DNF_CAP)
}

/// Converts a general query into its DNF-list.
///
/// Every member shares the query's SELECT and FROM clauses. Exceeding
/// `cap` is an error, never silent truncation. NOT over a subtree that
/// contains a join atom is rejected.
pub fn get_dnf_list_capped(q: &QueryAst, schema: &Schema, cap: usize) -> Result<DnfList> {
    let base = QueryAst {
        where_clause: None,
        ..q.clone()
    };
    let shell = to_conjunctive(&base, schema)?;

    let conjuncts = match &q.where_clause {
        None => vec![Conjunct::empty()],
        Some(expr) => to_conjuncts(expr, false, cap)?,
    };

    let queries = conjuncts
        .into_iter()
        .map(|c| ConjunctiveQuery {
            attrs: shell.attrs.clone(),
            tables: shell.tables.clone(),
            joins: c.joins,
            preds: c.preds,
        })
        .collect();
    Ok(DnfList { queries })
}
