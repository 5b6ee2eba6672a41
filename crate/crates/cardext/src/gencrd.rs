//! Recursive inclusion-exclusion estimation over a DNF-list.
//!
//! A general query is first rewritten into its DNF-list `[Q1..Qn]`. The
//! estimate of the list is then `|[Q1]| + |[Q2..Qn]| - |[Q1∩Q2..Q1∩Qn]|`,
//! recursing until single-member lists, where the contradiction check runs
//! and the limited model is called. The recursion makes at most `2^m - 1`
//! estimator calls for a list of size `m`; contradictory base cases are
//! pruned without a call.
//!
//! Internally the recursion shape is frozen into a tree whose leaves are
//! the base-case queries in deterministic order. Sequential and parallel
//! modes differ only in how leaf values are produced; the combining
//! arithmetic is the same tree fold, so both modes return bit-identical
//! results.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::dnf::{get_dnf_list_capped, DnfList, DEFAULT_DNF_CAP};
use crate::error::{Error, Result};
use crate::estimators::Estimator;
use crate::implyfalse::imply_false;
use crate::query::{intersect, ConjunctiveQuery, QueryAst};
use crate::store::Schema;

/// Counters describing one estimation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenCrdStats {
    pub estimator_calls: u64,
    pub pruned_by_implyfalse: u64,
    pub dnf_size: usize,
    pub recursion_depth: usize,
}

#[derive(Debug, Clone)]
pub struct GenCrdOutput {
    pub estimate: f64,
    pub stats: GenCrdStats,
    /// Summed wall time of the estimator calls alone.
    pub subroutine_time: Duration,
}

#[derive(Debug, Clone, Copy)]
pub struct GenCrdOptions {
    pub dnf_cap: usize,
    pub parallel: bool,
}

impl Default for GenCrdOptions {
    fn default() -> Self {
        GenCrdOptions {
            dnf_cap: DEFAULT_DNF_CAP,
            parallel: false,
        }
    }
}

/// Upper bound on estimator calls for a DNF-list of size `m`: `2^m - 1`.
pub fn call_bound(m: usize) -> u64 {
    assert!((1..64).contains(&m), "call bound defined for 1 <= m < 64");
    (1u64 << m) - 1
}

/// Recursion shape: leaves hold pre-pruned base cases or indices into the
/// leaf-value table; combine nodes add the first two children and subtract
/// the third.
enum Node {
    Pruned,
    Leaf(usize),
    Combine(Box<Node>, Box<Node>, Box<Node>),
}

struct TreeBuild {
    leaves: Vec<ConjunctiveQuery>,
    pruned: u64,
    depth: usize,
}

fn build_tree(list: &[ConjunctiveQuery], depth: usize, out: &mut TreeBuild) -> Result<Node> {
    out.depth = out.depth.max(depth);
    if list.len() == 1 {
        let q = &list[0];
        if imply_false(q)? {
            out.pruned += 1;
            Ok(Node::Pruned)
        } else {
            out.leaves.push(q.clone());
            Ok(Node::Leaf(out.leaves.len() - 1))
        }
    } else {
        let first = &list[0];
        let rest = &list[1..];
        let a = build_tree(std::slice::from_ref(first), depth + 1, out)?;
        let b = build_tree(rest, depth + 1, out)?;
        let intersections: Vec<ConjunctiveQuery> = rest
            .iter()
            .map(|q| intersect(first, q))
            .collect::<Result<_>>()?;
        let c = build_tree(&intersections, depth + 1, out)?;
        Ok(Node::Combine(Box::new(a), Box::new(b), Box::new(c)))
    }
}

fn fold(node: &Node, values: &[f64]) -> f64 {
    match node {
        Node::Pruned => 0.0,
        Node::Leaf(i) => values[*i],
        Node::Combine(a, b, c) => fold(a, values) + fold(b, values) - fold(c, values),
    }
}

/// Estimates a general AND/OR/NOT query with a thread-safe estimator.
/// `opts.parallel` fans the base-case estimator calls out across threads;
/// the result is bit-identical to the sequential mode.
pub fn gen_crd(
    q: &QueryAst,
    schema: &Schema,
    est: &(dyn Estimator + Sync),
    opts: GenCrdOptions,
) -> Result<GenCrdOutput> {
    let dnf = get_dnf_list_capped(q, schema, opts.dnf_cap)?;
    if opts.parallel && !est.capabilities().thread_safe {
        return Err(Error::CapabilityError(format!(
            "estimator {} is not declared thread-safe; parallel mode unavailable",
            est.name()
        )));
    }
    gen_crd_list(&dnf, |leaves| {
        if opts.parallel {
            let timed: Vec<Result<(f64, Duration)>> = leaves
                .par_iter()
                .map(|leaf| {
                    let t0 = Instant::now();
                    let v = est.estimate(leaf)?;
                    Ok((v, t0.elapsed()))
                })
                .collect();
            collect_leaf_values(timed)
        } else {
            eval_sequential(est, leaves)
        }
    })
}

/// Sequential-only entry point for estimators that are not `Sync`.
pub fn gen_crd_unsync(
    q: &QueryAst,
    schema: &Schema,
    est: &dyn Estimator,
    dnf_cap: usize,
) -> Result<GenCrdOutput> {
    let dnf = get_dnf_list_capped(q, schema, dnf_cap)?;
    gen_crd_list(&dnf, |leaves| eval_sequential(est, leaves))
}

fn eval_sequential(
    est: &dyn Estimator,
    leaves: &[ConjunctiveQuery],
) -> Result<(Vec<f64>, Duration)> {
    let timed: Vec<Result<(f64, Duration)>> = leaves
        .iter()
        .map(|leaf| {
            let t0 = Instant::now();
            let v = est.estimate(leaf)?;
            Ok((v, t0.elapsed()))
        })
        .collect();
    collect_leaf_values(timed)
}

/// Surfaces the first error in leaf order regardless of evaluation order.
fn collect_leaf_values(timed: Vec<Result<(f64, Duration)>>) -> Result<(Vec<f64>, Duration)> {
    let mut values = Vec::with_capacity(timed.len());
    let mut total = Duration::ZERO;
    for item in timed {
        let (v, dt) = item?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::EstimatorError(format!(
                "estimator returned invalid value {v}"
            )));
        }
        values.push(v);
        total += dt;
    }
    Ok((values, total))
}

/// Runs the recursion over an already-built DNF-list.
pub fn gen_crd_list(
    dnf: &DnfList,
    eval_leaves: impl FnOnce(&[ConjunctiveQuery]) -> Result<(Vec<f64>, Duration)>,
) -> Result<GenCrdOutput> {
    let mut build = TreeBuild {
        leaves: Vec::new(),
        pruned: 0,
        depth: 0,
    };
    let root = build_tree(&dnf.queries, 1, &mut build)?;
    let (values, subroutine_time) = eval_leaves(&build.leaves)?;
    debug_assert_eq!(values.len(), build.leaves.len());

    // raw inclusion-exclusion arithmetic; only the top level is clamped
    let raw = fold(&root, &values);
    Ok(GenCrdOutput {
        estimate: raw.max(0.0),
        stats: GenCrdStats {
            estimator_calls: build.leaves.len() as u64,
            pruned_by_implyfalse: build.pruned,
            dnf_size: dnf.len(),
            recursion_depth: build.depth,
        },
        subroutine_time,
    })
}
