//! Extensions for limited SQL cardinality estimators.
//!
//! A "limited" estimator handles only conjunctive queries and counts
//! duplicates. This crate extends any such estimator in two directions:
//!
//! - set-theoretic (DISTINCT) estimates, by multiplying the bag estimate
//!   with a learned uniqueness rate (`punq`, `estimators`), and
//! - general AND/OR/NOT queries, by inclusion-exclusion over the query's
//!   DNF-list with contradiction pruning (`dnf`, `implyfalse`, `gencrd`).
//!
//! Everything is verified against an exact in-memory executor (`store`).
//! `datagen` builds synthetic correlated databases and workloads, and
//! `eval` produces q-error percentile reports.

pub mod datagen;
pub mod dnf;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod gencrd;
pub mod implyfalse;
pub mod parser;
pub mod punq;
pub mod query;
pub mod store;

pub use error::{Error, Result};
