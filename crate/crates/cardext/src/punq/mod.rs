//! The uniqueness-rate model: featurizer, forward pass, trainer and
//! serialization.
//!
//! A conjunctive query is turned into a set of equal-length feature
//! vectors, one per attribute, table, join and predicate. A one-layer
//! network maps each vector to a hidden representation; the mean of those
//! is the query vector, from which a two-layer head predicts the fraction
//! of distinct rows in the query result.

mod model;
mod train;

pub use model::{PunqModel, PunqParams, TrainMeta, MODEL_FORMAT_VERSION};
pub use train::{
    batch_loss, gradients, q_error, train, EpochLog, Gradients, LabeledSample, TrainConfig,
    TrainingLog, PREDICTION_EPSILON,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::{CmpOp, ConjunctiveQuery, QualifiedColumn};
use crate::store::{ColumnRanges, Schema};

/// Which vector segmentation to use. The revised variant adds a join
/// operator segment, so inequality joins become representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutVariant {
    Standard,
    Revised,
}

/// Featurization metadata: the segment layout for one database schema.
///
/// Segment order is A, T, J1, (JO,) J2, C, O, V. All segments except V
/// hold one-hot entries; V holds the predicate constant normalized by the
/// column's min/max.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatLayout {
    pub variant: LayoutVariant,
    /// Sorted table names; position = one-hot index.
    tables: Vec<String>,
    /// Sorted qualified columns; position = one-hot index.
    columns: Vec<QualifiedColumn>,
}

impl FeatLayout {
    pub fn new(schema: &Schema, variant: LayoutVariant) -> FeatLayout {
        let mut tables: Vec<String> = schema.tables.iter().map(|t| t.name.clone()).collect();
        tables.sort();
        FeatLayout {
            variant,
            tables,
            columns: schema.all_columns(),
        }
    }

    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn operator_count(&self) -> usize {
        CmpOp::COUNT
    }

    /// Total vector length.
    pub fn vector_len(&self) -> usize {
        let (n_t, n_c, n_o) = (self.table_count(), self.column_count(), self.operator_count());
        match self.variant {
            LayoutVariant::Standard => n_t + 4 * n_c + n_o + 1,
            LayoutVariant::Revised => n_t + 4 * n_c + 2 * n_o + 1,
        }
    }

    fn table_index(&self, name: &str) -> Result<usize> {
        self.tables
            .binary_search_by(|t| t.as_str().cmp(name))
            .map_err(|_| Error::FeaturizationError(format!("table {name} not in layout")))
    }

    fn column_index(&self, col: &QualifiedColumn) -> Result<usize> {
        self.columns
            .binary_search(col)
            .map_err(|_| Error::FeaturizationError(format!("column {col} not in layout")))
    }

    fn attr_offset(&self) -> usize {
        0
    }

    fn table_offset(&self) -> usize {
        self.column_count()
    }

    fn join1_offset(&self) -> usize {
        self.table_offset() + self.table_count()
    }

    fn join_op_offset(&self) -> usize {
        debug_assert_eq!(self.variant, LayoutVariant::Revised);
        self.join1_offset() + self.column_count()
    }

    fn join2_offset(&self) -> usize {
        match self.variant {
            LayoutVariant::Standard => self.join1_offset() + self.column_count(),
            LayoutVariant::Revised => self.join_op_offset() + self.operator_count(),
        }
    }

    fn pred_col_offset(&self) -> usize {
        self.join2_offset() + self.column_count()
    }

    fn pred_op_offset(&self) -> usize {
        self.pred_col_offset() + self.column_count()
    }

    fn value_offset(&self) -> usize {
        self.pred_op_offset() + self.operator_count()
    }
}

/// Sparse feature vector: (index, value) entries with strictly increasing
/// indices.
pub type SparseVec = Vec<(usize, f64)>;

/// Builds the feature-vector set `V` for a query: one vector per element
/// of A, T, J and P, each of length [`FeatLayout::vector_len`], zero
/// everywhere except the segments relevant to its element. Iteration
/// follows the sorted atom sets, so the output order is canonical.
pub fn featurize(
    q: &ConjunctiveQuery,
    layout: &FeatLayout,
    ranges: &ColumnRanges,
) -> Result<Vec<SparseVec>> {
    let mut out: Vec<SparseVec> = Vec::with_capacity(
        q.attrs.len() + q.tables.len() + q.joins.len() + q.preds.len(),
    );
    for a in &q.attrs {
        out.push(vec![(layout.attr_offset() + layout.column_index(a)?, 1.0)]);
    }
    for t in &q.tables {
        out.push(vec![(layout.table_offset() + layout.table_index(t)?, 1.0)]);
    }
    for j in &q.joins {
        let left = layout.join1_offset() + layout.column_index(&j.left)?;
        let right = layout.join2_offset() + layout.column_index(&j.right)?;
        match layout.variant {
            LayoutVariant::Standard => {
                if j.op != CmpOp::Eq {
                    return Err(Error::FeaturizationError(format!(
                        "join {j} requires the revised layout"
                    )));
                }
                out.push(vec![(left, 1.0), (right, 1.0)]);
            }
            LayoutVariant::Revised => {
                let op = layout.join_op_offset() + j.op.index();
                out.push(vec![(left, 1.0), (op, 1.0), (right, 1.0)]);
            }
        }
    }
    for p in &q.preds {
        let col = layout.pred_col_offset() + layout.column_index(&p.col)?;
        let op = layout.pred_op_offset() + p.op.index();
        let value = ranges.normalize(&p.col, p.value).ok_or_else(|| {
            Error::FeaturizationError(format!("no value range for column {}", p.col))
        })?;
        out.push(vec![(col, 1.0), (op, 1.0), (layout.value_offset(), value)]);
    }
    debug_assert!(out
        .iter()
        .all(|v| v.windows(2).all(|w| w[0].0 < w[1].0)));
    Ok(out)
}
