//! Model parameters, the three-stage forward pass, and disk serialization.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::UniquenessModel;
use crate::punq::{featurize, FeatLayout, LayoutVariant, SparseVec};
use crate::query::ConjunctiveQuery;
use crate::store::ColumnRanges;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// The six learned parameter blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PunqParams {
    /// L x H
    pub u_mid: Matrix,
    /// H
    pub b_mid: Vec<f64>,
    /// H x H/2
    pub u_out1: Matrix,
    /// H/2
    pub b_out1: Vec<f64>,
    /// H/2
    pub u_out2: Vec<f64>,
    pub b_out2: f64,
}

impl PunqParams {
    pub fn zeros(input_len: usize, hidden: usize) -> PunqParams {
        PunqParams {
            u_mid: Matrix::zeros(input_len, hidden),
            b_mid: vec![0.0; hidden],
            u_out1: Matrix::zeros(hidden, hidden / 2),
            b_out1: vec![0.0; hidden / 2],
            u_out2: vec![0.0; hidden / 2],
            b_out2: 0.0,
        }
    }
}

/// Training provenance. `epochs_trained == 0` marks an untrained model;
/// `best_val_qerror` stays 0 in that case (JSON cannot carry infinities).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs_trained: usize,
    pub best_epoch: usize,
    pub best_val_qerror: f64,
    pub seed: u64,
}

/// A trained (or freshly initialized) uniqueness-rate model. Carries its
/// featurization layout and the column-range snapshot, so a loaded model
/// predicts without touching the database again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PunqModel {
    pub layout: FeatLayout,
    pub ranges: ColumnRanges,
    pub hidden: usize,
    pub params: PunqParams,
    pub meta: TrainMeta,
}

/// Intermediate activations of one forward pass, kept for backprop.
pub(crate) struct Forward {
    /// ReLU outputs of the mid layer, one per feature vector.
    pub h: Vec<Vec<f64>>,
    /// Mean of `h`.
    pub qvec: Vec<f64>,
    /// ReLU output of the first head layer.
    pub r: Vec<f64>,
    pub yhat: f64,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// The three stages: per-vector ReLU transform, mean pooling, two-layer
/// head with sigmoid output.
pub(crate) fn forward_vectors(params: &PunqParams, vectors: &[SparseVec]) -> Forward {
    let hidden = params.b_mid.len();
    assert!(!vectors.is_empty(), "feature-vector set must be non-empty");

    let mut h = Vec::with_capacity(vectors.len());
    let mut qvec = vec![0.0f64; hidden];
    for v in vectors {
        let mut pre = params.b_mid.clone();
        for &(idx, x) in v {
            let row = params.u_mid.row(idx);
            for (p, w) in pre.iter_mut().zip(row) {
                *p += x * w;
            }
        }
        for p in pre.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        for (q, hv) in qvec.iter_mut().zip(&pre) {
            *q += hv;
        }
        h.push(pre);
    }
    let inv = 1.0 / vectors.len() as f64;
    for q in qvec.iter_mut() {
        *q *= inv;
    }

    let mut pre1 = params.b_out1.clone();
    for (i, &qi) in qvec.iter().enumerate() {
        if qi == 0.0 {
            continue;
        }
        let row = params.u_out1.row(i);
        for (p, w) in pre1.iter_mut().zip(row) {
            *p += qi * w;
        }
    }
    let mut r = pre1;
    for x in r.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }

    let mut z = params.b_out2;
    for (rk, wk) in r.iter().zip(&params.u_out2) {
        z += rk * wk;
    }
    let yhat = sigmoid(z);

    Forward { h, qvec, r, yhat }
}

impl PunqModel {
    /// Fresh model with zeroed weights for a schema layout.
    pub fn zeroed(layout: FeatLayout, ranges: ColumnRanges, hidden: usize) -> Result<PunqModel> {
        if hidden == 0 || hidden % 2 != 0 {
            return Err(Error::DimMismatch(format!(
                "hidden width must be even and positive, got {hidden}"
            )));
        }
        let params = PunqParams::zeros(layout.vector_len(), hidden);
        Ok(PunqModel {
            layout,
            ranges,
            hidden,
            params,
            meta: TrainMeta::default(),
        })
    }

    /// Predicted uniqueness rate, strictly inside (0,1).
    pub fn predict(&self, q: &ConjunctiveQuery) -> Result<f64> {
        let vectors = featurize(q, &self.layout, &self.ranges)?;
        Ok(forward_vectors(&self.params, &vectors).yhat)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        let text = serde_json::to_string(&file)
            .map_err(|e| Error::ModelFormat(format!("serialize: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<PunqModel> {
        let text = std::fs::read_to_string(path)?;
        let probe: VersionProbe = serde_json::from_str(&text)
            .map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))?;
        if probe.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: probe.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_str(&text)
            .map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))?;
        file.model.check_dims()?;
        Ok(file.model)
    }

    /// Rejects models whose weight blocks disagree with the layout.
    pub fn check_dims(&self) -> Result<()> {
        let l = self.layout.vector_len();
        let h = self.hidden;
        if h == 0 || h % 2 != 0 {
            return Err(Error::DimMismatch(format!("hidden width {h} is not even")));
        }
        let half = h / 2;
        let checks = [
            ("u_mid rows", self.params.u_mid.rows, l),
            ("u_mid cols", self.params.u_mid.cols, h),
            ("u_mid len", self.params.u_mid.data.len(), l * h),
            ("b_mid len", self.params.b_mid.len(), h),
            ("u_out1 rows", self.params.u_out1.rows, h),
            ("u_out1 cols", self.params.u_out1.cols, half),
            ("u_out1 len", self.params.u_out1.data.len(), h * half),
            ("b_out1 len", self.params.b_out1.len(), half),
            ("u_out2 len", self.params.u_out2.len(), half),
        ];
        for (what, got, want) in checks {
            if got != want {
                return Err(Error::DimMismatch(format!("{what}: got {got}, want {want}")));
            }
        }
        if !self
            .params
            .u_mid
            .data
            .iter()
            .chain(&self.params.u_out1.data)
            .chain(&self.params.b_mid)
            .chain(&self.params.b_out1)
            .chain(&self.params.u_out2)
            .chain(std::iter::once(&self.params.b_out2))
            .all(|w| w.is_finite())
        {
            return Err(Error::DimMismatch("non-finite weight in model".into()));
        }
        Ok(())
    }
}

impl UniquenessModel for PunqModel {
    fn name(&self) -> &str {
        "punq"
    }

    fn uniqueness(&self, q: &ConjunctiveQuery) -> Result<f64> {
        self.predict(q)
    }

    fn supports_inequality_join(&self) -> bool {
        self.layout.variant == LayoutVariant::Revised
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    #[serde(flatten)]
    model: PunqModel,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}
