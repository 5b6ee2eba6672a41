//! q-error loss, analytic gradients, Adam, and the training loop.

#![allow(clippy::needless_range_loop)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::punq::model::{forward_vectors, PunqModel, PunqParams, TrainMeta};
use crate::punq::{featurize, FeatLayout, LayoutVariant, SparseVec};
use crate::query::ConjunctiveQuery;
use crate::store::{ColumnRanges, Schema};

/// Predictions are clamped to at least this before entering the q-error.
pub const PREDICTION_EPSILON: f64 = 1e-4;

/// Ratio between an estimate and the actual value, whichever way round is
/// larger. Always at least 1.
pub fn q_error(y: f64, yhat: f64) -> Result<f64> {
    if y <= 0.0 || yhat <= 0.0 || !y.is_finite() || !yhat.is_finite() {
        return Err(Error::DomainError(format!(
            "q-error requires strictly positive finite inputs, got y={y}, yhat={yhat}"
        )));
    }
    Ok(if yhat > y { yhat / y } else { y / yhat })
}

/// One training example: a conjunctive query and its true uniqueness rate.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub query: ConjunctiveQuery,
    pub uniqueness: f64,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub variant: LayoutVariant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            hidden: 512,
            learning_rate: 0.001,
            max_epochs: 200,
            patience: 20,
            seed: 0,
            variant: LayoutVariant::Standard,
        }
    }
}

/// Gradients share the parameter-block shapes.
pub type Gradients = PunqParams;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mean_qerror: f64,
    pub val_mean_qerror: f64,
    pub val_median_qerror: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Mean q-error of the batch under the prediction clamp.
pub fn batch_loss(model: &PunqModel, batch: &[LabeledSample]) -> Result<f64> {
    let feats = featurize_all(batch, &model.layout, &model.ranges)?;
    let labels: Vec<f64> = batch.iter().map(|s| s.uniqueness).collect();
    Ok(loss_only(&model.params, &feats, &labels))
}

/// Analytic gradients of the batch loss with respect to all six parameter
/// blocks.
pub fn gradients(model: &PunqModel, batch: &[LabeledSample]) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let feats = featurize_all(batch, &model.layout, &model.ranges)?;
    let labels: Vec<f64> = batch.iter().map(|s| s.uniqueness).collect();
    let (_, grads) = loss_and_gradients(&model.params, &feats, &labels);
    Ok(grads)
}

fn featurize_all(
    batch: &[LabeledSample],
    layout: &FeatLayout,
    ranges: &ColumnRanges,
) -> Result<Vec<Vec<SparseVec>>> {
    batch
        .iter()
        .map(|s| featurize(&s.query, layout, ranges))
        .collect()
}

/// Per-sample q-error and its derivative with respect to the raw
/// prediction. The clamp zeroes the derivative below the epsilon floor;
/// the exact minimum (`clamped == y`) takes subgradient 0.
fn qerr_and_dqerr_dyhat(y: f64, yhat: f64) -> (f64, f64) {
    let c = yhat.max(PREDICTION_EPSILON);
    let (qerr, dldc) = if c > y {
        (c / y, 1.0 / y)
    } else if c < y {
        (y / c, -y / (c * c))
    } else {
        (1.0, 0.0)
    };
    let dcdy = if yhat > PREDICTION_EPSILON { 1.0 } else { 0.0 };
    (qerr, dldc * dcdy)
}

fn loss_only(params: &PunqParams, feats: &[Vec<SparseVec>], labels: &[f64]) -> f64 {
    let mut total = 0.0;
    for (vectors, &y) in feats.iter().zip(labels) {
        let fwd = forward_vectors(params, vectors);
        total += qerr_and_dqerr_dyhat(y, fwd.yhat).0;
    }
    total / feats.len() as f64
}

fn loss_and_gradients(
    params: &PunqParams,
    feats: &[Vec<SparseVec>],
    labels: &[f64],
) -> (f64, Gradients) {
    let hidden = params.b_mid.len();
    let half = params.b_out1.len();
    let input_len = params.u_mid.rows;
    let mut grads = PunqParams::zeros(input_len, hidden);
    let scale = 1.0 / feats.len() as f64;
    let mut total = 0.0;

    let mut dpre1 = vec![0.0f64; half];
    let mut dq = vec![0.0f64; hidden];

    for (vectors, &y) in feats.iter().zip(labels) {
        let fwd = forward_vectors(params, vectors);
        let (qerr, dldy) = qerr_and_dqerr_dyhat(y, fwd.yhat);
        total += qerr;
        // batch-mean folded in here
        let dz = dldy * fwd.yhat * (1.0 - fwd.yhat) * scale;
        if dz == 0.0 {
            continue;
        }

        grads.b_out2 += dz;
        for k in 0..half {
            grads.u_out2[k] += dz * fwd.r[k];
            dpre1[k] = if fwd.r[k] > 0.0 {
                dz * params.u_out2[k]
            } else {
                0.0
            };
            grads.b_out1[k] += dpre1[k];
        }

        for i in 0..hidden {
            let qi = fwd.qvec[i];
            if qi != 0.0 {
                let row = grads.u_out1.row_mut(i);
                for (g, d) in row.iter_mut().zip(&dpre1) {
                    *g += qi * d;
                }
            }
            let mut acc = 0.0;
            let row = params.u_out1.row(i);
            for (w, d) in row.iter().zip(&dpre1) {
                acc += w * d;
            }
            dq[i] = acc;
        }

        let inv = 1.0 / vectors.len() as f64;
        for (v, h) in vectors.iter().zip(&fwd.h) {
            // dsum masked by this vector's active units
            for k in 0..hidden {
                if h[k] > 0.0 {
                    let d = dq[k] * inv;
                    grads.b_mid[k] += d;
                }
            }
            for &(idx, x) in v {
                if x == 0.0 {
                    continue;
                }
                let row = grads.u_mid.row_mut(idx);
                for k in 0..hidden {
                    if h[k] > 0.0 {
                        row[k] += x * dq[k] * inv;
                    }
                }
            }
        }
    }

    (total * scale, grads)
}

struct AdamState {
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: PunqParams,
    v: PunqParams,
}

impl AdamState {
    fn new(input_len: usize, hidden: usize, lr: f64) -> AdamState {
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: PunqParams::zeros(input_len, hidden),
            v: PunqParams::zeros(input_len, hidden),
        }
    }

    fn update(&mut self, params: &mut PunqParams, grads: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (lr, b1, b2, eps) = (self.lr, self.beta1, self.beta2, self.eps);

        let apply = |theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..theta.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                theta[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        };
        apply(
            &mut params.u_mid.data,
            &grads.u_mid.data,
            &mut self.m.u_mid.data,
            &mut self.v.u_mid.data,
        );
        apply(
            &mut params.b_mid,
            &grads.b_mid,
            &mut self.m.b_mid,
            &mut self.v.b_mid,
        );
        apply(
            &mut params.u_out1.data,
            &grads.u_out1.data,
            &mut self.m.u_out1.data,
            &mut self.v.u_out1.data,
        );
        apply(
            &mut params.b_out1,
            &grads.b_out1,
            &mut self.m.b_out1,
            &mut self.v.b_out1,
        );
        apply(
            &mut params.u_out2,
            &grads.u_out2,
            &mut self.m.u_out2,
            &mut self.v.u_out2,
        );
        apply(
            std::slice::from_mut(&mut params.b_out2),
            std::slice::from_ref(&grads.b_out2),
            std::slice::from_mut(&mut self.m.b_out2),
            std::slice::from_mut(&mut self.v.b_out2),
        );
    }
}

/// Seeded uniform init in ±sqrt(6 / (fan_in + fan_out)) per weight matrix;
/// biases start at zero. Blocks are filled in a fixed order so training is
/// reproducible.
fn init_params(input_len: usize, hidden: usize, rng: &mut ChaCha8Rng) -> PunqParams {
    let mut params = PunqParams::zeros(input_len, hidden);
    let fill = |data: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng| {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in data.iter_mut() {
            *w = (rng.gen::<f64>() * 2.0 - 1.0) * bound;
        }
    };
    fill(&mut params.u_mid.data, input_len, hidden, rng);
    fill(&mut params.u_out1.data, hidden, hidden / 2, rng);
    fill(&mut params.u_out2, hidden / 2, 1, rng);
    params
}

/// Trains a uniqueness model: 80/20 train/validation split, mean q-error
/// loss with Adam updates, early stopping on the validation mean with
/// best-weights restore.
pub fn train(
    schema: &Schema,
    ranges: &ColumnRanges,
    data: &[LabeledSample],
    cfg: &TrainConfig,
) -> Result<(PunqModel, TrainingLog)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.hidden == 0 || cfg.hidden % 2 != 0 {
        return Err(Error::DimMismatch(format!(
            "hidden width must be even and positive, got {}",
            cfg.hidden
        )));
    }
    for s in data {
        if !(s.uniqueness > 0.0 && s.uniqueness <= 1.0) {
            return Err(Error::DomainError(format!(
                "training label {} outside (0,1]",
                s.uniqueness
            )));
        }
    }

    let layout = FeatLayout::new(schema, cfg.variant);
    let feats = featurize_all(data, &layout, ranges)?;
    let labels: Vec<f64> = data.iter().map(|s| s.uniqueness).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init_params(layout.vector_len(), cfg.hidden, &mut rng);
    let mut adam = AdamState::new(layout.vector_len(), cfg.hidden, cfg.learning_rate);

    // 80/20 split over a seeded shuffle; degenerate datasets validate on
    // everything.
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let val_len = data.len() / 5;
    let (val_idx, train_idx): (Vec<usize>, Vec<usize>) = if val_len == 0 {
        (order.clone(), order.clone())
    } else {
        (order[..val_len].to_vec(), order[val_len..].to_vec())
    };

    let gather_feats = |idx: &[usize]| -> Vec<Vec<SparseVec>> {
        idx.iter().map(|&i| feats[i].clone()).collect()
    };
    let val_feats = gather_feats(&val_idx);
    let val_labels: Vec<f64> = val_idx.iter().map(|&i| labels[i]).collect();

    let mut log = TrainingLog::default();
    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut shuffled = train_idx.clone();

    for epoch in 1..=cfg.max_epochs {
        shuffled.shuffle(&mut rng);
        let mut train_loss_sum = 0.0;
        let mut train_batches = 0usize;
        for (batch_no, chunk) in shuffled.chunks(cfg.batch_size.max(1)).enumerate() {
            let batch_feats: Vec<Vec<SparseVec>> =
                chunk.iter().map(|&i| feats[i].clone()).collect();
            let batch_labels: Vec<f64> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = loss_and_gradients(&params, &batch_feats, &batch_labels);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                    message: format!("batch loss = {loss}"),
                });
            }
            adam.update(&mut params, &grads);
            train_loss_sum += loss;
            train_batches += 1;
        }

        let mut val_qerrs: Vec<f64> = val_feats
            .iter()
            .zip(&val_labels)
            .map(|(vectors, &y)| {
                let fwd = forward_vectors(&params, vectors);
                qerr_and_dqerr_dyhat(y, fwd.yhat).0
            })
            .collect();
        let val_mean = val_qerrs.iter().sum::<f64>() / val_qerrs.len() as f64;
        val_qerrs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let val_median = val_qerrs[(val_qerrs.len() - 1) / 2];

        log.epochs.push(EpochLog {
            epoch,
            train_mean_qerror: train_loss_sum / train_batches.max(1) as f64,
            val_mean_qerror: val_mean,
            val_median_qerror: val_median,
        });

        if val_mean < best_val {
            best_val = val_mean;
            best_epoch = epoch;
            best_params = params.clone();
        } else if epoch - best_epoch >= cfg.patience {
            break;
        }
    }

    log.best_epoch = best_epoch;
    let model = PunqModel {
        layout,
        ranges: ranges.clone(),
        hidden: cfg.hidden,
        params: best_params,
        meta: TrainMeta {
            epochs_trained: log.epochs.len(),
            best_epoch,
            best_val_qerror: best_val,
            seed: cfg.seed,
        },
    };
    Ok((model, log))
}
