//! Linear readout trained on spike counts.
//!
//! Scores `z = W x + b` are normalised with a softmax. The loss treats each
//! class output as a binary prediction:
//!
//! ```text
//! L = -(1/m) sum_n sum_c [y log p + (1 - y) log(1 - p)] + lambda / (2m) |W|^2
//! ```
//!
//! and is minimised with Adam on shuffled mini-batches. Training keeps the
//! parameters of the epoch with the best validation accuracy.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::SpikeCountMatrix;
use crate::seed::{self, stream};

pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub batch_size: usize,
    pub lr: f64,
    pub lambda_reg: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without a new best validation accuracy.
    pub patience: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Count scaling applied by models built with
    /// [`ReadoutModel::for_schedule`]; the default maps the 125-spike
    /// ceiling of a 250 ms presentation to 1.
    pub input_scale: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            batch_size: 250,
            lr: 0.1,
            lambda_reg: 5e-10,
            max_epochs: 5000,
            patience: None,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            input_scale: 1.0 / 125.0,
        }
    }
}

impl TrainSchedule {
    /// Desk-scale variant with early stopping after 200 flat epochs.
    pub fn with_patience() -> Self {
        TrainSchedule { patience: Some(200), ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and epoch limit must be positive".into()));
        }
        if !positive(self.lr) || !positive(self.input_scale) || !(self.lambda_reg >= 0.0) {
            return Err(Error::Config(format!(
                "bad readout schedule: lr {}, input scale {}, lambda {}",
                self.lr, self.input_scale, self.lambda_reg
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    pub n_features: usize,
    pub n_classes: usize,
    /// Multiplies every count before the linear map.
    pub input_scale: f64,
    /// `n_classes x n_features`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    m_w: DMatrix<f64>,
    v_w: DMatrix<f64>,
    m_b: DVector<f64>,
    v_b: DVector<f64>,
    pub step: u64,
}

impl ReadoutModel {
    /// All weights and biases zero.
    pub fn new(n_features: usize, n_classes: usize) -> Self {
        ReadoutModel {
            n_features,
            n_classes,
            input_scale: 1.0,
            w: DMatrix::zeros(n_classes, n_features),
            b: DVector::zeros(n_classes),
            m_w: DMatrix::zeros(n_classes, n_features),
            v_w: DMatrix::zeros(n_classes, n_features),
            m_b: DVector::zeros(n_classes),
            v_b: DVector::zeros(n_classes),
            step: 0,
        }
    }

    pub fn for_schedule(n_features: usize, n_classes: usize, schedule: &TrainSchedule) -> Self {
        Self::new(n_features, n_classes).with_input_scale(schedule.input_scale)
    }

    pub fn with_input_scale(mut self, scale: f64) -> Self {
        self.input_scale = scale;
        self
    }

    /// Scores for a batch, one row per sample.
    pub fn scores(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * self.w.transpose() * self.input_scale;
        for mut row in z.row_iter_mut() {
            row += self.b.transpose();
        }
        z
    }

    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    pub fn load<R: std::io::Read>(input: R) -> Result<Self> {
        Ok(serde_json::from_reader(input)?)
    }
}

/// Row-wise softmax of a score matrix.
pub fn softmax_rows(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut p = z.clone();
    for mut row in p.row_iter_mut() {
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("non-finite readout score {bad}")));
        }
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let s = row.sum();
        row /= s;
    }
    Ok(p)
}

/// Class scores and normalised predictions for one count vector.
pub fn forward(model: &ReadoutModel, counts: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let x = DMatrix::from_row_slice(1, counts.len(), counts);
    let z = model.scores(&x);
    let p = softmax_rows(&z)?;
    Ok((z.iter().copied().collect(), p.iter().copied().collect()))
}

fn one_hot(labels: &[u8], n_classes: usize) -> DMatrix<f64> {
    DMatrix::from_fn(labels.len(), n_classes, |r, c| if labels[r] as usize == c { 1.0 } else { 0.0 })
}

/// Batch loss including the L2 term.
pub fn loss(model: &ReadoutModel, x: &DMatrix<f64>, labels: &[u8], lambda_reg: f64) -> Result<f64> {
    let p = softmax_rows(&model.scores(x))?;
    let y = one_hot(labels, model.n_classes);
    let m = labels.len() as f64;
    let mut ce = 0.0;
    for (pv, yv) in p.iter().zip(y.iter()) {
        ce -= yv * pv.max(LOG_FLOOR).ln() + (1.0 - yv) * (1.0 - pv).max(LOG_FLOOR).ln();
    }
    Ok(ce / m + lambda_reg / (2.0 * m) * model.w.norm_squared())
}

/// Analytic gradient of [`loss`] with respect to `(W, b)`.
pub fn gradient(
    model: &ReadoutModel,
    x: &DMatrix<f64>,
    labels: &[u8],
    lambda_reg: f64,
) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
    let p = softmax_rows(&model.scores(x))?;
    let y = one_hot(labels, model.n_classes);
    let m = labels.len() as f64;
    let mut dz = DMatrix::zeros(labels.len(), model.n_classes);
    let mut ce = 0.0;
    let mut g = vec![0.0f64; model.n_classes];
    for r in 0..labels.len() {
        // g_c = dl/dp_c; dl/dz_k = p_k (g_k - sum_c g_c p_c).
        let mut gp_sum = 0.0;
        for c in 0..model.n_classes {
            let (pc, yc) = (p[(r, c)], y[(r, c)]);
            ce -= yc * pc.max(LOG_FLOOR).ln() + (1.0 - yc) * (1.0 - pc).max(LOG_FLOOR).ln();
            g[c] = -yc / pc.max(LOG_FLOOR) + (1.0 - yc) / (1.0 - pc).max(LOG_FLOOR);
            gp_sum += g[c] * pc;
        }
        for c in 0..model.n_classes {
            dz[(r, c)] = p[(r, c)] * (g[c] - gp_sum) / m;
        }
    }
    let gw = dz.transpose() * x * model.input_scale + &model.w * (lambda_reg / m);
    let gb = dz.row_sum().transpose();
    let loss = ce / m + lambda_reg / (2.0 * m) * model.w.norm_squared();
    Ok((gw, gb, loss))
}

fn adam_step(model: &mut ReadoutModel, gw: &DMatrix<f64>, gb: &DVector<f64>, s: &TrainSchedule) {
    model.step += 1;
    let t = model.step as i32;
    let c1 = 1.0 - s.beta1.powi(t);
    let c2 = 1.0 - s.beta2.powi(t);
    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = s.beta1 * *m + (1.0 - s.beta1) * g;
        *v = s.beta2 * *v + (1.0 - s.beta2) * g * g;
        *p -= s.lr * (*m / c1) / ((*v / c2).sqrt() + s.epsilon);
    };
    for i in 0..model.w.len() {
        update(&mut model.w[i], &mut model.m_w[i], &mut model.v_w[i], gw[i]);
    }
    for i in 0..model.b.len() {
        update(&mut model.b[i], &mut model.m_b[i], &mut model.v_b[i], gb[i]);
    }
}

/// Counts as a dense `samples x neurons` matrix.
pub fn design_matrix(counts: &SpikeCountMatrix) -> DMatrix<f64> {
    DMatrix::from_iterator(counts.n_neurons, counts.n_samples(), counts.counts.iter().map(|&c| c as f64)).transpose()
}

/// Predicted classes; ties go to the lowest class index.
pub fn predict(model: &ReadoutModel, x: &DMatrix<f64>) -> Vec<u8> {
    let z = model.scores(x);
    z.row_iter()
        .map(|row| {
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}

pub fn accuracy_of(model: &ReadoutModel, x: &DMatrix<f64>, labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predict(model, x).iter().zip(labels).filter(|(a, b)| a == b).count();
    hits as f64 / labels.len() as f64
}

pub fn evaluate(model: &ReadoutModel, counts: &SpikeCountMatrix) -> f64 {
    accuracy_of(model, &design_matrix(counts), &counts.labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: ReadoutModel,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub curve: Vec<EpochMetrics>,
    /// Parameters after the last epoch run.
    pub last: ReadoutModel,
}

pub fn train(
    model: ReadoutModel,
    train_counts: &SpikeCountMatrix,
    val_counts: &SpikeCountMatrix,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<TrainOutcome> {
    if train_counts.n_neurons != model.n_features || val_counts.n_neurons != model.n_features {
        return Err(Error::Config("count matrices do not match the readout size".into()));
    }
    schedule.validate()?;
    let x = design_matrix(train_counts);
    let xv = design_matrix(val_counts);
    let n = train_counts.n_samples();
    let mut rng = seed::rng(seed, stream::READOUT_SHUFFLE);
    let mut order: Vec<usize> = (0..n).collect();
    let mut model = model;
    let mut best = model.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut curve = Vec::new();
    for epoch in 1..=schedule.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(schedule.batch_size) {
            let xb = x.select_rows(chunk.iter());
            let yb: Vec<u8> = chunk.iter().map(|&i| train_counts.labels[i]).collect();
            let (gw, gb, l) = gradient(&model, &xb, &yb, schedule.lambda_reg)?;
            if !l.is_finite() || gw.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence(format!("readout loss {l} at epoch {epoch}, batch {batches}")));
            }
            adam_step(&mut model, &gw, &gb, schedule);
            total += l;
            batches += 1;
        }
        let val_accuracy = accuracy_of(&model, &xv, &val_counts.labels);
        curve.push(EpochMetrics { epoch, train_loss: total / batches.max(1) as f64, val_accuracy });
        if val_accuracy > best_acc {
            best_acc = val_accuracy;
            best_epoch = epoch;
            best = model.clone();
        }
        if schedule.patience.is_some_and(|p| epoch - best_epoch >= p) {
            break;
        }
    }
    Ok(TrainOutcome { model: best, best_epoch, best_val_accuracy: best_acc, curve, last: model })
}

pub fn write_metrics_csv<W: Write>(curve: &[EpochMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for m in curve {
        w.serialize(m)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: &[(Vec<u32>, u8)]) -> SpikeCountMatrix {
        let mut m = SpikeCountMatrix::new(rows[0].0.len());
        for (r, l) in rows {
            m.push(r, *l);
        }
        m
    }

    #[test]
    fn zero_model_is_uniform() {
        let model = ReadoutModel::new(4, 10);
        let (_, p) = forward(&model, &[1.0, 5.0, 0.0, 2.0]).unwrap();
        assert!(p.iter().all(|&v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn uniform_loss_by_hand() {
        let model = ReadoutModel::new(3, 10);
        let x = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let l = loss(&model, &x, &[4], 5e-10).unwrap();
        let expected = -(0.1f64.ln() + 9.0 * 0.9f64.ln());
        assert!((l - expected).abs() < 1e-12);
        assert!((expected - 3.2508).abs() < 1e-4);
    }

    #[test]
    fn shift_invariance_and_saturation() {
        let z = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 101.0, 102.0, 103.0]);
        let p = softmax_rows(&z).unwrap();
        for c in 0..3 {
            assert!((p[(0, c)] - p[(1, c)]).abs() < 1e-12);
        }
        let p = softmax_rows(&DMatrix::from_row_slice(1, 3, &[0.0, 800.0, 0.0])).unwrap();
        assert_eq!(p[(0, 1)], 1.0);
        assert!(softmax_rows(&DMatrix::from_row_slice(1, 2, &[f64::NAN, 0.0])).is_err());
    }

    #[test]
    fn separable_clusters_reach_full_accuracy() {
        let mut rng = seed::rng(3, 0);
        let mut rows = Vec::new();
        for i in 0..200 {
            let label = (i % 2) as u8;
            let base = if label == 0 { [20u32, 2, 5] } else { [2, 20, 5] };
            rows.push((base.iter().map(|&b| b + rng.random_range(0..4)).collect(), label));
        }
        let m = matrix(&rows);
        let s = TrainSchedule { batch_size: 50, max_epochs: 50, ..Default::default() };
        let out = train(ReadoutModel::new(3, 10), &m, &m, &s, 1).unwrap();
        assert_eq!(out.best_val_accuracy, 1.0);
        assert_eq!(evaluate(&out.model, &m), 1.0);
    }

    #[test]
    fn zero_input_sits_at_chance() {
        let rows: Vec<(Vec<u32>, u8)> = (0..100).map(|i| (vec![0, 0], (i % 10) as u8)).collect();
        let m = matrix(&rows);
        let s = TrainSchedule { max_epochs: 20, ..Default::default() };
        let out = train(ReadoutModel::new(2, 10), &m, &m, &s, 1).unwrap();
        assert!((evaluate(&out.model, &m) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn best_snapshot_beats_last_and_is_reproducible() {
        let mut rng = seed::rng(8, 0);
        let rows: Vec<(Vec<u32>, u8)> =
            (0..300).map(|_| ((0..6).map(|_| rng.random_range(0..10)).collect(), rng.random_range(0..10))).collect();
        let (tr, va) = rows.split_at(200);
        let (tr, va) = (matrix(tr), matrix(va));
        let s = TrainSchedule { batch_size: 25, max_epochs: 30, ..Default::default() };
        let a = train(ReadoutModel::new(6, 10), &tr, &va, &s, 5).unwrap();
        assert!(evaluate(&a.model, &va) >= evaluate(&a.last, &va));
        let b = train(ReadoutModel::new(6, 10), &tr, &va, &s, 5).unwrap();
        assert_eq!(a.curve, b.curve);
    }

    #[test]
    fn ties_go_to_lowest_class() {
        let model = ReadoutModel::new(2, 4);
        assert_eq!(predict(&model, &DMatrix::from_row_slice(1, 2, &[3.0, 1.0])), vec![0]);
    }

    #[test]
    fn metrics_csv() {
        let curve = [EpochMetrics { epoch: 1, train_loss: 0.5, val_accuracy: 0.25 }];
        let mut buf = Vec::new();
        write_metrics_csv(&curve, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,train_loss,val_accuracy\n1,0.5,0.25\n");
    }

    proptest! {
        #[test]
        fn predictions_sum_to_one(vals in proptest::collection::vec(-50.0f64..50.0, 12), xs in proptest::collection::vec(0.0f64..125.0, 4)) {
            let mut model = ReadoutModel::new(4, 3);
            for (w, v) in model.w.iter_mut().zip(&vals) {
                *w = *v;
            }
            let (_, p) = forward(&model, &xs).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
