//! Deterministic training and evaluation.
//!
//! Randomness comes from two kinds of ChaCha8 stream, both keyed by the run
//! seed. One stream shuffles the training set at the start of each epoch.
//! Every training sample also gets its own stream, keyed by
//! `(epoch, dataset index)`, which drives augmentation, dropout and the
//! gate's Gumbel noise in that order. Samples in a batch are processed in
//! parallel, but gradients are summed in batch order, so results do not
//! depend on the thread count. Evaluation draws no random numbers.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{apply_augmentations, AugmentConfig, AugmentError};
use crate::fusion::{DEFAULT_FUSION, GATE_WIDTH};
use crate::model::{ModelError, Preprocess, PreparedInput, RespModel};
use crate::numerics::{log_softmax, smoothed_targets, NumericsError, Tensor};
use crate::params::ParamStore;
use crate::signal::{PainLabel, RespirationRecord, SignalError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("the training split has no {0} example")]
    MissingClass(PainLabel),
    #[error("epoch {epoch} is outside 0..{epochs}")]
    EpochOutOfRange { epoch: usize, epochs: usize },
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error("{0}")]
    Hook(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_epochs: usize,
    pub cooldown_epochs: usize,
    pub label_smoothing: f64,
    pub seed: u64,
    pub window_seconds: f64,
    pub fusion: String,
    /// Write a checkpoint every this many epochs; 0 disables periodic saves.
    pub checkpoint_every: usize,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            lr: 1e-4,
            warmup_epochs: 50,
            cooldown_epochs: 10,
            label_smoothing: 0.1,
            seed: 3407,
            window_seconds: 5.0,
            fusion: DEFAULT_FUSION.to_string(),
            checkpoint_every: 0,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.warmup_epochs + self.cooldown_epochs > self.epochs {
            return bad(format!(
                "warmup_epochs + cooldown_epochs ({} + {}) exceeds epochs ({})",
                self.warmup_epochs, self.cooldown_epochs, self.epochs
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad(format!("label_smoothing must lie in [0, 1), got {}", self.label_smoothing));
        }
        self.augment.validate()?;
        Ok(())
    }
}

/// Label-smoothed cross-entropy with the smoothing mass spread over all classes.
pub fn smoothed_ce_loss(logits: &[f64], target: usize, smoothing: f64) -> Result<f64, NumericsError> {
    if target >= logits.len() {
        return Err(NumericsError::InvalidClass {
            target,
            classes: logits.len(),
        });
    }
    if !(0.0..1.0).contains(&smoothing) {
        return Err(NumericsError::InvalidRate(smoothing));
    }
    let q = smoothed_targets(logits.len(), target, smoothing);
    Ok(-q.iter().zip(log_softmax(logits)).map(|(q, lp)| q * lp).sum::<f64>())
}

/// Linear warmup to `lr`, a flat middle, then linear decay over the last
/// `cooldown_epochs`.
pub fn lr_at_epoch(epoch: usize, cfg: &TrainConfig) -> Result<f64, TrainError> {
    if epoch >= cfg.epochs {
        return Err(TrainError::EpochOutOfRange {
            epoch,
            epochs: cfg.epochs,
        });
    }
    let lr = if epoch < cfg.warmup_epochs {
        cfg.lr * (epoch + 1) as f64 / cfg.warmup_epochs as f64
    } else if epoch >= cfg.epochs - cfg.cooldown_epochs {
        cfg.lr * (cfg.epochs - epoch) as f64 / cfg.cooldown_epochs as f64
    } else {
        cfg.lr
    };
    Ok(lr)
}

/// Adam with the usual defaults and no weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "Adam(beta1={}, beta2={}, eps={}, weight_decay=0)",
            self.beta1, self.beta2, self.eps
        )
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Vec<f64>], lr: f64) -> Result<(), NumericsError> {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let t = store.get(id);
            let mut data = t.to_vec();
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], &grads[k]);
            for i in 0..data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            let shape = t.shape().to_vec();
            store.set(id, Tensor::new(&shape, data)?)?;
        }
        Ok(())
    }
}

/// Macro metrics derived from a confusion matrix whose rows are true classes.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub confusion: Vec<Vec<usize>>,
    /// Mean per-class recall.
    pub macro_accuracy: f64,
    pub macro_precision: f64,
    pub macro_f1: f64,
    /// Fraction of correct predictions.
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Self {
        let c = confusion.len();
        let mut recall = 0.0;
        let mut precision = 0.0;
        let mut f1 = 0.0;
        let mut correct = 0;
        let mut total = 0;
        for k in 0..c {
            let tp = confusion[k][k];
            let support: usize = confusion[k].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[k]).sum();
            let r = ratio(tp, support);
            let p = ratio(tp, predicted);
            recall += r;
            precision += p;
            f1 += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            correct += tp;
            total += support;
        }
        let n = c.max(1) as f64;
        Self {
            macro_accuracy: recall / n,
            macro_precision: precision / n,
            macro_f1: f1 / n,
            accuracy: ratio(correct, total),
            confusion,
        }
    }

    /// Confusion matrix as TSV with a header row of predicted labels.
    pub fn confusion_tsv(&self) -> String {
        let mut s = String::from("true\\pred");
        for k in 0..self.confusion.len() {
            s.push('\t');
            s.push_str(&class_name(k));
        }
        s.push('\n');
        for (k, row) in self.confusion.iter().enumerate() {
            s.push_str(&class_name(k));
            for v in row {
                s.push_str(&format!("\t{v}"));
            }
            s.push('\n');
        }
        s
    }
}

fn class_name(k: usize) -> String {
    PainLabel::from_index(k).map_or_else(|| format!("class{k}"), |l| l.as_str().to_string())
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "macro_accuracy\t{:.6}", self.macro_accuracy)?;
        writeln!(f, "macro_precision\t{:.6}", self.macro_precision)?;
        writeln!(f, "macro_f1\t{:.6}", self.macro_f1)?;
        write!(f, "accuracy\t{:.6}", self.accuracy)
    }
}

/// Scores every record in inference mode.
pub fn evaluate(model: &RespModel, preprocess: &Preprocess, records: &[RespirationRecord]) -> Result<MetricsReport, TrainError> {
    if records.is_empty() {
        return Err(TrainError::EmptySplit("evaluation"));
    }
    let inputs = records
        .iter()
        .map(|r| preprocess.prepare(r.samples()))
        .collect::<Result<Vec<_>, _>>()?;
    let targets: Vec<usize> = records.iter().map(|r| r.label.index()).collect();
    evaluate_prepared(model, &inputs, &targets)
}

fn evaluate_prepared(model: &RespModel, inputs: &[PreparedInput], targets: &[usize]) -> Result<MetricsReport, TrainError> {
    let c = model.config().n_classes;
    let predictions = inputs
        .par_iter()
        .map(|x| model.predict(x).map(|p| p.class))
        .collect::<Result<Vec<_>, _>>()?;
    let mut confusion = vec![vec![0; c]; c];
    for (t, p) in targets.iter().zip(predictions) {
        confusion[*t][p] += 1;
    }
    Ok(MetricsReport::from_confusion(confusion))
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val: MetricsReport,
    /// How often each gate branch was chosen during the epoch.
    pub gate_histogram: [usize; GATE_WIDTH],
}

impl EpochRecord {
    /// `epoch, lr, train_loss, val_macro_acc, val_macro_prec, val_macro_f1,
    /// gate_histogram`, tab-separated.
    pub fn tsv_line(&self) -> String {
        let h = self.gate_histogram.map(|v| v.to_string()).join(",");
        format!(
            "{}\t{:.6e}\t{:.10}\t{:.6}\t{:.6}\t{:.6}\t{}",
            self.epoch, self.lr, self.train_loss, self.val.macro_accuracy, self.val.macro_precision, self.val.macro_f1, h
        )
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Epoch with the highest validation macro accuracy (first on ties).
    pub best_epoch: usize,
    /// Parameters at the best epoch; the model itself holds the final ones.
    pub best_params: ParamStore,
}

impl TrainOutcome {
    pub fn loss_curve(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.train_loss).collect()
    }

    pub fn metrics_log(&self) -> String {
        self.history.iter().map(|r| r.tsv_line() + "\n").collect()
    }
}

/// Stream for one training sample. Stream 0 is left to model init and
/// `u64::MAX` to the shuffle.
pub fn sample_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + (((epoch as u64) << 32) | index as u64));
    rng
}

fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}

/// Called after every epoch with the record and the current model.
pub type EpochHook<'a> = dyn FnMut(&EpochRecord, &RespModel) -> Result<(), TrainError> + 'a;

/// Trains `model` in place.
pub fn train(
    model: &mut RespModel,
    preprocess: &Preprocess,
    train_set: &[RespirationRecord],
    val_set: &[RespirationRecord],
    cfg: &TrainConfig,
    on_epoch: &mut EpochHook<'_>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    for label in PainLabel::ALL.iter().take(model.config().n_classes) {
        if !train_set.iter().any(|r| r.label == *label) {
            return Err(TrainError::MissingClass(*label));
        }
    }
    let n_windows = preprocess.n_windows()?;
    if n_windows != model.config().n_windows {
        return Err(ModelError::InvalidConfig(format!(
            "preprocessing yields {n_windows} windows, model expects {}",
            model.config().n_windows
        ))
        .into());
    }

    let val_inputs = val_set
        .iter()
        .map(|r| preprocess.prepare(r.samples()))
        .collect::<Result<Vec<_>, _>>()?;
    let val_targets: Vec<usize> = val_set.iter().map(|r| r.label.index()).collect();

    let mut adam = Adam::new(&model.store);
    log::info!(
        "optimizer {}; {} parameters; {} train / {} val samples",
        adam.describe(),
        model.store.num_scalars(),
        train_set.len(),
        val_set.len()
    );

    let mut shuffle = shuffle_rng(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ParamStore)> = None;

    for epoch in 0..cfg.epochs {
        let lr = lr_at_epoch(epoch, cfg)?;
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        let mut gate_histogram = [0usize; GATE_WIDTH];

        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results = batch
                .par_iter()
                .map(|&i| {
                    let rec = &train_set[i];
                    let mut rng = sample_rng(cfg.seed, epoch, i);
                    let (augmented, _) = apply_augmentations(rec.samples(), &cfg.augment, &mut rng);
                    let input = preprocess.prepare(&augmented)?;
                    Ok(model.loss_and_grads(&input, rec.label.index(), cfg.label_smoothing, &mut rng)?)
                })
                .collect::<Result<Vec<_>, TrainError>>()?;

            let mut grads: Vec<Vec<f64>> = model.store.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
            let mut batch_loss = 0.0;
            for r in &results {
                batch_loss += r.loss;
                for (acc, g) in grads.iter_mut().zip(&r.grads) {
                    for (a, v) in acc.iter_mut().zip(g.data()) {
                        *a += v;
                    }
                }
                if let Some(k) = r.selected {
                    gate_histogram[k] += 1;
                }
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    step,
                    loss: batch_loss / results.len() as f64,
                });
            }
            let scale = 1.0 / results.len() as f64;
            for g in &mut grads {
                for v in g.iter_mut() {
                    *v *= scale;
                }
            }
            adam.step(&mut model.store, &grads, lr)?;
            loss_sum += batch_loss;
        }

        let val = evaluate_prepared(model, &val_inputs, &val_targets)?;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train_set.len() as f64,
            val,
            gate_histogram,
        };
        log::debug!("{}", record.tsv_line());
        if best.as_ref().is_none_or(|(_, acc, _)| record.val.macro_accuracy > *acc) {
            best = Some((epoch, record.val.macro_accuracy, model.store.clone()));
        }
        on_epoch(&record, model)?;
        history.push(record);
    }

    let (best_epoch, _, best_params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_c() {
        for s in [0.0, 0.1, 0.5, 0.9] {
            for t in 0..3 {
                let l = smoothed_ce_loss(&[0.7, 0.7, 0.7], t, s).unwrap();
                assert!((l - 3f64.ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn smoothed_loss_reference_value() {
        // q = [0.9 + 0.1/3, 0.1/3, 0.1/3]; log p_0 = 2 - ln(e^2 + 2)
        let lse = (2f64.exp() + 2.0).ln();
        let q0 = 0.9 + 0.1 / 3.0;
        let expect = -(q0 * (2.0 - lse) + 2.0 * (0.1 / 3.0) * (0.0 - lse));
        let got = smoothed_ce_loss(&[2.0, 0.0, 0.0], 0, 0.1).unwrap();
        assert!((got - expect).abs() < 1e-14, "{got} vs {expect}");
        let plain = smoothed_ce_loss(&[2.0, 0.0, 0.0], 1, 0.0).unwrap();
        assert!((plain - lse).abs() < 1e-14);
        assert!(smoothed_ce_loss(&[0.0; 3], 3, 0.1).is_err());
        assert!(smoothed_ce_loss(&[0.0; 3], 0, 1.0).is_err());
    }

    #[test]
    fn schedule_examples() {
        let cfg = TrainConfig {
            epochs: 300,
            ..TrainConfig::default()
        };
        assert_eq!(lr_at_epoch(0, &cfg).unwrap(), cfg.lr / 50.0);
        assert_eq!(lr_at_epoch(49, &cfg).unwrap(), cfg.lr);
        for e in 50..=289 {
            assert_eq!(lr_at_epoch(e, &cfg).unwrap(), cfg.lr);
        }
        assert_eq!(lr_at_epoch(295, &cfg).unwrap(), cfg.lr / 2.0);
        assert_eq!(lr_at_epoch(299, &cfg).unwrap(), cfg.lr / 10.0);
        assert!(matches!(lr_at_epoch(300, &cfg), Err(TrainError::EpochOutOfRange { .. })));
        let flat = TrainConfig {
            epochs: 5,
            warmup_epochs: 0,
            cooldown_epochs: 0,
            ..TrainConfig::default()
        };
        assert!((0..5).all(|e| lr_at_epoch(e, &flat).unwrap() == flat.lr));
    }

    #[test]
    fn config_invariants() {
        let too_short = TrainConfig {
            epochs: 40,
            ..TrainConfig::default()
        };
        assert!(too_short.validate().is_err());
        let zero_batch = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(zero_batch.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn confusion_example() {
        let m = MetricsReport::from_confusion(vec![vec![5, 0, 0], vec![2, 3, 0], vec![0, 0, 5]]);
        // recalls 1, 3/5, 1; precisions 5/7, 1, 1; F1 5/6, 3/4, 1
        assert!((m.macro_accuracy - (1.0 + 0.6 + 1.0) / 3.0).abs() < 1e-15);
        assert!((m.macro_precision - (5.0 / 7.0 + 2.0) / 3.0).abs() < 1e-15);
        assert!((m.macro_f1 - (5.0 / 6.0 + 0.75 + 1.0) / 3.0).abs() < 1e-15);
        assert!((m.accuracy - 13.0 / 15.0).abs() < 1e-15);
        assert!((m.macro_accuracy - 0.8667).abs() < 1e-4);
        assert!((m.macro_precision - 0.9048).abs() < 1e-4);
        assert!((m.macro_f1 - 0.8611).abs() < 1e-4);
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let perfect = MetricsReport::from_confusion(vec![vec![4, 0, 0], vec![0, 4, 0], vec![0, 0, 4]]);
        assert_eq!(
            (perfect.macro_accuracy, perfect.macro_precision, perfect.macro_f1),
            (1.0, 1.0, 1.0)
        );
        let constant = MetricsReport::from_confusion(vec![vec![4, 0, 0], vec![4, 0, 0], vec![4, 0, 0]]);
        assert!((constant.macro_accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert!((constant.macro_precision - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn sample_streams_are_distinct_and_stable() {
        use rand::Rng;
        let a: u64 = sample_rng(3407, 0, 0).random();
        let b: u64 = sample_rng(3407, 0, 1).random();
        let c: u64 = sample_rng(3407, 1, 0).random();
        let init: u64 = ChaCha8Rng::seed_from_u64(3407).random();
        assert!(a != b && a != c && b != c && a != init);
        assert_eq!(a, sample_rng(3407, 0, 0).random::<u64>());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::row(&[1.0, -1.0, 0.0]).unwrap());
        let mut adam = Adam::new(&store);
        adam.step(&mut store, &[vec![0.5, -2.0, 0.0]], 0.1).unwrap();
        let w = store.get(id).to_vec();
        // bias-corrected first step is lr · sign(g)
        assert!((w[0] - 0.9).abs() < 1e-7);
        assert!((w[1] + 0.9).abs() < 1e-7);
        assert_eq!(w[2], 0.0);
    }
}
