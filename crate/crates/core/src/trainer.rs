//! Mini-batch training with Adam and global-norm gradient clipping.

use std::collections::BTreeMap;
use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Tape, Tensor};
use crate::data::{make_batches, CaptionRecord, DEFAULT_BATCH_SIZE};
use crate::error::{Error, Result};
use crate::losses::{total_loss, LossBreakdown, DEFAULT_LAMBDA};
use crate::model::{forward_sequence, CaptionModel, ModelVars, Params};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;
pub const DEFAULT_LEARNING_RATE: f64 = 0.001;
pub const DEFAULT_CLIP_NORM: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the sentiment loss.
    pub lambda: f64,
    pub seed: u64,
    /// Maximum global gradient norm; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: 10,
            lambda: DEFAULT_LAMBDA,
            seed: 0,
            clip_norm: Some(DEFAULT_CLIP_NORM),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Err(Error::InvalidField { field: field.into(), reason: reason.into() });
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be a finite non-negative number");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if !self.lambda.is_finite() {
            return bad("lambda", "must be finite");
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return bad("clip_norm", "must be positive");
            }
        }
        Ok(())
    }
}

/// First and second moment estimates for every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        let zeros: BTreeMap<String, Tensor> =
            params.iter().map(|(n, t)| (n.clone(), Tensor::zeros(t.shape()))).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
        }
    }
}

/// One bias-corrected Adam step over every parameter.
pub fn adam_update(params: &mut Params, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    for name in params.names() {
        if grads.get(name).is_none() {
            return Err(Error::MissingGradient(name.to_string()));
        }
    }
    state.t += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (name, theta) in params.iter_mut() {
        let g = grads.get(name).ok_or_else(|| Error::MissingGradient(name.clone()))?;
        if g.shape() != theta.shape() {
            return Err(Error::Shape(format!(
                "gradient for `{name}` has shape {:?}, parameter {:?}",
                g.shape(),
                theta.shape()
            )));
        }
        let m = state.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(theta.shape()));
        let v = state.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(theta.shape()));
        for (((p, gi), mi), vi) in
            theta.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
        {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Loss and parameter gradients of a single record.
pub fn record_gradients(model: &CaptionModel, record: &CaptionRecord, lambda: f64) -> Result<(LossBreakdown, Gradients)> {
    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, model)?;
    let out = forward_sequence(&mut tape, &vars, &model.config, record)?;
    let (loss, breakdown) = total_loss(&mut tape, &vars, record, &out, lambda)?;
    Ok((breakdown, tape.backward(loss)?))
}

/// Loss of a single record without building gradients.
pub fn record_loss(model: &CaptionModel, record: &CaptionRecord, lambda: f64) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let vars = ModelVars::register(&mut tape, model)?;
    let out = forward_sequence(&mut tape, &vars, &model.config, record)?;
    Ok(total_loss(&mut tape, &vars, record, &out, lambda)?.1)
}

/// Mean losses over one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub word_loss: f64,
    pub sentiment_loss: f64,
    pub total: f64,
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains `model` in place and returns one log entry per epoch.
pub fn train(config: &TrainConfig, corpus: &[CaptionRecord], model: &mut CaptionModel) -> Result<Vec<EpochLog>> {
    train_with(config, corpus, model, |_| ControlFlow::Continue(()))
}

/// As [`train`], calling `on_epoch` after each epoch; training stops early
/// when it returns `Break`.
pub fn train_with(
    config: &TrainConfig,
    corpus: &[CaptionRecord],
    model: &mut CaptionModel,
    mut on_epoch: impl FnMut(&EpochLog) -> ControlFlow<()>,
) -> Result<Vec<EpochLog>> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut adam = AdamState::new(&model.params);
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let batches = make_batches(corpus, config.batch_size, epoch_seed(config.seed, epoch))?;
        let (mut word, mut senti, mut total) = (0.0, 0.0, 0.0);
        for (bi, batch) in batches.iter().enumerate() {
            let snapshot: &CaptionModel = model;
            let results: Vec<(LossBreakdown, Gradients)> = (0..batch.len())
                .into_par_iter()
                .map(|i| record_gradients(snapshot, &batch.record(i), config.lambda))
                .collect::<Result<_>>()?;

            // Merge in batch order so the sum does not depend on scheduling.
            let mut grads = Gradients::default();
            for (b, g) in &results {
                if !b.total.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch: epoch + 1, batch: bi });
                }
                word += b.word_loss;
                senti += b.sentiment_loss;
                total += b.total;
                grads.accumulate(g);
            }
            grads.scale(1.0 / batch.len() as f64);
            if !grads.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: epoch + 1, batch: bi });
            }
            if let Some(max) = config.clip_norm {
                grads.clip_global_norm(max);
            }
            adam_update(&mut model.params, &grads, &mut adam, config.learning_rate)?;
        }
        let n = corpus.len() as f64;
        let entry = EpochLog { epoch: epoch + 1, word_loss: word / n, sentiment_loss: senti / n, total: total / n };
        log.push(entry);
        if on_epoch(&entry).is_break() {
            break;
        }
    }
    Ok(log)
}

/// Mean losses of a corpus under the current parameters.
pub fn evaluate_loss(model: &CaptionModel, corpus: &[CaptionRecord], lambda: f64) -> Result<LossBreakdown> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let parts: Vec<LossBreakdown> = corpus.par_iter().map(|r| record_loss(model, r, lambda)).collect::<Result<_>>()?;
    let n = parts.len() as f64;
    Ok(LossBreakdown {
        word_loss: parts.iter().map(|b| b.word_loss).sum::<f64>() / n,
        sentiment_loss: parts.iter().map(|b| b.sentiment_loss).sum::<f64>() / n,
        total: parts.iter().map(|b| b.total).sum::<f64>() / n,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BOS, EOS};
    use crate::model::{ModelConfig, SentimentLabel, Variant};

    fn scalar_params(v: f64) -> Params {
        let mut p = Params::default();
        p.insert("theta", Tensor::vector(vec![v]));
        p
    }

    fn scalar_grads(g: f64) -> Gradients {
        let mut gr = Gradients::default();
        gr.insert("theta", Tensor::vector(vec![g]));
        gr
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = scalar_params(0.25);
        let mut st = AdamState::new(&p);
        adam_update(&mut p, &scalar_grads(0.0), &mut st, 0.001).unwrap();
        assert_eq!(p.get("theta").unwrap().data(), &[0.25]);
        assert_eq!(st.t, 1);
        adam_update(&mut p, &scalar_grads(0.0), &mut st, 0.001).unwrap();
        assert_eq!(st.t, 2);
    }

    #[test]
    fn adam_first_step_closed_form() {
        // m̂ = g, v̂ = g², so Δθ = -lr · g / (|g| + ε).
        let mut p = scalar_params(0.0);
        let mut st = AdamState::new(&p);
        adam_update(&mut p, &scalar_grads(0.5), &mut st, 0.001).unwrap();
        let delta = p.get("theta").unwrap().data()[0];
        let want = -0.001 * 0.5 / (0.5 + 1e-8);
        assert!((delta - want).abs() < 1e-15);
        assert!((delta + 0.000999998).abs() < 1e-8);
    }

    #[test]
    fn adam_equal_gradients_give_equal_steps() {
        let mut p = scalar_params(0.0);
        let mut st = AdamState::new(&p);
        adam_update(&mut p, &scalar_grads(0.5), &mut st, 0.001).unwrap();
        let d1 = p.get("theta").unwrap().data()[0];
        adam_update(&mut p, &scalar_grads(0.5), &mut st, 0.001).unwrap();
        let d2 = p.get("theta").unwrap().data()[0] - d1;
        assert!((d1.abs() - d2.abs()).abs() < 1e-12);
    }

    #[test]
    fn adam_missing_gradient() {
        let mut p = scalar_params(0.0);
        p.insert("other", Tensor::vector(vec![1.0]));
        let mut st = AdamState::new(&p);
        assert!(matches!(
            adam_update(&mut p, &scalar_grads(0.1), &mut st, 0.001),
            Err(Error::MissingGradient(n)) if n == "other"
        ));
    }

    fn tiny_corpus() -> Vec<CaptionRecord> {
        vec![
            CaptionRecord {
                image_id: "a".into(),
                feature: vec![1.0, 0.0],
                tokens: vec![BOS, 4, 5, EOS],
                label: SentimentLabel::Pos,
            },
            CaptionRecord {
                image_id: "b".into(),
                feature: vec![0.0, 1.0],
                tokens: vec![BOS, 6, EOS],
                label: SentimentLabel::Neg,
            },
        ]
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let mut model = CaptionModel::init(ModelConfig::with_dims(Variant::Flow, 7, 2, 4, 4), 3).unwrap();
        let before = model.clone();
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 3, batch_size: 1, ..TrainConfig::default() };
        let log = train(&cfg, &tiny_corpus(), &mut model).unwrap();
        assert_eq!(model, before);
        assert!(log.windows(2).all(|w| w[0].total == w[1].total));
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig { epochs: 4, batch_size: 2, learning_rate: 0.01, ..TrainConfig::default() };
        let run = || {
            let mut model = CaptionModel::init(ModelConfig::with_dims(Variant::Direct, 7, 2, 4, 4), 3).unwrap();
            let log = train(&cfg, &tiny_corpus(), &mut model).unwrap();
            (log, model)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn single_record_overfits() {
        let corpus = tiny_corpus()[..1].to_vec();
        let mut model = CaptionModel::init(ModelConfig::with_dims(Variant::Direct, 7, 2, 8, 8), 1).unwrap();
        let cfg = TrainConfig { epochs: 200, batch_size: 1, learning_rate: 0.05, ..TrainConfig::default() };
        let log = train(&cfg, &corpus, &mut model).unwrap();
        assert!(log.last().unwrap().total < 0.05, "{:?}", log.last());
    }

    #[test]
    fn config_validation_and_empty_corpus() {
        let mut model = CaptionModel::init(ModelConfig::with_dims(Variant::Baseline, 7, 2, 4, 4), 3).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(train(&cfg, &tiny_corpus(), &mut model).is_err());
        assert!(matches!(train(&TrainConfig::default(), &[], &mut model), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn non_finite_loss_names_the_batch() {
        let mut model = CaptionModel::init(ModelConfig::with_dims(Variant::Baseline, 7, 2, 4, 4), 3).unwrap();
        model.params.get_mut("out.b").unwrap().data_mut()[4] = f64::NAN;
        let cfg = TrainConfig { epochs: 1, batch_size: 1, ..TrainConfig::default() };
        let err = train(&cfg, &tiny_corpus(), &mut model).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, .. }), "{err}");
    }
}
