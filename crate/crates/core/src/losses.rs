//! Word-prediction loss, the two sentiment-loss placements, and the
//! combined objective.
//!
//! Direct injection scores the sentiment classifier on the hidden state of
//! every word step and averages; sentiment flow scores it once, on the last
//! sentiment-cell state.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::{CaptionRecord, PAD};
use crate::error::{Error, Result};
use crate::model::{ModelVars, SentimentLabel, SequenceOutput, StepState, Variant};

/// Default weight of the sentiment term.
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Two-layer perceptron `W2 · tanh(W1 · x + b1) + b2` over three classes.
#[derive(Clone, Copy, Debug)]
pub struct ClassifierVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl ClassifierVars {
    pub fn logits(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let z = tape.matmul(self.w1, x)?;
        let z = tape.add(z, self.b1)?;
        let a = tape.tanh(z)?;
        let o = tape.matmul(self.w2, a)?;
        let o = tape.add(o, self.b2)?;
        let k = tape.value(o).len();
        if k != 3 {
            return Err(Error::Shape(format!("sentiment classifier must output 3 classes, got {k}")));
        }
        Ok(o)
    }

    /// `-log p(label | x)`.
    pub fn nll(&self, tape: &mut Tape<'_>, x: Var, label: SentimentLabel) -> Result<Var> {
        let logits = self.logits(tape, x)?;
        tape.softmax_cross_entropy(logits, label.index())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub word_loss: f64,
    pub sentiment_loss: f64,
    pub total: f64,
    pub lambda: f64,
}

/// Mean cross-entropy of each logit vector against its gold token, skipping
/// `<pad>` positions.
pub fn word_loss(tape: &mut Tape<'_>, logits: &[Var], gold: &[usize]) -> Result<Var> {
    if logits.len() != gold.len() {
        return Err(Error::LengthMismatch(logits.len(), gold.len()));
    }
    let mut terms = Vec::with_capacity(gold.len());
    for (&l, &g) in logits.iter().zip(gold) {
        if g == PAD {
            continue;
        }
        terms.push(tape.softmax_cross_entropy(l, g)?);
    }
    tape.mean(&terms)
}

/// Classifier loss on every hidden state, averaged over steps.
pub fn stepwise_sentiment_loss(
    tape: &mut Tape<'_>,
    hidden: &[Var],
    clf: &ClassifierVars,
    label: SentimentLabel,
) -> Result<Var> {
    if hidden.is_empty() {
        return Err(Error::EmptySequence);
    }
    let terms = hidden.iter().map(|&h| clf.nll(tape, h, label)).collect::<Result<Vec<_>>>()?;
    tape.mean(&terms)
}

/// Classifier loss on the final sentiment-cell state.
pub fn terminal_sentiment_loss(
    tape: &mut Tape<'_>,
    last: &StepState,
    clf: &ClassifierVars,
    label: SentimentLabel,
) -> Result<Var> {
    let s = last.s.ok_or(Error::NoSentimentCell)?;
    clf.nll(tape, s, label)
}

/// Word loss plus `lambda` times the variant's sentiment loss.
pub fn total_loss(
    tape: &mut Tape<'_>,
    vars: &ModelVars,
    record: &CaptionRecord,
    output: &SequenceOutput,
    lambda: f64,
) -> Result<(Var, LossBreakdown)> {
    let word = word_loss(tape, &output.logits, &record.tokens[1..])?;
    let word_value = tape.scalar_value(word)?;

    let sentiment = match vars.variant {
        Variant::Baseline => None,
        Variant::Direct => {
            let clf = vars.classifier.as_ref().ok_or(Error::NoClassifier(Variant::Direct))?;
            let hs: Vec<Var> = output.states.iter().map(|s| s.h).collect();
            Some(stepwise_sentiment_loss(tape, &hs, clf, record.label)?)
        }
        Variant::Flow => {
            let clf = vars.classifier.as_ref().ok_or(Error::NoClassifier(Variant::Flow))?;
            let last = output.final_state()?;
            Some(terminal_sentiment_loss(tape, last, clf, record.label)?)
        }
    };

    match sentiment {
        None => Ok((
            word,
            LossBreakdown { word_loss: word_value, sentiment_loss: 0.0, total: word_value, lambda },
        )),
        Some(s) => {
            let s_value = tape.scalar_value(s)?;
            let weighted = tape.scale(s, lambda)?;
            let total = tape.add(word, weighted)?;
            let total_value = tape.scalar_value(total)?;
            Ok((
                total,
                LossBreakdown { word_loss: word_value, sentiment_loss: s_value, total: total_value, lambda },
            ))
        }
    }
}
