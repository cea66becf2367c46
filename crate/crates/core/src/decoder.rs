//! Greedy and beam-search decoding conditioned on an image feature and a
//! requested sentiment label.
//!
//! Scores are raw cumulative negative log-probabilities: lower is better and
//! there is no length normalisation. Ties are broken by the emitted token
//! sequence, so decoding is deterministic.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::autodiff::log_softmax;
use crate::data::{BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::model::{CaptionModel, DecodeState, SentimentLabel};

pub const DEFAULT_BEAM_SIZE: usize = 5;
pub const DEFAULT_MAX_LEN: usize = 20;

/// Anything that can be unrolled one token at a time.
pub trait StepModel {
    type State: Clone;

    fn vocab_size(&self) -> usize;

    /// State from which `<bos>` is fed.
    fn start(&self, feature: &[f64], label: SentimentLabel) -> Result<Self::State>;

    /// Feeds `token`; returns next-token log-probabilities and the new state.
    fn step(&self, state: &Self::State, token: usize) -> Result<(Vec<f64>, Self::State)>;
}

impl StepModel for CaptionModel {
    type State = DecodeState;

    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn start(&self, feature: &[f64], label: SentimentLabel) -> Result<DecodeState> {
        self.initial_state(feature, label)
    }

    fn step(&self, state: &DecodeState, token: usize) -> Result<(Vec<f64>, DecodeState)> {
        let (logits, next) = self.next_logits(state, token)?;
        Ok((log_softmax(&logits), next))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub max_len: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig { beam_size: DEFAULT_BEAM_SIZE, max_len: DEFAULT_MAX_LEN }
    }
}

/// A partial or complete caption during search.
#[derive(Clone, Debug)]
pub struct Hypothesis<S> {
    /// Emitted tokens, `<eos>` included once finished.
    pub tokens: Vec<usize>,
    pub score: f64,
    pub state: S,
    pub finished: bool,
}

/// A decoded caption. `tokens` excludes `<bos>` and `<eos>`; `finished` is
/// false when the length limit cut the caption off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Caption {
    pub tokens: Vec<usize>,
    pub score: f64,
    pub finished: bool,
}

fn emittable(token: usize) -> bool {
    token != PAD && token != BOS
}

fn rank(a_score: f64, a_tokens: &[usize], b_score: f64, b_tokens: &[usize]) -> Ordering {
    a_score.total_cmp(&b_score).then_with(|| a_tokens.cmp(b_tokens))
}

fn check(beam_size: usize, max_len: usize) -> Result<()> {
    if beam_size == 0 {
        return Err(Error::InvalidField { field: "beam_size".into(), reason: "must be at least 1".into() });
    }
    if max_len == 0 {
        return Err(Error::InvalidField { field: "max_len".into(), reason: "must be at least 1".into() });
    }
    Ok(())
}

fn into_caption<S>(h: Hypothesis<S>) -> Caption {
    let mut tokens = h.tokens;
    if h.finished {
        tokens.pop();
    }
    Caption { tokens, score: h.score, finished: h.finished }
}

/// Beam search. Hypotheses that emit `<eos>` leave the beam for a completed
/// pool; anything still open after `max_len` tokens is completed as is.
/// Returns at most `beam_size` captions, best first.
pub fn beam_search<M: StepModel>(
    model: &M,
    feature: &[f64],
    label: SentimentLabel,
    beam_size: usize,
    max_len: usize,
) -> Result<Vec<Caption>> {
    check(beam_size, max_len)?;
    let vocab = model.vocab_size();
    let mut live = vec![Hypothesis { tokens: Vec::new(), score: 0.0, state: model.start(feature, label)?, finished: false }];
    let mut done: Vec<Hypothesis<M::State>> = Vec::new();

    for _ in 0..max_len {
        let mut expanded = Vec::with_capacity(live.len());
        for h in &live {
            let last = h.tokens.last().copied().unwrap_or(BOS);
            let (logp, next) = model.step(&h.state, last)?;
            if logp.len() != vocab {
                return Err(Error::Shape(format!("model returned {} log-probabilities for {vocab} tokens", logp.len())));
            }
            expanded.push((logp, next));
        }

        // (score, parent, token)
        let mut cands: Vec<(f64, usize, usize)> = Vec::with_capacity(live.len() * vocab);
        for (pi, (logp, _)) in expanded.iter().enumerate() {
            for (tok, lp) in logp.iter().enumerate() {
                if emittable(tok) {
                    cands.push((live[pi].score - lp, pi, tok));
                }
            }
        }
        cands.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| live[a.1].tokens.cmp(&live[b.1].tokens))
                .then_with(|| a.2.cmp(&b.2))
        });
        cands.truncate(beam_size);

        let mut next_live = Vec::with_capacity(cands.len());
        for (score, pi, tok) in cands {
            let mut tokens = live[pi].tokens.clone();
            tokens.push(tok);
            let h = Hypothesis { tokens, score, state: expanded[pi].1.clone(), finished: tok == EOS };
            if h.finished {
                done.push(h);
            } else {
                next_live.push(h);
            }
        }
        live = next_live;
        if live.is_empty() {
            break;
        }
    }
    done.extend(live);
    done.sort_by(|a, b| rank(a.score, &a.tokens, b.score, &b.tokens));
    done.truncate(beam_size);
    Ok(done.into_iter().map(into_caption).collect())
}

/// Most probable token at every step, lowest id on ties.
pub fn greedy_decode<M: StepModel>(model: &M, feature: &[f64], label: SentimentLabel, max_len: usize) -> Result<Caption> {
    check(1, max_len)?;
    let mut state = model.start(feature, label)?;
    let mut last = BOS;
    let mut tokens = Vec::new();
    let mut score = 0.0;
    for _ in 0..max_len {
        let (logp, next) = model.step(&state, last)?;
        let (tok, lp) = logp
            .iter()
            .copied()
            .enumerate()
            .filter(|&(t, _)| emittable(t))
            .fold(None, |best: Option<(usize, f64)>, (t, lp)| match best {
                Some((_, b)) if b >= lp => best,
                _ => Some((t, lp)),
            })
            .ok_or_else(|| Error::Shape("model has no emittable tokens".into()))?;
        score -= lp;
        if tok == EOS {
            return Ok(Caption { tokens, score, finished: true });
        }
        tokens.push(tok);
        state = next;
        last = tok;
    }
    Ok(Caption { tokens, score, finished: false })
}

/// Best captions for `label` and for the opposite polarity, everything else
/// held fixed.
pub fn generate_with_flip<M: StepModel>(
    model: &M,
    feature: &[f64],
    label: SentimentLabel,
    beam: BeamConfig,
) -> Result<(Vec<Caption>, Vec<Caption>)> {
    let flipped = label.flip()?;
    let original = beam_search(model, feature, label, beam.beam_size, beam.max_len)?;
    let other = beam_search(model, feature, flipped, beam.beam_size, beam.max_len)?;
    Ok((original, other))
}
