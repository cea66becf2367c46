//! Recurrent cells for the three model variants.
//!
//! * `Baseline`: a plain LSTM caption decoder.
//! * `Direct`: the same LSTM, with the sentiment label's scalar value
//!   (−1, 0, +1) appended to every step input.
//! * `Flow`: an LSTM with an extra sentiment cell `s`, initialised from a
//!   label embedding and updated through the input and forget gates.
//!
//! The image feature is projected into the word-embedding space and fed
//! as the input of a step that precedes `<bos>`; its output is discarded.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::{CaptionRecord, BOS, EOS};
use crate::error::{Error, Result};
use crate::losses::ClassifierVars;

/// Ternary conditioning signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Neg,
    Neu,
    Pos,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [SentimentLabel::Neg, SentimentLabel::Neu, SentimentLabel::Pos];

    /// Value of the injected sentiment unit.
    pub fn scalar(self) -> f64 {
        match self {
            SentimentLabel::Neg => -1.0,
            SentimentLabel::Neu => 0.0,
            SentimentLabel::Pos => 1.0,
        }
    }

    /// Class index used by the embedding table and the classifier.
    pub fn index(self) -> usize {
        match self {
            SentimentLabel::Neg => 0,
            SentimentLabel::Neu => 1,
            SentimentLabel::Pos => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Opposite polarity. Neutral has none.
    pub fn flip(self) -> Result<Self> {
        match self {
            SentimentLabel::Neg => Ok(SentimentLabel::Pos),
            SentimentLabel::Pos => Ok(SentimentLabel::Neg),
            SentimentLabel::Neu => Err(Error::NeutralFlip),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Neg => "neg",
            SentimentLabel::Neu => "neu",
            SentimentLabel::Pos => "pos",
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "neg" | "negative" => Ok(SentimentLabel::Neg),
            "neu" | "neutral" => Ok(SentimentLabel::Neu),
            "pos" | "positive" => Ok(SentimentLabel::Pos),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Baseline,
    Direct,
    Flow,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Baseline, Variant::Direct, Variant::Flow];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Direct => "direct",
            Variant::Flow => "flow",
        }
    }

    pub fn has_sentiment_cell(self) -> bool {
        self == Variant::Flow
    }

    pub fn has_classifier(self) -> bool {
        self != Variant::Baseline
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" | "lstm" => Ok(Variant::Baseline),
            "direct" => Ok(Variant::Direct),
            "flow" => Ok(Variant::Flow),
            other => Err(Error::InvalidField {
                field: "variant".into(),
                reason: format!("`{other}` is not one of baseline, direct, flow"),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Width of the sentiment-label embedding feeding the initial sentiment cell.
    pub sentiment_embed_dim: usize,
    pub feature_dim: usize,
    /// Hidden width of the sentiment classifier.
    pub classifier_dim: usize,
}

impl ModelConfig {
    pub const FULL_EMBED_DIM: usize = 256;
    pub const FULL_HIDDEN_DIM: usize = 512;

    pub fn new(variant: Variant, vocab_size: usize, feature_dim: usize) -> Self {
        Self::with_dims(variant, vocab_size, feature_dim, Self::FULL_EMBED_DIM, Self::FULL_HIDDEN_DIM)
    }

    /// Desk-scale dimensions (embed 32, hidden 64).
    pub fn desk(variant: Variant, vocab_size: usize, feature_dim: usize) -> Self {
        Self::with_dims(variant, vocab_size, feature_dim, 32, 64)
    }

    pub fn with_dims(
        variant: Variant,
        vocab_size: usize,
        feature_dim: usize,
        embed_dim: usize,
        hidden_dim: usize,
    ) -> Self {
        ModelConfig {
            variant,
            vocab_size,
            embed_dim,
            hidden_dim,
            sentiment_embed_dim: (embed_dim / 4).max(2),
            feature_dim,
            classifier_dim: (hidden_dim / 4).max(2),
        }
    }

    /// Width of each recurrent step's input.
    pub fn step_input_dim(&self) -> usize {
        match self.variant {
            Variant::Direct => self.embed_dim + 1,
            _ => self.embed_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("sentiment_embed_dim", self.sentiment_embed_dim),
            ("feature_dim", self.feature_dim),
            ("classifier_dim", self.classifier_dim),
        ];
        for (field, v) in fields {
            if v == 0 {
                return Err(Error::InvalidField { field: field.into(), reason: "must be positive".into() });
            }
        }
        if self.vocab_size <= EOS {
            return Err(Error::InvalidField {
                field: "vocab_size".into(),
                reason: "must include the reserved tokens".into(),
            });
        }
        Ok(())
    }
}

/// Parameter names. Gate blocks inside `lstm.*` are stacked in the order
/// input, forget, output, candidate.
pub mod names {
    pub const EMBED: &str = "embed";
    pub const IMAGE_PROJ: &str = "image_proj";
    pub const LSTM_W: &str = "lstm.w";
    pub const LSTM_U: &str = "lstm.u";
    pub const LSTM_B: &str = "lstm.b";
    pub const OUT_W: &str = "out.w";
    pub const OUT_B: &str = "out.b";
    pub const SENT_WX: &str = "sentiment.wx";
    pub const SENT_WH: &str = "sentiment.wh";
    pub const SENT_B: &str = "sentiment.b";
    pub const SENT_INIT_W: &str = "sentiment.init_w";
    pub const SENT_INIT_B: &str = "sentiment.init_b";
    pub const SENT_TABLE: &str = "sentiment.table";
    pub const CLF_W1: &str = "classifier.w1";
    pub const CLF_B1: &str = "classifier.b1";
    pub const CLF_W2: &str = "classifier.w2";
    pub const CLF_B2: &str = "classifier.b2";
}

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    tensors: BTreeMap<String, Tensor>,
}

impl Params {
    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors.get_mut(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        self.tensors.insert(name.to_string(), t);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum InitKind {
    Weight,
    Bias,
    GateBias,
}

fn param_layout(cfg: &ModelConfig) -> Vec<(&'static str, Vec<usize>, InitKind)> {
    use names::*;
    let (v, e, h, d) = (cfg.vocab_size, cfg.embed_dim, cfg.hidden_dim, cfg.step_input_dim());
    let mut out = vec![
        (EMBED, vec![v, e], InitKind::Weight),
        (IMAGE_PROJ, vec![e, cfg.feature_dim], InitKind::Weight),
        (LSTM_W, vec![4 * h, d], InitKind::Weight),
        (LSTM_U, vec![4 * h, h], InitKind::Weight),
        (LSTM_B, vec![4 * h], InitKind::GateBias),
        (OUT_W, vec![v, h], InitKind::Weight),
        (OUT_B, vec![v], InitKind::Bias),
    ];
    if cfg.variant.has_sentiment_cell() {
        let es = cfg.sentiment_embed_dim;
        out.extend([
            (SENT_WX, vec![h, d], InitKind::Weight),
            (SENT_WH, vec![h, h], InitKind::Weight),
            (SENT_B, vec![h], InitKind::Bias),
            (SENT_INIT_W, vec![h, es], InitKind::Weight),
            (SENT_INIT_B, vec![h], InitKind::Bias),
            (SENT_TABLE, vec![3, es], InitKind::Weight),
        ]);
    }
    if cfg.variant.has_classifier() {
        let m = cfg.classifier_dim;
        out.extend([
            (CLF_W1, vec![m, h], InitKind::Weight),
            (CLF_B1, vec![m], InitKind::Bias),
            (CLF_W2, vec![3, m], InitKind::Weight),
            (CLF_B2, vec![3], InitKind::Bias),
        ]);
    }
    out
}

/// Range of the uniform weight initialisation.
pub const INIT_RANGE: f64 = 0.08;
/// Added to the forget-gate bias block at initialisation.
pub const FORGET_BIAS: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct CaptionModel {
    pub config: ModelConfig,
    pub params: Params,
}

impl CaptionModel {
    /// Fresh parameters: weights uniform in ±0.08, biases zero, forget-gate
    /// bias +1.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::default();
        let h = config.hidden_dim;
        for (name, shape, kind) in param_layout(&config) {
            let t = match kind {
                InitKind::Weight => Tensor::from_fn(&shape, |_| rng.gen_range(-INIT_RANGE..INIT_RANGE)),
                InitKind::Bias => Tensor::zeros(&shape),
                InitKind::GateBias => {
                    Tensor::from_fn(&shape, |i| if (h..2 * h).contains(&i) { FORGET_BIAS } else { 0.0 })
                }
            };
            params.insert(name, t);
        }
        Ok(CaptionModel { config, params })
    }

    /// Builds a model from explicit tensors, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: Params) -> Result<Self> {
        config.validate()?;
        let layout = param_layout(&config);
        if layout.len() != params.len() {
            return Err(Error::InvalidField {
                field: "params".into(),
                reason: format!("expected {} tensors, found {}", layout.len(), params.len()),
            });
        }
        for (name, shape, _) in &layout {
            let t = params.get(name)?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Shape(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    shape
                )));
            }
        }
        Ok(CaptionModel { config, params })
    }

    /// Runs the image step and returns the state from which `<bos>` is fed.
    pub fn initial_state(&self, feature: &[f64], label: SentimentLabel) -> Result<DecodeState> {
        let mut tape = Tape::new();
        let vars = ModelVars::register(&mut tape, self)?;
        let feat = tape.constant(Tensor::vector(feature.to_vec()));
        let (state0, input0) = init_from_image(&mut tape, &vars, &self.config, feat, label)?;
        let state1 = vars.step(&mut tape, input0, &state0)?;
        Ok(DecodeState::capture(&tape, &state1, label))
    }

    /// Feeds `token` and returns the next-token logits with the new state.
    pub fn next_logits(&self, state: &DecodeState, token: usize) -> Result<(Vec<f64>, DecodeState)> {
        if token >= self.config.vocab_size {
            return Err(Error::UnknownToken(token));
        }
        let mut tape = Tape::new();
        let vars = ModelVars::register(&mut tape, self)?;
        let prev = state.restore(&mut tape);
        let x = vars.word_input(&mut tape, &self.config, token, state.label)?;
        let next = vars.step(&mut tape, x, &prev)?;
        let logits = vars.logits(&mut tape, next.h)?;
        Ok((tape.value(logits).data().to_vec(), DecodeState::capture(&tape, &next, state.label)))
    }
}

/// Recurrent state detached from any tape, used while decoding.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub s: Option<Vec<f64>>,
    pub label: SentimentLabel,
}

impl DecodeState {
    fn capture(tape: &Tape<'_>, st: &StepState, label: SentimentLabel) -> Self {
        DecodeState {
            h: tape.value(st.h).data().to_vec(),
            c: tape.value(st.c).data().to_vec(),
            s: st.s.map(|s| tape.value(s).data().to_vec()),
            label,
        }
    }

    fn restore(&self, tape: &mut Tape<'_>) -> StepState {
        StepState {
            h: tape.constant(Tensor::vector(self.h.clone())),
            c: tape.constant(Tensor::vector(self.c.clone())),
            s: self.s.as_ref().map(|s| tape.constant(Tensor::vector(s.clone()))),
        }
    }
}

/// Stacked gate weights on a tape.
#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w: Var,
    pub u: Var,
    pub b: Var,
    pub hidden: usize,
}

/// Sentiment-cell weights on a tape.
#[derive(Clone, Copy, Debug)]
pub struct SentimentCellVars {
    pub wx: Var,
    pub wh: Var,
    pub b: Var,
    pub init_w: Var,
    pub init_b: Var,
    pub table: Var,
}

/// Recurrent state of one step. `s` is present only for the flow variant.
#[derive(Clone, Copy, Debug)]
pub struct StepState {
    pub h: Var,
    pub c: Var,
    pub s: Option<Var>,
}

impl StepState {
    pub fn zeros(tape: &mut Tape<'_>, hidden: usize) -> Self {
        StepState {
            h: tape.constant(Tensor::zeros(&[hidden])),
            c: tape.constant(Tensor::zeros(&[hidden])),
            s: None,
        }
    }
}

struct Gates {
    input: Var,
    forget: Var,
    output: Var,
    candidate: Var,
}

fn gates(tape: &mut Tape<'_>, p: &LstmVars, x: Var, h_prev: Var) -> Result<Gates> {
    let wx = tape.matmul(p.w, x)?;
    let uh = tape.matmul(p.u, h_prev)?;
    let z = tape.add(wx, uh)?;
    let z = tape.add(z, p.b)?;
    let n = p.hidden;
    let zi = tape.slice(z, 0, n)?;
    let zf = tape.slice(z, n, n)?;
    let zo = tape.slice(z, 2 * n, n)?;
    let zg = tape.slice(z, 3 * n, n)?;
    Ok(Gates {
        input: tape.sigmoid(zi)?,
        forget: tape.sigmoid(zf)?,
        output: tape.sigmoid(zo)?,
        candidate: tape.tanh(zg)?,
    })
}

fn memory_update(tape: &mut Tape<'_>, g: &Gates, c_prev: Var) -> Result<Var> {
    let keep = tape.mul(g.forget, c_prev)?;
    let write = tape.mul(g.input, g.candidate)?;
    tape.add(keep, write)
}

/// Standard LSTM step.
pub fn lstm_step(tape: &mut Tape<'_>, p: &LstmVars, x: Var, prev: &StepState) -> Result<StepState> {
    let g = gates(tape, p, x, prev.h)?;
    let c = memory_update(tape, &g, prev.c)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(g.output, tc)?;
    Ok(StepState { h, c, s: None })
}

/// Appends the label's scalar value as a constant final coordinate.
pub fn direct_injection_input(tape: &mut Tape<'_>, word_embedding: Var, label: SentimentLabel) -> Result<Var> {
    let unit = tape.constant(Tensor::vector(vec![label.scalar()]));
    tape.concat(word_embedding, unit, 0)
}

/// `s₀ = tanh(W · E[label] + b)`.
pub fn init_sentiment_state(tape: &mut Tape<'_>, p: &SentimentCellVars, label: SentimentLabel) -> Result<Var> {
    let e = tape.embedding_lookup(p.table, label.index())?;
    let z = tape.matmul(p.init_w, e)?;
    let z = tape.add(z, p.init_b)?;
    tape.tanh(z)
}

/// LSTM step with a sentiment cell:
/// `s' = f ⊙ s + i ⊙ tanh(Wx·x + Wh·h + b)` and `h' = o ⊙ (tanh(c') + tanh(s'))`.
pub fn sentiment_flow_step(
    tape: &mut Tape<'_>,
    p: &LstmVars,
    sp: &SentimentCellVars,
    x: Var,
    prev: &StepState,
) -> Result<StepState> {
    let s_prev = prev.s.ok_or(Error::NoSentimentCell)?;
    let g = gates(tape, p, x, prev.h)?;
    let c = memory_update(tape, &g, prev.c)?;

    let zx = tape.matmul(sp.wx, x)?;
    let zh = tape.matmul(sp.wh, prev.h)?;
    let z = tape.add(zx, zh)?;
    let z = tape.add(z, sp.b)?;
    let cand = tape.tanh(z)?;
    let keep = tape.mul(g.forget, s_prev)?;
    let write = tape.mul(g.input, cand)?;
    let s = tape.add(keep, write)?;

    let tc = tape.tanh(c)?;
    let ts = tape.tanh(s)?;
    let sum = tape.add(tc, ts)?;
    let h = tape.mul(g.output, sum)?;
    Ok(StepState { h, c, s: Some(s) })
}

/// Zero `h`/`c` (plus `s₀` for flow) and the projected image feature as the
/// first step input.
pub fn init_from_image(
    tape: &mut Tape<'_>,
    vars: &ModelVars,
    config: &ModelConfig,
    feature: Var,
    label: SentimentLabel,
) -> Result<(StepState, Var)> {
    let flen = tape.value(feature).len();
    if flen != config.feature_dim {
        return Err(Error::Shape(format!(
            "image feature has {} values, model expects {}",
            flen, config.feature_dim
        )));
    }
    let mut state = StepState::zeros(tape, config.hidden_dim);
    if let Some(cell) = &vars.cell {
        state.s = Some(init_sentiment_state(tape, cell, label)?);
    }
    let projected = tape.matmul(vars.image_proj, feature)?;
    let input = match config.variant {
        Variant::Direct => direct_injection_input(tape, projected, label)?,
        _ => projected,
    };
    Ok((state, input))
}

/// Every parameter of a model registered on one tape.
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub variant: Variant,
    pub embed: Var,
    pub image_proj: Var,
    pub lstm: LstmVars,
    pub out_w: Var,
    pub out_b: Var,
    pub cell: Option<SentimentCellVars>,
    pub classifier: Option<ClassifierVars>,
}

impl ModelVars {
    pub fn register<'a>(tape: &mut Tape<'a>, model: &'a CaptionModel) -> Result<Self> {
        use names::*;
        let p = &model.params;
        let cfg = &model.config;
        let mut reg = |name: &str| -> Result<Var> { Ok(tape.param(name, p.get(name)?)) };
        let lstm = LstmVars { w: reg(LSTM_W)?, u: reg(LSTM_U)?, b: reg(LSTM_B)?, hidden: cfg.hidden_dim };
        let cell = if cfg.variant.has_sentiment_cell() {
            Some(SentimentCellVars {
                wx: reg(SENT_WX)?,
                wh: reg(SENT_WH)?,
                b: reg(SENT_B)?,
                init_w: reg(SENT_INIT_W)?,
                init_b: reg(SENT_INIT_B)?,
                table: reg(SENT_TABLE)?,
            })
        } else {
            None
        };
        let classifier = if cfg.variant.has_classifier() {
            Some(ClassifierVars { w1: reg(CLF_W1)?, b1: reg(CLF_B1)?, w2: reg(CLF_W2)?, b2: reg(CLF_B2)? })
        } else {
            None
        };
        Ok(ModelVars {
            variant: cfg.variant,
            embed: reg(EMBED)?,
            image_proj: reg(IMAGE_PROJ)?,
            lstm,
            out_w: reg(OUT_W)?,
            out_b: reg(OUT_B)?,
            cell,
            classifier,
        })
    }

    /// One recurrent step of whichever variant these weights belong to.
    pub fn step(&self, tape: &mut Tape<'_>, x: Var, prev: &StepState) -> Result<StepState> {
        match &self.cell {
            Some(cell) => sentiment_flow_step(tape, &self.lstm, cell, x, prev),
            None => lstm_step(tape, &self.lstm, x, prev),
        }
    }

    /// Word embedding, with the sentiment unit appended for direct injection.
    pub fn word_input(
        &self,
        tape: &mut Tape<'_>,
        config: &ModelConfig,
        token: usize,
        label: SentimentLabel,
    ) -> Result<Var> {
        if token >= config.vocab_size {
            return Err(Error::UnknownToken(token));
        }
        let e = tape.embedding_lookup(self.embed, token)?;
        match self.variant {
            Variant::Direct => direct_injection_input(tape, e, label),
            _ => Ok(e),
        }
    }

    pub fn logits(&self, tape: &mut Tape<'_>, h: Var) -> Result<Var> {
        let z = tape.matmul(self.out_w, h)?;
        tape.add(z, self.out_b)
    }
}

/// Outputs of a teacher-forced pass. `logits[t]` predicts `tokens[t + 1]`
/// and was produced from `states[t]`.
#[derive(Clone, Debug)]
pub struct SequenceOutput {
    pub logits: Vec<Var>,
    pub states: Vec<StepState>,
}

impl SequenceOutput {
    pub fn final_state(&self) -> Result<&StepState> {
        self.states.last().ok_or(Error::EmptySequence)
    }
}

/// Checks the `<bos> ... <eos>` framing and token range of a caption.
pub fn validate_tokens(tokens: &[usize], vocab_size: usize) -> Result<()> {
    if tokens.len() < 2 || tokens[0] != BOS || tokens[tokens.len() - 1] != EOS {
        return Err(Error::MalformedCaption(format!("{tokens:?} must start with <bos> and end with <eos>")));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab_size) {
        return Err(Error::UnknownToken(bad));
    }
    Ok(())
}

/// Teacher-forced pass over a caption: image step, then one step per token
/// before `<eos>`.
pub fn forward_sequence(
    tape: &mut Tape<'_>,
    vars: &ModelVars,
    config: &ModelConfig,
    record: &CaptionRecord,
) -> Result<SequenceOutput> {
    validate_tokens(&record.tokens, config.vocab_size)?;
    let feature = tape.constant(Tensor::vector(record.feature.clone()));
    let (state0, input0) = init_from_image(tape, vars, config, feature, record.label)?;
    let mut state = vars.step(tape, input0, &state0)?;

    let steps = record.tokens.len() - 1;
    let mut logits = Vec::with_capacity(steps);
    let mut states = Vec::with_capacity(steps);
    for &tok in &record.tokens[..steps] {
        let x = vars.word_input(tape, config, tok, record.label)?;
        state = vars.step(tape, x, &state)?;
        logits.push(vars.logits(tape, state.h)?);
        states.push(state);
    }
    Ok(SequenceOutput { logits, states })
}
