//! Finite-difference check of the analytic gradients of the full training loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CaptionRecord, BOS, EOS};
use crate::error::{Error, Result};
use crate::losses::DEFAULT_LAMBDA;
use crate::model::{CaptionModel, ModelConfig, SentimentLabel, Variant};
use crate::trainer::{record_gradients, record_loss};

/// Step of the fourth-order central difference. Larger than the usual
/// second-order step: truncation error is O(ε⁴), and roundoff in the loss
/// shrinks as 1/ε.
pub const DEFAULT_EPSILON: f64 = 1e-3;
/// Denominator floor of the relative error, so that two near-zero
/// gradients do not produce a large ratio.
pub const RELATIVE_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub variant: Variant,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    /// Words between `<bos>` and `<eos>`.
    pub words: usize,
    pub label: SentimentLabel,
    pub epsilon: f64,
    pub seed: u64,
}

impl GradCheckConfig {
    pub fn tiny(variant: Variant, seed: u64) -> Self {
        GradCheckConfig {
            variant,
            vocab_size: 11,
            embed_dim: 8,
            hidden_dim: 6,
            feature_dim: 5,
            words: 2,
            label: SentimentLabel::Pos,
            epsilon: DEFAULT_EPSILON,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub variant: Variant,
    pub checked: usize,
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst element.
    pub worst: Option<(String, usize)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Random model with weights in ±0.5 (wider than training init, so gates
/// leave their linear regime) and a random caption.
pub fn random_problem(cfg: &GradCheckConfig) -> Result<(CaptionModel, CaptionRecord)> {
    if cfg.vocab_size <= EOS + 2 {
        return Err(Error::InvalidField { field: "vocab_size".into(), reason: "needs room for word tokens".into() });
    }
    let mc = ModelConfig::with_dims(cfg.variant, cfg.vocab_size, cfg.feature_dim, cfg.embed_dim, cfg.hidden_dim);
    let mut model = CaptionModel::init(mc, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    for (_, t) in model.params.iter_mut() {
        for v in t.data_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    let mut tokens = vec![BOS];
    tokens.extend((0..cfg.words).map(|_| rng.gen_range(EOS + 2..cfg.vocab_size)));
    tokens.push(EOS);
    let feature = (0..cfg.feature_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Ok((model, CaptionRecord { image_id: "gradcheck".into(), feature, tokens, label: cfg.label }))
}

/// Compares every parameter element's analytic gradient to a five-point
/// central difference.
pub fn check_gradients(model: &CaptionModel, record: &CaptionRecord, lambda: f64, epsilon: f64) -> Result<GradCheckReport> {
    let (_, grads) = record_gradients(model, record, lambda)?;
    let mut probe = model.clone();
    let names: Vec<String> = model.params.names().map(str::to_string).collect();
    let mut report = GradCheckReport { variant: model.config.variant, checked: 0, max_relative_error: 0.0, worst: None };
    for name in names {
        let analytic = grads.get(&name).ok_or_else(|| Error::MissingGradient(name.clone()))?.data().to_vec();
        for (i, &a) in analytic.iter().enumerate() {
            let orig = probe.params.get(&name)?.data()[i];
            let mut loss_at = |delta: f64| -> Result<f64> {
                probe.params.get_mut(&name)?.data_mut()[i] = orig + delta;
                Ok(record_loss(&probe, record, lambda)?.total)
            };
            let (p1, m1) = (loss_at(epsilon)?, loss_at(-epsilon)?);
            let (p2, m2) = (loss_at(2.0 * epsilon)?, loss_at(-2.0 * epsilon)?);
            probe.params.get_mut(&name)?.data_mut()[i] = orig;
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * epsilon);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}

pub fn run(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let (model, record) = random_problem(cfg)?;
    check_gradients(&model, &record, DEFAULT_LAMBDA, cfg.epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_matches_numeric_for_every_variant() {
        for variant in Variant::ALL {
            let rep = run(&GradCheckConfig::tiny(variant, 3)).unwrap();
            assert!(rep.max_relative_error < 1e-5, "{variant:?}: {rep:?}");
            assert!(rep.checked > 0);
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        assert!(relative_error(1.0, 1.1) > 0.05);
        assert_eq!(relative_error(0.0, 0.0), 0.0);
    }
}
