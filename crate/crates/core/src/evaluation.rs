//! Corpus BLEU-1..4, ROUGE-L, and sentiment-caption percentages.
//!
//! All metrics work on surface tokens. A caption counts as sentimental if it
//! contains any lexicon word, and as matched if at least one of those words
//! has the requested polarity.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_disjoint, tokenize, RawRecord, Vocabulary};
use crate::decoder::{beam_search, BeamConfig};
use crate::error::{Error, Result};
use crate::model::{CaptionModel, SentimentLabel};

/// Recall weight β² in the ROUGE-L F-measure.
pub const ROUGE_BETA_SQ: f64 = 1.2;
pub const MAX_BLEU_ORDER: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_default() += 1;
        }
    }
    m
}

fn check_corpus(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if candidates.len() != references.len() {
        return Err(Error::LengthMismatch(candidates.len(), references.len()));
    }
    if references.iter().any(Vec::is_empty) {
        return Err(Error::InvalidField { field: "references".into(), reason: "every candidate needs a reference".into() });
    }
    Ok(())
}

/// Corpus BLEU up to order `n`: clipped n-gram precisions combined by
/// geometric mean, times the brevity penalty `exp(1 - r/c)` when the
/// candidates are shorter than the closest references. No smoothing, so a
/// zero precision at any order gives 0.
pub fn bleu(candidates: &[Vec<String>], references: &[Vec<Vec<String>>], n: usize) -> Result<f64> {
    check_corpus(candidates, references)?;
    if n == 0 || n > MAX_BLEU_ORDER {
        return Err(Error::InvalidField { field: "n".into(), reason: format!("BLEU order must be 1..={MAX_BLEU_ORDER}") });
    }
    let mut matched = vec![0usize; n];
    let mut total = vec![0usize; n];
    let (mut c_len, mut r_len) = (0usize, 0usize);

    for (cand, refs) in candidates.iter().zip(references) {
        c_len += cand.len();
        // Closest reference length, shorter on ties.
        r_len += refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(cand.len()), l))
            .unwrap_or(0);
        for k in 1..=n {
            let counts = ngram_counts(cand, k);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in refs {
                for (g, c) in ngram_counts(r, k) {
                    let e = max_ref.entry(g).or_default();
                    *e = (*e).max(c);
                }
            }
            for (g, c) in counts {
                matched[k - 1] += c.min(max_ref.get(g).copied().unwrap_or(0));
            }
            total[k - 1] += cand.len().saturating_sub(k - 1);
        }
    }
    if c_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for k in 0..n {
        if matched[k] == 0 || total[k] == 0 {
            return Ok(0.0);
        }
        log_sum += (matched[k] as f64 / total[k] as f64).ln();
    }
    let bp = if c_len < r_len { (1.0 - r_len as f64 / c_len as f64).exp() } else { 1.0 };
    Ok(bp * (log_sum / n as f64).exp())
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure of one candidate against one reference.
pub fn rouge_l_pair(candidate: &[String], reference: &[String]) -> f64 {
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    (1.0 + ROUGE_BETA_SQ) * p * r / (r + ROUGE_BETA_SQ * p)
}

/// Mean over candidates of the best ROUGE-L F-measure among their references.
pub fn rouge_l(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64> {
    check_corpus(candidates, references)?;
    let sum: f64 = candidates
        .iter()
        .zip(references)
        .map(|(c, refs)| refs.iter().map(|r| rouge_l_pair(c, r)).fold(0.0, f64::max))
        .sum();
    Ok(sum / candidates.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SentimentStats {
    /// Captions containing at least one lexicon word, in percent.
    pub total_pct: f64,
    /// Captions containing a lexicon word of the requested polarity, in percent.
    pub matched_pct: f64,
    pub count: usize,
}

/// Positive and negative sentiment word lists.
#[derive(Clone, Debug, PartialEq)]
pub struct Lexicon {
    positive: BTreeSet<String>,
    negative: BTreeSet<String>,
}

impl Lexicon {
    pub fn new(positive: &[String], negative: &[String]) -> Result<Self> {
        check_disjoint(positive, negative)?;
        Ok(Lexicon {
            positive: positive.iter().map(|w| w.to_lowercase()).collect(),
            negative: negative.iter().map(|w| w.to_lowercase()).collect(),
        })
    }

    /// Polarities of the lexicon words present in `words`.
    pub fn polarities(&self, words: &[String]) -> BTreeSet<SentimentLabel> {
        let mut out = BTreeSet::new();
        for w in words {
            if self.positive.contains(w) {
                out.insert(SentimentLabel::Pos);
            } else if self.negative.contains(w) {
                out.insert(SentimentLabel::Neg);
            }
        }
        out
    }
}

pub fn sentiment_stats(captions: &[(Vec<String>, SentimentLabel)], lexicon: &Lexicon) -> SentimentStats {
    if captions.is_empty() {
        return SentimentStats::default();
    }
    let (mut total, mut matched) = (0usize, 0usize);
    for (words, requested) in captions {
        let found = lexicon.polarities(words);
        if !found.is_empty() {
            total += 1;
            if found.contains(requested) {
                matched += 1;
            }
        }
    }
    let n = captions.len() as f64;
    SentimentStats {
        total_pct: 100.0 * total as f64 / n,
        matched_pct: 100.0 * matched as f64 / n,
        count: captions.len(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
}

impl MetricScores {
    pub fn compute(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<Self> {
        Ok(MetricScores {
            bleu1: bleu(candidates, references, 1)?,
            bleu2: bleu(candidates, references, 2)?,
            bleu3: bleu(candidates, references, 3)?,
            bleu4: bleu(candidates, references, 4)?,
            rouge_l: rouge_l(candidates, references)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCaption {
    pub image_id: String,
    pub label: SentimentLabel,
    pub caption: String,
    /// Caption for the opposite polarity; absent for neutral requests.
    pub flipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Scores over every test record.
    pub overall: MetricScores,
    /// Scores per requested label.
    pub per_label: BTreeMap<SentimentLabel, MetricScores>,
    /// Sentiment percentages over the positive and negative requests.
    pub sentiment: SentimentStats,
    /// The same percentages after flipping each request's label.
    pub flipped: SentimentStats,
    pub captions: Vec<GeneratedCaption>,
}

impl EvalReport {
    pub fn total_pct(&self) -> f64 {
        self.sentiment.total_pct
    }

    pub fn matched_pct(&self) -> f64 {
        self.sentiment.matched_pct
    }

    pub fn total_flipped_pct(&self) -> f64 {
        self.flipped.total_pct
    }

    pub fn matched_flipped_pct(&self) -> f64 {
        self.flipped.matched_pct
    }

    /// `metric value` lines.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: f64| {
            let _ = writeln!(out, "{k} {v:.6}");
        };
        let o = &self.overall;
        put("bleu1", o.bleu1);
        put("bleu2", o.bleu2);
        put("bleu3", o.bleu3);
        put("bleu4", o.bleu4);
        put("rouge_l", o.rouge_l);
        put("total_pct", self.total_pct());
        put("matched_pct", self.matched_pct());
        put("total_flipped_pct", self.total_flipped_pct());
        put("matched_flipped_pct", self.matched_flipped_pct());
        out
    }

    /// Benchmark metrics per test set and sentiment percentages, as plain tables.
    pub fn to_tables(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:>6} {:>6} {:>6} {:>6} {:>8}", "set", "B-1", "B-2", "B-3", "B-4", "ROUGE-L");
        let mut row = |name: &str, m: &MetricScores| {
            let _ = writeln!(
                out,
                "{:<8} {:>6.3} {:>6.3} {:>6.3} {:>6.3} {:>8.3}",
                name, m.bleu1, m.bleu2, m.bleu3, m.bleu4, m.rouge_l
            );
        };
        for (label, m) in &self.per_label {
            row(&label.as_str().to_uppercase(), m);
        }
        row("ALL", &self.overall);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:>8} {:>8} {:>10} {:>12}", "Total", "Matched", "Total (F)", "Matched (F)");
        let _ = writeln!(
            out,
            "{:>7.1}% {:>7.1}% {:>9.1}% {:>11.1}%",
            self.total_pct(),
            self.matched_pct(),
            self.total_flipped_pct(),
            self.matched_flipped_pct()
        );
        out
    }
}

/// Produces a caption for a test request.
pub trait Captioner: Sync {
    fn caption(&self, record: &RawRecord, label: SentimentLabel) -> Result<Vec<String>>;
}

/// Top beam-search caption of a trained model.
pub struct BeamCaptioner<'a> {
    pub model: &'a CaptionModel,
    pub vocab: &'a Vocabulary,
    pub beam: BeamConfig,
}

impl Captioner for BeamCaptioner<'_> {
    fn caption(&self, record: &RawRecord, label: SentimentLabel) -> Result<Vec<String>> {
        let best = beam_search(self.model, &record.feature, label, self.beam.beam_size, self.beam.max_len)?;
        Ok(best.first().map(|c| self.vocab.words(&c.tokens)).unwrap_or_default())
    }
}

/// Captions every test record under its own label (and, for positive and
/// negative records, the flipped label) and scores the results. References
/// for a record are all test captions sharing its image id and label.
pub fn evaluate(captioner: &impl Captioner, test: &[RawRecord], lexicon: &Lexicon) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut groups: HashMap<(&str, SentimentLabel), Vec<Vec<String>>> = HashMap::new();
    for r in test {
        groups.entry((r.image_id.as_str(), r.label)).or_default().push(tokenize(&r.caption));
    }

    let generated: Vec<(Vec<String>, Option<Vec<String>>)> = test
        .par_iter()
        .map(|r| {
            let own = captioner.caption(r, r.label)?;
            let flipped = match r.label.flip() {
                Ok(other) => Some(captioner.caption(r, other)?),
                Err(_) => None,
            };
            Ok((own, flipped))
        })
        .collect::<Result<_>>()?;

    let refs: Vec<Vec<Vec<String>>> = test.iter().map(|r| groups[&(r.image_id.as_str(), r.label)].clone()).collect();
    let cands: Vec<Vec<String>> = generated.iter().map(|g| g.0.clone()).collect();
    let overall = MetricScores::compute(&cands, &refs)?;

    let mut per_label = BTreeMap::new();
    for label in SentimentLabel::ALL {
        let idx: Vec<usize> = (0..test.len()).filter(|&i| test[i].label == label).collect();
        if idx.is_empty() {
            continue;
        }
        let c: Vec<_> = idx.iter().map(|&i| cands[i].clone()).collect();
        let r: Vec<_> = idx.iter().map(|&i| refs[i].clone()).collect();
        per_label.insert(label, MetricScores::compute(&c, &r)?);
    }

    let mut requests = Vec::new();
    let mut flipped_requests = Vec::new();
    for (r, (own, flipped)) in test.iter().zip(&generated) {
        if let (Some(f), Ok(other)) = (flipped, r.label.flip()) {
            requests.push((own.clone(), r.label));
            flipped_requests.push((f.clone(), other));
        }
    }

    let captions = test
        .iter()
        .zip(&generated)
        .map(|(r, (own, f))| GeneratedCaption {
            image_id: r.image_id.clone(),
            label: r.label,
            caption: own.join(" "),
            flipped: f.as_ref().map(|w| w.join(" ")),
        })
        .collect();

    Ok(EvalReport {
        overall,
        per_label,
        sentiment: sentiment_stats(&requests, lexicon),
        flipped: sentiment_stats(&flipped_requests, lexicon),
        captions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        let c = vec![w("a dog runs in the park"), w("a cat sleeps in the room")];
        let r: Vec<_> = c.iter().map(|x| vec![x.clone()]).collect();
        for n in 1..=4 {
            assert_eq!(bleu(&c, &r, n).unwrap(), 1.0);
        }
        let d = vec![vec![w("x y z")], vec![w("u v w q")]];
        assert_eq!(bleu(&c, &d, 1).unwrap(), 0.0);
        assert!(matches!(bleu(&[], &[], 1), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn bleu_clipping() {
        // Clipped unigram precision 1/3; c = 3 > r = 2 so no brevity penalty.
        let s = bleu(&[w("the the the")], &[vec![w("the cat")]], 1).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bleu_brevity_penalty() {
        // p1 = 1, c = 2, r = 4.
        let s = bleu(&[w("the cat")], &[vec![w("the cat sat down")]], 1).unwrap();
        assert!((s - (1.0f64 - 2.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l(&[w("a b c")], &[vec![w("a b c")]]).unwrap(), 1.0);
        assert_eq!(rouge_l(&[w("a b c")], &[vec![w("x y")]]).unwrap(), 0.0);
        // LCS 3, P = 3/4, R = 1.
        let (p, r) = (0.75, 1.0);
        let want = (1.0 + ROUGE_BETA_SQ) * p * r / (r + ROUGE_BETA_SQ * p);
        let got = rouge_l(&[w("a b c d")], &[vec![w("a c d")]]).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn rouge_uses_best_reference() {
        let got = rouge_l(&[w("a b c")], &[vec![w("x y"), w("a b c")]]).unwrap();
        assert_eq!(got, 1.0);
    }

    fn lexicon() -> Lexicon {
        Lexicon::new(&["nice".into(), "happy".into()], &["ugly".into()]).unwrap()
    }

    #[test]
    fn sentiment_stat_definitions() {
        let lex = lexicon();
        let s = sentiment_stats(&[(w("a nice dog"), SentimentLabel::Pos)], &lex);
        assert_eq!((s.total_pct, s.matched_pct), (100.0, 100.0));
        let s = sentiment_stats(&[(w("a dog runs"), SentimentLabel::Pos)], &lex);
        assert_eq!((s.total_pct, s.matched_pct), (0.0, 0.0));
        let s = sentiment_stats(
            &[
                (w("a nice ugly dog"), SentimentLabel::Neg),
                (w("a nice dog"), SentimentLabel::Neg),
                (w("a dog"), SentimentLabel::Neg),
                (w("an ugly dog"), SentimentLabel::Neg),
            ],
            &lex,
        );
        assert_eq!((s.total_pct, s.matched_pct), (75.0, 50.0));
        assert!(matches!(
            Lexicon::new(&["bad".into()], &["bad".into()]),
            Err(Error::OverlappingLexicons(_))
        ));
    }

    /// Returns the reference caption when asked for the record's own label.
    struct CopyReferences;

    impl Captioner for CopyReferences {
        fn caption(&self, record: &RawRecord, label: SentimentLabel) -> Result<Vec<String>> {
            if label == record.label {
                Ok(tokenize(&record.caption))
            } else {
                Ok(tokenize(&record.caption).into_iter().map(|t| if t == "nice" { "ugly".into() } else { t }).collect())
            }
        }
    }

    fn records() -> Vec<RawRecord> {
        let r = |id: &str, c: &str, l| RawRecord { image_id: id.into(), caption: c.into(), label: l, feature: vec![] };
        vec![
            r("i0", "a dog runs in the park", SentimentLabel::Neu),
            r("i0", "a nice dog runs in the park", SentimentLabel::Pos),
            r("i1", "a cat sleeps in the big room", SentimentLabel::Neu),
            r("i1", "a ugly cat sleeps in the room", SentimentLabel::Neg),
        ]
    }

    #[test]
    fn copying_references_scores_one() {
        let rep = evaluate(&CopyReferences, &records(), &lexicon()).unwrap();
        let o = rep.overall;
        assert_eq!([o.bleu1, o.bleu2, o.bleu3, o.bleu4, o.rouge_l], [1.0; 5]);
        assert_eq!(rep.sentiment.count, 2);
        assert_eq!((rep.total_pct(), rep.matched_pct()), (100.0, 100.0));
        // The flipped positive caption becomes negative; the negative one keeps "ugly".
        assert_eq!((rep.total_flipped_pct(), rep.matched_flipped_pct()), (100.0, 50.0));
        assert_eq!(rep, evaluate(&CopyReferences, &records(), &lexicon()).unwrap());
        assert!(rep.to_tables().contains("Matched (F)"));
        assert!(rep.to_key_values().starts_with("bleu1 1.000000"));
    }

    proptest::proptest! {
        #[test]
        fn scores_and_percentages_are_bounded(
            pairs in proptest::collection::vec(
                (proptest::collection::vec(0usize..8, 0..7), proptest::collection::vec(0usize..8, 1..7), 0usize..3),
                1..12,
            )
        ) {
            let vocab = ["a", "dog", "nice", "ugly", "happy", "the", "park", "runs"];
            let words = |ids: &Vec<usize>| ids.iter().map(|&i| vocab[i].to_string()).collect::<Vec<_>>();
            let cands: Vec<_> = pairs.iter().map(|p| words(&p.0)).collect();
            let refs: Vec<_> = pairs.iter().map(|p| vec![words(&p.1)]).collect();
            for n in 1..=4 {
                let b = bleu(&cands, &refs, n).unwrap();
                proptest::prop_assert!((0.0..=1.0).contains(&b));
            }
            let r = rouge_l(&cands, &refs).unwrap();
            proptest::prop_assert!((0.0..=1.0 + 1e-12).contains(&r));
            let requests: Vec<_> = pairs.iter().map(|p| (words(&p.0), SentimentLabel::ALL[p.2])).collect();
            let s = sentiment_stats(&requests, &lexicon());
            proptest::prop_assert!(0.0 <= s.matched_pct && s.matched_pct <= s.total_pct && s.total_pct <= 100.0);
        }
    }
}
