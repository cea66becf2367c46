//! Caption records, vocabulary, corpus merging, batching, and the synthetic
//! templated corpus.
//!
//! Dataset files hold one JSON object per line:
//!
//! ```text
//! {"image_id":"train-03-1","caption":"a happy dog runs in the park","label":"pos","feature":[0.0,1.02,...]}
//! ```
//!
//! Lexicon files hold one word per line.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SentimentLabel;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Default vocabulary cutoff for the synthetic corpus.
pub const SYNTHETIC_MIN_COUNT: usize = 1;
/// Default vocabulary cutoff for external corpora.
pub const EXTERNAL_MIN_COUNT: usize = 5;
/// Desk-scale mini-batch size.
pub const DEFAULT_BATCH_SIZE: usize = 16;
/// Mini-batch size used for the full-scale setting.
pub const FULL_BATCH_SIZE: usize = 150;

/// Lowercased whitespace tokens.
pub fn tokenize(caption: &str) -> Vec<String> {
    caption.split_whitespace().map(str::to_lowercase).collect()
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ")
}

/// Token ↔ id map. Ids 0..4 are `<pad>`, `<bos>`, `<eos>`, `<unk>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps tokens seen at least `min_count` times, ordered by descending
    /// frequency with lexicographic tie-break.
    pub fn build<S: AsRef<str>>(captions: &[S], min_count: usize) -> Result<Self> {
        if captions.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for c in captions {
            for t in tokenize(c.as_ref()) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> =
            counts.into_iter().filter(|(t, n)| *n >= min_count && !RESERVED.contains(&t.as_str())).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = RESERVED.iter().map(|s| s.to_string()).chain(kept.into_iter().map(|(t, _)| t)).collect();
        Vocabulary::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::InvalidField {
                field: "vocabulary".into(),
                reason: "must start with <pad>, <bos>, <eos>, <unk>".into(),
            });
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidField { field: "vocabulary".into(), reason: format!("duplicate token `{t}`") });
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `<bos> w₁ … wₙ <eos>`.
    pub fn encode(&self, caption: &str) -> Vec<usize> {
        let mut ids = vec![BOS];
        ids.extend(tokenize(caption).iter().map(|t| self.id(t)));
        ids.push(EOS);
        ids
    }

    /// Surface words of a token sequence, dropping `<pad>`, `<bos>` and `<eos>`.
    pub fn words(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&i| !matches!(i, PAD | BOS | EOS))
            .map(|&i| self.token(i).unwrap_or(RESERVED[UNK]).to_string())
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        detokenize(&self.words(ids))
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// A dataset line before tokenization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub image_id: String,
    pub caption: String,
    pub label: SentimentLabel,
    pub feature: Vec<f64>,
}

/// An encoded example: `tokens` start with `<bos>` and end with `<eos>`.
#[derive(Clone, Debug, PartialEq)]
pub struct CaptionRecord {
    pub image_id: String,
    pub feature: Vec<f64>,
    pub tokens: Vec<usize>,
    pub label: SentimentLabel,
}

impl CaptionRecord {
    pub fn encode(raw: &RawRecord, vocab: &Vocabulary) -> Self {
        CaptionRecord {
            image_id: raw.image_id.clone(),
            feature: raw.feature.clone(),
            tokens: vocab.encode(&raw.caption),
            label: raw.label,
        }
    }
}

pub fn encode_corpus(raw: &[RawRecord], vocab: &Vocabulary) -> Vec<CaptionRecord> {
    raw.iter().map(|r| CaptionRecord::encode(r, vocab)).collect()
}

pub fn read_dataset(path: &Path) -> Result<Vec<RawRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, records: &[RawRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_lexicon(path: &Path) -> Result<Vec<String>> {
    let reader = BufReader::new(File::open(path)?);
    let mut words = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let w = line.trim();
        if !w.is_empty() && !w.starts_with('#') {
            words.push(w.to_lowercase());
        }
    }
    Ok(words)
}

pub fn write_lexicon(path: &Path, words: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for word in words {
        writeln!(w, "{word}")?;
    }
    w.flush()?;
    Ok(())
}

/// Labels factual captions neutral and appends the positive and negative
/// sets unchanged apart from their labels. No rebalancing.
pub fn merge_corpora(factual: &[RawRecord], positive: &[RawRecord], negative: &[RawRecord]) -> Vec<RawRecord> {
    let relabel = |rs: &[RawRecord], label: SentimentLabel| {
        rs.iter().map(move |r| RawRecord { label, ..r.clone() }).collect::<Vec<_>>()
    };
    let mut out = relabel(factual, SentimentLabel::Neu);
    out.extend(relabel(positive, SentimentLabel::Pos));
    out.extend(relabel(negative, SentimentLabel::Neg));
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub noun: String,
    pub verb: String,
    pub place: String,
}

fn default_train() -> usize {
    10
}
fn default_one() -> usize {
    1
}
fn default_noise() -> f64 {
    0.05
}
fn default_seed() -> u64 {
    7
}

/// Description of a templated corpus. Each scene yields, per jitter, one
/// image feature with a neutral, a positive and a negative caption.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCorpusSpec {
    pub scenes: Vec<Scene>,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
    /// Feature jitters per scene in the training split.
    #[serde(default = "default_train")]
    pub train_per_scene: usize,
    #[serde(default = "default_one")]
    pub val_per_scene: usize,
    #[serde(default = "default_one")]
    pub test_per_scene: usize,
    /// Amplitude of the uniform jitter added to the one-hot scene feature.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

const DEFAULT_SCENES: [(&str, &str, &str); 20] = [
    ("dog", "runs", "park"),
    ("cat", "sleeps", "room"),
    ("man", "walks", "street"),
    ("woman", "sits", "kitchen"),
    ("boy", "plays", "yard"),
    ("girl", "swims", "lake"),
    ("horse", "grazes", "field"),
    ("bird", "rests", "forest"),
    ("surfer", "waits", "beach"),
    ("skier", "climbs", "snow"),
    ("chef", "cooks", "kitchen"),
    ("elephant", "stands", "field"),
    ("giraffe", "eats", "forest"),
    ("bear", "drinks", "lake"),
    ("child", "jumps", "park"),
    ("cow", "lies", "field"),
    ("duck", "floats", "lake"),
    ("player", "kicks", "yard"),
    ("zebra", "looks", "snow"),
    ("sheep", "wanders", "street"),
];

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        let words = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect();
        SyntheticCorpusSpec {
            scenes: DEFAULT_SCENES
                .iter()
                .map(|(n, v, p)| Scene { noun: n.to_string(), verb: v.to_string(), place: p.to_string() })
                .collect(),
            positive: words(&["happy", "beautiful", "lovely", "cute", "nice", "pretty"]),
            negative: words(&["sad", "ugly", "dirty", "lonely", "creepy", "gloomy"]),
            train_per_scene: default_train(),
            val_per_scene: default_one(),
            test_per_scene: default_one(),
            noise: default_noise(),
            seed: default_seed(),
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let invalid = |field: &str, reason: &str| Err(Error::InvalidField { field: field.into(), reason: reason.into() });
        if self.scenes.is_empty() {
            return invalid("scenes", "inventory is empty");
        }
        if self.positive.is_empty() {
            return invalid("positive", "lexicon is empty");
        }
        if self.negative.is_empty() {
            return invalid("negative", "lexicon is empty");
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return invalid("noise", "must be a finite non-negative amplitude");
        }
        check_disjoint(&self.positive, &self.negative)?;
        let lexicon: BTreeSet<&str> = self.positive.iter().chain(&self.negative).map(String::as_str).collect();
        for (i, s) in self.scenes.iter().enumerate() {
            for w in [&s.noun, &s.verb, &s.place] {
                if w.split_whitespace().count() != 1 {
                    return invalid("scenes", &format!("scene {i}: `{w}` must be a single token"));
                }
                if lexicon.contains(w.as_str()) || TEMPLATE_WORDS.contains(&w.as_str()) {
                    return invalid("scenes", &format!("scene {i}: `{w}` collides with a lexicon or template word"));
                }
            }
        }
        Ok(())
    }
}

const TEMPLATE_WORDS: [&str; 3] = ["a", "in", "the"];

/// Errors with the shared words if the two lexicons overlap.
pub fn check_disjoint(positive: &[String], negative: &[String]) -> Result<()> {
    let pos: BTreeSet<&str> = positive.iter().map(String::as_str).collect();
    let shared: Vec<String> = negative.iter().filter(|w| pos.contains(w.as_str())).cloned().collect();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(Error::OverlappingLexicons(shared))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Vec<RawRecord>,
    pub val: Vec<RawRecord>,
    pub test: Vec<RawRecord>,
}

/// `a <noun> <verb> in the <place>`, with an adjective before the noun when given.
pub fn template_caption(scene: &Scene, adjective: Option<&str>) -> String {
    match adjective {
        Some(adj) => format!("a {adj} {} {} in the {}", scene.noun, scene.verb, scene.place),
        None => format!("a {} {} in the {}", scene.noun, scene.verb, scene.place),
    }
}

pub fn generate_synthetic(spec: &SyntheticCorpusSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.scenes.len();
    let mut split = |name: &str, per_scene: usize| {
        let mut out = Vec::with_capacity(dim * per_scene * 3);
        for (si, scene) in spec.scenes.iter().enumerate() {
            for j in 0..per_scene {
                let feature: Vec<f64> = (0..dim)
                    .map(|k| {
                        let base = if k == si { 1.0 } else { 0.0 };
                        let jitter = if spec.noise > 0.0 { rng.gen_range(-spec.noise..=spec.noise) } else { 0.0 };
                        base + jitter
                    })
                    .collect();
                let image_id = format!("{name}-{si:02}-{j}");
                for label in [SentimentLabel::Neu, SentimentLabel::Pos, SentimentLabel::Neg] {
                    let adjective = match label {
                        SentimentLabel::Neu => None,
                        SentimentLabel::Pos => spec.positive.choose(&mut rng),
                        SentimentLabel::Neg => spec.negative.choose(&mut rng),
                    };
                    out.push(RawRecord {
                        image_id: image_id.clone(),
                        caption: template_caption(scene, adjective.map(String::as_str)),
                        label,
                        feature: feature.clone(),
                    });
                }
            }
        }
        out
    };
    let train = split("train", spec.train_per_scene);
    let val = split("val", spec.val_per_scene);
    let test = split("test", spec.test_per_scene);
    Ok(SyntheticCorpus { train, val, test })
}

/// Padded mini-batch. Row `i` holds `lengths[i]` real tokens followed by
/// `<pad>`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub image_ids: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub tokens: Vec<Vec<usize>>,
    pub lengths: Vec<usize>,
    pub labels: Vec<SentimentLabel>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// The unpadded record at row `i`.
    pub fn record(&self, i: usize) -> CaptionRecord {
        CaptionRecord {
            image_id: self.image_ids[i].clone(),
            feature: self.features[i].clone(),
            tokens: self.tokens[i][..self.lengths[i]].to_vec(),
            label: self.labels[i],
        }
    }
}

/// Seeded shuffle followed by consecutive chunks; the last one may be short.
pub fn make_batches(corpus: &[CaptionRecord], batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::InvalidField { field: "batch_size".into(), reason: "must be at least 1".into() });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order
        .chunks(batch_size)
        .map(|idx| {
            let width = idx.iter().map(|&i| corpus[i].tokens.len()).max().unwrap_or(0);
            let mut b = Batch {
                indices: idx.to_vec(),
                image_ids: Vec::with_capacity(idx.len()),
                features: Vec::with_capacity(idx.len()),
                tokens: Vec::with_capacity(idx.len()),
                lengths: Vec::with_capacity(idx.len()),
                labels: Vec::with_capacity(idx.len()),
            };
            for &i in idx {
                let r = &corpus[i];
                let mut row = r.tokens.clone();
                row.resize(width, PAD);
                b.image_ids.push(r.image_id.clone());
                b.features.push(r.feature.clone());
                b.tokens.push(row);
                b.lengths.push(r.tokens.len());
                b.labels.push(r.label);
            }
            b
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(caption: &str, label: SentimentLabel) -> RawRecord {
        RawRecord { image_id: "img".into(), caption: caption.into(), label, feature: vec![0.0] }
    }

    #[test]
    fn vocab_threshold_and_order() {
        let v = Vocabulary::build(&["a a b"], 2).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.token(4), Some("a"));
        assert_eq!(v.id("b"), UNK);

        let v = Vocabulary::build(&["a a b"], 1).unwrap();
        assert!(v.contains("a") && v.contains("b"));

        let v = Vocabulary::build(&["c b", "b c", "a"], 1).unwrap();
        assert!(v.id("b") < v.id("c"));
        assert_eq!(v.id("a"), 6);

        assert!(matches!(Vocabulary::build::<&str>(&[], 1), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn vocab_serde_round_trip() {
        let v = Vocabulary::build(&["the cat sat", "the dog"], 1).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(v, back);
        assert!(serde_json::from_str::<Vocabulary>(r#"["x"]"#).is_err());
    }

    #[test]
    fn encode_frames_caption() {
        let v = Vocabulary::build(&["a dog runs"], 1).unwrap();
        let ids = v.encode("A dog flies");
        assert_eq!(ids.first(), Some(&BOS));
        assert_eq!(ids.last(), Some(&EOS));
        assert_eq!(ids[3], UNK);
        assert_eq!(v.decode(&v.encode("a dog runs")), "a dog runs");
    }

    proptest! {
        #[test]
        fn detokenize_inverts_tokenize(words in proptest::collection::vec("[a-z]{1,6}", 1..8)) {
            let caption = words.join(" ");
            let v = Vocabulary::build(&[caption.as_str()], 1).unwrap();
            prop_assert_eq!(v.decode(&v.encode(&caption)), caption.clone());
            prop_assert_eq!(detokenize(&tokenize(&caption)), caption);
        }
    }

    #[test]
    fn merge_counts_and_labels() {
        let f: Vec<_> = (0..10).map(|i| raw(&format!("f {i}"), SentimentLabel::Pos)).collect();
        let p: Vec<_> = (0..2).map(|i| raw(&format!("p {i}"), SentimentLabel::Pos)).collect();
        let n: Vec<_> = (0..3).map(|i| raw(&format!("n {i}"), SentimentLabel::Neg)).collect();
        let m = merge_corpora(&f, &p, &n);
        assert_eq!(m.len(), 15);
        let count = |l| m.iter().filter(|r| r.label == l).count();
        assert_eq!((count(SentimentLabel::Neu), count(SentimentLabel::Pos), count(SentimentLabel::Neg)), (10, 2, 3));
        assert_eq!(m[0].caption, "f 0");
        assert_eq!(m[14].caption, "n 2");

        let only = merge_corpora(&f, &[], &[]);
        assert!(only.iter().all(|r| r.label == SentimentLabel::Neu));
    }

    #[test]
    fn merge_full_scale_counts() {
        // Caption counts of the factual and the two sentiment training sets.
        let r = raw("x", SentimentLabel::Neu);
        let f = vec![r.clone(); 414_113];
        let p = vec![r.clone(); 2_380];
        let n = vec![r; 2_039];
        assert_eq!(merge_corpora(&f, &p, &n).len(), 418_532);
    }

    #[test]
    fn synthetic_default_counts_and_construction() {
        let spec = SyntheticCorpusSpec::default();
        let c = generate_synthetic(&spec).unwrap();
        assert_eq!((c.train.len(), c.val.len(), c.test.len()), (600, 60, 60));
        for r in c.train.iter().chain(&c.test) {
            let toks = tokenize(&r.caption);
            let pos = toks.iter().filter(|t| spec.positive.contains(t)).count();
            let neg = toks.iter().filter(|t| spec.negative.contains(t)).count();
            match r.label {
                SentimentLabel::Pos => assert_eq!((pos, neg), (1, 0)),
                SentimentLabel::Neg => assert_eq!((pos, neg), (0, 1)),
                SentimentLabel::Neu => assert_eq!((pos, neg), (0, 0)),
            }
            assert_eq!(r.feature.len(), 20);
        }
        assert_eq!(c, generate_synthetic(&spec).unwrap());
    }

    #[test]
    fn synthetic_feature_is_jittered_one_hot() {
        let spec = SyntheticCorpusSpec::default();
        let c = generate_synthetic(&spec).unwrap();
        for r in &c.train {
            let scene: usize = r.image_id.split('-').nth(1).unwrap().parse().unwrap();
            for (k, v) in r.feature.iter().enumerate() {
                let base = if k == scene { 1.0 } else { 0.0 };
                assert!((v - base).abs() <= spec.noise);
            }
        }
    }

    #[test]
    fn synthetic_spec_errors() {
        let mut spec = SyntheticCorpusSpec::default();
        spec.scenes.clear();
        let err = generate_synthetic(&spec).unwrap_err().to_string();
        assert!(err.contains("scenes"), "{err}");

        let mut spec = SyntheticCorpusSpec::default();
        spec.negative.push("happy".into());
        assert!(matches!(generate_synthetic(&spec), Err(Error::OverlappingLexicons(_))));

        let mut spec = SyntheticCorpusSpec::default();
        spec.scenes[0].noun = "happy".into();
        assert!(generate_synthetic(&spec).is_err());

        let err = serde_json::from_str::<SyntheticCorpusSpec>(r#"{"positive":["a"],"negative":["b"]}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("scenes"), "{err}");
    }

    #[test]
    fn paraphrase_count() {
        let spec = SyntheticCorpusSpec { train_per_scene: 10, ..SyntheticCorpusSpec::default() };
        assert_eq!(generate_synthetic(&spec).unwrap().train.len(), 20 * 3 * 10);
    }

    fn records(n: usize) -> Vec<CaptionRecord> {
        (0..n)
            .map(|i| CaptionRecord {
                image_id: format!("r{i}"),
                feature: vec![i as f64],
                tokens: [vec![BOS], vec![4; i % 3], vec![EOS]].concat(),
                label: SentimentLabel::Neu,
            })
            .collect()
    }

    #[test]
    fn batching() {
        let rs = records(5);
        let b = make_batches(&rs, 2, 1).unwrap();
        assert_eq!(b.iter().map(Batch::len).collect::<Vec<_>>(), vec![2, 2, 1]);
        assert_eq!(b, make_batches(&rs, 2, 1).unwrap());

        let singles = make_batches(&rs, 1, 1).unwrap();
        let order: Vec<usize> = singles.iter().map(|b| b.indices[0]).collect();
        let flat: Vec<usize> = b.iter().flat_map(|b| b.indices.clone()).collect();
        assert_eq!(order, flat);

        for batch in &b {
            let width = batch.tokens[0].len();
            for i in 0..batch.len() {
                assert_eq!(batch.tokens[i].len(), width);
                assert_eq!(batch.record(i), rs[batch.indices[i]]);
                assert!(batch.tokens[i][batch.lengths[i]..].iter().all(|&t| t == PAD));
            }
        }
        assert!(make_batches(&rs, 0, 1).is_err());
    }

    #[test]
    fn dataset_and_lexicon_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = generate_synthetic(&SyntheticCorpusSpec::default()).unwrap();
        let path = dir.path().join("test.jsonl");
        write_dataset(&path, &c.test).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), c.test);

        let lex = dir.path().join("pos.txt");
        write_lexicon(&lex, &["good".into(), "Nice".into()]).unwrap();
        assert_eq!(read_lexicon(&lex).unwrap(), vec!["good".to_string(), "nice".to_string()]);

        std::fs::write(&path, "{\"image_id\":1}\n").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Parse { line: 1, .. })));
    }
}
