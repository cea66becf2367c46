//! `sentcap`: corpus generation, training, captioning, evaluation and
//! gradient checking from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use sentcap::data::{
    encode_corpus, generate_synthetic, read_dataset, read_lexicon, write_dataset, write_lexicon, SyntheticCorpusSpec,
};
use sentcap::decoder::{DEFAULT_BEAM_SIZE, DEFAULT_MAX_LEN};
use sentcap::evaluation::BeamCaptioner;
use sentcap::gradcheck::{self, GradCheckConfig};
use sentcap::{
    beam_search, evaluate, greedy_decode, train_with, BeamConfig, Caption, CaptionModel, Checkpoint, Lexicon,
    ModelConfig, SentimentLabel, Variant, Vocabulary,
};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "sentcap", version, about = "Sentiment-conditioned image caption models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a templated synthetic corpus and its sentiment lexicons.
    GenCorpus(GenCorpusArgs),
    /// Train a model on DATA/train.jsonl and write a checkpoint.
    Train(TrainArgs),
    /// Caption one image feature.
    Generate(GenerateArgs),
    /// Caption a test set and report BLEU, ROUGE-L and sentiment percentages.
    Evaluate(EvaluateArgs),
    /// Compare analytic and finite-difference gradients on a tiny random model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    /// JSON corpus description; the built-in 20-scene corpus when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the description's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory holding train.jsonl.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Epoch log; defaults to the checkpoint path with `.log` appended.
    #[arg(long)]
    log: Option<PathBuf>,
    /// `key = value` file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, visible_alias = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum global gradient norm, or `none`.
    #[arg(long)]
    clip_norm: Option<String>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Minimum training-set count for a word to enter the vocabulary.
    #[arg(long)]
    min_count: Option<usize>,
}

impl TrainArgs {
    fn overrides(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("variant", self.variant.map(|v| v.as_str().to_string()));
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("learning_rate", self.learning_rate.map(|v| format!("{v:?}")));
        put("batch_size", self.batch_size.map(|v| v.to_string()));
        put("lambda", self.lambda.map(|v| format!("{v:?}")));
        put("seed", self.seed.map(|v| v.to_string()));
        put("clip_norm", self.clip_norm.clone());
        put("embed_dim", self.embed_dim.map(|v| v.to_string()));
        put("hidden_dim", self.hidden_dim.map(|v| v.to_string()));
        put("min_count", self.min_count.map(|v| v.to_string()));
        m
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset file to take the feature of `--record` from.
    #[arg(long, requires = "record", conflicts_with = "feature")]
    data: Option<PathBuf>,
    /// Image id within `--data`.
    #[arg(long, requires = "data")]
    record: Option<String>,
    /// File holding the feature as a JSON array.
    #[arg(long, required_unless_present = "data")]
    feature: Option<PathBuf>,
    /// neg, neu or pos.
    #[arg(long)]
    label: SentimentLabel,
    #[arg(long, default_value_t = DEFAULT_BEAM_SIZE)]
    beam: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    /// Argmax decoding instead of beam search.
    #[arg(long, conflicts_with = "beam")]
    greedy: bool,
    /// Also caption with the opposite polarity.
    #[arg(long)]
    flip: bool,
    /// Number of ranked captions to print per label.
    #[arg(long, default_value_t = 1)]
    top: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Test dataset (JSON lines).
    #[arg(long)]
    test: PathBuf,
    /// Positive lexicon, one word per line.
    #[arg(long)]
    pos: PathBuf,
    /// Negative lexicon, one word per line.
    #[arg(long)]
    neg: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BEAM_SIZE)]
    beam: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    /// JSON report with scores and every generated caption.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Variant to check; all three when omitted.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    embed_dim: usize,
    #[arg(long, default_value_t = 6)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 11)]
    vocab_size: usize,
    /// Words in the random caption.
    #[arg(long, default_value_t = 2)]
    words: usize,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<sentcap::Error> for Failure {
    fn from(e: sentcap::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Train(a) => train_cmd(a),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn gen_corpus(a: GenCorpusArgs) -> Outcome {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<SyntheticCorpusSpec>(&text)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?
        }
        None => SyntheticCorpusSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let corpus = generate_synthetic(&spec)?;
    fs::create_dir_all(&a.out)?;
    for (name, records) in [("train", &corpus.train), ("val", &corpus.val), ("test", &corpus.test)] {
        write_dataset(&a.out.join(format!("{name}.jsonl")), records)?;
        println!("{name} {}", records.len());
    }
    write_lexicon(&a.out.join("pos.txt"), &spec.positive)?;
    write_lexicon(&a.out.join("neg.txt"), &spec.negative)?;
    Ok(())
}

fn log_path(a: &TrainArgs) -> PathBuf {
    a.log.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".log");
        p.into()
    })
}

fn train_cmd(a: TrainArgs) -> Outcome {
    let mut run = RunConfig::default();
    if let Some(path) = &a.config {
        run.apply(&RunConfig::from_file(path).map_err(|e| Failure::Usage(e.0))?).map_err(|e| Failure::Usage(e.0))?;
    }
    run.apply(&a.overrides()).map_err(|e| Failure::Usage(e.0))?;
    run.train.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let header = run.echo();
    eprint!("{header}");
    let log_file = log_path(&a);
    let mut log = BufWriter::new(File::create(&log_file)?);
    log.write_all(header.as_bytes())?;

    let raw = read_dataset(&a.data.join("train.jsonl"))?;
    let first = raw.first().ok_or(sentcap::Error::EmptyCorpus)?;
    let captions: Vec<&str> = raw.iter().map(|r| r.caption.as_str()).collect();
    let vocab = Vocabulary::build(&captions, run.min_count)?;
    let records = encode_corpus(&raw, &vocab);
    let config = ModelConfig::with_dims(run.variant, vocab.len(), first.feature.len(), run.embed_dim, run.hidden_dim);
    eprintln!("{} records, vocabulary {}, feature dim {}", records.len(), vocab.len(), config.feature_dim);
    let mut model = CaptionModel::init(config, run.train.seed)?;

    let mut io_error = None;
    let trained = train_with(&run.train, &records, &mut model, |e| {
        eprintln!("epoch {} word {:.6} sentiment {:.6} total {:.6}", e.epoch, e.word_loss, e.sentiment_loss, e.total);
        let line = serde_json::to_string(e).expect("epoch log serialises");
        match writeln!(log, "{line}").and_then(|_| log.flush()) {
            Ok(()) => ControlFlow::Continue(()),
            Err(err) => {
                io_error = Some(err);
                ControlFlow::Break(())
            }
        }
    });
    if let Some(err) = io_error {
        return Err(err.into());
    }
    trained?;
    Checkpoint { model, vocab }.save(&a.out)?;
    eprintln!("wrote {} ({} variant) and {}", a.out.display(), run.variant.as_str(), log_file.display());
    Ok(())
}

fn read_feature(path: &Path) -> Result<Vec<f64>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn print_captions(label: SentimentLabel, captions: &[Caption], vocab: &Vocabulary) {
    for (rank, c) in captions.iter().enumerate() {
        let mark = if c.finished { "" } else { " [cut]" };
        println!("{}\t{}\t{:.6}\t{}{mark}", label, rank + 1, c.score, vocab.decode(&c.tokens));
    }
}

fn generate(a: GenerateArgs) -> Outcome {
    if a.flip && a.label == SentimentLabel::Neu {
        return Err(Failure::Usage("--flip needs a positive or negative --label".into()));
    }
    if a.beam == 0 || a.max_len == 0 || a.top == 0 {
        return Err(Failure::Usage("--beam, --max-len and --top must be at least 1".into()));
    }
    let ck = Checkpoint::load(&a.checkpoint)?;
    let feature = match (&a.data, &a.record, &a.feature) {
        (Some(data), Some(id), _) => read_dataset(data)?
            .into_iter()
            .find(|r| &r.image_id == id)
            .map(|r| r.feature)
            .ok_or_else(|| Failure::Runtime(format!("no record `{id}` in {}", data.display())))?,
        (_, _, Some(path)) => read_feature(path)?,
        _ => return Err(Failure::Usage("give --data with --record, or --feature".into())),
    };
    eprintln!("{} model, vocabulary {}", ck.model.config.variant.as_str(), ck.vocab.len());

    let mut labels = vec![a.label];
    if a.flip {
        labels.push(a.label.flip()?);
    }
    for label in labels {
        let captions = if a.greedy {
            vec![greedy_decode(&ck.model, &feature, label, a.max_len)?]
        } else {
            let mut c = beam_search(&ck.model, &feature, label, a.beam, a.max_len)?;
            c.truncate(a.top);
            c
        };
        print_captions(label, &captions, &ck.vocab);
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Outcome {
    if a.beam == 0 || a.max_len == 0 {
        return Err(Failure::Usage("--beam and --max-len must be at least 1".into()));
    }
    let ck = Checkpoint::load(&a.checkpoint)?;
    let test = read_dataset(&a.test)?;
    let lexicon = Lexicon::new(&read_lexicon(&a.pos)?, &read_lexicon(&a.neg)?)?;
    let captioner = BeamCaptioner {
        model: &ck.model,
        vocab: &ck.vocab,
        beam: BeamConfig { beam_size: a.beam, max_len: a.max_len },
    };
    let report = evaluate(&captioner, &test, &lexicon)?;
    print!("{}", report.to_tables());
    if let Some(out) = &a.out {
        fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
        eprintln!("wrote {}", out.display());
    }
    Ok(())
}

fn gradcheck_cmd(a: GradcheckArgs) -> Outcome {
    let variants = a.variant.map_or(Variant::ALL.to_vec(), |v| vec![v]);
    let mut failed = Vec::new();
    for variant in variants {
        let cfg = GradCheckConfig {
            vocab_size: a.vocab_size,
            embed_dim: a.embed_dim,
            hidden_dim: a.hidden_dim,
            words: a.words,
            ..GradCheckConfig::tiny(variant, a.seed)
        };
        let rep = gradcheck::run(&cfg)?;
        let ok = rep.max_relative_error < a.tolerance;
        let worst = rep.worst.as_ref().map_or(String::new(), |(n, i)| format!(" worst {n}[{i}]"));
        println!(
            "{}\t{}\tparams {}\tmax rel err {:.3e}{worst}",
            if ok { "PASS" } else { "FAIL" },
            variant.as_str(),
            rep.checked,
            rep.max_relative_error
        );
        if !ok {
            failed.push(variant.as_str());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("gradient check failed for {}", failed.join(", "))))
    }
}
