//! Trains each variant on the default synthetic corpus and prints the
//! benchmark and sentiment-percentage tables.
//!
//! cargo run --release -p sentcap --example controllability [epochs] [lr]

use std::ops::ControlFlow;
use std::time::Instant;

use sentcap::data::{encode_corpus, generate_synthetic, SyntheticCorpusSpec, SYNTHETIC_MIN_COUNT};
use sentcap::evaluation::BeamCaptioner;
use sentcap::{evaluate, train_with, BeamConfig, CaptionModel, Lexicon, ModelConfig, TrainConfig, Variant, Vocabulary};

fn main() -> sentcap::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs = args.get(1).map_or(Ok(30), |s| s.parse()).expect("epochs");
    let lr = args.get(2).map_or(Ok(0.01), |s| s.parse()).expect("lr");

    let spec = SyntheticCorpusSpec::default();
    let corpus = generate_synthetic(&spec)?;
    let captions: Vec<&str> = corpus.train.iter().map(|r| r.caption.as_str()).collect();
    let vocab = Vocabulary::build(&captions, SYNTHETIC_MIN_COUNT)?;
    let train_set = encode_corpus(&corpus.train, &vocab);
    let lexicon = Lexicon::new(&spec.positive, &spec.negative)?;

    for variant in Variant::ALL {
        let start = Instant::now();
        let cfg = ModelConfig::desk(variant, vocab.len(), spec.scenes.len());
        let mut model = CaptionModel::init(cfg, 1)?;
        let tc = TrainConfig { learning_rate: lr, epochs, ..TrainConfig::default() };
        let log = train_with(&tc, &train_set, &mut model, |e| {
            if e.epoch % 5 == 0 {
                eprintln!("{} epoch {} word {:.4} senti {:.4}", variant.as_str(), e.epoch, e.word_loss, e.sentiment_loss);
            }
            ControlFlow::Continue(())
        })?;
        let captioner = BeamCaptioner { model: &model, vocab: &vocab, beam: BeamConfig::default() };
        let report = evaluate(&captioner, &corpus.test, &lexicon)?;
        println!("== {} ({:.1}s, final loss {:.4})", variant.as_str(), start.elapsed().as_secs_f64(), log.last().unwrap().total);
        print!("{}", report.to_tables());
    }
    Ok(())
}
