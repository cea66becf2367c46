use sentcap::data::{
    encode_corpus, generate_synthetic, read_dataset, read_lexicon, write_dataset, write_lexicon, Scene,
    SyntheticCorpusSpec,
};
use sentcap::decoder::generate_with_flip;
use sentcap::evaluation::BeamCaptioner;
use sentcap::trainer::evaluate_loss;
use sentcap::*;

fn small_spec() -> SyntheticCorpusSpec {
    let scene = |n: &str, v: &str, p: &str| Scene { noun: n.into(), verb: v.into(), place: p.into() };
    SyntheticCorpusSpec {
        scenes: vec![scene("dog", "runs", "park"), scene("cat", "sleeps", "room"), scene("bird", "sings", "tree")],
        positive: vec!["happy".into(), "nice".into()],
        negative: vec!["sad".into(), "ugly".into()],
        train_per_scene: 4,
        ..SyntheticCorpusSpec::default()
    }
}

#[test]
fn files_to_trained_model_to_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec();
    let corpus = generate_synthetic(&spec).unwrap();
    write_dataset(&dir.path().join("train.jsonl"), &corpus.train).unwrap();
    write_dataset(&dir.path().join("test.jsonl"), &corpus.test).unwrap();
    write_lexicon(&dir.path().join("pos.txt"), &spec.positive).unwrap();
    write_lexicon(&dir.path().join("neg.txt"), &spec.negative).unwrap();

    let train_raw = read_dataset(&dir.path().join("train.jsonl")).unwrap();
    let test_raw = read_dataset(&dir.path().join("test.jsonl")).unwrap();
    assert_eq!(train_raw, corpus.train);
    let captions: Vec<&str> = train_raw.iter().map(|r| r.caption.as_str()).collect();
    let vocab = Vocabulary::build(&captions, 1).unwrap();
    let records = encode_corpus(&train_raw, &vocab);

    let config = ModelConfig::with_dims(Variant::Flow, vocab.len(), spec.scenes.len(), 12, 16);
    let mut model = CaptionModel::init(config, 4).unwrap();
    let before = evaluate_loss(&model, &records, 1.0).unwrap().total;
    let cfg = TrainConfig { epochs: 25, learning_rate: 0.01, batch_size: 6, ..TrainConfig::default() };
    let log = train(&cfg, &records, &mut model).unwrap();
    let after = evaluate_loss(&model, &records, 1.0).unwrap().total;
    assert_eq!(log.len(), 25);
    assert!(after < before * 0.5, "{before} -> {after}");

    let path = dir.path().join("m.ckpt");
    Checkpoint { model: model.clone(), vocab: vocab.clone() }.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.model, model);

    let lexicon = Lexicon::new(
        &read_lexicon(&dir.path().join("pos.txt")).unwrap(),
        &read_lexicon(&dir.path().join("neg.txt")).unwrap(),
    )
    .unwrap();
    let beam = BeamConfig { beam_size: 3, max_len: 10 };
    let a = evaluate(&BeamCaptioner { model: &model, vocab: &vocab, beam }, &test_raw, &lexicon).unwrap();
    let b = evaluate(&BeamCaptioner { model: &back.model, vocab: &back.vocab, beam }, &test_raw, &lexicon).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.captions.len(), test_raw.len());
    assert_eq!(a.sentiment.count, 2 * spec.scenes.len());
    let o = a.overall;
    for s in [o.bleu1, o.bleu2, o.bleu3, o.bleu4, o.rouge_l] {
        assert!((0.0..=1.0).contains(&s));
    }
    let json = serde_json::to_string(&a).unwrap();
    assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), a);
}

#[test]
fn decoding_a_trained_model() {
    let spec = small_spec();
    let corpus = generate_synthetic(&spec).unwrap();
    let captions: Vec<&str> = corpus.train.iter().map(|r| r.caption.as_str()).collect();
    let vocab = Vocabulary::build(&captions, 1).unwrap();
    let records = encode_corpus(&corpus.train, &vocab);
    let mut model =
        CaptionModel::init(ModelConfig::with_dims(Variant::Direct, vocab.len(), spec.scenes.len(), 12, 16), 2).unwrap();
    let cfg = TrainConfig { epochs: 10, learning_rate: 0.02, batch_size: 6, ..TrainConfig::default() };
    train(&cfg, &records, &mut model).unwrap();

    for r in corpus.test.iter().filter(|r| r.label != SentimentLabel::Neu) {
        let greedy = greedy_decode(&model, &r.feature, r.label, 12).unwrap();
        let beam1 = beam_search(&model, &r.feature, r.label, 1, 12).unwrap();
        assert_eq!(beam1, vec![greedy]);

        let wide = beam_search(&model, &r.feature, r.label, 4, 12).unwrap();
        assert!(wide.windows(2).all(|w| w[0].score <= w[1].score));
        assert!(wide[0].score <= beam1[0].score + 1e-12);

        let (own, flipped) = generate_with_flip(&model, &r.feature, r.label, BeamConfig { beam_size: 3, max_len: 12 }).unwrap();
        assert_eq!(own, beam_search(&model, &r.feature, r.label, 3, 12).unwrap());
        assert_eq!(flipped, beam_search(&model, &r.feature, r.label.flip().unwrap(), 3, 12).unwrap());
        for c in own.iter().chain(&flipped) {
            assert!(c.tokens.iter().all(|&t| t > sentcap::data::EOS));
        }
    }
}
