use engage_core::format::Provenance;
use engage_core::generator::{generate_corpus, GenerationOptions, GroundTruthSpec};
use engage_core::ingest::{corpus_to_posts, ingest, read_corpus, write_corpus_with, write_posts_to};
use engage_core::scaling::{scale_corpus, ScalingConfig};
use engage_core::EngageError;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn synthetic_corpus_survives_export_and_ingest() {
    let spec = GroundTruthSpec::well_separated(500, 3)
        .with_options(GenerationOptions { isolated_fraction: 0.2, ..GenerationOptions::default() });
    let original = generate_corpus(&spec).unwrap().corpus;
    let mut posts = corpus_to_posts(&original);
    posts.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let mut buf = Vec::new();
    write_posts_to(&posts, &mut buf).unwrap();

    let (corpus, report) = ingest(buf.as_slice()).unwrap();
    assert_eq!(report.n_dropped, 0);
    assert_eq!(report.n_merged, 0);
    assert_eq!(report.n_posts, posts.len());
    let mut expected = original.threads.clone();
    expected.sort_by(|a, b| a.thread_id.cmp(&b.thread_id));
    assert_eq!(corpus.threads.len(), expected.len());
    for (got, want) in corpus.threads.iter().zip(&expected) {
        assert_eq!(got.thread_id, want.thread_id);
        assert_eq!(got.seeker_id, want.seeker_id);
        assert_eq!(got.seed_timestamp, want.seed_timestamp);
        let g: Vec<_> = got.replies.iter().map(|r| (&r.user_id, r.role, r.timestamp)).collect();
        let w: Vec<_> = want.replies.iter().map(|r| (&r.user_id, r.role, r.timestamp)).collect();
        assert_eq!(g, w);
        let mut prev = got.seed_timestamp;
        for r in &got.replies {
            assert_eq!(r.delta_seconds, (r.timestamp - prev) as f64);
            prev = r.timestamp;
        }
        got.validate().unwrap();
    }
}

#[test]
fn snapshot_round_trip_keeps_scaling() {
    let (corpus, _) = ingest(
        "{\"thread_id\":\"a\",\"post_id\":\"1\",\"user_id\":\"s\",\"timestamp\":0,\"body\":\"help me\"}\n\
         {\"thread_id\":\"a\",\"post_id\":\"2\",\"user_id\":\"p\",\"timestamp\":60,\"score\":0.5}\n\
         {\"thread_id\":\"b\",\"post_id\":\"3\",\"user_id\":\"s\",\"timestamp\":100}\n\
         {\"thread_id\":\"b\",\"post_id\":\"4\",\"user_id\":\"q\",\"timestamp\":400}\n\
         {\"thread_id\":\"b\",\"post_id\":\"5\",\"user_id\":\"s\",\"timestamp\":500}\n"
            .as_bytes(),
    )
    .unwrap();
    let corpus = scale_corpus(corpus, &ScalingConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    write_corpus_with(&corpus, &path, &Provenance::with_seed(4)).unwrap();
    let back = read_corpus(&path).unwrap();
    assert_eq!(back, corpus);
    assert_eq!(back.threads[0].seed_word_count, Some(2));
    assert_eq!(back.threads[0].replies[0].score, Some(0.5));

    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("\"q\"", "\"r\"", 1)).unwrap();
    assert!(matches!(read_corpus(&path), Err(EngageError::Checksum(_))));
}

#[test]
fn empty_input_gives_an_empty_corpus() {
    let (corpus, report) = ingest("\n\n".as_bytes()).unwrap();
    assert!(corpus.is_empty());
    assert_eq!(report.n_posts, 0);
    assert!(matches!(scale_corpus(corpus, &ScalingConfig::default()), Err(EngageError::EmptyCorpus)));
}
