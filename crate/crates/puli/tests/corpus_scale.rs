//! Corpus handling at the reference dataset's published shape: dialogue and
//! round counts, PU assembly sizes, and token statistics.

use puli::corpus::{assemble_pu, corpus_stats, corpus_to_string, load_corpus_str, Split};
use puli::forge::{synth_corpus, SynthConfig};

#[test]
fn reference_shaped_corpus_counts() {
    // 3,206 dialogues averaging 20 rounds; 2,726 train / 240 / 240 split
    let config = SynthConfig {
        n_dialogues: 3206,
        rounds_per_dialogue: 20,
        drift_position_range: (4, 15),
        tokens_per_round: 6,
        validation_fraction: 240.0 / 3206.0,
        test_fraction: 240.0 / 3206.0,
        seed: 1,
        ..SynthConfig::default()
    };
    let corpus = synth_corpus(&config).unwrap();
    let reloaded = load_corpus_str(&corpus_to_string(&corpus)).unwrap();
    let stats = corpus_stats(&reloaded);
    assert_eq!(stats.dialogues, 3206);
    assert_eq!(stats.avg_rounds_per_dialogue, 20.0);
    assert_eq!(stats.per_split["train"].dialogues, 2726);
    assert_eq!(stats.per_split["validation"].dialogues, 240);
    assert_eq!(stats.per_split["test"].dialogues, 240);
    assert_eq!(stats.per_split["validation"].negative, 240);
    assert_eq!(stats.per_split["test"].negative, 240);

    // k = 4 unlabeled rounds per training dialogue
    let pu = assemble_pu(&reloaded, Split::Train, 4, 7).unwrap();
    assert_eq!(pu.positives.len(), 2726);
    assert_eq!(pu.unlabeled.len(), 10_904);

    let val = assemble_pu(&reloaded, Split::Validation, 4, 7).unwrap();
    assert_eq!(val.positives.len(), 240);
    assert_eq!(val.negatives_eval.len(), 240);
    assert!(val.unlabeled.is_empty());
}

#[test]
fn token_statistics_match_generator_config() {
    // synthetic rounds carry a fixed token budget, so the mean is exact
    let config = SynthConfig {
        n_dialogues: 12,
        rounds_per_dialogue: 10,
        drift_position_range: (2, 7),
        tokens_per_round: 378,
        validation_fraction: 0.25,
        test_fraction: 0.125,
        seed: 3,
        ..SynthConfig::default()
    };
    let corpus = synth_corpus(&config).unwrap();
    let stats = corpus_stats(&corpus);
    assert_eq!(stats.avg_tokens_per_round, 378.0);
    assert_eq!(stats.rounds, 120);
}
