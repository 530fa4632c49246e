use phishlayer::porter::stem;
use phishlayer::text_pipeline::{build_vocabulary, encode, preprocess, stop_words, tokenize};
use proptest::prelude::*;

#[test]
fn stemmer_matches_reference_outputs() {
    let pairs = include_str!("data/porter_pairs.txt");
    let mut mismatches = Vec::new();
    let mut n = 0;
    for line in pairs.lines().filter(|l| !l.starts_with('#')) {
        let (word, expected) = line.split_once(' ').unwrap();
        n += 1;
        let got = stem(word);
        if got != expected {
            mismatches.push(format!("{word}: got {got}, want {expected}"));
        }
    }
    assert!(n > 2000);
    assert!(
        mismatches.is_empty(),
        "{} mismatches:\n{}",
        mismatches.len(),
        mismatches.join("\n")
    );
}

fn corpus_strategy() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-zA-Z .,!?'-]{0,40}", 1..8)
}

proptest! {
    #[test]
    fn tokenization_is_idempotent(text in "\\PC{0,80}") {
        let once = tokenize(&text);
        prop_assert_eq!(tokenize(&once.join(" ")), once);
    }

    #[test]
    fn encoding_is_deterministic_and_in_range(docs in corpus_strategy(), probe in "[a-z ]{0,60}", len in 1usize..12) {
        let corpus: Vec<Vec<String>> = docs.iter().map(|d| preprocess(d)).collect();
        prop_assume!(corpus.iter().any(|d| !d.is_empty()));
        let vocab = build_vocabulary(&corpus, 50).unwrap();
        let a = encode(&preprocess(&probe), &vocab, len);
        let b = encode(&preprocess(&probe), &vocab, len);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.indices.len(), len);
        prop_assert!(a.indices.iter().all(|&i| i <= vocab.len()));
        for w in vocab.words() {
            prop_assert!(!stop_words().contains(w.as_str()));
        }
    }

    #[test]
    fn vocabulary_ignores_document_order(docs in corpus_strategy(), seed in any::<u64>()) {
        let corpus: Vec<Vec<String>> = docs.iter().map(|d| preprocess(d)).collect();
        prop_assume!(corpus.iter().any(|d| !d.is_empty()));
        let mut shuffled = corpus.clone();
        phishlayer::rng::SplitMix64::new(seed).shuffle(&mut shuffled);
        prop_assert_eq!(build_vocabulary(&corpus, 20).unwrap(), build_vocabulary(&shuffled, 20).unwrap());
    }
}
