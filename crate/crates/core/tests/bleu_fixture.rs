//! Frozen-value check for the BLEU scorer: the three-sentence fixture score
//! was computed once with an independent implementation of the reference
//! algorithm (corpus-level clipped precisions, exponential smoothing,
//! tokenization off) and verified by hand from the raw n-gram counts:
//! correct = [15, 8, 4, 2], total = [16, 13, 10, 7], BP = exp(1 - 17/16).

use guyesh_core::bleu::{corpus_bleu, Smoothing};
use guyesh_core::tokenize;
use guyesh_core::TokenSequence;

const FROZEN_SCORE: f64 = 47.6029710671;
const FROZEN_BP: f64 = 0.9394130628;
const FROZEN_PRECISIONS: [f64; 4] = [15.0 / 16.0, 8.0 / 13.0, 4.0 / 10.0, 2.0 / 7.0];

fn load(name: &str) -> Vec<TokenSequence> {
    let raw = match name {
        "hyp" => include_str!("fixtures/bleu_hyp.txt"),
        "ref" => include_str!("fixtures/bleu_ref.txt"),
        _ => unreachable!(),
    };
    raw.lines().map(tokenize).collect()
}

#[test]
fn fixture_matches_frozen_reference_score() {
    let hyp = load("hyp");
    let reference = load("ref");
    let score = corpus_bleu(&hyp, &reference, Smoothing::Exp).unwrap();
    assert!(
        (score.score - FROZEN_SCORE).abs() < 0.01,
        "score {} differs from frozen {}",
        score.score,
        FROZEN_SCORE
    );
    assert!((score.brevity_penalty - FROZEN_BP).abs() < 1e-6);
    for (got, want) in score.ngram_precisions.iter().zip(FROZEN_PRECISIONS) {
        assert!((got - want).abs() < 1e-9, "precision {got} != {want}");
    }
    assert_eq!(score.hyp_length, 16);
    assert_eq!(score.ref_length, 17);
}

#[test]
fn fixture_identity_and_disjoint_edges() {
    let hyp = load("hyp");
    let identity = corpus_bleu(&hyp, &hyp, Smoothing::Exp).unwrap();
    assert!((identity.score - 100.0).abs() < 1e-9);

    let a = vec![tokenize("الف ب پ ت")];
    let b = vec![tokenize("ث ج چ ح")];
    let disjoint = corpus_bleu(&a, &b, Smoothing::None).unwrap();
    assert_eq!(disjoint.score, 0.0);
}
