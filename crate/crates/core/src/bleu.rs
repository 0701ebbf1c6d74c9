//! Corpus BLEU on pre-tokenized text, matching the reference scorer's
//! semantics: clipped modified n-gram precisions aggregated at corpus level,
//! multiplicative brevity penalty, and the scorer's default exponential
//! smoothing for zero numerators. Scores are on the 0..100 scale.

use std::collections::HashMap;

use crate::normalize::TokenSequence;

const MAX_ORDER: usize = 4;

/// Smoothing applied to zero n-gram numerators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    /// No smoothing: any zero precision makes the corpus score 0.
    None,
    /// Exponential smoothing: the k-th zero numerator scores 1/(2^k · total).
    Exp,
}

/// Corpus BLEU with its components.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuScore {
    /// 0..100.
    pub score: f64,
    /// Modified n-gram precisions for n = 1..4, each in [0, 1].
    pub ngram_precisions: [f64; 4],
    /// In (0, 1].
    pub brevity_penalty: f64,
    pub hyp_length: u64,
    pub ref_length: u64,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum BleuError {
    #[error("hypothesis and reference counts differ: {hyps} vs {refs}")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("empty corpus")]
    EmptyCorpus,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts: HashMap<&[String], u64> = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU-4 of `hypotheses` against one reference per hypothesis.
pub fn corpus_bleu(
    hypotheses: &[TokenSequence],
    references: &[TokenSequence],
    smoothing: Smoothing,
) -> Result<BleuScore, BleuError> {
    if hypotheses.len() != references.len() {
        return Err(BleuError::LengthMismatch { hyps: hypotheses.len(), refs: references.len() });
    }
    if hypotheses.is_empty() {
        return Err(BleuError::EmptyCorpus);
    }

    let mut correct = [0u64; MAX_ORDER];
    let mut total = [0u64; MAX_ORDER];
    let mut hyp_length = 0u64;
    let mut ref_length = 0u64;
    for (hyp, reference) in hypotheses.iter().zip(references) {
        let hyp_tokens = hyp.tokens();
        let ref_tokens = reference.tokens();
        hyp_length += hyp_tokens.len() as u64;
        ref_length += ref_tokens.len() as u64;
        for n in 1..=MAX_ORDER {
            if hyp_tokens.len() < n {
                continue;
            }
            total[n - 1] += (hyp_tokens.len() - n + 1) as u64;
            let ref_counts = ngram_counts(ref_tokens, n);
            for (ngram, count) in ngram_counts(hyp_tokens, n) {
                let clip = ref_counts.get(ngram).copied().unwrap_or(0);
                correct[n - 1] += count.min(clip);
            }
        }
    }

    let brevity_penalty = if hyp_length == 0 {
        0.0
    } else if hyp_length < ref_length {
        (1.0 - ref_length as f64 / hyp_length as f64).exp()
    } else {
        1.0
    };

    let mut precisions = [0.0f64; MAX_ORDER];
    let mut smooth = 1.0f64;
    let mut zero_precision = false;
    for n in 0..MAX_ORDER {
        if total[n] == 0 {
            zero_precision = true;
            continue;
        }
        if correct[n] == 0 {
            match smoothing {
                Smoothing::Exp => {
                    smooth *= 2.0;
                    precisions[n] = 1.0 / (smooth * total[n] as f64);
                }
                Smoothing::None => {
                    precisions[n] = 0.0;
                    zero_precision = true;
                }
            }
        } else {
            precisions[n] = correct[n] as f64 / total[n] as f64;
        }
    }

    let score = if zero_precision {
        0.0
    } else {
        let log_sum: f64 = precisions.iter().map(|p| p.ln()).sum();
        100.0 * brevity_penalty * (log_sum / MAX_ORDER as f64).exp()
    };

    Ok(BleuScore { score, ngram_precisions: precisions, brevity_penalty, hyp_length, ref_length })
}
