//! Deterministic rule-based colloquial→standard converter built from the
//! inverted rule set. This is the comparison system: no learned parameters,
//! one left-to-right pass, ambiguity resolved by a fixed policy.

use std::collections::BTreeMap;

use crate::normalize::TokenSequence;
use crate::rules::InvertedRuleSet;

/// How to choose among several applicable inverse rules (and the option of
/// leaving the token unchanged).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmbiguityResolution {
    /// Keep tokens attested in a standard corpus; convert unattested tokens
    /// to their most frequent standard reading.
    MostFrequentStandardForm,
    /// Always fire the first matching rule in file order.
    FirstListed,
}

/// Resolution policy plus the frequency table it may need.
#[derive(Debug, Clone)]
pub struct BaselinePolicy {
    pub ambiguity_resolution: AmbiguityResolution,
    frequency_table: Option<BTreeMap<String, u64>>,
}

impl BaselinePolicy {
    pub fn first_listed() -> Self {
        BaselinePolicy { ambiguity_resolution: AmbiguityResolution::FirstListed, frequency_table: None }
    }

    /// The constructor enforces that the frequency policy always carries its
    /// table.
    pub fn most_frequent(frequency_table: BTreeMap<String, u64>) -> Self {
        BaselinePolicy {
            ambiguity_resolution: AmbiguityResolution::MostFrequentStandardForm,
            frequency_table: Some(frequency_table),
        }
    }

    fn freq(&self, token: &str) -> u64 {
        self.frequency_table
            .as_ref()
            .and_then(|t| t.get(token).copied())
            .unwrap_or(0)
    }

    /// A candidate's score is its rarest output token; picking the maximum
    /// keeps the most plausible standard reading.
    fn score(&self, output: &[String]) -> u64 {
        output.iter().map(|t| self.freq(t)).min().unwrap_or(0)
    }
}

/// Builds a unigram table from tokenized standard lines, for the
/// most-frequent policy.
pub fn unigram_counts<'a>(lines: impl IntoIterator<Item = &'a TokenSequence>) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for line in lines {
        for token in line.iter() {
            *counts.entry(token.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Standardizes one sentence with the inverted rules: a single deterministic
/// left-to-right pass, unmatched tokens copy through.
pub fn rule_standardize(
    colloquial: &TokenSequence,
    inverted: &InvertedRuleSet,
    policy: &BaselinePolicy,
) -> TokenSequence {
    let rs = &inverted.rule_set;
    let tokens = colloquial.tokens();
    let mut output: Vec<String> = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let candidates = rs.find_all_matches(tokens, i);
        let fired: Option<(usize, Vec<String>)> = match policy.ambiguity_resolution {
            AmbiguityResolution::FirstListed => candidates.into_iter().next(),
            AmbiguityResolution::MostFrequentStandardForm => {
                // A token attested in the standard corpus is already a
                // standard reading and stays put. Otherwise the ambiguity
                // resolves to the candidate with the most frequent rarest
                // output token, and only attested outputs may fire. Converted
                // output therefore consists of attested tokens, so a second
                // pass is a no-op and fully standard input passes unchanged.
                if policy.freq(&tokens[i]) > 0 {
                    None
                } else {
                    let mut best: Option<(u64, usize, Vec<String>)> = None;
                    for (idx, out) in candidates {
                        let s = policy.score(&out);
                        if best.as_ref().is_none_or(|(bs, _, _)| s > *bs) {
                            best = Some((s, idx, out));
                        }
                    }
                    match best {
                        Some((s, idx, out)) if s > 0 => Some((idx, out)),
                        _ => None,
                    }
                }
            }
        };
        match fired {
            Some((rule_idx, out)) => {
                output.extend(out);
                i += rs.rules[rule_idx].consumed();
            }
            None => {
                output.push(tokens[i].clone());
                i += 1;
            }
        }
    }
    TokenSequence::from_trusted(output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalize::tokenize;
    use crate::rules::{invert_rule_set, parse_rule_str};

    const TOY: &str = "\
r_teh\tan_suffix\tsuffix\t??ان\t-\t-\t*ون\t1
r_ast\tast_copula\tany\t-\ttake_exact\tاست\t*ه\t1\tnoun
r_ra\tcommon\texact\tرا\t-\t-\tرو\t1
";

    #[test]
    fn inverted_rules_recover_standard_forms() {
        let rs = parse_rule_str(TOY).unwrap();
        let inverted = invert_rule_set(&rs);
        let out = rule_standardize(&tokenize("تهرون کمه"), &inverted, &BaselinePolicy::first_listed());
        assert_eq!(out.tokens(), ["تهران", "کم", "است"]);
    }

    #[test]
    fn standard_input_passes_through_unchanged_under_frequency_policy() {
        let rs = parse_rule_str(TOY).unwrap();
        let inverted = invert_rule_set(&rs);
        let standard = tokenize("اکنون هوا خوب است");
        let freq = unigram_counts([&standard]);
        let policy = BaselinePolicy::most_frequent(freq);
        // اکنون ends in ون but its inverse اکنان is not a standard word.
        let out = rule_standardize(&standard, &inverted, &policy);
        assert_eq!(out, standard);
    }

    #[test]
    fn frequency_policy_still_converts_real_colloquial_forms() {
        let rs = parse_rule_str(TOY).unwrap();
        let inverted = invert_rule_set(&rs);
        let freq = unigram_counts([&tokenize("تهران شهر بزرگی است")]);
        let policy = BaselinePolicy::most_frequent(freq);
        let out = rule_standardize(&tokenize("تهرون"), &inverted, &policy);
        assert_eq!(out.tokens(), ["تهران"]);
    }

    #[test]
    fn idempotent_on_its_own_output() {
        let rs = parse_rule_str(TOY).unwrap();
        let inverted = invert_rule_set(&rs);
        let policy = BaselinePolicy::first_listed();
        let once = rule_standardize(&tokenize("تهرون کمه رو"), &inverted, &policy);
        let twice = rule_standardize(&once, &inverted, &policy);
        assert_eq!(once, twice);
    }
}
