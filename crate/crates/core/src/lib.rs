//! Colloquial Iranian Persian standardization toolkit.
//!
//! Persian web text mixes the formal written register with Tehran-style
//! colloquial word forms, which breaks tools that expect standard text.
//! This crate provides the full desk-scale pipeline for the reverse problem:
//!
//! - [`normalize`]: Perso-Arabic character canonicalization and tokenization.
//! - [`rules`]: an ordered rewrite-rule transducer that breaks standard
//!   word forms into colloquial ones, with exact alignment traces, plus rule
//!   inversion for the reverse direction.
//! - [`gencorpus`]: seeded synthetic parallel corpus generation (standard
//!   text in, aligned colloquial/standard/trace files out), with a
//!   probabilistic skip so outputs mix registers.
//! - [`model`]: a phrase-table + n-gram language model transducer trained
//!   from the aligned corpus, decoding colloquial input back to standard
//!   text with greedy or beam search.
//! - [`baseline`]: a deterministic rule-based standardizer built from the
//!   inverted rule set, for comparison.
//! - [`bleu`]: corpus BLEU on pre-tokenized text, compatible with the usual
//!   reference scorer semantics.
//! - [`harness`]: evaluation dataset loading and system scoring reports.
//! - [`textgen`]: a seeded sampler that emits standard-Persian demo
//!   sentences for self-contained pipeline runs and tests.

pub mod baseline;
pub mod bleu;
pub mod gencorpus;
pub mod harness;
pub mod model;
pub mod normalize;
pub mod rules;
pub mod textgen;

pub use normalize::{detokenize, normalize_text, tokenize, NormalizationConfig, TokenSequence};
pub use rules::{apply_rules, parse_rule_file, parse_rule_str, shipped_rule_set, RuleSet};

/// Version tag written into model files and reports.
pub const MODEL_FORMAT_VERSION: u32 = 1;
