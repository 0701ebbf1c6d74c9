//! Synthetic parallel corpus generation: feed standard sentences through the
//! rule transducer, skipping each applicable conversion with a fixed
//! probability so the output mixes colloquial and standard forms.
//!
//! Randomness is derived per sentence from `(seed, line index)`, so output
//! bytes are identical however the work is sharded. The Bernoulli stream is
//! consumed only at applicable sites: the skip probability is then exactly
//! the per-conversion skip rate.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::normalize::{normalize_text, tokenize, NormalizationConfig, TokenSequence};
use crate::rules::{apply_rules_filtered, RuleApplication, RuleSet};

/// Language tag prepended to the colloquial (source) side in exported data.
pub const SOURCE_LANG_TAG: &str = "<fab>";
/// Language tag for the standard (target) side.
pub const TARGET_LANG_TAG: &str = "<fa>";

/// Knobs for corpus generation.
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    /// Probability of leaving an applicable conversion site unconverted.
    pub skip_probability: f64,
    pub rng_seed: u64,
    pub max_sentences: Option<usize>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig { skip_probability: 0.1, rng_seed: 0, max_sentences: None }
    }
}

/// One training example: the original standard sentence, its broken
/// colloquial counterpart, and the exact rule trace linking them.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub colloquial: TokenSequence,
    pub standard: TokenSequence,
    pub trace: Vec<RuleApplication>,
}

impl AlignedPair {
    pub const SOURCE_LANG_TAG: &'static str = SOURCE_LANG_TAG;
    pub const TARGET_LANG_TAG: &'static str = TARGET_LANG_TAG;
}

/// Site statistics from breaking one sentence or a whole corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SiteCounts {
    /// Positions where some rule matched.
    pub applicable: u64,
    /// Sites actually converted.
    pub fired: u64,
    /// Sites left standard by the probabilistic skip.
    pub skipped: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read input {path}: {source}")]
    Input {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed trace entry {0:?}")]
    Trace(String),
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The seeded per-sentence RNG; mixing the line index in makes generation
/// order-independent and shard-safe.
pub fn sentence_rng(seed: u64, line_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(line_index)))
}

/// Breaks one standard sentence. At each applicable site one Bernoulli
/// variate decides between skipping (copy) and firing the rule.
pub fn break_sentence(
    std_seq: &TokenSequence,
    rs: &RuleSet,
    skip_probability: f64,
    rng: &mut impl Rng,
) -> (AlignedPair, SiteCounts) {
    let mut counts = SiteCounts::default();
    let (colloquial, trace) = apply_rules_filtered(std_seq, rs, |_, _| {
        counts.applicable += 1;
        let skip = rng.gen::<f64>() < skip_probability;
        if skip {
            counts.skipped += 1;
        } else {
            counts.fired += 1;
        }
        !skip
    });
    (AlignedPair { colloquial, standard: std_seq.clone(), trace }, counts)
}

/// Serializes a trace as `rule_id:i-j:p-q` entries joined by `;`.
pub fn format_trace(trace: &[RuleApplication]) -> String {
    let mut out = String::new();
    for (k, app) in trace.iter().enumerate() {
        if k > 0 {
            out.push(';');
        }
        let _ = write!(
            out,
            "{}:{}-{}:{}-{}",
            app.rule_id, app.source_span.0, app.source_span.1, app.target_span.0, app.target_span.1
        );
    }
    out
}

/// Parses one line of the trace file.
pub fn parse_trace(line: &str) -> Result<Vec<RuleApplication>, CorpusError> {
    if line.is_empty() {
        return Ok(Vec::new());
    }
    line.split(';')
        .map(|entry| {
            let parts: Vec<&str> = entry.split(':').collect();
            let err = || CorpusError::Trace(entry.to_string());
            if parts.len() != 3 {
                return Err(err());
            }
            let span = |s: &str| -> Result<(usize, usize), CorpusError> {
                let (a, b) = s.split_once('-').ok_or_else(err)?;
                Ok((a.parse().map_err(|_| err())?, b.parse().map_err(|_| err())?))
            };
            Ok(RuleApplication {
                rule_id: parts[0].to_string(),
                source_span: span(parts[1])?,
                target_span: span(parts[2])?,
            })
        })
        .collect()
}

/// Summary of one generation run, also written to the `.meta` file.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSummary {
    pub lines_read: u64,
    pub lines_written: u64,
    pub lines_skipped: u64,
    pub sentences_with_conversion: u64,
    pub sites: SiteCounts,
    pub seed: u64,
    pub skip_probability: f64,
    pub rule_hash: String,
}

impl CorpusSummary {
    pub fn to_meta(&self) -> String {
        format!(
            "format_version=1\nseed={}\nskip_probability={}\nrule_hash={}\nlines_read={}\nlines_written={}\nlines_skipped={}\nsentences_with_conversion={}\nsites_applicable={}\nsites_fired={}\nsites_skipped={}\nsource_lang_tag={}\ntarget_lang_tag={}\n",
            self.seed,
            self.skip_probability,
            self.rule_hash,
            self.lines_read,
            self.lines_written,
            self.lines_skipped,
            self.sentences_with_conversion,
            self.sites.applicable,
            self.sites.fired,
            self.sites.skipped,
            SOURCE_LANG_TAG,
            TARGET_LANG_TAG,
        )
    }
}

struct LineResult {
    colloquial: String,
    standard: String,
    trace: String,
    counts: SiteCounts,
    converted: bool,
}

/// Generates the aligned corpus files `<prefix>.fab`, `<prefix>.fa`,
/// `<prefix>.trace` and `<prefix>.meta` from standard text, one sentence per
/// line. Deterministic for a fixed `(input, cfg)` and any parallelism.
pub fn generate_corpus(
    input: impl BufRead,
    rs: &RuleSet,
    cfg: &GeneratorConfig,
    out_prefix: &Path,
    rule_hash: &str,
) -> Result<CorpusSummary, CorpusError> {
    let norm_cfg = NormalizationConfig::default();
    let open = |ext: &str| -> Result<(PathBuf, BufWriter<File>), CorpusError> {
        let path = out_prefix.with_extension(ext);
        let file = File::create(&path).map_err(|source| CorpusError::Output {
            path: path.display().to_string(),
            source,
        })?;
        Ok((path, BufWriter::new(file)))
    };
    let (fab_path, mut fab) = open("fab")?;
    let (_, mut fa) = open("fa")?;
    let (_, mut trace_file) = open("trace")?;

    let mut summary = CorpusSummary {
        lines_read: 0,
        lines_written: 0,
        lines_skipped: 0,
        sentences_with_conversion: 0,
        sites: SiteCounts::default(),
        seed: cfg.rng_seed,
        skip_probability: cfg.skip_probability,
        rule_hash: rule_hash.to_string(),
    };

    const CHUNK: usize = 4096;
    let mut buffer: Vec<(u64, String)> = Vec::with_capacity(CHUNK);
    let mut line_index: u64 = 0;
    let mut done = false;
    let mut lines = input.lines();
    while !done {
        buffer.clear();
        while buffer.len() < CHUNK {
            let emitted_or_pending = summary.lines_written + buffer.len() as u64;
            if cfg.max_sentences.is_some_and(|max| emitted_or_pending >= max as u64) {
                done = true;
                break;
            }
            match lines.next() {
                Some(Ok(line)) => {
                    buffer.push((line_index, line));
                    line_index += 1;
                }
                Some(Err(source)) => {
                    return Err(CorpusError::Input { path: "<input>".to_string(), source })
                }
                None => {
                    done = true;
                    break;
                }
            }
        }
        summary.lines_read += buffer.len() as u64;
        let results: Vec<(u64, Option<LineResult>)> = buffer
            .par_iter()
            .map(|(idx, raw)| {
                let normalized = normalize_text(raw, &norm_cfg);
                let seq = tokenize(&normalized);
                if seq.is_empty() {
                    return (*idx, None);
                }
                let mut rng = sentence_rng(cfg.rng_seed, *idx);
                let (pair, counts) = break_sentence(&seq, rs, cfg.skip_probability, &mut rng);
                (
                    *idx,
                    Some(LineResult {
                        colloquial: pair.colloquial.to_string(),
                        standard: pair.standard.to_string(),
                        trace: format_trace(&pair.trace),
                        counts,
                        converted: !pair.trace.is_empty(),
                    }),
                )
            })
            .collect();
        for (idx, result) in results {
            match result {
                Some(r) => {
                    let io = |source| CorpusError::Output {
                        path: fab_path.display().to_string(),
                        source,
                    };
                    writeln!(fab, "{}", r.colloquial).map_err(io)?;
                    writeln!(fa, "{}", r.standard).map_err(io)?;
                    writeln!(trace_file, "{}", r.trace).map_err(io)?;
                    summary.lines_written += 1;
                    summary.sites.applicable += r.counts.applicable;
                    summary.sites.fired += r.counts.fired;
                    summary.sites.skipped += r.counts.skipped;
                    if r.converted {
                        summary.sentences_with_conversion += 1;
                    }
                }
                None => {
                    eprintln!("warning: line {}: empty after normalization, skipped", idx + 1);
                    summary.lines_skipped += 1;
                }
            }
        }
    }
    fab.flush().and_then(|_| fa.flush()).and_then(|_| trace_file.flush()).map_err(|source| {
        CorpusError::Output { path: fab_path.display().to_string(), source }
    })?;

    let meta_path = out_prefix.with_extension("meta");
    std::fs::write(&meta_path, summary.to_meta()).map_err(|source| CorpusError::Output {
        path: meta_path.display().to_string(),
        source,
    })?;
    Ok(summary)
}
