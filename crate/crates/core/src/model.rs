//! Colloquial→standard transduction without neural machinery: a conditional
//! phrase table estimated from exact corpus alignments plus an n-gram
//! language model over standard text, decoded left-to-right with beam
//! search over segmentations into 1–2 token source phrases.
//!
//! The hypothesis score is the sum of phrase log-probabilities plus
//! `lm_weight` times the summed language-model log-scores of the output
//! tokens. Unknown tokens copy through with a fixed penalty. Greedy
//! decoding is beam search with beam 1.
//!
//! All counts are integers (fixed-point for fractional weights), so training
//! is deterministic under any sharding; candidate lists and the model file
//! are sorted, so serialization is byte-stable.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::gencorpus::parse_trace;
use crate::normalize::{tokenize, TokenSequence};
use crate::rules::RuleApplication;

/// Sentence-boundary markers used by the language model. Reserved: they
/// cannot occur in whitespace-tokenized text.
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

/// Fixed log-penalty for copying an out-of-vocabulary token through,
/// below any smoothed table candidate.
pub const UNK_LOG_PROB: f64 = -9.210340371976182; // ln(1e-4)

/// Fixed-point scale for fractional training counts.
const COUNT_UNIT: u64 = 1000;

/// Longest colloquial phrase stored in the table.
pub const MAX_SOURCE_PHRASE: usize = 2;
/// Longest standard phrase stored in the table.
pub const MAX_TARGET_PHRASE: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("unsupported model version {0:?}")]
    Version(String),
    #[error("corpus files are not line-aligned")]
    Misaligned,
}

fn format_err(line: usize, message: impl Into<String>) -> ModelError {
    ModelError::Format { line, message: message.into() }
}

// ---------------------------------------------------------------------------
// Language model
// ---------------------------------------------------------------------------

/// N-gram model with stupid-backoff scoring: relative frequency at the
/// longest matching order, multiplied by a fixed backoff factor per level
/// skipped. Scores are not normalized; they live in (0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct NgramLm {
    order: usize,
    /// counts[k] holds (k+1)-gram counts over BOS-padded, EOS-terminated
    /// sentences; windows consisting only of BOS are not stored.
    counts: Vec<BTreeMap<Vec<String>, u64>>,
    /// Σ_w count(h·w) per history, the denominator for each order.
    context_totals: Vec<BTreeMap<Vec<String>, u64>>,
    total_unigrams: u64,
    backoff: f64,
}

impl NgramLm {
    fn new(order: usize, backoff: f64) -> Self {
        NgramLm {
            order,
            counts: vec![BTreeMap::new(); order],
            context_totals: vec![BTreeMap::new(); order],
            total_unigrams: 0,
            backoff,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn add_sentence(&mut self, tokens: &[String]) {
        let mut padded: Vec<String> = Vec::with_capacity(tokens.len() + self.order);
        for _ in 1..self.order {
            padded.push(BOS.to_string());
        }
        padded.extend(tokens.iter().cloned());
        padded.push(EOS.to_string());
        for n in 1..=self.order {
            if padded.len() < n {
                continue;
            }
            for window in padded.windows(n) {
                if window.iter().all(|t| t == BOS) {
                    continue;
                }
                *self.counts[n - 1].entry(window.to_vec()).or_insert(0) += 1;
            }
        }
        self.total_unigrams += tokens.len() as u64 + 1; // words plus EOS
    }

    fn merge(&mut self, other: NgramLm) {
        for (mine, theirs) in self.counts.iter_mut().zip(other.counts) {
            for (k, v) in theirs {
                *mine.entry(k).or_insert(0) += v;
            }
        }
        self.total_unigrams += other.total_unigrams;
    }

    fn finalize(&mut self) {
        for n in 2..=self.order {
            let mut totals: BTreeMap<Vec<String>, u64> = BTreeMap::new();
            for (ngram, count) in &self.counts[n - 1] {
                *totals.entry(ngram[..n - 1].to_vec()).or_insert(0) += count;
            }
            self.context_totals[n - 1] = totals;
        }
    }

    /// Stupid-backoff score of `token` after `history` (most recent last).
    /// `history` is truncated or BOS-padded to `order - 1` tokens by the
    /// caller; shorter histories are simply scored at a lower order.
    pub fn score(&self, token: &str, history: &[String]) -> f64 {
        let hist_len = history.len().min(self.order - 1);
        let mut factor = 1.0f64;
        for n in (2..=hist_len + 1).rev() {
            let h = &history[history.len() - (n - 1)..];
            let mut key: Vec<String> = Vec::with_capacity(n);
            key.extend(h.iter().cloned());
            key.push(token.to_string());
            if let Some(&c) = self.counts[n - 1].get(&key) {
                let ctx = self.context_totals[n - 1][&key[..n - 1]];
                return factor * (c as f64 / ctx as f64);
            }
            factor *= self.backoff;
        }
        let unigram = self.counts[0].get(&vec![token.to_string()]).copied();
        match unigram {
            Some(c) if self.total_unigrams > 0 => factor * (c as f64 / self.total_unigrams as f64),
            // unseen word: a floor strictly below any observed unigram
            _ => factor * (0.1 / (self.total_unigrams as f64 + 1.0)),
        }
    }

    pub fn log_score(&self, token: &str, history: &[String]) -> f64 {
        self.score(token, history).ln()
    }
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// One translation option for a colloquial phrase.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub target: Vec<String>,
    pub log_prob: f64,
}

/// The trained transducer: phrase table plus language model.
#[derive(Debug, Clone, PartialEq)]
pub struct TransductionModel {
    phrase_table: BTreeMap<Vec<String>, Vec<Candidate>>,
    pub lm: NgramLm,
    pub lm_weight: f64,
}

impl TransductionModel {
    /// A model with an empty phrase table; decoding copies everything
    /// through (identity).
    pub fn empty(lm_order: usize) -> Self {
        let mut lm = NgramLm::new(lm_order.max(2), 0.4);
        lm.finalize();
        TransductionModel { phrase_table: BTreeMap::new(), lm, lm_weight: 1.0 }
    }

    pub fn candidates(&self, phrase: &[String]) -> Option<&[Candidate]> {
        self.phrase_table.get(phrase).map(Vec::as_slice)
    }

    pub fn source_phrase_count(&self) -> usize {
        self.phrase_table.len()
    }

    pub fn iter_phrases(&self) -> impl Iterator<Item = (&Vec<String>, &[Candidate])> {
        self.phrase_table.iter().map(|(k, v)| (k, v.as_slice()))
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub lm_order: usize,
    /// Add-α smoothing over each source phrase's observed candidates.
    pub phrase_alpha: f64,
    /// Weight of identity phrase pairs harvested from copied tokens;
    /// kept below 1 so real conversions dominate the table.
    pub identity_weight: f64,
    pub lm_weight: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { lm_order: 3, phrase_alpha: 0.1, identity_weight: 0.1, lm_weight: 1.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainStats {
    pub pairs_used: u64,
    /// Pairs whose trace failed alignment replay, rejected.
    pub pairs_rejected: u64,
    pub source_phrases: usize,
}

#[derive(Default)]
struct Counts {
    phrase: BTreeMap<(Vec<String>, Vec<String>), u64>,
    lm: Option<NgramLm>,
    used: u64,
    rejected: u64,
}

impl Counts {
    fn merge(mut self, other: Counts) -> Counts {
        for (k, v) in other.phrase {
            *self.phrase.entry(k).or_insert(0) += v;
        }
        match (&mut self.lm, other.lm) {
            (Some(mine), Some(theirs)) => mine.merge(theirs),
            (slot @ None, theirs) => *slot = theirs,
            _ => {}
        }
        self.used += other.used;
        self.rejected += other.rejected;
        self
    }
}

/// Validates the trace against both sides (gaps must copy identical tokens,
/// spans must tile in order) and harvests phrase pairs. Weights are
/// fixed-point units.
fn extract_pair(
    counts: &mut Counts,
    colloquial: &[String],
    standard: &[String],
    trace: &[RuleApplication],
    identity_units: u64,
) -> Result<(), String> {
    let mut src_cursor = 0usize; // standard side
    let mut tgt_cursor = 0usize; // colloquial side
    let mut entries: Vec<(&[String], &[String])> = Vec::new();
    for app in trace {
        let (ss, se) = app.source_span;
        let (ts, te) = app.target_span;
        if ss < src_cursor || ts < tgt_cursor || ss >= se || ts >= te {
            return Err(format!("span out of order in {}", app.rule_id));
        }
        if se > standard.len() || te > colloquial.len() {
            return Err(format!("span out of bounds in {}", app.rule_id));
        }
        if ss - src_cursor != ts - tgt_cursor {
            return Err("copy gap lengths differ".to_string());
        }
        for k in 0..(ss - src_cursor) {
            if standard[src_cursor + k] != colloquial[tgt_cursor + k] {
                return Err("copy gap tokens differ".to_string());
            }
        }
        entries.push((&colloquial[ts..te], &standard[ss..se]));
        src_cursor = se;
        tgt_cursor = te;
    }
    if standard.len() - src_cursor != colloquial.len() - tgt_cursor {
        return Err("trailing copy lengths differ".to_string());
    }
    for k in 0..(standard.len() - src_cursor) {
        if standard[src_cursor + k] != colloquial[tgt_cursor + k] {
            return Err("trailing copy tokens differ".to_string());
        }
    }

    // Rule spans count at full weight.
    for (src_phrase, tgt_phrase) in entries {
        if src_phrase.len() <= MAX_SOURCE_PHRASE && tgt_phrase.len() <= MAX_TARGET_PHRASE {
            *counts
                .phrase
                .entry((src_phrase.to_vec(), tgt_phrase.to_vec()))
                .or_insert(0) += COUNT_UNIT;
        }
    }
    // Copied tokens contribute downweighted identity pairs.
    let mut sc = 0usize;
    let mut tc = 0usize;
    for app in trace {
        while sc < app.source_span.0 {
            *counts
                .phrase
                .entry((vec![colloquial[tc].clone()], vec![standard[sc].clone()]))
                .or_insert(0) += identity_units;
            sc += 1;
            tc += 1;
        }
        sc = app.source_span.1;
        tc = app.target_span.1;
    }
    while sc < standard.len() {
        *counts
            .phrase
            .entry((vec![colloquial[tc].clone()], vec![standard[sc].clone()]))
            .or_insert(0) += identity_units;
        sc += 1;
        tc += 1;
    }
    Ok(())
}

fn finalize(counts: Counts, opts: &TrainOptions) -> (TransductionModel, TrainStats) {
    let mut by_source: BTreeMap<Vec<String>, Vec<(Vec<String>, u64)>> = BTreeMap::new();
    for ((src, tgt), units) in counts.phrase {
        by_source.entry(src).or_default().push((tgt, units));
    }
    let mut phrase_table: BTreeMap<Vec<String>, Vec<Candidate>> = BTreeMap::new();
    for (src, cands) in by_source {
        let k = cands.len() as f64;
        let total: f64 = cands.iter().map(|(_, u)| *u as f64 / COUNT_UNIT as f64).sum();
        let denom = total + opts.phrase_alpha * k;
        let mut list: Vec<Candidate> = cands
            .into_iter()
            .map(|(tgt, units)| {
                let c = units as f64 / COUNT_UNIT as f64;
                Candidate { target: tgt, log_prob: ((c + opts.phrase_alpha) / denom).ln() }
            })
            .collect();
        list.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob).then_with(|| a.target.cmp(&b.target)));
        phrase_table.insert(src, list);
    }
    let mut lm = counts.lm.unwrap_or_else(|| NgramLm::new(opts.lm_order, 0.4));
    lm.finalize();
    let stats = TrainStats {
        pairs_used: counts.used,
        pairs_rejected: counts.rejected,
        source_phrases: phrase_table.len(),
    };
    (TransductionModel { phrase_table, lm, lm_weight: opts.lm_weight }, stats)
}

/// Trains from in-memory aligned pairs (colloquial, standard, trace).
pub fn train<'a, I>(pairs: I, opts: &TrainOptions) -> (TransductionModel, TrainStats)
where
    I: IntoIterator<Item = (&'a TokenSequence, &'a TokenSequence, &'a [RuleApplication])>,
{
    let mut counts = Counts { lm: Some(NgramLm::new(opts.lm_order, 0.4)), ..Default::default() };
    let identity_units = (opts.identity_weight * COUNT_UNIT as f64).round() as u64;
    for (colloquial, standard, trace) in pairs {
        match extract_pair(&mut counts, colloquial.tokens(), standard.tokens(), trace, identity_units) {
            Ok(()) => {
                counts.lm.as_mut().expect("lm present").add_sentence(standard.tokens());
                counts.used += 1;
            }
            Err(reason) => {
                eprintln!("warning: rejected pair: {reason}");
                counts.rejected += 1;
            }
        }
    }
    finalize(counts, opts)
}

/// Trains from the three aligned corpus files written by corpus generation.
/// Count accumulation is sharded and merged; integer counts make the result
/// independent of sharding.
pub fn train_from_files(
    fab: &Path,
    fa: &Path,
    trace: &Path,
    opts: &TrainOptions,
) -> Result<(TransductionModel, TrainStats), ModelError> {
    let read = |path: &Path| -> Result<Vec<String>, ModelError> {
        let file = File::open(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        BufReader::new(file)
            .lines()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| ModelError::Io { path: path.display().to_string(), source })
    };
    let fab_lines = read(fab)?;
    let fa_lines = read(fa)?;
    let trace_lines = read(trace)?;
    if fab_lines.len() != fa_lines.len() || fa_lines.len() != trace_lines.len() {
        return Err(ModelError::Misaligned);
    }

    let identity_units = (opts.identity_weight * COUNT_UNIT as f64).round() as u64;
    let rows: Vec<(usize, (&String, &String, &String))> = fab_lines
        .iter()
        .zip(&fa_lines)
        .zip(&trace_lines)
        .map(|((a, b), c)| (a, b, c))
        .enumerate()
        .collect();
    let counts = rows
        .par_chunks(2048)
        .map(|chunk| {
            let mut local = Counts { lm: Some(NgramLm::new(opts.lm_order, 0.4)), ..Default::default() };
            for (idx, (fab_line, fa_line, trace_line)) in chunk {
                let colloquial = tokenize(fab_line);
                let standard = tokenize(fa_line);
                let trace = match parse_trace(trace_line) {
                    Ok(t) => t,
                    Err(_) => {
                        eprintln!("warning: line {}: malformed trace, pair rejected", idx + 1);
                        local.rejected += 1;
                        continue;
                    }
                };
                match extract_pair(
                    &mut local,
                    colloquial.tokens(),
                    standard.tokens(),
                    &trace,
                    identity_units,
                ) {
                    Ok(()) => {
                        local.lm.as_mut().expect("lm present").add_sentence(standard.tokens());
                        local.used += 1;
                    }
                    Err(reason) => {
                        eprintln!("warning: line {}: {reason}, pair rejected", idx + 1);
                        local.rejected += 1;
                    }
                }
            }
            local
        })
        .reduce(Counts::default, Counts::merge);
    Ok(finalize(counts, opts))
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Greedy,
    Beam,
}

#[derive(Debug, Clone, Copy)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    pub beam_size: usize,
    /// Overrides the model's stored weight when set.
    pub lm_weight: Option<f64>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { mode: DecodeMode::Greedy, beam_size: 4, lm_weight: None }
    }
}

impl DecodeConfig {
    pub fn beam(beam_size: usize) -> Self {
        DecodeConfig { mode: DecodeMode::Beam, beam_size, lm_weight: None }
    }

    fn effective_beam(&self) -> usize {
        match self.mode {
            DecodeMode::Greedy => 1,
            DecodeMode::Beam => self.beam_size.max(1),
        }
    }
}

#[derive(Clone)]
struct Hypothesis {
    score: f64,
    output: Vec<String>,
}

fn better(a: &Hypothesis, b: &Hypothesis) -> bool {
    match a.score.total_cmp(&b.score) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => a.output < b.output,
    }
}

fn history_of(output: &[String], len: usize) -> Vec<String> {
    let mut hist: Vec<String> = Vec::with_capacity(len);
    let take = output.len().min(len);
    for _ in 0..(len - take) {
        hist.push(BOS.to_string());
    }
    hist.extend(output[output.len() - take..].iter().cloned());
    hist
}

/// Keeps the best hypothesis per LM history, then the `beam` best overall.
fn prune(stack: &mut Vec<Hypothesis>, beam: usize, hist_len: usize) {
    let mut winners: Vec<Hypothesis> = Vec::new();
    let mut index: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    for hyp in stack.drain(..) {
        let hist = history_of(&hyp.output, hist_len);
        match index.get(&hist) {
            Some(&slot) => {
                if better(&hyp, &winners[slot]) {
                    winners[slot] = hyp;
                }
            }
            None => {
                index.insert(hist, winners.len());
                winners.push(hyp);
            }
        }
    }
    winners.sort_by(|a, b| {
        b.score.total_cmp(&a.score).then_with(|| a.output.cmp(&b.output))
    });
    winners.truncate(beam);
    *stack = winners;
}

/// Decodes one colloquial sentence to standard form.
pub fn standardize(
    colloquial: &TokenSequence,
    model: &TransductionModel,
    cfg: &DecodeConfig,
) -> TokenSequence {
    standardize_scored(colloquial, model, cfg).0
}

/// Like [`standardize`] but also returns the model score of the winning
/// hypothesis (phrase log-probabilities plus weighted LM log-scores,
/// including the end-of-sentence term).
pub fn standardize_scored(
    colloquial: &TokenSequence,
    model: &TransductionModel,
    cfg: &DecodeConfig,
) -> (TokenSequence, f64) {
    let tokens = colloquial.tokens();
    let n = tokens.len();
    let beam = cfg.effective_beam();
    let lm_weight = cfg.lm_weight.unwrap_or(model.lm_weight);
    let hist_len = model.lm.order() - 1;

    let mut stacks: Vec<Vec<Hypothesis>> = vec![Vec::new(); n + 1];
    stacks[0].push(Hypothesis { score: 0.0, output: Vec::new() });

    for i in 0..=n {
        prune(&mut stacks[i], beam, hist_len);
        if i == n {
            break;
        }
        let expansions: Vec<Hypothesis> = stacks[i].clone();
        for hyp in &expansions {
            for phrase_len in 1..=MAX_SOURCE_PHRASE.min(n - i) {
                let source = &tokens[i..i + phrase_len];
                let copy_through: Vec<Candidate>;
                let candidates: &[Candidate] = match model.candidates(source) {
                    Some(c) => c,
                    None if phrase_len == 1 => {
                        copy_through = vec![Candidate {
                            target: vec![tokens[i].clone()],
                            log_prob: UNK_LOG_PROB,
                        }];
                        &copy_through
                    }
                    None => continue,
                };
                for cand in candidates {
                    let mut score = hyp.score + cand.log_prob;
                    let mut hist = history_of(&hyp.output, hist_len);
                    for t in &cand.target {
                        score += lm_weight * model.lm.log_score(t, &hist);
                        hist.remove(0);
                        hist.push(t.clone());
                    }
                    let mut output = hyp.output.clone();
                    output.extend(cand.target.iter().cloned());
                    stacks[i + phrase_len].push(Hypothesis { score, output });
                }
            }
        }
    }

    let mut best: Option<Hypothesis> = None;
    for hyp in &stacks[n] {
        let hist = history_of(&hyp.output, hist_len);
        let final_score = hyp.score + lm_weight * model.lm.log_score(EOS, &hist);
        let closed = Hypothesis { score: final_score, output: hyp.output.clone() };
        if best.as_ref().is_none_or(|b| better(&closed, b)) {
            best = Some(closed);
        }
    }
    match best {
        Some(hyp) => (TokenSequence::from_trusted(hyp.output), hyp.score),
        None => (TokenSequence::from_trusted(Vec::new()), 0.0),
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

const MAGIC: &str = "guyesh-model";

/// Writes the model in the documented plain-text format. Floats are printed
/// with Rust's shortest round-trip formatting, so save→load is bit-exact.
pub fn save_model(model: &TransductionModel, path: &Path) -> Result<(), ModelError> {
    let io = |source| ModelError::Io { path: path.display().to_string(), source };
    let file = File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    let mut vocab: BTreeMap<&str, usize> = BTreeMap::new();
    for (src, cands) in &model.phrase_table {
        for t in src {
            vocab.entry(t).or_default();
        }
        for cand in cands {
            for t in &cand.target {
                vocab.entry(t).or_default();
            }
        }
    }
    for table in &model.lm.counts {
        for ngram in table.keys() {
            for t in ngram {
                vocab.entry(t).or_default();
            }
        }
    }
    for (i, (_, id)) in vocab.iter_mut().enumerate() {
        *id = i;
    }

    let mut write = |s: String| -> Result<(), ModelError> {
        w.write_all(s.as_bytes()).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    write(format!("{MAGIC} {}\n", crate::MODEL_FORMAT_VERSION))?;
    write(format!("lm_order\t{}\n", model.lm.order))?;
    write(format!("lm_weight\t{}\n", model.lm_weight))?;
    write(format!("backoff\t{}\n", model.lm.backoff))?;
    write(format!("lm_total\t{}\n", model.lm.total_unigrams))?;
    write(format!("vocab\t{}\n", vocab.len()))?;
    for (token, id) in &vocab {
        write(format!("{id}\t{token}\n"))?;
    }
    let ids = |tokens: &[String]| -> String {
        tokens
            .iter()
            .map(|t| vocab[t.as_str()].to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    let phrase_count: usize = model.phrase_table.values().map(Vec::len).sum();
    write(format!("phrases\t{phrase_count}\n"))?;
    for (src, cands) in &model.phrase_table {
        for cand in cands {
            write(format!("{}\t{}\t{}\n", ids(src), ids(&cand.target), cand.log_prob))?;
        }
    }
    let ngram_count: usize = model.lm.counts.iter().map(BTreeMap::len).sum();
    write(format!("ngrams\t{ngram_count}\n"))?;
    for (order_idx, table) in model.lm.counts.iter().enumerate() {
        for (ngram, count) in table {
            write(format!("{}\t{}\t{}\n", order_idx + 1, ids(ngram), count))?;
        }
    }
    write("end\n".to_string())?;
    w.flush().map_err(|source| ModelError::Io { path: path.display().to_string(), source })
}

struct ModelReader {
    lines: std::iter::Enumerate<std::io::Lines<BufReader<File>>>,
    path: String,
}

impl ModelReader {
    fn next_line(&mut self) -> Result<(usize, String), ModelError> {
        match self.lines.next() {
            Some((idx, Ok(line))) => Ok((idx + 1, line)),
            Some((idx, Err(source))) => Err(ModelError::Io {
                path: format!("{} (line {})", self.path, idx + 1),
                source,
            }),
            None => Err(format_err(0, "file truncated")),
        }
    }

    fn field(&mut self, name: &str) -> Result<(usize, String), ModelError> {
        let (line_no, line) = self.next_line()?;
        let (key, value) = line
            .split_once('\t')
            .ok_or_else(|| format_err(line_no, format!("expected {name}")))?;
        if key != name {
            return Err(format_err(line_no, format!("expected {name}, found {key}")));
        }
        Ok((line_no, value.to_string()))
    }
}

/// Loads a model file, verifying the magic header, version, section counts
/// and the trailing `end` marker.
pub fn load_model(path: &Path) -> Result<TransductionModel, ModelError> {
    let file = File::open(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut r = ModelReader {
        lines: BufReader::new(file).lines().enumerate(),
        path: path.display().to_string(),
    };

    let (_, magic_line) = r.next_line()?;
    let mut magic_parts = magic_line.split(' ');
    if magic_parts.next() != Some(MAGIC) {
        return Err(format_err(1, "bad magic header"));
    }
    let version = magic_parts.next().unwrap_or("");
    if version != crate::MODEL_FORMAT_VERSION.to_string() {
        return Err(ModelError::Version(version.to_string()));
    }

    let parse_f64 = |value: &str, line: usize, what: &str| -> Result<f64, ModelError> {
        value.parse::<f64>().map_err(|_| format_err(line, format!("bad {what}")))
    };

    let (line_no, value) = r.field("lm_order")?;
    let lm_order: usize = value.parse().map_err(|_| format_err(line_no, "bad lm_order"))?;
    if !(2..=8).contains(&lm_order) {
        return Err(format_err(line_no, "lm_order out of range"));
    }
    let (line_no, value) = r.field("lm_weight")?;
    let lm_weight = parse_f64(&value, line_no, "lm_weight")?;
    let (line_no, value) = r.field("backoff")?;
    let backoff = parse_f64(&value, line_no, "backoff")?;
    let (line_no, value) = r.field("lm_total")?;
    let lm_total: u64 = value.parse().map_err(|_| format_err(line_no, "bad lm_total"))?;

    let (line_no, value) = r.field("vocab")?;
    let vocab_len: usize = value.parse().map_err(|_| format_err(line_no, "bad vocab count"))?;
    let mut vocab: Vec<String> = Vec::with_capacity(vocab_len);
    for _ in 0..vocab_len {
        let (line_no, line) = r.next_line()?;
        let (id, token) = line
            .split_once('\t')
            .ok_or_else(|| format_err(line_no, "bad vocab entry"))?;
        if id.parse::<usize>() != Ok(vocab.len()) {
            return Err(format_err(line_no, "vocab ids must be dense and ordered"));
        }
        vocab.push(token.to_string());
    }
    let decode_ids = |s: &str, line_no: usize| -> Result<Vec<String>, ModelError> {
        s.split(',')
            .map(|id| {
                let idx: usize =
                    id.parse().map_err(|_| format_err(line_no, "bad token id"))?;
                vocab
                    .get(idx)
                    .cloned()
                    .ok_or_else(|| format_err(line_no, "token id out of range"))
            })
            .collect()
    };

    let (line_no, value) = r.field("phrases")?;
    let phrase_count: usize =
        value.parse().map_err(|_| format_err(line_no, "bad phrase count"))?;
    let mut phrase_table: BTreeMap<Vec<String>, Vec<Candidate>> = BTreeMap::new();
    for _ in 0..phrase_count {
        let (line_no, line) = r.next_line()?;
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            return Err(format_err(line_no, "bad phrase entry"));
        }
        let src = decode_ids(parts[0], line_no)?;
        let tgt = decode_ids(parts[1], line_no)?;
        let log_prob: f64 = parts[2]
            .parse()
            .map_err(|_| format_err(line_no, "bad phrase log-probability"))?;
        phrase_table
            .entry(src)
            .or_default()
            .push(Candidate { target: tgt, log_prob });
    }

    let (line_no, value) = r.field("ngrams")?;
    let ngram_count: usize =
        value.parse().map_err(|_| format_err(line_no, "bad ngram count"))?;
    let mut lm = NgramLm::new(lm_order, backoff);
    lm.total_unigrams = lm_total;
    for _ in 0..ngram_count {
        let (line_no, line) = r.next_line()?;
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            return Err(format_err(line_no, "bad ngram entry"));
        }
        let order: usize = parts[0]
            .parse()
            .map_err(|_| format_err(line_no, "bad ngram order"))?;
        if !(1..=lm_order).contains(&order) {
            return Err(format_err(line_no, "ngram order out of range"));
        }
        let ngram = decode_ids(parts[1], line_no)?;
        if ngram.len() != order {
            return Err(format_err(line_no, "ngram length does not match order"));
        }
        let count: u64 = parts[2]
            .parse()
            .map_err(|_| format_err(line_no, "bad ngram count"))?;
        lm.counts[order - 1].insert(ngram, count);
    }
    let (line_no, end) = r.next_line()?;
    if end != "end" {
        return Err(format_err(line_no, "missing end marker (file truncated?)"));
    }
    lm.finalize();
    Ok(TransductionModel { phrase_table, lm, lm_weight })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gencorpus::{break_sentence, sentence_rng};
    use crate::normalize::tokenize;
    use crate::rules::parse_rule_str;

    fn seq(s: &str) -> TokenSequence {
        tokenize(s)
    }

    /// Builds aligned pairs by breaking sentences with a toy rule set.
    fn toy_pairs(sentences: &[&str], reps: usize) -> Vec<(TokenSequence, TokenSequence, Vec<RuleApplication>)> {
        let rs = parse_rule_str(
            "r_an\tan_suffix\tsuffix\t??ان\t-\t-\t*ون\t1\nr_ast\tast_copula\tany\t-\ttake_exact\tاست\t*ه\t1\tnoun\n",
        )
        .unwrap();
        let mut out = Vec::new();
        for rep in 0..reps {
            for (k, s) in sentences.iter().enumerate() {
                let std_seq = seq(s);
                let mut rng = sentence_rng(7, (rep * sentences.len() + k) as u64);
                let (pair, _) = break_sentence(&std_seq, &rs, 0.1, &mut rng);
                out.push((pair.colloquial, pair.standard, pair.trace));
            }
        }
        out
    }

    #[test]
    fn single_outcome_normalizes_to_probability_one() {
        let pairs = toy_pairs(&["تهران"], 100);
        let refs: Vec<_> = pairs.iter().map(|(a, b, c)| (a, b, c.as_slice())).collect();
        let (model, stats) = train(refs, &TrainOptions::default());
        assert_eq!(stats.pairs_used, 100);
        assert_eq!(stats.pairs_rejected, 0);
        let cands = model.candidates(&[String::from("تهرون")]);
        if let Some(cands) = cands {
            assert_eq!(cands.len(), 1);
            assert!((cands[0].log_prob.exp() - 1.0).abs() < 1e-12);
        } else {
            panic!("expected تهرون in the table");
        }
    }

    #[test]
    fn relative_frequencies_are_exact_without_smoothing() {
        // Hand-built counts: the same colloquial token aligned to two targets
        // 75 and 25 times.
        let mut counts = Counts { lm: Some(NgramLm::new(3, 0.4)), ..Default::default() };
        let colloq: Vec<String> = vec!["تورو".into()];
        let std_a: Vec<String> = vec!["تو".into(), "را".into()];
        let std_b: Vec<String> = vec!["تورو".into()];
        for _ in 0..75 {
            *counts.phrase.entry((colloq.clone(), std_a.clone())).or_insert(0) += COUNT_UNIT;
        }
        for _ in 0..25 {
            *counts.phrase.entry((colloq.clone(), std_b.clone())).or_insert(0) += COUNT_UNIT;
        }
        let opts = TrainOptions { phrase_alpha: 0.0, ..Default::default() };
        let (model, _) = finalize(counts, &opts);
        let cands = model.candidates(&colloq).unwrap();
        assert_eq!(cands.len(), 2);
        assert!((cands[0].log_prob.exp() - 0.75).abs() < 1e-12);
        assert!((cands[1].log_prob.exp() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn candidate_distributions_sum_to_one() {
        let pairs = toy_pairs(&["تهران کم است", "باران زیاد است", "گمان کم است"], 40);
        let refs: Vec<_> = pairs.iter().map(|(a, b, c)| (a, b, c.as_slice())).collect();
        let (model, _) = train(refs, &TrainOptions::default());
        assert!(model.source_phrase_count() > 0);
        for (src, cands) in model.iter_phrases() {
            let sum: f64 = cands.iter().map(|c| c.log_prob.exp()).sum();
            assert!((sum - 1.0).abs() < 1e-9, "candidates for {src:?} sum to {sum}");
        }
    }

    #[test]
    fn lm_backs_off_with_fixed_factor() {
        // Ten fixed sentences; the counts below are hand-tallied.
        let sentences = [
            "الف ب ج", "الف ب ج", "الف ب ج", "الف ب د", "الف ب د",
            "ب ج د", "ب ج د", "ج الف ب", "د الف ب", "الف ج ب",
        ];
        let mut lm = NgramLm::new(3, 0.4);
        for s in &sentences {
            lm.add_sentence(seq(s).tokens());
        }
        lm.finalize();
        // seen trigram: (الف ب ج) count 3, context (الف ب) extends to
        // ج 3 times, د 2 times, </s> 2 times -> 3/7
        let h = vec!["الف".to_string(), "ب".to_string()];
        assert!((lm.score("ج", &h) - 3.0 / 7.0).abs() < 1e-12);
        // unseen trigram (ب ج الف) backs off to bigram (ج الف), scaled 0.4.
        // bigrams starting with ج: (ج </s>) 3, (ج د) 2, (ج الف) 1, (ج ب) 1 -> ctx 7
        let h2 = vec!["ب".to_string(), "ج".to_string()];
        assert!(
            (lm.score("الف", &h2) - 0.4 * (1.0 / 7.0)).abs() < 1e-12,
            "got {}",
            lm.score("الف", &h2)
        );
        // double backoff: neither (د ب الف) nor (ب الف) occur, so the score
        // falls to the unigram 8/40 scaled by 0.4 twice
        let h3 = vec!["د".to_string(), "ب".to_string()];
        assert!((lm.score("الف", &h3) - 0.4 * 0.4 * (8.0 / 40.0)).abs() < 1e-12);
        // unseen word floor
        let unseen = lm.score("ه", &h3);
        assert!(unseen > 0.0 && unseen < 1.0 / 40.0);
    }

    #[test]
    fn oov_only_input_copies_through() {
        let model = TransductionModel::empty(3);
        let input = seq("سلام دنیا خوبی");
        let (out, score) = standardize_scored(&input, &model, &DecodeConfig::default());
        assert_eq!(out, input);
        assert!(score < 0.0);
    }

    #[test]
    fn forced_argmax_translates_known_token() {
        let pairs = toy_pairs(&["تهران"], 100);
        let refs: Vec<_> = pairs.iter().map(|(a, b, c)| (a, b, c.as_slice())).collect();
        let (model, _) = train(refs, &TrainOptions::default());
        let out = standardize(&seq("تهرون"), &model, &DecodeConfig::default());
        assert_eq!(out.tokens(), ["تهران"]);
    }

    #[test]
    fn greedy_equals_beam_one() {
        let pairs = toy_pairs(&["تهران کم است", "باران کم است", "گمان زیاد است"], 30);
        let refs: Vec<_> = pairs.iter().map(|(a, b, c)| (a, b, c.as_slice())).collect();
        let (model, _) = train(refs, &TrainOptions::default());
        for input in ["تهرون کمه", "بارون زیاد است", "گمون کمه تهرون"] {
            let g = standardize(&seq(input), &model, &DecodeConfig::default());
            let b1 = standardize(
                &seq(input),
                &model,
                &DecodeConfig { mode: DecodeMode::Beam, beam_size: 1, lm_weight: None },
            );
            assert_eq!(g, b1, "greedy vs beam-1 diverged on {input}");
        }
    }

    #[test]
    fn larger_beams_never_lower_the_model_score() {
        let pairs = toy_pairs(&["تهران کم است", "باران کم است", "گمان زیاد است", "تهران زیاد است"], 25);
        let refs: Vec<_> = pairs.iter().map(|(a, b, c)| (a, b, c.as_slice())).collect();
        let (model, _) = train(refs, &TrainOptions::default());
        for input in ["تهرون کمه", "بارون کمه تهرون", "گمون زیاد است"] {
            let mut last = f64::NEG_INFINITY;
            for beam in [1usize, 2, 4, 8] {
                let (_, score) = standardize_scored(
                    &seq(input),
                    &model,
                    &DecodeConfig { mode: DecodeMode::Beam, beam_size: beam, lm_weight: None },
                );
                assert!(
                    score >= last - 1e-12,
                    "beam {beam} lowered score on {input}: {score} < {last}"
                );
                last = score;
            }
        }
    }

    #[test]
    fn empty_input_decodes_to_empty() {
        let model = TransductionModel::empty(3);
        let out = standardize(&TokenSequence::default(), &model, &DecodeConfig::default());
        assert!(out.is_empty());
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let pairs = toy_pairs(&["تهران کم است", "باران زیاد است"], 50);
        let refs: Vec<_> = pairs.iter().map(|(a, b, c)| (a, b, c.as_slice())).collect();
        let (model, _) = train(refs, &TrainOptions::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.model");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        for input in ["تهرون کمه", "بارون زیاد است", "ناشناخته تهرون"] {
            let (a, sa) = standardize_scored(&seq(input), &model, &DecodeConfig::beam(4));
            let (b, sb) = standardize_scored(&seq(input), &loaded, &DecodeConfig::beam(4));
            assert_eq!(a, b);
            assert_eq!(sa.to_bits(), sb.to_bits(), "scores differ bit-wise on {input}");
        }
        // saving the loaded model reproduces the file byte for byte
        let path2 = dir.path().join("toy2.model");
        save_model(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn corrupted_magic_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.model");
        std::fs::write(&path, "not-a-model 1\nend\n").unwrap();
        assert!(matches!(load_model(&path), Err(ModelError::Format { .. })));
    }

    #[test]
    fn truncated_file_is_an_error() {
        let pairs = toy_pairs(&["تهران"], 5);
        let refs: Vec<_> = pairs.iter().map(|(a, b, c)| (a, b, c.as_slice())).collect();
        let (model, _) = train(refs, &TrainOptions::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.model");
        save_model(&model, &path).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        let cut = content.len() - 10;
        std::fs::write(&path, &content[..cut]).unwrap();
        assert!(load_model(&path).is_err());
    }

    #[test]
    fn rejects_pairs_with_corrupt_traces() {
        let std_seq = seq("تهران کم است");
        let colloq = seq("تهرون کمه");
        let bogus = vec![RuleApplication {
            rule_id: "x".into(),
            source_span: (0, 1),
            target_span: (0, 2), // wrong width pairing for the gap that follows
        }];
        let pairs = vec![(&colloq, &std_seq, bogus.as_slice())];
        let (_, stats) = train(pairs, &TrainOptions::default());
        assert_eq!(stats.pairs_used, 0);
        assert_eq!(stats.pairs_rejected, 1);
    }
}
