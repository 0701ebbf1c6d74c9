//! Evaluation harness: loads colloquial→standard evaluation data with two
//! reference layers (word-level and style-level standardization), runs a
//! standardizer over every source sentence, and reports corpus BLEU next to
//! the no-edit baseline.
//!
//! The canonical on-disk format is UTF-8 TSV with columns
//! `source / word_ref / style_ref / genre`; a column map adapts other
//! layouts at import time. All text fields are normalized on load so every
//! system is scored on the same token stream.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::bleu::{corpus_bleu, BleuError, BleuScore, Smoothing};
use crate::normalize::{normalize_text, tokenize, NormalizationConfig, TokenSequence};

/// Expected sentence counts of the published evaluation splits.
pub const DEV_EXPECTED: usize = 917;
pub const TEST_EXPECTED: usize = 1012;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Dev,
    Test,
}

impl Split {
    pub fn expected_records(&self) -> usize {
        match self {
            Split::Dev => DEV_EXPECTED,
            Split::Test => TEST_EXPECTED,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// Which reference layer to score against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceType {
    Word,
    Style,
}

impl ReferenceType {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReferenceType::Word => "word",
            ReferenceType::Style => "style",
        }
    }
}

/// One evaluation sentence with both reference layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalRecord {
    pub source: String,
    pub word_ref: String,
    pub style_ref: String,
    pub genre: Option<String>,
}

/// Column layout of an external dataset file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub source: usize,
    pub word_ref: usize,
    /// Falls back to the word reference when absent.
    pub style_ref: Option<usize>,
    pub genre: Option<usize>,
    pub separator: char,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap { source: 0, word_ref: 1, style_ref: Some(2), genre: Some(3), separator: '\t' }
    }
}

impl ColumnMap {
    /// Parses `source=0,word=1,style=2,genre=3`; omitted keys keep defaults,
    /// `style=-` and `genre=-` disable those columns.
    pub fn parse(spec: &str) -> Result<Self, DatasetError> {
        let mut map = ColumnMap::default();
        for part in spec.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| DatasetError::ColumnMap(part.to_string()))?;
            let parse = |v: &str| -> Result<usize, DatasetError> {
                v.parse().map_err(|_| DatasetError::ColumnMap(part.to_string()))
            };
            match key {
                "source" => map.source = parse(value)?,
                "word" => map.word_ref = parse(value)?,
                "style" => map.style_ref = if value == "-" { None } else { Some(parse(value)?) },
                "genre" => map.genre = if value == "-" { None } else { Some(parse(value)?) },
                "sep" => {
                    map.separator = match value {
                        "tab" => '\t',
                        "comma" => ',',
                        "semicolon" => ';',
                        other => return Err(DatasetError::ColumnMap(other.to_string())),
                    }
                }
                _ => return Err(DatasetError::ColumnMap(part.to_string())),
            }
        }
        Ok(map)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: missing column {column}")]
    MissingColumn { line: usize, column: usize },
    #[error("line {line}: empty source sentence")]
    EmptySource { line: usize },
    #[error("bad column map entry {0:?}")]
    ColumnMap(String),
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("system failed on record {index}: {message}")]
    System { index: usize, message: String },
    #[error(transparent)]
    Bleu(#[from] BleuError),
}

/// Loads and normalizes a dataset file. Records with an empty source are
/// rejected with their line number.
pub fn load_dataset(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<Vec<EvalRecord>, DatasetError> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let norm = NormalizationConfig::default();
    let mut records = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(columns.separator).collect();
        let get = |col: usize| -> Result<&str, DatasetError> {
            fields
                .get(col)
                .copied()
                .ok_or(DatasetError::MissingColumn { line: line_no, column: col })
        };
        let source = normalize_text(get(columns.source)?, &norm);
        if source.is_empty() {
            return Err(DatasetError::EmptySource { line: line_no });
        }
        let word_ref = normalize_text(get(columns.word_ref)?, &norm);
        let style_ref = match columns.style_ref {
            Some(col) => normalize_text(get(col)?, &norm),
            None => word_ref.clone(),
        };
        let genre = match columns.genre {
            Some(col) => fields.get(col).map(|g| g.trim().to_string()).filter(|g| !g.is_empty()),
            None => None,
        };
        records.push(EvalRecord { source, word_ref, style_ref, genre });
    }
    Ok(records)
}

/// Writes records back in the canonical TSV layout.
pub fn write_dataset(path: impl AsRef<Path>, records: &[EvalRecord]) -> std::io::Result<()> {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.source,
            r.word_ref,
            r.style_ref,
            r.genre.as_deref().unwrap_or("")
        );
    }
    std::fs::write(path, out)
}

/// Returns a warning when the record count does not match the published
/// split size. Counts are asserted per split; totals only ever warn.
pub fn split_count_warning(split: Split, records: usize) -> Option<String> {
    let expected = split.expected_records();
    if records == expected {
        None
    } else {
        Some(format!(
            "warning: {} split has {} records, published split has {}",
            split.as_str(),
            records,
            expected
        ))
    }
}

/// BLEU over one genre's records.
#[derive(Debug, Clone, PartialEq)]
pub struct GenreScore {
    pub genre: String,
    pub records: usize,
    pub bleu: f64,
}

/// The result of scoring one system against one reference layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub system: String,
    pub reference: ReferenceType,
    pub score: BleuScore,
    /// The no-edit run on the same records, always reported alongside.
    pub identity_score: BleuScore,
    pub per_genre: Vec<GenreScore>,
    pub record_count: usize,
}

fn reference_of(record: &EvalRecord, reference: ReferenceType) -> &str {
    match reference {
        ReferenceType::Word => &record.word_ref,
        ReferenceType::Style => &record.style_ref,
    }
}

/// Runs the system over every source sentence. Any failure aborts with the
/// record index so scores stay comparable across systems.
pub fn run_system(
    system: &dyn Fn(&TokenSequence) -> Result<TokenSequence, String>,
    records: &[EvalRecord],
) -> Result<Vec<TokenSequence>, EvalError> {
    records
        .iter()
        .enumerate()
        .map(|(index, record)| {
            system(&tokenize(&record.source)).map_err(|message| EvalError::System { index, message })
        })
        .collect()
}

/// Scores previously produced hypotheses against one reference layer; the
/// same hypotheses can be scored against both layers (one decode, two
/// scorings).
pub fn score_hypotheses(
    system_name: &str,
    hypotheses: &[TokenSequence],
    records: &[EvalRecord],
    reference: ReferenceType,
) -> Result<EvalReport, EvalError> {
    let references: Vec<TokenSequence> =
        records.iter().map(|r| tokenize(reference_of(r, reference))).collect();
    let sources: Vec<TokenSequence> = records.iter().map(|r| tokenize(&r.source)).collect();
    let score = corpus_bleu(hypotheses, &references, Smoothing::Exp)?;
    let identity_score = corpus_bleu(&sources, &references, Smoothing::Exp)?;

    let mut genres: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, record) in records.iter().enumerate() {
        genres.entry(record.genre.as_deref().unwrap_or("unspecified")).or_default().push(i);
    }
    let mut per_genre = Vec::new();
    if genres.len() > 1 || records.iter().any(|r| r.genre.is_some()) {
        for (genre, idxs) in genres {
            let hyp: Vec<TokenSequence> = idxs.iter().map(|&i| hypotheses[i].clone()).collect();
            let refs: Vec<TokenSequence> = idxs.iter().map(|&i| references[i].clone()).collect();
            let bleu = corpus_bleu(&hyp, &refs, Smoothing::Exp)?;
            per_genre.push(GenreScore { genre: genre.to_string(), records: idxs.len(), bleu: bleu.score });
        }
    }
    Ok(EvalReport {
        system: system_name.to_string(),
        reference,
        score,
        identity_score,
        per_genre,
        record_count: records.len(),
    })
}

/// Convenience wrapper: run, then score against one reference layer.
pub fn evaluate(
    system_name: &str,
    system: &dyn Fn(&TokenSequence) -> Result<TokenSequence, String>,
    records: &[EvalRecord],
    reference: ReferenceType,
) -> Result<EvalReport, EvalError> {
    let hypotheses = run_system(system, records)?;
    score_hypotheses(system_name, &hypotheses, records, reference)
}

/// Renders the aligned table plus machine-readable key=value lines.
pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<18} {:>8} {:>8}", "system", "bleu", "records");
    let _ = writeln!(out, "{:<18} {:>8.1} {:>8}", report.system, report.score.score, report.record_count);
    let _ = writeln!(
        out,
        "{:<18} {:>8.1} {:>8}",
        "original-data", report.identity_score.score, report.record_count
    );
    if !report.per_genre.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<18} {:>8} {:>8}", "genre", "bleu", "records");
        for g in &report.per_genre {
            let _ = writeln!(out, "{:<18} {:>8.1} {:>8}", g.genre, g.bleu, g.records);
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "system={}", report.system);
    let _ = writeln!(out, "reference={}", report.reference.as_str());
    let _ = writeln!(out, "records={}", report.record_count);
    let _ = writeln!(out, "bleu={:.1}", report.score.score);
    let _ = writeln!(out, "bleu_exact={}", report.score.score);
    let _ = writeln!(
        out,
        "precisions={:.4},{:.4},{:.4},{:.4}",
        report.score.ngram_precisions[0],
        report.score.ngram_precisions[1],
        report.score.ngram_precisions[2],
        report.score.ngram_precisions[3]
    );
    let _ = writeln!(out, "brevity_penalty={:.4}", report.score.brevity_penalty);
    let _ = writeln!(out, "identity_bleu={:.1}", report.identity_score.score);
    out
}
