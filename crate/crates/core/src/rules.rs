//! Standard→colloquial conversion rules as an ordered, deterministic
//! single-pass transducer over token pairs.
//!
//! A rule examines the current token (and optionally the next one), consumes
//! one or two tokens, and emits one or more replacement tokens. The first
//! matching rule in file order wins at each position; unmatched tokens copy
//! through. Every application is recorded as a span-to-span trace entry so
//! downstream corpus generation keeps exact alignments.
//!
//! Rule files are plain UTF-8 TSV, one rule per line:
//!
//! ```text
//! id<TAB>category<TAB>match-kind<TAB>match<TAB>context-kind<TAB>context<TAB>replacement<TAB>invertible
//! ```
//!
//! `match-kind` is `exact`, `suffix`, `set` or `any`; suffix patterns may
//! carry leading `?` marks, each requiring one extra stem character beyond
//! the suffix (`??ود` only matches tokens whose stem before `ود` has at least
//! two characters). `context-kind` is `-`, `next_exact`, `next_set`,
//! `next_pos`, `take_exact` or `take_set`; the `take_*` kinds consume the
//! next token. The replacement holds space-separated output tokens; `*`
//! stands for the matched stem (the whole token for non-suffix kinds).
//! An optional ninth field names a part-of-speech constraint (`verb`,
//! `noun`, `other`). Directive lines `@set name tok…` and `@pos class tok…`
//! declare lexical sets and the closed-class lexicon; `#` starts a comment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use crate::normalize::{is_punctuation_token, TokenSequence, ZWNJ};

/// The shipped default rule file, embedded verbatim.
pub const DEFAULT_RULES: &str = include_str!("../assets/rules.tsv");

/// Rule families mirroring the main conversion patterns of colloquial
/// Iranian Persian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleCategory {
    AnSuffix,
    VerbSuffix,
    VerbForm,
    HaSuffix,
    Common,
    CaseMarker,
    AttachPronoun,
    AstCopula,
    HastCopula,
    Lexical,
}

impl RuleCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            RuleCategory::AnSuffix => "an_suffix",
            RuleCategory::VerbSuffix => "verb_suffix",
            RuleCategory::VerbForm => "verb_form",
            RuleCategory::HaSuffix => "ha_suffix",
            RuleCategory::Common => "common",
            RuleCategory::CaseMarker => "case_marker",
            RuleCategory::AttachPronoun => "attach_pronoun",
            RuleCategory::AstCopula => "ast_copula",
            RuleCategory::HastCopula => "hast_copula",
            RuleCategory::Lexical => "lexical",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "an_suffix" => RuleCategory::AnSuffix,
            "verb_suffix" => RuleCategory::VerbSuffix,
            "verb_form" => RuleCategory::VerbForm,
            "ha_suffix" => RuleCategory::HaSuffix,
            "common" => RuleCategory::Common,
            "case_marker" => RuleCategory::CaseMarker,
            "attach_pronoun" => RuleCategory::AttachPronoun,
            "ast_copula" => RuleCategory::AstCopula,
            "hast_copula" => RuleCategory::HastCopula,
            "lexical" => RuleCategory::Lexical,
            _ => return None,
        })
    }
}

impl fmt::Display for RuleCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Coarse part-of-speech classes used by rule constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PosClass {
    Verb,
    Noun,
    Other,
}

impl PosClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            PosClass::Verb => "verb",
            PosClass::Noun => "noun",
            PosClass::Other => "other",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "verb" => PosClass::Verb,
            "noun" => PosClass::Noun,
            "other" => PosClass::Other,
            _ => return None,
        })
    }
}

/// Pattern on the current token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchKind {
    Exact(String),
    /// Token ends with `suffix` and the remaining stem has at least
    /// `min_stem` characters (zero allows the token to equal the suffix).
    Suffix { suffix: String, min_stem: usize },
    /// Membership in a named lexical set declared with `@set`.
    Set(String),
    /// Matches any non-punctuation token; only useful with a context.
    Any,
}

/// Predicate on the following token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContextPred {
    Exact(String),
    Set(String),
    Pos(PosClass),
}

/// Optional condition on the next token; `consume` makes the rule 2→1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Context {
    None,
    Next { pred: ContextPred, consume: bool },
}

impl Context {
    pub fn consumes_next(&self) -> bool {
        matches!(self, Context::Next { consume: true, .. })
    }
}

/// One conversion entry of the transducer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteRule {
    pub id: String,
    pub category: RuleCategory,
    pub matcher: MatchKind,
    pub context: Context,
    pub pos_constraint: Option<PosClass>,
    /// Output token templates; `*` is the captured stem.
    pub replacement: Vec<String>,
    pub invertible: bool,
}

impl RewriteRule {
    /// Number of input tokens this rule consumes.
    pub fn consumed(&self) -> usize {
        if self.context.consumes_next() {
            2
        } else {
            1
        }
    }
}

/// One fired rule: which source tokens produced which output tokens.
/// Spans are half-open `[start, end)` token index ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleApplication {
    pub rule_id: String,
    pub source_span: (usize, usize),
    pub target_span: (usize, usize),
}

/// An ordered rule list plus the lexical sets and closed-class lexicon it
/// references. Immutable after parsing.
#[derive(Debug, Clone, Default)]
pub struct RuleSet {
    pub rules: Vec<RewriteRule>,
    pub sets: BTreeMap<String, BTreeSet<String>>,
    pub lexicon: BTreeMap<String, PosClass>,
}

#[derive(Debug, thiserror::Error)]
pub enum RuleError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("failed to read rule file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("trace replay failed: {0}")]
    Replay(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> RuleError {
    RuleError::Parse { line, message: message.into() }
}

/// Personal-ending characters for the present/subjunctive verb heuristic.
const PRESENT_ENDINGS: &[char] = &['م', 'ی', 'د', 'ه', 'ن'];

/// Past-paradigm endings (stem in ت/د plus person suffix).
const PAST_ENDINGS: &[&str] = &[
    "تم", "تی", "تیم", "تید", "تند", "دم", "دی", "دیم", "دید", "دند",
];

/// Shape-based verb detection for tokens absent from the lexicon: the
/// imperfective prefix می/نمی, the subjunctive/negation prefix ب/ن with a
/// personal ending, or a past-paradigm ending.
fn verb_shape(token: &str) -> bool {
    let n = token.chars().count();
    if (token.starts_with("می") || token.starts_with("نمی")) && n >= 4 {
        return true;
    }
    if n >= 3 {
        if (token.starts_with('ب') || token.starts_with('ن'))
            && token.chars().last().is_some_and(|c| PRESENT_ENDINGS.contains(&c))
        {
            return true;
        }
        if PAST_ENDINGS.iter().any(|e| token.ends_with(e)) {
            return true;
        }
    }
    false
}

impl RuleSet {
    /// Coarse POS of a token: lexicon first, then the verb-shape heuristic,
    /// punctuation is `Other`, everything else `Noun`.
    pub fn pos_class(&self, token: &str) -> PosClass {
        if let Some(&class) = self.lexicon.get(token) {
            return class;
        }
        if is_punctuation_token(token) {
            return PosClass::Other;
        }
        if verb_shape(token) {
            PosClass::Verb
        } else {
            PosClass::Noun
        }
    }

    fn in_set(&self, name: &str, token: &str) -> bool {
        self.sets.get(name).is_some_and(|s| s.contains(token))
    }

    /// Tries `rule` at position `i`; on success returns the emitted tokens.
    pub fn try_rule(&self, rule: &RewriteRule, tokens: &[String], i: usize) -> Option<Vec<String>> {
        let token = tokens.get(i)?;
        if let Some(required) = rule.pos_constraint {
            if self.pos_class(token) != required {
                return None;
            }
        }
        let stem: &str = match &rule.matcher {
            MatchKind::Exact(form) => {
                if token != form {
                    return None;
                }
                token
            }
            MatchKind::Suffix { suffix, min_stem } => {
                let stem = token.strip_suffix(suffix.as_str())?;
                if stem.chars().count() < *min_stem {
                    return None;
                }
                stem
            }
            MatchKind::Set(name) => {
                if !self.in_set(name, token) {
                    return None;
                }
                token
            }
            MatchKind::Any => {
                if is_punctuation_token(token) {
                    return None;
                }
                token
            }
        };
        if let Context::Next { pred, .. } = &rule.context {
            let next = tokens.get(i + 1)?;
            let ok = match pred {
                ContextPred::Exact(form) => next == form,
                ContextPred::Set(name) => self.in_set(name, next),
                ContextPred::Pos(class) => self.pos_class(next) == *class,
            };
            if !ok {
                return None;
            }
        }
        Some(rule.replacement.iter().map(|t| expand_template(t, stem)).collect())
    }

    /// First matching rule at position `i`, in rule order.
    pub fn find_match(&self, tokens: &[String], i: usize) -> Option<(usize, Vec<String>)> {
        self.rules
            .iter()
            .enumerate()
            .find_map(|(idx, rule)| self.try_rule(rule, tokens, i).map(|out| (idx, out)))
    }

    /// All matching rules at position `i`, in rule order.
    pub fn find_all_matches(&self, tokens: &[String], i: usize) -> Vec<(usize, Vec<String>)> {
        self.rules
            .iter()
            .enumerate()
            .filter_map(|(idx, rule)| self.try_rule(rule, tokens, i).map(|out| (idx, out)))
            .collect()
    }

    /// Rules grouped by category, for reporting.
    pub fn category_counts(&self) -> BTreeMap<RuleCategory, usize> {
        let mut counts = BTreeMap::new();
        for rule in &self.rules {
            *counts.entry(rule.category).or_insert(0) += 1;
        }
        counts
    }
}

fn expand_template(template: &str, stem: &str) -> String {
    if template.contains('*') {
        template.replace('*', stem)
    } else {
        template.to_string()
    }
}

/// Expands a template after the stem is known, trimming any ZWNJ that would
/// end up on a token edge (a stem like `گل` + template `*ا` keeps its inner
/// ZWNJ, but a stem ending in ZWNJ must not bleed it into the boundary).
fn expand_output(template: &str, stem: &str) -> String {
    let expanded = expand_template(template, stem.trim_matches(ZWNJ));
    expanded.trim_matches(ZWNJ).to_string()
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

fn parse_suffix_pattern(pattern: &str) -> (String, usize) {
    let min_stem = pattern.chars().take_while(|&c| c == '?').count();
    let suffix: String = pattern.chars().skip(min_stem).collect();
    (suffix, min_stem)
}

fn parse_rule_line(line_no: usize, line: &str, sets: &BTreeMap<String, BTreeSet<String>>) -> Result<RewriteRule, RuleError> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 8 && fields.len() != 9 {
        return Err(parse_err(
            line_no,
            format!("expected 8 or 9 tab-separated fields, found {}", fields.len()),
        ));
    }
    let id = fields[0].trim();
    if id.is_empty() {
        return Err(parse_err(line_no, "empty rule id"));
    }
    let category = RuleCategory::parse(fields[1])
        .ok_or_else(|| parse_err(line_no, format!("unknown category {:?}", fields[1])))?;

    let matcher = match fields[2] {
        "exact" => {
            if fields[3].is_empty() {
                return Err(parse_err(line_no, "exact match form is empty"));
            }
            MatchKind::Exact(fields[3].to_string())
        }
        "suffix" => {
            let (suffix, min_stem) = parse_suffix_pattern(fields[3]);
            if suffix.is_empty() {
                return Err(parse_err(line_no, "suffix pattern is empty"));
            }
            MatchKind::Suffix { suffix, min_stem }
        }
        "set" => {
            if !sets.contains_key(fields[3]) {
                return Err(parse_err(line_no, format!("unknown set {:?}", fields[3])));
            }
            MatchKind::Set(fields[3].to_string())
        }
        "any" => MatchKind::Any,
        other => return Err(parse_err(line_no, format!("unknown match kind {other:?}"))),
    };

    let context = match fields[4] {
        "-" => Context::None,
        kind @ ("next_exact" | "take_exact") => Context::Next {
            pred: ContextPred::Exact(fields[5].to_string()),
            consume: kind == "take_exact",
        },
        kind @ ("next_set" | "take_set") => {
            if !sets.contains_key(fields[5]) {
                return Err(parse_err(line_no, format!("unknown set {:?}", fields[5])));
            }
            Context::Next { pred: ContextPred::Set(fields[5].to_string()), consume: kind == "take_set" }
        }
        "next_pos" => Context::Next {
            pred: ContextPred::Pos(
                PosClass::parse(fields[5])
                    .ok_or_else(|| parse_err(line_no, format!("unknown pos class {:?}", fields[5])))?,
            ),
            consume: false,
        },
        other => return Err(parse_err(line_no, format!("unknown context kind {other:?}"))),
    };
    if matches!(context, Context::None) && fields[5] != "-" {
        return Err(parse_err(line_no, "context form given without a context kind"));
    }

    let replacement: Vec<String> = fields[6].split(' ').map(str::to_string).collect();
    if replacement.iter().any(String::is_empty) {
        return Err(parse_err(line_no, "replacement contains an empty token"));
    }
    let has_stem_slot = replacement.iter().any(|t| t.contains('*'));
    match &matcher {
        MatchKind::Exact(_) => {
            if has_stem_slot {
                return Err(parse_err(line_no, "exact rules must not use the * placeholder"));
            }
        }
        MatchKind::Suffix { .. } | MatchKind::Any | MatchKind::Set(_) => {
            if !has_stem_slot {
                return Err(parse_err(line_no, "pattern rules must use the * placeholder"));
            }
            if replacement.iter().any(|t| t.matches('*').count() > 1)
                || replacement.iter().filter(|t| t.contains('*')).count() > 1
            {
                return Err(parse_err(line_no, "replacement must contain exactly one *"));
            }
            if !replacement[0].starts_with('*') {
                return Err(parse_err(line_no, "the * placeholder must start the first output token"));
            }
            if replacement[0] == "*" {
                if let MatchKind::Suffix { min_stem: 0, .. } = matcher {
                    return Err(parse_err(
                        line_no,
                        "a bare * output requires a non-empty stem (use a ? guard)",
                    ));
                }
            }
        }
    }

    let invertible = match fields[7] {
        "1" => true,
        "0" => false,
        other => return Err(parse_err(line_no, format!("invertible flag must be 0 or 1, found {other:?}"))),
    };

    let pos_constraint = if fields.len() == 9 && fields[8] != "-" {
        Some(
            PosClass::parse(fields[8])
                .ok_or_else(|| parse_err(line_no, format!("unknown pos class {:?}", fields[8])))?,
        )
    } else {
        None
    };

    // A rule must never map a token to itself.
    if let (MatchKind::Exact(form), Context::None, [single]) = (&matcher, &context, replacement.as_slice()) {
        if single == form {
            return Err(parse_err(line_no, format!("rule {id} maps {form:?} to itself")));
        }
    }
    if let (MatchKind::Suffix { suffix, .. }, Context::None, [single]) = (&matcher, &context, replacement.as_slice()) {
        if single.strip_prefix('*') == Some(suffix.as_str()) {
            return Err(parse_err(line_no, format!("rule {id} maps its suffix to itself")));
        }
    }

    Ok(RewriteRule { id: id.to_string(), category, matcher, context, pos_constraint, replacement, invertible })
}

/// Parses rule-file content. See the module docs for the format.
pub fn parse_rule_str(content: &str) -> Result<RuleSet, RuleError> {
    let mut rule_set = RuleSet::default();
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();
    for (idx, raw_line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("@set\t") {
            let mut parts = rest.split('\t');
            let name = parts.next().unwrap_or("").trim();
            let members: BTreeSet<String> = parts
                .next()
                .unwrap_or("")
                .split(' ')
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect();
            if name.is_empty() || members.is_empty() {
                return Err(parse_err(line_no, "@set requires a name and at least one member"));
            }
            rule_set.sets.insert(name.to_string(), members);
            continue;
        }
        if let Some(rest) = line.strip_prefix("@pos\t") {
            let mut parts = rest.split('\t');
            let class = PosClass::parse(parts.next().unwrap_or(""))
                .ok_or_else(|| parse_err(line_no, "@pos requires a class (verb|noun|other)"))?;
            let tokens: Vec<&str> = parts.next().unwrap_or("").split(' ').filter(|t| !t.is_empty()).collect();
            if tokens.is_empty() {
                return Err(parse_err(line_no, "@pos requires at least one token"));
            }
            for token in tokens {
                rule_set.lexicon.insert(token.to_string(), class);
            }
            continue;
        }
        let rule = parse_rule_line(line_no, line, &rule_set.sets)?;
        if !seen_ids.insert(rule.id.clone()) {
            return Err(parse_err(line_no, format!("duplicate rule id {:?}", rule.id)));
        }
        rule_set.rules.push(rule);
    }
    Ok(rule_set)
}

/// Reads and validates a rule file from disk.
pub fn parse_rule_file(path: impl AsRef<Path>) -> Result<RuleSet, RuleError> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|source| RuleError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_rule_str(&content)
}

/// The parsed shipped rule set.
pub fn shipped_rule_set() -> &'static RuleSet {
    static SHIPPED: OnceLock<RuleSet> = OnceLock::new();
    SHIPPED.get_or_init(|| parse_rule_str(DEFAULT_RULES).expect("shipped rule file must parse"))
}

/// SHA-256 of rule-file content, stamped into generated corpora and reports.
pub fn rule_content_hash(content: &str) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(content.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Application
// ---------------------------------------------------------------------------

/// Applies the rule set in one deterministic left-to-right pass: at each
/// position the first matching rule fires, unmatched tokens copy through.
/// The returned trace aligns every fired rule's source span to its output
/// span; uncovered positions are implicit one-to-one copies.
pub fn apply_rules(seq: &TokenSequence, rs: &RuleSet) -> (TokenSequence, Vec<RuleApplication>) {
    apply_rules_filtered(seq, rs, |_, _| true)
}

/// Like [`apply_rules`] but consults `fire` at every applicable site; a
/// `false` verdict skips the conversion and copies the token. Corpus
/// generation uses this hook for its probabilistic skip.
pub fn apply_rules_filtered(
    seq: &TokenSequence,
    rs: &RuleSet,
    mut fire: impl FnMut(usize, &RewriteRule) -> bool,
) -> (TokenSequence, Vec<RuleApplication>) {
    let tokens = seq.tokens();
    let mut output: Vec<String> = Vec::with_capacity(tokens.len());
    let mut trace: Vec<RuleApplication> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let matched = rs.find_match(tokens, i);
        match matched {
            Some((rule_idx, out_tokens)) if fire(i, &rs.rules[rule_idx]) => {
                let rule = &rs.rules[rule_idx];
                let consumed = rule.consumed();
                let produced: Vec<String> =
                    out_tokens.iter().map(|t| t.trim_matches(ZWNJ).to_string()).collect();
                let start = output.len();
                output.extend(produced);
                trace.push(RuleApplication {
                    rule_id: rule.id.clone(),
                    source_span: (i, i + consumed),
                    target_span: (start, output.len()),
                });
                i += consumed;
            }
            _ => {
                output.push(tokens[i].clone());
                i += 1;
            }
        }
    }
    (TokenSequence::from_trusted(output), trace)
}

/// Re-derives the colloquial side from the standard side and a trace by
/// re-firing the traced rules at their recorded positions. Fails when the
/// trace does not fit the input or a traced rule no longer matches.
pub fn replay_trace(
    standard: &TokenSequence,
    trace: &[RuleApplication],
    rs: &RuleSet,
) -> Result<TokenSequence, RuleError> {
    let tokens = standard.tokens();
    let mut output: Vec<String> = Vec::with_capacity(tokens.len());
    let mut cursor = 0usize;
    for app in trace {
        let (src_start, src_end) = app.source_span;
        if src_start < cursor || src_end > tokens.len() || src_start >= src_end {
            return Err(RuleError::Replay(format!(
                "span {src_start}..{src_end} is out of order or out of bounds"
            )));
        }
        while cursor < src_start {
            output.push(tokens[cursor].clone());
            cursor += 1;
        }
        let rule = rs
            .rules
            .iter()
            .find(|r| r.id == app.rule_id)
            .ok_or_else(|| RuleError::Replay(format!("unknown rule id {:?}", app.rule_id)))?;
        if rule.consumed() != src_end - src_start {
            return Err(RuleError::Replay(format!(
                "rule {} consumes {} tokens but span is {} wide",
                rule.id,
                rule.consumed(),
                src_end - src_start
            )));
        }
        let produced = rs
            .try_rule(rule, tokens, src_start)
            .ok_or_else(|| RuleError::Replay(format!("rule {} does not match at {src_start}", rule.id)))?;
        let produced: Vec<String> = produced.iter().map(|t| t.trim_matches(ZWNJ).to_string()).collect();
        let (tgt_start, tgt_end) = app.target_span;
        if tgt_start != output.len() || tgt_end != output.len() + produced.len() {
            return Err(RuleError::Replay(format!(
                "rule {} target span {tgt_start}..{tgt_end} does not line up (expected start {})",
                rule.id,
                output.len()
            )));
        }
        output.extend(produced);
        cursor = src_end;
    }
    while cursor < tokens.len() {
        output.push(tokens[cursor].clone());
        cursor += 1;
    }
    Ok(TokenSequence::from_trusted(output))
}

// ---------------------------------------------------------------------------
// Inversion
// ---------------------------------------------------------------------------

/// Builds the colloquial→standard rules for one shipped rule. Returns `None`
/// for rules marked non-invertible (lossy merges) and for shapes whose
/// inverse the rule format cannot express.
pub fn invert_rule(rule: &RewriteRule, rs: &RuleSet) -> Option<Vec<RewriteRule>> {
    if !rule.invertible {
        return None;
    }
    let consume_ctx = match &rule.context {
        Context::None => None,
        Context::Next { pred: ContextPred::Exact(c), consume: true } => Some(c.clone()),
        // Checked-but-unconsumed or set/pos contexts lose information.
        Context::Next { .. } => return None,
    };

    let inv = |matcher: MatchKind, replacement: Vec<String>, suffix_id: usize| RewriteRule {
        id: if suffix_id == 0 { format!("{}~inv", rule.id) } else { format!("{}~inv{}", rule.id, suffix_id) },
        category: rule.category,
        matcher,
        context: Context::None,
        pos_constraint: rule.pos_constraint,
        replacement,
        invertible: true,
    };

    match &rule.matcher {
        MatchKind::Exact(form) => {
            let mut source: Vec<String> = vec![form.clone()];
            if let Some(ctx) = consume_ctx {
                source.push(ctx);
            }
            match rule.replacement.as_slice() {
                [single] => Some(vec![inv(MatchKind::Exact(single.clone()), source, 0)]),
                [first, second] => Some(vec![RewriteRule {
                    id: format!("{}~inv", rule.id),
                    category: rule.category,
                    matcher: MatchKind::Exact(first.clone()),
                    context: Context::Next { pred: ContextPred::Exact(second.clone()), consume: true },
                    pos_constraint: rule.pos_constraint,
                    replacement: source,
                    invertible: true,
                }]),
                _ => None,
            }
        }
        MatchKind::Suffix { suffix, min_stem } => {
            // Replacement is "*tail" (possibly "*tail extra") by validation.
            let tail = rule.replacement[0].strip_prefix('*').expect("validated");
            if tail.is_empty() {
                return None;
            }
            let mut replacement = vec![format!("*{suffix}")];
            replacement.extend(rule.replacement.iter().skip(1).cloned());
            if let Some(ctx) = consume_ctx {
                // forward consumed (token, ctx); inverse emits both back
                if replacement.len() > 1 {
                    return None;
                }
                replacement.push(ctx);
            } else if rule.replacement.len() > 1 {
                // 1→many with a stem: invert only the two-token shape
                if rule.replacement.len() != 2 {
                    return None;
                }
                return Some(vec![RewriteRule {
                    id: format!("{}~inv", rule.id),
                    category: rule.category,
                    matcher: MatchKind::Suffix { suffix: tail.to_string(), min_stem: *min_stem },
                    context: Context::Next {
                        pred: ContextPred::Exact(rule.replacement[1].clone()),
                        consume: true,
                    },
                    pos_constraint: rule.pos_constraint,
                    replacement: vec![format!("*{suffix}")],
                    invertible: true,
                }]);
            }
            Some(vec![inv(
                MatchKind::Suffix { suffix: tail.to_string(), min_stem: *min_stem },
                replacement,
                0,
            )])
        }
        MatchKind::Any => {
            let tail = rule.replacement[0].strip_prefix('*').expect("validated");
            if tail.is_empty() {
                return None;
            }
            let ctx = consume_ctx?;
            let mut replacement = vec!["*".to_string(), ctx];
            replacement.extend(rule.replacement.iter().skip(1).cloned());
            if replacement.len() > 2 {
                return None;
            }
            Some(vec![inv(
                MatchKind::Suffix { suffix: tail.to_string(), min_stem: 1 },
                replacement,
                0,
            )])
        }
        MatchKind::Set(name) => {
            // Expand members into exact inverses.
            let members = rs.sets.get(name)?;
            let mut inverses = Vec::new();
            for (k, member) in members.iter().enumerate() {
                let out: Vec<String> =
                    rule.replacement.iter().map(|t| expand_output(t, member)).collect();
                if out.len() != 1 {
                    return None;
                }
                let mut source = vec![member.clone()];
                if let Some(ctx) = &consume_ctx {
                    source.push(ctx.clone());
                }
                inverses.push(inv(MatchKind::Exact(out[0].clone()), source, k + 1));
            }
            Some(inverses)
        }
    }
}

/// The inverted rule set plus the colloquial forms reachable from more than
/// one standard source (ambiguous inversions, resolved by the baseline's
/// policy).
#[derive(Debug, Clone)]
pub struct InvertedRuleSet {
    pub rule_set: RuleSet,
    /// Matcher signature → ids of the forward rules that collide on it.
    pub ambiguous: BTreeMap<String, Vec<String>>,
    /// Ids of forward rules that could not be inverted.
    pub non_invertible: Vec<String>,
}

fn matcher_signature(rule: &RewriteRule) -> String {
    let m = match &rule.matcher {
        MatchKind::Exact(f) => format!("exact:{f}"),
        MatchKind::Suffix { suffix, min_stem } => format!("suffix:{suffix}:{min_stem}"),
        MatchKind::Set(n) => format!("set:{n}"),
        MatchKind::Any => "any".to_string(),
    };
    let c = match &rule.context {
        Context::None => "-".to_string(),
        Context::Next { pred, consume } => {
            let p = match pred {
                ContextPred::Exact(f) => format!("exact:{f}"),
                ContextPred::Set(n) => format!("set:{n}"),
                ContextPred::Pos(p) => format!("pos:{}", p.as_str()),
            };
            format!("{p}:{consume}")
        }
    };
    format!("{m}|{c}")
}

/// Inverts every invertible rule, preserving file order, and records
/// collisions and non-invertible ids.
pub fn invert_rule_set(rs: &RuleSet) -> InvertedRuleSet {
    let mut inverted = RuleSet {
        rules: Vec::new(),
        sets: rs.sets.clone(),
        lexicon: rs.lexicon.clone(),
    };
    let mut owners: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut non_invertible = Vec::new();
    for rule in &rs.rules {
        match invert_rule(rule, rs) {
            Some(list) => {
                for inv in list {
                    owners.entry(matcher_signature(&inv)).or_default().push(rule.id.clone());
                    inverted.rules.push(inv);
                }
            }
            None => non_invertible.push(rule.id.clone()),
        }
    }
    let ambiguous: BTreeMap<String, Vec<String>> =
        owners.into_iter().filter(|(_, ids)| ids.len() > 1).collect();
    InvertedRuleSet { rule_set: inverted, ambiguous, non_invertible }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalize::tokenize;

    fn toks(s: &str) -> TokenSequence {
        tokenize(s)
    }

    const TOY_RULES: &str = "\
@set\tpron\tما شما
a1\tlexical\texact\tدیگر\t-\t-\tدیگه\t1
a2\tan_suffix\tsuffix\t??ان\t-\t-\t*ون\t1
a3\tast_copula\tany\t-\ttake_exact\tاست\t*ه\t1\tnoun
a4\tcase_marker\tset\tpron\ttake_exact\tرا\t*رو\t1
";

    #[test]
    fn parses_well_formed_file_in_order() {
        let rs = parse_rule_str(TOY_RULES).unwrap();
        assert_eq!(rs.rules.len(), 4);
        assert_eq!(rs.rules[0].id, "a1");
        assert_eq!(rs.rules[1].category, RuleCategory::AnSuffix);
        assert!(rs.sets.contains_key("pron"));
    }

    #[test]
    fn duplicate_id_is_an_error_at_second_occurrence() {
        let bad = "x\tlexical\texact\tالف\t-\t-\tب\t1\nx\tlexical\texact\tب\t-\t-\tج\t1\n";
        let err = parse_rule_str(bad).unwrap_err();
        match err {
            RuleError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("duplicate"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn self_mapping_rule_is_rejected() {
        let bad = "x\tlexical\texact\tالف\t-\t-\tالف\t1\n";
        assert!(parse_rule_str(bad).is_err());
        let bad = "x\tan_suffix\tsuffix\tان\t-\t-\t*ان\t1\n";
        assert!(parse_rule_str(bad).is_err());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let bad = "# fine\nonly three\tfields\there\n";
        match parse_rule_str(bad).unwrap_err() {
            RuleError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn apply_fires_first_match_and_traces_spans() {
        let rs = parse_rule_str(TOY_RULES).unwrap();
        let (out, trace) = apply_rules(&toks("تهران دیگر کم است"), &rs);
        assert_eq!(out.tokens(), ["تهرون", "دیگه", "کمه"]);
        assert_eq!(trace.len(), 3);
        assert_eq!(trace[2].rule_id, "a3");
        assert_eq!(trace[2].source_span, (2, 4));
        assert_eq!(trace[2].target_span, (2, 3));
    }

    #[test]
    fn unmatched_tokens_copy_through() {
        let rs = parse_rule_str(TOY_RULES).unwrap();
        let (out, trace) = apply_rules(&toks("سلام دنیا"), &rs);
        assert_eq!(out.tokens(), ["سلام", "دنیا"]);
        assert!(trace.is_empty());
    }

    #[test]
    fn set_rule_merges_with_case_marker() {
        let rs = parse_rule_str(TOY_RULES).unwrap();
        let (out, _) = apply_rules(&toks("ما را دید"), &rs);
        assert_eq!(out.tokens(), ["مارو", "دید"]);
    }

    #[test]
    fn any_rule_skips_punctuation_and_verbs() {
        let rs = parse_rule_str(TOY_RULES).unwrap();
        // punctuation before است must not merge
        let (out, _) = apply_rules(&toks("، است"), &rs);
        assert_eq!(out.tokens(), ["،", "است"]);
    }

    #[test]
    fn suffix_guard_requires_stem_length() {
        let rs = parse_rule_str(TOY_RULES).unwrap();
        // ??ان needs a two-character stem; جان has only one
        let (out, _) = apply_rules(&toks("جان تهران"), &rs);
        assert_eq!(out.tokens(), ["جان", "تهرون"]);
    }

    #[test]
    fn replay_reproduces_output() {
        let rs = parse_rule_str(TOY_RULES).unwrap();
        let input = toks("تهران دیگر کم است و ما را دید");
        let (out, trace) = apply_rules(&input, &rs);
        let replayed = replay_trace(&input, &trace, &rs).unwrap();
        assert_eq!(replayed, out);
    }

    #[test]
    fn replay_rejects_corrupt_trace() {
        let rs = parse_rule_str(TOY_RULES).unwrap();
        let input = toks("تهران");
        let (_, mut trace) = apply_rules(&input, &rs);
        trace[0].source_span = (5, 6);
        assert!(replay_trace(&input, &trace, &rs).is_err());
    }

    #[test]
    fn inversion_round_trips_exact_and_suffix_rules() {
        let rs = parse_rule_str(TOY_RULES).unwrap();
        let inverted = invert_rule_set(&rs);
        let (out, _) = apply_rules(&toks("تهرون دیگه"), &inverted.rule_set);
        assert_eq!(out.tokens(), ["تهران", "دیگر"]);
    }

    #[test]
    fn inversion_of_merge_is_one_to_two() {
        let rs = parse_rule_str(TOY_RULES).unwrap();
        let merge = rs.rules.iter().find(|r| r.id == "a3").unwrap();
        let inv = invert_rule(merge, &rs).unwrap();
        assert_eq!(inv.len(), 1);
        assert_eq!(inv[0].replacement, vec!["*".to_string(), "است".to_string()]);
        let inverted = invert_rule_set(&rs);
        let (out, _) = apply_rules(&toks("کمه"), &inverted.rule_set);
        assert_eq!(out.tokens(), ["کم", "است"]);
    }

    #[test]
    fn non_invertible_rules_are_flagged() {
        let rules = "x\tlexical\texact\tالف\t-\t-\tب\t0\n";
        let rs = parse_rule_str(rules).unwrap();
        assert!(invert_rule(&rs.rules[0], &rs).is_none());
        let inverted = invert_rule_set(&rs);
        assert_eq!(inverted.non_invertible, vec!["x".to_string()]);
    }

    #[test]
    fn colliding_inversions_are_flagged_ambiguous() {
        let rules = "\
r1\tcase_marker\texact\tآن\ttake_exact\tرا\tاونو\t1
r2\tcase_marker\texact\tاو\ttake_exact\tرا\tاونو\t1
";
        let rs = parse_rule_str(rules).unwrap();
        let inverted = invert_rule_set(&rs);
        assert_eq!(inverted.ambiguous.len(), 1);
        let ids = inverted.ambiguous.values().next().unwrap();
        assert_eq!(ids, &vec!["r1".to_string(), "r2".to_string()]);
        // first-listed resolution applies آن را
        let (out, _) = apply_rules(&toks("اونو"), &inverted.rule_set);
        assert_eq!(out.tokens(), ["آن", "را"]);
    }

    #[test]
    fn verb_shape_heuristic() {
        for verb in ["می‌خورم", "میخوره", "نمی‌روند", "بروم", "نرود", "رفتند", "خوردیم"] {
            assert!(verb_shape(verb), "{verb} should look like a verb");
        }
        for other in ["میز", "کتاب", "تهران", "بد", "مرد", "خوب"] {
            assert!(!verb_shape(other), "{other} should not look like a verb");
        }
    }
}
