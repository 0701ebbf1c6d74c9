//! Canonicalization of Perso-Arabic text and whitespace/punctuation tokenization.
//!
//! Persian web text mixes Arabic and Persian codepoints for the same letters
//! (Arabic Yeh U+064A vs Persian Yeh U+06CC, Arabic Kaf U+0643 vs Keheh U+06A9),
//! three digit repertoires, and stray directional marks. Everything downstream
//! of this module assumes the canonical forms produced here.
//!
//! ZWNJ (U+200C) is meaningful inside Persian compounds and affixed forms and
//! is preserved by default, but never survives at a token boundary.

use std::fmt;

/// Zero-width non-joiner, used inside Persian compounds.
pub const ZWNJ: char = '\u{200C}';

/// Punctuation marks that tokenize as standalone tokens. Symbols outside this
/// set stay attached to their neighbours.
pub const PUNCTUATION: &[char] = &[
    '.', ',', '!', '?', ':', ';', '"', '\'', '(', ')', '[', ']', '{', '}',
    '«', '»', '\u{060C}', '\u{061B}', '\u{061F}', '\u{2026}', '%', '\u{066A}',
];

/// Punctuation that detokenization attaches to the preceding token.
const ATTACH_LEFT: &[char] = &[
    '.', ',', '!', '?', ':', ';', '"', '\'', ')', ']', '}', '»',
    '\u{060C}', '\u{061B}', '\u{061F}', '\u{2026}', '%', '\u{066A}',
];

/// Punctuation that detokenization attaches to the following token.
const ATTACH_RIGHT: &[char] = &['(', '[', '{', '«'];

/// Invisible format controls dropped unconditionally (directional marks,
/// zero-width space, BOM). ZWNJ is not in this set.
const FORMAT_CONTROLS: &[char] = &['\u{200B}', '\u{200E}', '\u{200F}', '\u{FEFF}'];

/// Arabic presentation variants mapped to their canonical Persian codepoints.
const ARABIC_VARIANTS: &[(char, char)] = &[
    ('\u{064A}', '\u{06CC}'), // Arabic Yeh -> Farsi Yeh
    ('\u{0649}', '\u{06CC}'), // Alef Maksura -> Farsi Yeh
    ('\u{06D2}', '\u{06CC}'), // Yeh Barree -> Farsi Yeh
    ('\u{0643}', '\u{06A9}'), // Arabic Kaf -> Keheh
    ('\u{0629}', '\u{0647}'), // Teh Marbuta -> Heh
    ('\u{0623}', '\u{0627}'), // Alef with Hamza above -> Alef
    ('\u{0625}', '\u{0627}'), // Alef with Hamza below -> Alef
    ('\u{0671}', '\u{0627}'), // Alef Wasla -> Alef
];

/// Tatweel/kashida, removed together with the variant mapping.
const TATWEEL: char = '\u{0640}';

/// Combining marks removed when `strip_diacritics` is on.
const DIACRITICS: &[char] = &[
    '\u{064B}', '\u{064C}', '\u{064D}', '\u{064E}', '\u{064F}', '\u{0650}',
    '\u{0651}', '\u{0652}', '\u{0653}', '\u{0654}', '\u{0655}', '\u{0670}',
];

/// Flags controlling [`normalize_text`]. Everything defaults to enabled except
/// diacritic stripping: real web text rarely carries vocalization and removing
/// it loses information.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalizationConfig {
    pub map_arabic_variants: bool,
    pub strip_diacritics: bool,
    /// Arabic-Indic and ASCII digits become Persian digits (U+06F0..U+06F9).
    pub normalize_digits: bool,
    pub collapse_whitespace: bool,
    pub preserve_zwnj: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            map_arabic_variants: true,
            strip_diacritics: false,
            normalize_digits: true,
            collapse_whitespace: true,
            preserve_zwnj: true,
        }
    }
}

/// Error raised when constructing a [`TokenSequence`] from untrusted tokens.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TokenError {
    #[error("token {index} is empty")]
    Empty { index: usize },
    #[error("token {index} ({token:?}) contains whitespace")]
    Whitespace { index: usize, token: String },
    #[error("token {index} ({token:?}) starts or ends with ZWNJ")]
    EdgeZwnj { index: usize, token: String },
}

/// An ordered sequence of whitespace-free tokens, the currency passed between
/// all modules. ZWNJ may occur inside a token but never at its edges.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    /// Validates the token invariants. Use [`tokenize`] for raw text.
    pub fn new(tokens: Vec<String>) -> Result<Self, TokenError> {
        for (index, token) in tokens.iter().enumerate() {
            if token.is_empty() {
                return Err(TokenError::Empty { index });
            }
            if token.chars().any(char::is_whitespace) {
                return Err(TokenError::Whitespace { index, token: token.clone() });
            }
            if token.starts_with(ZWNJ) || token.ends_with(ZWNJ) {
                return Err(TokenError::EdgeZwnj { index, token: token.clone() });
            }
        }
        Ok(TokenSequence(tokens))
    }

    /// Constructor for callers that uphold the invariants themselves.
    pub(crate) fn from_trusted(tokens: Vec<String>) -> Self {
        debug_assert!(TokenSequence::new(tokens.clone()).is_ok());
        TokenSequence(tokens)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

impl<'a> IntoIterator for &'a TokenSequence {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

fn map_char(c: char, cfg: &NormalizationConfig) -> Option<char> {
    if FORMAT_CONTROLS.contains(&c) {
        return None;
    }
    if cfg.map_arabic_variants {
        if c == TATWEEL {
            return None;
        }
        if let Some(&(_, to)) = ARABIC_VARIANTS.iter().find(|&&(from, _)| from == c) {
            return Some(to);
        }
    }
    if cfg.strip_diacritics && DIACRITICS.contains(&c) {
        return None;
    }
    if cfg.normalize_digits {
        if c.is_ascii_digit() {
            return char::from_u32(0x06F0 + (c as u32 - '0' as u32));
        }
        if ('\u{0660}'..='\u{0669}').contains(&c) {
            return char::from_u32(0x06F0 + (c as u32 - 0x0660));
        }
    }
    Some(c)
}

/// Strips edge ZWNJs and collapses internal ZWNJ runs within one chunk.
fn clean_zwnj(chunk: &str) -> String {
    let trimmed = chunk.trim_matches(ZWNJ);
    let mut out = String::with_capacity(trimmed.len());
    let mut last_was_zwnj = false;
    for c in trimmed.chars() {
        if c == ZWNJ {
            if !last_was_zwnj {
                out.push(c);
            }
            last_was_zwnj = true;
        } else {
            out.push(c);
            last_was_zwnj = false;
        }
    }
    out
}

/// Canonicalizes a raw string. Total on valid Unicode and idempotent:
/// `normalize_text(normalize_text(s)) == normalize_text(s)`.
pub fn normalize_text(raw: &str, cfg: &NormalizationConfig) -> String {
    let mapped: String = raw
        .chars()
        .filter_map(|c| {
            if !cfg.preserve_zwnj && c == ZWNJ {
                None
            } else {
                map_char(c, cfg)
            }
        })
        .collect();

    if cfg.collapse_whitespace {
        let mut out = String::with_capacity(mapped.len());
        for chunk in mapped.split_whitespace() {
            let cleaned = clean_zwnj(chunk);
            if cleaned.is_empty() {
                continue;
            }
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&cleaned);
        }
        out
    } else {
        // Keep original whitespace but still forbid ZWNJ at chunk edges.
        let mut out = String::with_capacity(mapped.len());
        let mut chunk = String::new();
        for c in mapped.chars() {
            if c.is_whitespace() {
                out.push_str(&clean_zwnj(&chunk));
                chunk.clear();
                out.push(c);
            } else {
                chunk.push(c);
            }
        }
        out.push_str(&clean_zwnj(&chunk));
        out
    }
}

/// True for tokens made of punctuation only; rule matching skips these.
pub fn is_punctuation_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| PUNCTUATION.contains(&c))
}

/// Splits normalized text into tokens: whitespace first, then punctuation
/// marks detach as single-character tokens. ZWNJ compounds stay whole.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens: Vec<String> = Vec::new();
    let mut current = String::new();
    let flush = |current: &mut String, tokens: &mut Vec<String>| {
        if !current.is_empty() {
            let cleaned = clean_zwnj(current);
            if !cleaned.is_empty() {
                tokens.push(cleaned);
            }
            current.clear();
        }
    };
    for chunk in text.split_whitespace() {
        for c in chunk.chars() {
            if PUNCTUATION.contains(&c) {
                flush(&mut current, &mut tokens);
                tokens.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        flush(&mut current, &mut tokens);
    }
    TokenSequence::from_trusted(tokens)
}

/// Joins tokens back into a display string, reattaching punctuation:
/// closers bind left, openers bind right. Satisfies
/// `tokenize(detokenize(tokenize(s))) == tokenize(s)`.
pub fn detokenize(seq: &TokenSequence) -> String {
    let mut out = String::new();
    let mut glue_next = false;
    for token in seq.iter() {
        let single = {
            let mut it = token.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => Some(c),
                _ => None,
            }
        };
        let attach_left = single.is_some_and(|c| ATTACH_LEFT.contains(&c));
        let attach_right = single.is_some_and(|c| ATTACH_RIGHT.contains(&c));
        if !out.is_empty() && !glue_next && !attach_left {
            out.push(' ');
        }
        out.push_str(token);
        glue_next = attach_right;
    }
    out
}
