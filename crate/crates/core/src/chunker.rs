//! Rule-based sentence segmentation.
//!
//! A boundary is a run of `.`, `?` or `!` (plus closing quotes/brackets),
//! followed by whitespace and then an uppercase letter, a digit or an opening
//! quote. A `.` does not end a sentence when the token it closes is a known
//! abbreviation, a single capital initial, or already contains a dot
//! (`e.g.`, `U.S.`), unless it is an email address. Decimals and dates such as `10/21` never split because
//! no whitespace follows the dot.

use serde::{Deserialize, Serialize};

use crate::corpus::PiiUnit;

const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "prof", "st", "no", "vs", "jr", "sr", "ave", "blvd", "dept", "approx",
    "mt", "ft", "rd", "apt", "fig", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept",
    "oct", "nov", "dec",
];

const TERMINATORS: &[char] = &['.', '?', '!'];
const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201D}', '\u{2019}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '\u{201C}', '\u{2018}'];

/// One sentence of a query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub index: usize,
    pub text: String,
    /// Half-open character offsets into the parent text.
    pub span: (usize, usize),
    pub pii_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChunkError {
    #[error("cannot segment empty or whitespace-only text")]
    EmptyInput,
    #[error("PII unit `{unit}` straddles a sentence boundary or lies outside every chunk")]
    Straddle { unit: String },
}

fn is_abbreviation(chars: &[char], dot: usize) -> bool {
    let mut start = dot;
    while start > 0 && !chars[start - 1].is_whitespace() {
        start -= 1;
    }
    let token: String = chars[start..dot]
        .iter()
        .skip_while(|c| OPENERS.contains(c))
        .collect();
    if token.is_empty() {
        return false;
    }
    if token.contains('@') {
        return false;
    }
    if token.contains('.') {
        return true;
    }
    let mut it = token.chars();
    if let (Some(c), None) = (it.next(), it.next()) {
        if c.is_uppercase() {
            return true;
        }
    }
    let lower = token.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

fn starts_sentence(c: char) -> bool {
    c.is_uppercase() || c.is_ascii_digit() || OPENERS.contains(&c)
}

/// Splits `text` into sentence chunks with character spans.
pub fn segment(text: &str) -> Result<Vec<Chunk>, ChunkError> {
    if text.trim().is_empty() {
        return Err(ChunkError::EmptyInput);
    }
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if start.is_none() && !c.is_whitespace() {
            start = Some(i);
        }
        if !TERMINATORS.contains(&c) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < n && TERMINATORS.contains(&chars[j]) {
            j += 1;
        }
        while j < n && CLOSERS.contains(&chars[j]) {
            j += 1;
        }
        if j < n && chars[j].is_whitespace() {
            let mut k = j;
            while k < n && chars[k].is_whitespace() {
                k += 1;
            }
            let only_dot = chars[i..j].iter().all(|&c| c == '.' || CLOSERS.contains(&c));
            let abbreviated = only_dot && chars[i] == '.' && is_abbreviation(&chars, i);
            if k < n && starts_sentence(chars[k]) && !abbreviated {
                if let Some(s) = start.take() {
                    spans.push((s, j));
                }
                i = k;
                continue;
            }
        }
        i = j;
    }
    if let Some(s) = start {
        let mut end = n;
        while end > s && chars[end - 1].is_whitespace() {
            end -= 1;
        }
        spans.push((s, end));
    }
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(index, (s, e))| Chunk {
            index,
            text: chars[s..e].iter().collect(),
            span: (s, e),
            pii_ids: Vec::new(),
        })
        .collect())
}

/// Assigns each PII unit to the single chunk containing its span.
pub fn attach_pii(mut chunks: Vec<Chunk>, pii: &[PiiUnit]) -> Result<Vec<Chunk>, ChunkError> {
    for c in &mut chunks {
        c.pii_ids.clear();
    }
    for unit in pii {
        let (s, e) = unit.span;
        let owner = chunks
            .iter_mut()
            .find(|c| c.span.0 <= s && e <= c.span.1 && s < e);
        match owner {
            Some(c) => c.pii_ids.push(unit.id.clone()),
            None => {
                return Err(ChunkError::Straddle {
                    unit: unit.id.clone(),
                })
            }
        }
    }
    Ok(chunks)
}

/// Collapses whitespace runs to single spaces and trims.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
