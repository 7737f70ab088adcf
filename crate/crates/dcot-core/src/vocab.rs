//! Fixed vocabulary over a small arithmetic/linear-algebra DSL.
//!
//! Layout (ids are stable and documented; the table ships with the engine):
//!
//! - `0`       — `<pad>`, reserved, never produced by the tokenizer
//! - `1`       — `<byte>`, escape for byte fallback: the escape id is always
//!               followed by two hex-digit character tokens encoding one raw
//!               byte, so arbitrary UTF-8 input survives tokenization
//! - `2..=27`  — DSL keywords, alphabetical
//! - `28..=29` — tab, newline
//! - `30..=124`— printable ASCII `' '..='~'` in code-point order
//!
//! Tokenization is greedy longest-match over keywords, then single
//! characters, then byte fallback; detokenization concatenates the matched
//! slices, so `detokenize(tokenize(s)) == s` exactly.

use alloc::string::String;
use alloc::vec::Vec;

/// DSL keywords, alphabetical; ids `2..=27`.
pub const KEYWORDS: [&str; 26] = [
    "answer",
    "basis",
    "combination",
    "compute",
    "det",
    "dot",
    "eig",
    "find",
    "identity",
    "inv",
    "is",
    "linear",
    "matrix",
    "norm",
    "null",
    "of",
    "proj",
    "rank",
    "solve",
    "span",
    "the",
    "trace",
    "transpose",
    "vector",
    "what",
    "zero",
];

pub const PAD_ID: u32 = 0;
pub const ESC_ID: u32 = 1;
const KEYWORD_BASE: u32 = 2;
const CHAR_BASE: u32 = KEYWORD_BASE + KEYWORDS.len() as u32;

/// Characters with their own token: tab, newline, then printable ASCII.
const CHAR_COUNT: u32 = 2 + 95;

/// Total number of vocabulary entries.
pub const VOCAB_SIZE: usize = (CHAR_BASE + CHAR_COUNT) as usize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VocabError {
    #[error("token id {0} outside vocabulary")]
    InvalidId(u32),
    #[error("malformed byte escape at token index {0}")]
    BadEscape(usize),
    #[error("detokenized bytes are not valid UTF-8")]
    InvalidUtf8,
}

/// The shared string↔id bijection. Stateless; all instances are identical.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary;

fn char_id(b: u8) -> Option<u32> {
    match b {
        b'\t' => Some(CHAR_BASE),
        b'\n' => Some(CHAR_BASE + 1),
        0x20..=0x7E => Some(CHAR_BASE + 2 + (b - 0x20) as u32),
        _ => None,
    }
}

fn char_of(id: u32) -> Option<u8> {
    if id == CHAR_BASE {
        Some(b'\t')
    } else if id == CHAR_BASE + 1 {
        Some(b'\n')
    } else if (CHAR_BASE + 2..CHAR_BASE + CHAR_COUNT).contains(&id) {
        Some((id - CHAR_BASE - 2) as u8 + 0x20)
    } else {
        None
    }
}

const HEX: &[u8; 16] = b"0123456789abcdef";

impl Vocabulary {
    pub fn new() -> Self {
        Vocabulary
    }

    pub const fn size(&self) -> usize {
        VOCAB_SIZE
    }

    /// Display string for a token id.
    pub fn entry(&self, id: u32) -> Result<String, VocabError> {
        if id == PAD_ID {
            return Ok(String::from("<pad>"));
        }
        if id == ESC_ID {
            return Ok(String::from("<byte>"));
        }
        if let Some(kw) = KEYWORDS.get((id.wrapping_sub(KEYWORD_BASE)) as usize) {
            if id >= KEYWORD_BASE {
                return Ok(String::from(*kw));
            }
        }
        match char_of(id) {
            Some(b) => {
                let mut s = String::new();
                s.push(b as char);
                Ok(s)
            }
            None => Err(VocabError::InvalidId(id)),
        }
    }

    /// Id for an exact entry string, if one exists.
    pub fn id_of(&self, entry: &str) -> Option<u32> {
        if entry == "<pad>" {
            return Some(PAD_ID);
        }
        if entry == "<byte>" {
            return Some(ESC_ID);
        }
        if let Ok(i) = KEYWORDS.binary_search(&entry) {
            return Some(KEYWORD_BASE + i as u32);
        }
        let bytes = entry.as_bytes();
        if bytes.len() == 1 {
            return char_id(bytes[0]);
        }
        None
    }

    /// Losslessly tokenize a query.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let bytes = text.as_bytes();
        let mut out = Vec::with_capacity(bytes.len());
        let mut i = 0;
        'outer: while i < bytes.len() {
            // Greedy longest keyword match.
            let mut best: Option<(usize, u32)> = None;
            for (k, kw) in KEYWORDS.iter().enumerate() {
                let kb = kw.as_bytes();
                if bytes[i..].starts_with(kb) {
                    match best {
                        Some((len, _)) if len >= kb.len() => {}
                        _ => best = Some((kb.len(), KEYWORD_BASE + k as u32)),
                    }
                }
            }
            if let Some((len, id)) = best {
                out.push(id);
                i += len;
                continue 'outer;
            }
            let b = bytes[i];
            if let Some(id) = char_id(b) {
                out.push(id);
            } else {
                out.push(ESC_ID);
                out.push(char_id(HEX[(b >> 4) as usize]).unwrap());
                out.push(char_id(HEX[(b & 0xF) as usize]).unwrap());
            }
            i += 1;
        }
        out
    }

    /// Reassemble the original text from token ids.
    pub fn detokenize(&self, tokens: &[u32]) -> Result<String, VocabError> {
        let mut bytes = Vec::with_capacity(tokens.len());
        let mut i = 0;
        while i < tokens.len() {
            let id = tokens[i];
            if id == PAD_ID {
                i += 1;
                continue;
            }
            if id == ESC_ID {
                let hi = tokens.get(i + 1).copied().and_then(char_of);
                let lo = tokens.get(i + 2).copied().and_then(char_of);
                let (hi, lo) = match (hi, lo) {
                    (Some(h), Some(l)) => (h, l),
                    _ => return Err(VocabError::BadEscape(i)),
                };
                let hex_val = |c: u8| -> Option<u8> {
                    match c {
                        b'0'..=b'9' => Some(c - b'0'),
                        b'a'..=b'f' => Some(c - b'a' + 10),
                        _ => None,
                    }
                };
                match (hex_val(hi), hex_val(lo)) {
                    (Some(h), Some(l)) => bytes.push((h << 4) | l),
                    _ => return Err(VocabError::BadEscape(i)),
                }
                i += 3;
                continue;
            }
            if let Some(kw) = KEYWORDS.get((id.wrapping_sub(KEYWORD_BASE)) as usize) {
                if id >= KEYWORD_BASE && id < CHAR_BASE {
                    bytes.extend_from_slice(kw.as_bytes());
                    i += 1;
                    continue;
                }
            }
            match char_of(id) {
                Some(b) => bytes.push(b),
                None => return Err(VocabError::InvalidId(id)),
            }
            i += 1;
        }
        String::from_utf8(bytes).map_err(|_| VocabError::InvalidUtf8)
    }
}

/// Collapse space/tab runs to a single space and trim line ends; newlines
/// survive. This is the normalization the round-trip contract speaks of.
pub fn normalize_ws(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (k, line) in text.lines().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let mut pending_space = false;
        for ch in line.trim().chars() {
            if ch == ' ' || ch == '\t' {
                pending_space = true;
            } else {
                if pending_space {
                    out.push(' ');
                    pending_space = false;
                }
                out.push(ch);
            }
        }
    }
    out
}
