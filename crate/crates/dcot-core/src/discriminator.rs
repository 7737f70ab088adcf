//! Reasoning discriminator: decide per query whether to answer directly from
//! stored facts or to enter chain-of-thought reasoning.
//!
//! Knowledge certainty is a lexical BM25 score (k1 = 1.2, b = 0.75) squashed
//! into [0,1). Each fact is scored as its own single-document collection
//! (N = 1, df = 1, dl = avgdl), which pins the per-term IDF at ln(4/3) and
//! makes the confidence monotone: adding facts can only add candidates to
//! the max, never lower an existing match. Corpus-level document frequencies
//! and the average document length are still maintained on the store for
//! inspection and stay consistent with its contents.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::config::DCoTConfig;

const BM25_K1: f64 = 1.2;
const BM25_B: f64 = 0.75;
/// Saturation constant mapping unbounded scores into [0,1).
const K_SAT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FactStoreError {
    #[error("line {0}: expected \"question<TAB>answer\"")]
    MissingTab(usize),
}

/// One retrievable (question, answer) pair plus its normalized terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Fact {
    pub question: String,
    pub answer: String,
    terms: Vec<String>,
}

/// Lowercased alphanumeric terms of a text.
pub fn terms_of(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(core::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn normalized(text: &str) -> String {
    terms_of(text).join(" ")
}

/// Immutable-after-build store of facts with lexical statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactStore {
    facts: Vec<Fact>,
    doc_freq: BTreeMap<String, usize>,
    total_terms: usize,
}

impl FactStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, question: &str, answer: &str) {
        let terms = terms_of(question);
        let mut distinct: Vec<&String> = terms.iter().collect();
        distinct.sort();
        distinct.dedup();
        for t in distinct {
            *self.doc_freq.entry(t.clone()).or_insert(0) += 1;
        }
        self.total_terms += terms.len();
        self.facts.push(Fact {
            question: question.to_string(),
            answer: answer.to_string(),
            terms,
        });
    }

    /// Parse the fact corpus format: one `question<TAB>answer` per line,
    /// blank lines ignored.
    pub fn parse(text: &str) -> Result<Self, FactStoreError> {
        let mut store = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (q, a) = line
                .split_once('\t')
                .ok_or(FactStoreError::MissingTab(lineno + 1))?;
            store.add(q.trim(), a.trim());
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    /// Number of facts containing `term`.
    pub fn doc_freq(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    pub fn avg_doc_len(&self) -> f64 {
        if self.facts.is_empty() {
            0.0
        } else {
            self.total_terms as f64 / self.facts.len() as f64
        }
    }

    /// BM25 score of `query_terms` against one fact under single-document
    /// statistics (dl/avgdl = 1).
    fn score_fact(&self, query_terms: &[String], fact: &Fact) -> f64 {
        let idf = libm::log((1.0 - 1.0 + 0.5) / (1.0 + 0.5) + 1.0);
        let mut score = 0.0;
        let mut seen: Vec<&String> = Vec::new();
        for term in query_terms {
            if seen.contains(&term) {
                continue;
            }
            seen.push(term);
            let tf = fact.terms.iter().filter(|t| *t == term).count() as f64;
            if tf > 0.0 {
                let denom = tf + BM25_K1 * (1.0 - BM25_B + BM25_B * 1.0);
                score += idf * tf * (BM25_K1 + 1.0) / denom;
            }
        }
        score
    }

    /// Best-matching fact index and its raw score.
    fn best_match(&self, query_terms: &[String]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, fact) in self.facts.iter().enumerate() {
            let s = self.score_fact(query_terms, fact);
            match best {
                Some((_, bs)) if bs >= s => {}
                _ => best = Some((i, s)),
            }
        }
        best
    }
}

/// Knowledge certainty of a query against the store, in [0,1].
///
/// Exact normalized-text match short-circuits to 1.0; an empty store scores
/// 0.0; otherwise the best BM25 score `s` maps to `s / (s + 2)`.
pub fn fact_confidence(query: &str, store: &FactStore) -> (f64, Option<usize>) {
    if store.is_empty() {
        return (0.0, None);
    }
    let qnorm = normalized(query);
    for (i, fact) in store.facts.iter().enumerate() {
        if normalized(&fact.question) == qnorm {
            return (1.0, Some(i));
        }
    }
    let terms = terms_of(query);
    match store.best_match(&terms) {
        Some((i, s)) => (s / (s + K_SAT), Some(i)),
        None => (0.0, None),
    }
}

/// Syntactic complexity: binary operators + maximum bracket nesting + number
/// of matrix/vector literals. Queries without any structural token (digit,
/// operator, bracket) or with unbalanced brackets fall back to
/// `ceil(words / 10)`.
pub fn complexity_score(query: &str) -> u32 {
    let bytes = query.as_bytes();
    let mut operators = 0u32;
    let mut depth = 0i32;
    let mut max_depth = 0i32;
    let mut literals = 0u32;
    let mut stack: Vec<u8> = Vec::new();
    let mut balanced = true;
    let mut structural = false;
    let mut prev_value = false; // previous non-space char can end an operand

    for &b in bytes {
        match b {
            b'+' | b'*' | b'/' | b'^' => {
                operators += 1;
                structural = true;
                prev_value = false;
            }
            b'-' => {
                // Binary only when it follows an operand; a leading or
                // post-operator minus is a sign.
                if prev_value {
                    operators += 1;
                }
                structural = true;
                prev_value = false;
            }
            b'(' | b'[' => {
                if b == b'[' && stack.last() != Some(&b'[') {
                    literals += 1;
                }
                stack.push(b);
                depth += 1;
                max_depth = max_depth.max(depth);
                structural = true;
                prev_value = false;
            }
            b')' | b']' => {
                let want = if b == b')' { b'(' } else { b'[' };
                if stack.pop() != Some(want) {
                    balanced = false;
                }
                depth -= 1;
                structural = true;
                prev_value = true;
            }
            b'0'..=b'9' => {
                structural = true;
                prev_value = true;
            }
            b' ' | b'\t' | b'\n' => {}
            c => {
                prev_value = c.is_ascii_alphanumeric();
            }
        }
    }
    balanced &= stack.is_empty();

    if balanced && structural {
        operators + max_depth.max(0) as u32 + literals
    } else {
        let words = query.split_whitespace().count() as u32;
        words.div_ceil(10)
    }
}

/// Outcome of the entry gate.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    /// Answer directly with the best fact's answer.
    Direct(String),
    NeedsCot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorVerdict {
    pub p_fact: f64,
    pub c_comp: u32,
    pub decision: Decision,
}

/// The two-threshold case rule: answer directly iff `p_fact ≥ p_fact_min`
/// and `c_comp ≤ c_comp_max`. Both comparisons are inclusive.
pub fn case_rule(p_fact: f64, c_comp: u32, cfg: &DCoTConfig) -> bool {
    p_fact >= cfg.p_fact_min && c_comp <= cfg.c_comp_max
}

/// Apply the case rule to a query against the store.
pub fn discriminate(query: &str, store: &FactStore, cfg: &DCoTConfig) -> DiscriminatorVerdict {
    let (p_fact, best) = fact_confidence(query, store);
    let c_comp = complexity_score(query);
    let decision = match best {
        Some(i) if case_rule(p_fact, c_comp, cfg) => {
            Decision::Direct(store.facts[i].answer.clone())
        }
        _ => Decision::NeedsCot,
    };
    DiscriminatorVerdict {
        p_fact,
        c_comp,
        decision,
    }
}
