//! Hierarchical chain assembly: macro/micro separation, reward ranking,
//! contextual merge, and final answer extraction.

use alloc::string::String;
use alloc::vec::Vec;

use crate::controller::ReasoningBuffer;
use crate::trace::{CoTSegment, Level};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AssemblyError {
    #[error("assembled chain is empty; no answer to extract")]
    EmptyChain,
}

/// A fine-detail segment attached to its macro parent.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroSegment {
    pub segment: CoTSegment,
    /// Id of the macro segment this detail belongs to.
    pub parent: usize,
}

/// The final answer and how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputAnswer {
    pub text: String,
    /// Set when the answer had to be recovered from a macro segment because
    /// no answer segment survived.
    pub low_confidence: bool,
}

/// Fully assembled chain.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledChain {
    pub c_macro: Vec<CoTSegment>,
    pub c_micro: Vec<MicroSegment>,
    /// `(segment id, rank)` pairs, rank 1 = highest reward.
    pub reward_map: Vec<(usize, usize)>,
    pub c_final: Vec<CoTSegment>,
    pub y_out: Option<OutputAnswer>,
}

/// Importance threshold for the macro cut: the k-th largest retained
/// importance with `k = ceil(n/4)` (the 75th percentile by nearest rank).
fn macro_threshold(segments: &[CoTSegment]) -> f64 {
    let n = segments.len();
    let k = (25 * n).div_ceil(100).max(1);
    let mut imps: Vec<f64> = segments.iter().map(|s| s.importance).collect();
    imps.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    imps[k - 1]
}

/// Split retained segments into macro and micro levels.
///
/// Macro: importance at or above the 75th-percentile cut, plus every
/// answer-level segment. Each micro segment attaches to its nearest
/// preceding macro segment, or to the first macro when none precedes it.
/// Level tags on the returned segments reflect the split.
pub fn assemble_split(segments: &[CoTSegment]) -> (Vec<CoTSegment>, Vec<MicroSegment>) {
    if segments.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let cut = macro_threshold(segments);
    let is_macro: Vec<bool> = segments
        .iter()
        .map(|s| s.importance >= cut || s.level == Level::Answer)
        .collect();
    let first_macro_id = segments
        .iter()
        .zip(&is_macro)
        .find(|(_, &m)| m)
        .map(|(s, _)| s.id)
        .expect("k-th largest cut always marks at least one segment");

    let mut c_macro = Vec::new();
    let mut c_micro = Vec::new();
    let mut last_macro: Option<usize> = None;
    for (seg, &m) in segments.iter().zip(&is_macro) {
        if m {
            let mut s = seg.clone();
            if s.level != Level::Answer {
                s.level = Level::Macro;
            }
            last_macro = Some(s.id);
            c_macro.push(s);
        } else {
            let mut s = seg.clone();
            s.level = Level::Micro;
            c_micro.push(MicroSegment {
                segment: s,
                parent: last_macro.unwrap_or(first_macro_id),
            });
        }
    }
    (c_macro, c_micro)
}

/// Rank macro segments by descending partial reward; equal rewards keep
/// their input order. Returns `(segment id, rank)` with rank starting at 1.
pub fn reward_map(c_macro: &[CoTSegment]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..c_macro.len()).collect();
    order.sort_by(|&a, &b| {
        c_macro[b]
            .partial_reward
            .partial_cmp(&c_macro[a].partial_reward)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .enumerate()
        .map(|(rank, idx)| (c_macro[idx].id, rank + 1))
        .collect()
}

/// Contextual merge: macro segments in reward-rank order, each followed by
/// its attached micro segments in their original order; the answer segment
/// (with any details attached to it) always comes last.
pub fn refine(
    c_macro: &[CoTSegment],
    c_micro: &[MicroSegment],
    map: &[(usize, usize)],
) -> Vec<CoTSegment> {
    let rank_of = |id: usize| {
        map.iter()
            .find(|(mid, _)| *mid == id)
            .map(|(_, r)| *r)
            .unwrap_or(usize::MAX)
    };
    let mut ranked: Vec<&CoTSegment> = c_macro.iter().collect();
    ranked.sort_by_key(|s| rank_of(s.id));

    let mut out = Vec::with_capacity(c_macro.len() + c_micro.len());
    let emit = |m: &CoTSegment, out: &mut Vec<CoTSegment>| {
        out.push(m.clone());
        out.extend(
            c_micro
                .iter()
                .filter(|u| u.parent == m.id)
                .map(|u| u.segment.clone()),
        );
    };
    for m in ranked.iter().filter(|m| m.level != Level::Answer) {
        emit(m, &mut out);
    }
    if let Some(ans) = ranked.iter().find(|m| m.level == Level::Answer) {
        // Details attached to the answer go in front of it so the answer
        // stays terminal.
        out.extend(
            c_micro
                .iter()
                .filter(|u| u.parent == ans.id)
                .map(|u| u.segment.clone()),
        );
        out.push((*ans).clone());
    }
    out
}

/// Extract the final answer from an assembled chain: the answer segment's
/// text, or the last macro segment's text flagged low-confidence when no
/// answer segment was retained.
pub fn output_answer(chain: &AssembledChain) -> Result<OutputAnswer, AssemblyError> {
    if chain.c_final.is_empty() {
        return Err(AssemblyError::EmptyChain);
    }
    if let Some(ans) = chain.c_final.iter().find(|s| s.level == Level::Answer) {
        return Ok(OutputAnswer {
            text: ans.text.clone(),
            low_confidence: false,
        });
    }
    let last_macro = chain
        .c_final
        .iter()
        .rev()
        .find(|s| s.level == Level::Macro)
        .expect("non-empty chain always holds a macro segment");
    Ok(OutputAnswer {
        text: last_macro.text.clone(),
        low_confidence: true,
    })
}

/// Split, rank, merge, and extract in one go.
pub fn assemble(buffer: &ReasoningBuffer) -> AssembledChain {
    assemble_from(buffer.segments())
}

/// [`assemble`] over a plain segment slice.
pub fn assemble_from(segments: &[CoTSegment]) -> AssembledChain {
    let (c_macro, c_micro) = assemble_split(segments);
    let map = reward_map(&c_macro);
    let c_final = refine(&c_macro, &c_micro, &map);
    let mut chain = AssembledChain {
        c_macro,
        c_micro,
        reward_map: map,
        c_final,
        y_out: None,
    };
    chain.y_out = output_answer(&chain).ok();
    chain
}
