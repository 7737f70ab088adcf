//! Dynamic CoT controller: reward-tracked thresholds, segment verdicts,
//! extractive summarization, and the progressive reasoning buffer.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::config::DCoTConfig;
use crate::trace::{CoTSegment, Verdict};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ControllerError {
    #[error("reward state has no observations")]
    EmptyRewardHistory,
    #[error("segment id {0} already in buffer")]
    DuplicateSegment(usize),
}

/// Partial rewards observed this session, newest last.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RewardState {
    history: Vec<f64>,
}

impl RewardState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, reward: f64) {
        self.history.push(reward);
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    pub fn latest(&self) -> Result<f64, ControllerError> {
        self.history
            .last()
            .copied()
            .ok_or(ControllerError::EmptyRewardHistory)
    }

    /// Arithmetic mean of all observed rewards.
    pub fn running_mean(&self) -> Result<f64, ControllerError> {
        if self.history.is_empty() {
            return Err(ControllerError::EmptyRewardHistory);
        }
        Ok(self.history.iter().sum::<f64>() / self.history.len() as f64)
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }
}

/// Instantaneous pruning threshold `tau_0 + eta_thr·(r_t - r̄)`, clamped
/// to [0,1] so it stays comparable with importance scores.
pub fn dynamic_threshold(state: &RewardState, cfg: &DCoTConfig) -> Result<f64, ControllerError> {
    let latest = state.latest()?;
    let mean = state.running_mean()?;
    Ok((cfg.tau_0 + cfg.eta_thr * (latest - mean)).clamp(0.0, 1.0))
}

/// Verdict for an importance score against a threshold: below prunes, the
/// `delta_sum` band above summarizes, anything higher keeps.
pub fn classify_segment(importance: f64, threshold: f64, delta_sum: f64) -> Verdict {
    if importance < threshold {
        Verdict::Prune
    } else if importance < threshold + delta_sum {
        Verdict::Summarize
    } else {
        Verdict::Keep
    }
}

/// Extractive compression: keep the ceil(len/2) tokens with the highest
/// token-level importance signal, in original order; ties keep earlier
/// tokens. Text is re-joined from the surviving tokens.
pub fn summarize_segment(segment: &CoTSegment, vocab: &Vocabulary) -> CoTSegment {
    let mut out = segment.clone();
    out.summarized = true;
    let n = segment.tokens.len();
    if n <= 1 {
        return out;
    }
    let keep = n.div_ceil(2);
    let signal = |i: usize| segment.token_signals.get(i).copied().unwrap_or(0.0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        signal(b)
            .partial_cmp(&signal(a))
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut chosen: Vec<usize> = order.into_iter().take(keep).collect();
    chosen.sort_unstable();
    out.tokens = chosen.iter().map(|&i| segment.tokens[i]).collect();
    out.token_signals = chosen.iter().map(|&i| signal(i)).collect();
    out.text = vocab.detokenize(&out.tokens).unwrap_or(out.text);
    out
}

/// True when pruning the segment anyway would damage the chain: it is the
/// answer, or at least two later segments reference an identifier it
/// introduces.
pub fn coherence_check(segment: &CoTSegment, later_references: &[BTreeSet<String>]) -> bool {
    if segment.is_answer() {
        return true;
    }
    if segment.introduces.is_empty() {
        return false;
    }
    let dependents = later_references
        .iter()
        .filter(|refs| refs.intersection(&segment.introduces).next().is_some())
        .count();
    dependents >= 2
}

/// Overlap reward for a generated segment against the oracle answer's
/// distinct token set.
pub fn token_overlap_reward(segment_tokens: &[u32], oracle_tokens: &BTreeSet<u32>) -> f64 {
    if oracle_tokens.is_empty() {
        return 0.0;
    }
    let distinct: BTreeSet<u32> = segment_tokens.iter().copied().collect();
    distinct.intersection(oracle_tokens).count() as f64 / oracle_tokens.len() as f64
}

/// Append-only store of retained (possibly summarized) segments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReasoningBuffer {
    retained: Vec<CoTSegment>,
    exceptions: Vec<(usize, String)>,
}

impl ReasoningBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.retained.len()
    }

    pub fn is_empty(&self) -> bool {
        self.retained.is_empty()
    }

    pub fn segments(&self) -> &[CoTSegment] {
        &self.retained
    }

    pub fn exceptions(&self) -> &[(usize, String)] {
        &self.exceptions
    }

    pub fn token_total(&self) -> usize {
        self.retained.iter().map(|s| s.tokens.len()).sum()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.retained.iter().any(|s| s.id == id)
    }

    fn push(&mut self, segment: CoTSegment) -> Result<(), ControllerError> {
        if self.contains(segment.id) {
            return Err(ControllerError::DuplicateSegment(segment.id));
        }
        self.retained.push(segment);
        Ok(())
    }
}

/// Outcome of a buffer update for one adjudicated segment.
#[derive(Debug, Clone, PartialEq)]
pub enum BufferOutcome {
    /// Appended verbatim (keep verdict or coherence exception).
    Kept,
    /// Appended in compressed form.
    Summarized,
    /// Not appended.
    Pruned,
}

/// Apply a verdict to the buffer. A pruned segment is appended anyway (and
/// recorded) when `exception` carries the coherence reason.
pub fn buffer_update(
    buffer: &mut ReasoningBuffer,
    segment: &CoTSegment,
    verdict: Verdict,
    exception: Option<&str>,
    vocab: &Vocabulary,
) -> Result<BufferOutcome, ControllerError> {
    match verdict {
        Verdict::Keep => {
            buffer.push(segment.clone())?;
            Ok(BufferOutcome::Kept)
        }
        Verdict::Summarize => {
            buffer.push(summarize_segment(segment, vocab))?;
            Ok(BufferOutcome::Summarized)
        }
        Verdict::Prune => match exception {
            Some(reason) => {
                buffer.push(segment.clone())?;
                buffer.exceptions.push((segment.id, format!("{reason}")));
                Ok(BufferOutcome::Kept)
            }
            None => Ok(BufferOutcome::Pruned),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Level;
    use alloc::string::ToString;
    use alloc::vec;

    fn seg(id: usize, tokens: Vec<u32>, signals: Vec<f64>) -> CoTSegment {
        CoTSegment {
            id,
            tokens,
            text: String::new(),
            importance: 0.5,
            advantage: 0.5,
            gating_score: 0.5,
            partial_reward: 0.5,
            level: Level::Micro,
            verdict: Verdict::Keep,
            introduces: BTreeSet::new(),
            references: BTreeSet::new(),
            token_signals: signals,
            summarized: false,
        }
    }

    #[test]
    fn reward_mean_is_exact() {
        let mut rs = RewardState::new();
        for r in [0.1, 0.2, 0.3, 0.8] {
            rs.observe(r);
        }
        assert!((rs.running_mean().unwrap() - 0.35).abs() < 1e-12);
        assert!(RewardState::new().running_mean().is_err());
    }

    #[test]
    fn threshold_at_mean_is_base() {
        let mut rs = RewardState::new();
        rs.observe(0.4);
        // Single observation: latest equals the mean.
        let cfg = DCoTConfig::default();
        assert_eq!(dynamic_threshold(&rs, &cfg).unwrap(), cfg.tau_0);
    }

    #[test]
    fn threshold_zero_scale_is_constant() {
        let mut cfg = DCoTConfig::default();
        cfg.eta_thr = 0.0;
        let mut rs = RewardState::new();
        for r in [0.1, 0.9, 0.3] {
            rs.observe(r);
            assert_eq!(dynamic_threshold(&rs, &cfg).unwrap(), cfg.tau_0);
        }
    }

    #[test]
    fn threshold_direct_substitution() {
        // tau_0 0.5, eta 0.1, latest 0.8, mean 0.3 → 0.55.
        let mut cfg = DCoTConfig::default();
        cfg.tau_0 = 0.5;
        cfg.eta_thr = 0.1;
        let mut rs = RewardState::new();
        rs.observe(-0.2); // drive the mean to 0.3 with the 0.8 below
        rs.observe(0.8);
        assert!((rs.running_mean().unwrap() - 0.3).abs() < 1e-12);
        let tau = dynamic_threshold(&rs, &cfg).unwrap();
        assert!((tau - 0.55).abs() < 1e-12);
    }

    #[test]
    fn threshold_clamped_to_unit() {
        let mut cfg = DCoTConfig::default();
        cfg.eta_thr = 10.0;
        let mut rs = RewardState::new();
        rs.observe(0.0);
        rs.observe(1.0);
        assert_eq!(dynamic_threshold(&rs, &cfg).unwrap(), 1.0);
        rs.observe(-20.0);
        assert_eq!(dynamic_threshold(&rs, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn threshold_monotone_in_latest_reward() {
        let cfg = DCoTConfig::default();
        let mut lo = RewardState::new();
        let mut hi = RewardState::new();
        for r in [0.5, 0.5, 0.5] {
            lo.observe(r);
            hi.observe(r);
        }
        lo.observe(0.2);
        hi.observe(0.9);
        assert!(dynamic_threshold(&hi, &cfg).unwrap() > dynamic_threshold(&lo, &cfg).unwrap());
    }

    #[test]
    fn classify_band_rule() {
        assert_eq!(classify_segment(0.3, 0.5, 0.1), Verdict::Prune);
        assert_eq!(classify_segment(0.55, 0.5, 0.1), Verdict::Summarize);
        assert_eq!(classify_segment(0.95, 0.5, 0.1), Verdict::Keep);
        // Band boundaries: exactly tau summarizes, exactly tau+delta keeps.
        assert_eq!(classify_segment(0.5, 0.5, 0.1), Verdict::Summarize);
        assert_eq!(classify_segment(0.6, 0.5, 0.1), Verdict::Keep);
    }

    #[test]
    fn neg_infinity_threshold_keeps_everything() {
        for imp in [0.0, 0.2, 0.9, 1.0] {
            assert_eq!(
                classify_segment(imp, f64::NEG_INFINITY, 0.1),
                Verdict::Keep
            );
        }
    }

    #[test]
    fn retained_sets_shrink_as_threshold_rises() {
        let mut rng = crate::rng::SplitMix64::new(11);
        let stream: Vec<f64> = (0..200).map(|_| rng.next_f64()).collect();
        let retained = |tau: f64| -> Vec<usize> {
            stream
                .iter()
                .enumerate()
                .filter(|(_, &imp)| classify_segment(imp, tau, 0.1).retains())
                .map(|(i, _)| i)
                .collect()
        };
        let low = retained(0.3);
        let high = retained(0.7);
        assert!(high.iter().all(|i| low.contains(i)));
    }

    #[test]
    fn summarize_keeps_top_half_in_order() {
        let v = Vocabulary::new();
        let s = seg(0, v.tokenize("a+b=c다"), vec![]);
        // Use explicit signals over a 4-token segment.
        let toks = v.tokenize("abcd");
        let mut s4 = seg(1, toks.clone(), vec![0.1, 0.9, 0.4, 0.8]);
        s4.text = "abcd".to_string();
        let out = summarize_segment(&s4, &v);
        // Brute force over all 2-subsets: maximize total signal.
        let mut best: Option<(f64, Vec<usize>)> = None;
        for i in 0..4 {
            for j in i + 1..4 {
                let total = s4.token_signals[i] + s4.token_signals[j];
                if best.as_ref().map(|(t, _)| total > *t).unwrap_or(true) {
                    best = Some((total, vec![i, j]));
                }
            }
        }
        let expect: Vec<u32> = best.unwrap().1.iter().map(|&i| toks[i]).collect();
        assert_eq!(out.tokens, expect);
        assert_eq!(out.text, "bd");
        assert!(out.summarized);
        let _ = s;
    }

    #[test]
    fn summarize_single_token_unchanged() {
        let v = Vocabulary::new();
        let s = seg(2, v.tokenize("x"), vec![0.3]);
        let out = summarize_segment(&s, &v);
        assert_eq!(out.tokens, s.tokens);
    }

    #[test]
    fn summarize_ties_keep_prefix() {
        let v = Vocabulary::new();
        let toks = v.tokenize("wxyz");
        let s = seg(3, toks.clone(), vec![0.5; 4]);
        let out = summarize_segment(&s, &v);
        assert_eq!(out.tokens, toks[..2].to_vec());
    }

    #[test]
    fn summarize_empty_is_noop() {
        let v = Vocabulary::new();
        let s = seg(4, vec![], vec![]);
        let out = summarize_segment(&s, &v);
        assert!(out.tokens.is_empty());
    }

    #[test]
    fn coherence_answer_always_true() {
        let mut s = seg(0, vec![], vec![]);
        s.level = Level::Answer;
        assert!(coherence_check(&s, &[]));
    }

    #[test]
    fn coherence_requires_two_dependents() {
        let mut s = seg(0, vec![], vec![]);
        s.introduces.insert("m".to_string());
        let refs_one = vec![BTreeSet::from(["m".to_string()])];
        let refs_two = vec![
            BTreeSet::from(["m".to_string()]),
            BTreeSet::from(["m".to_string(), "k".to_string()]),
        ];
        assert!(!coherence_check(&s, &refs_one));
        assert!(coherence_check(&s, &refs_two));
    }

    #[test]
    fn coherence_nothing_introduced_is_false() {
        let s = seg(0, vec![], vec![]);
        let refs = vec![BTreeSet::from(["m".to_string()]); 5];
        assert!(!coherence_check(&s, &refs));
    }

    #[test]
    fn overlap_reward_counts_distinct_tokens() {
        let v = Vocabulary::new();
        let oracle: BTreeSet<u32> = v.tokenize("d=12").into_iter().collect();
        assert_eq!(oracle.len(), 4);
        // One shared distinct token out of four.
        let segment = v.tokenize("dddd");
        assert!((token_overlap_reward(&segment, &oracle) - 0.25).abs() < 1e-12);
        // Full overlap.
        let full = v.tokenize("d=12");
        assert_eq!(token_overlap_reward(&full, &oracle), 1.0);
        assert_eq!(token_overlap_reward(&full, &BTreeSet::new()), 0.0);
    }

    #[test]
    fn buffer_applies_verdicts() {
        let v = Vocabulary::new();
        let mut buf = ReasoningBuffer::new();
        let a = seg(0, v.tokenize("keep me"), vec![0.5; 7]);
        let b = seg(1, v.tokenize("drop me"), vec![0.5; 7]);
        let c = seg(2, v.tokenize("shrink"), vec![0.9, 0.1, 0.9, 0.1, 0.9, 0.1]);
        assert_eq!(
            buffer_update(&mut buf, &a, Verdict::Keep, None, &v).unwrap(),
            BufferOutcome::Kept
        );
        assert_eq!(buf.len(), 1);
        assert_eq!(
            buffer_update(&mut buf, &b, Verdict::Prune, None, &v).unwrap(),
            BufferOutcome::Pruned
        );
        assert_eq!(buf.len(), 1);
        assert_eq!(
            buffer_update(&mut buf, &c, Verdict::Summarize, None, &v).unwrap(),
            BufferOutcome::Summarized
        );
        assert_eq!(buf.len(), 2);
        assert!(buf.segments()[1].summarized);
        assert_eq!(buf.segments()[1].tokens.len(), 3);
    }

    #[test]
    fn buffer_exception_retains_pruned_segment() {
        let v = Vocabulary::new();
        let mut buf = ReasoningBuffer::new();
        let s = seg(7, v.tokenize("m=LU"), vec![0.5; 4]);
        let out =
            buffer_update(&mut buf, &s, Verdict::Prune, Some("2 dependents"), &v).unwrap();
        assert_eq!(out, BufferOutcome::Kept);
        assert_eq!(buf.len(), 1);
        assert_eq!(buf.exceptions(), &[(7, "2 dependents".to_string())]);
    }

    #[test]
    fn buffer_rejects_duplicate_ids() {
        let v = Vocabulary::new();
        let mut buf = ReasoningBuffer::new();
        let s = seg(1, v.tokenize("x"), vec![0.5]);
        buffer_update(&mut buf, &s, Verdict::Keep, None, &v).unwrap();
        assert_eq!(
            buffer_update(&mut buf, &s, Verdict::Keep, None, &v),
            Err(ControllerError::DuplicateSegment(1))
        );
    }
}
