//! Session records: reasoning segments, retention verdicts, per-step
//! decision entries, and the full per-task trace.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::assembly::AssembledChain;

/// Hierarchy tag of a reasoning segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Macro,
    Micro,
    Answer,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Macro => "macro",
            Level::Micro => "micro",
            Level::Answer => "answer",
        }
    }
}

/// Retention verdict assigned by the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Summarize,
    Prune,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Keep => "keep",
            Verdict::Summarize => "summarize",
            Verdict::Prune => "prune",
        }
    }

    /// Whether a segment with this verdict enters the buffer (coherence
    /// exceptions aside).
    pub fn retains(self) -> bool {
        !matches!(self, Verdict::Prune)
    }
}

/// Session mode: the adaptive engine or the unpruned long-chain baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Dcot,
    LongCotBaseline,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Dcot => "dcot",
            Mode::LongCotBaseline => "baseline",
        }
    }
}

/// One reasoning step.
///
/// `importance` is always the convex mix `alpha·advantage +
/// (1-alpha)·gating_score`; [`CoTSegment::recompute_importance`] re-derives
/// it for invariant checks.
#[derive(Debug, Clone, PartialEq)]
pub struct CoTSegment {
    pub id: usize,
    pub tokens: Vec<u32>,
    pub text: String,
    pub importance: f64,
    pub advantage: f64,
    pub gating_score: f64,
    pub partial_reward: f64,
    pub level: Level,
    pub verdict: Verdict,
    /// Identifiers this segment defines.
    pub introduces: BTreeSet<String>,
    /// Identifiers this segment uses from earlier segments.
    pub references: BTreeSet<String>,
    /// Per-token importance signals, one per entry of `tokens`; drives
    /// extractive summarization.
    pub token_signals: Vec<f64>,
    /// Set when the stored text/tokens are the compressed form.
    pub summarized: bool,
}

impl CoTSegment {
    pub fn recompute_importance(&self, alpha: f64) -> f64 {
        alpha * self.advantage + (1.0 - alpha) * self.gating_score
    }

    pub fn is_answer(&self) -> bool {
        self.level == Level::Answer
    }
}

/// One controller decision, appended to the trace as the session runs.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRecord {
    pub segment_id: usize,
    pub importance: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    /// Reason a sub-threshold segment was retained anyway, if any.
    pub exception: Option<String>,
}

/// Full record of one session over one task.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTrace {
    pub task_id: String,
    pub mode: Mode,
    /// Every generated segment in order, with its final verdict. Pruned
    /// segments stay here for the record even though they left the buffer.
    pub steps: Vec<CoTSegment>,
    pub decisions: Vec<DecisionRecord>,
    /// Tokens admitted to the reasoning chain (generated, never prompt
    /// tokens; pruned tokens are not admitted).
    pub token_count: usize,
    /// Retained reasoning steps.
    pub step_count: usize,
    /// Stamped by the harness around the session loop; excluded from all
    /// determinism comparisons.
    pub wall_time_ms: u64,
    pub final_answer: String,
    /// Set when the answer was recovered from a macro segment because no
    /// answer segment survived.
    pub low_confidence: bool,
    pub episode_reward: f64,
    /// Populated when the backend failed mid-session; metrics are partial.
    pub aborted: Option<String>,
    pub assembly: Option<AssembledChain>,
}

impl SessionTrace {
    /// Equality ignoring the measured wall time.
    pub fn same_modulo_wall_time(&self, other: &SessionTrace) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.wall_time_ms = 0;
        b.wall_time_ms = 0;
        a == b
    }
}
