//! Auto-regressive decoding with the controller feedback loop: block
//! generation, chain expansion, per-block refinement, and the full session
//! driver for both engine modes.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::assembly;
use crate::config::DCoTConfig;
use crate::controller::{
    buffer_update, classify_segment, coherence_check, dynamic_threshold, token_overlap_reward,
    BufferOutcome, ReasoningBuffer, RewardState,
};
use crate::discriminator::{discriminate, Decision, FactStore};
use crate::haro::{advantage_estimate, episode_reward, semantic_reward, step_importance};
use crate::model::{ModelError, ModelParams, CONTEXT_CAP};
use crate::oracle::{Task, TaskPayload};
use crate::scripted::ScriptedTrace;
use crate::trace::{CoTSegment, DecisionRecord, Level, Mode, SessionTrace, Verdict};
use crate::vocab::{Vocabulary, ESC_ID, KEYWORDS, PAD_ID};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("step cap reached")]
    StepCapReached,
    #[error("token budget exhausted")]
    BudgetExhausted,
    #[error("block of {got} tokens exceeds remaining budget {left}")]
    BudgetOverflow { got: usize, left: usize },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Scripted(#[from] crate::scripted::ScriptedError),
    #[error(transparent)]
    Controller(#[from] crate::controller::ControllerError),
    #[error(transparent)]
    Haro(#[from] crate::haro::HaroError),
}

/// One raw block from a backend, before the controller adjudicates it.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentCandidate {
    pub tokens: Vec<u32>,
    pub text: String,
    /// Segment-level gating signal in [0,1].
    pub gating_score: f64,
    /// Per-token importance signals.
    pub token_signals: Vec<f64>,
    /// Reward supplied by the backend, if it has one (scripted traces do).
    pub scripted_reward: Option<f64>,
    pub is_answer: bool,
    pub introduces: BTreeSet<String>,
    pub references: BTreeSet<String>,
}

/// A segment-block generator: either the scripted oracle or the MoE model.
pub trait Backend {
    /// Produce the next block of at most `max_tokens` tokens conditioned on
    /// `prefix`, or `None` when the stream has ended.
    fn next_block(
        &mut self,
        prefix: &[u32],
        max_tokens: usize,
    ) -> Result<Option<SegmentCandidate>, SessionError>;

    /// Reference sets of segments not yet generated, for coherence checks.
    /// Backends without lookahead return nothing.
    fn lookahead_references(&self) -> Vec<BTreeSet<String>> {
        Vec::new()
    }

    /// Upper bound on block length before the budget clamp; scripted blocks
    /// are whole segments regardless of `block_size`.
    fn block_cap(&self, block_size: usize) -> usize {
        block_size
    }

    fn name(&self) -> &'static str;
}

/// Passthrough backend over a scripted trace: each block is the next
/// scripted segment's token slice verbatim.
pub struct ScriptedBackend {
    trace: ScriptedTrace,
    cursor: usize,
    vocab: Vocabulary,
}

impl ScriptedBackend {
    pub fn new(trace: ScriptedTrace) -> Self {
        Self {
            trace,
            cursor: 0,
            vocab: Vocabulary::new(),
        }
    }
}

impl Backend for ScriptedBackend {
    fn next_block(
        &mut self,
        _prefix: &[u32],
        max_tokens: usize,
    ) -> Result<Option<SegmentCandidate>, SessionError> {
        if self.cursor >= self.trace.len() {
            return Ok(None);
        }
        let seg = self.trace.scripted_step(self.cursor)?;
        self.cursor += 1;
        let mut tokens = self.vocab.tokenize(&seg.text);
        tokens.truncate(max_tokens);
        let token_signals = alloc::vec![0.5; tokens.len()];
        Ok(Some(SegmentCandidate {
            tokens,
            text: seg.text.clone(),
            gating_score: seg.true_importance,
            token_signals,
            scripted_reward: Some(seg.reward),
            is_answer: seg.is_answer,
            introduces: seg.introduces.clone(),
            references: seg.references.clone(),
        }))
    }

    fn lookahead_references(&self) -> Vec<BTreeSet<String>> {
        self.trace.segments()[self.cursor..]
            .iter()
            .map(|s| s.references.clone())
            .collect()
    }

    fn block_cap(&self, _block_size: usize) -> usize {
        usize::MAX
    }

    fn name(&self) -> &'static str {
        "scripted"
    }
}

/// Greedy decoding over the tiny MoE model. Structural ids (padding, the
/// byte-fallback escape) are masked out of the argmax so the untrained
/// model only emits self-delimiting tokens; blocks close early at a
/// statement boundary (newline or `;`).
pub struct MoeBackend {
    model: ModelParams,
    vocab: Vocabulary,
    top_k: usize,
    gamma_mix: f64,
    exhausted: bool,
}

impl MoeBackend {
    pub fn new(model: ModelParams, cfg: &DCoTConfig) -> Self {
        Self {
            model,
            vocab: Vocabulary::new(),
            top_k: cfg.top_k,
            gamma_mix: cfg.gamma_mix,
            exhausted: false,
        }
    }

    fn argmax_masked(logits: &[f64]) -> u32 {
        let mut best = 0u32;
        let mut best_v = f64::NEG_INFINITY;
        for (id, &v) in logits.iter().enumerate() {
            let id = id as u32;
            if id == PAD_ID || id == ESC_ID {
                continue;
            }
            if v > best_v {
                best_v = v;
                best = id;
            }
        }
        best
    }

    fn is_boundary(&self, id: u32) -> bool {
        self.vocab
            .entry(id)
            .map(|s| s == "\n" || s == ";")
            .unwrap_or(false)
    }
}

/// Identifier heuristics for generated text: alphabetic runs that are not
/// DSL keywords; a run directly followed by `=` counts as introduced,
/// anything else as referenced.
fn extract_identifiers(text: &str) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut introduces = BTreeSet::new();
    let mut references = BTreeSet::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_alphabetic() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_alphabetic() {
                i += 1;
            }
            let word = &text[start..i];
            if KEYWORDS.contains(&word) {
                continue;
            }
            let mut j = i;
            while j < bytes.len() && bytes[j] == b' ' {
                j += 1;
            }
            if bytes.get(j) == Some(&b'=') {
                introduces.insert(word.to_string());
            } else {
                references.insert(word.to_string());
            }
        } else {
            i += 1;
        }
    }
    (introduces, references)
}

impl Backend for MoeBackend {
    fn next_block(
        &mut self,
        prefix: &[u32],
        max_tokens: usize,
    ) -> Result<Option<SegmentCandidate>, SessionError> {
        if self.exhausted || max_tokens == 0 {
            return Ok(None);
        }
        let mut context: Vec<u32> = prefix.to_vec();
        let mut block: Vec<u32> = Vec::new();
        while block.len() < max_tokens {
            if context.len() >= CONTEXT_CAP {
                // Out of context: end the stream gracefully.
                self.exhausted = true;
                break;
            }
            let out = match self.model.next_token_logits(&context, self.top_k, self.gamma_mix) {
                Ok(out) => out,
                Err(ModelError::ContextOverflow { .. }) => {
                    self.exhausted = true;
                    break;
                }
                Err(e) => return Err(e.into()),
            };
            let id = Self::argmax_masked(&out.logits);
            context.push(id);
            block.push(id);
            if self.is_boundary(id) {
                break;
            }
        }
        if block.is_empty() {
            return Ok(None);
        }
        // One more pass over the extended context to read the new tokens'
        // gating and attention signals.
        let out = self
            .model
            .next_token_logits(&context, self.top_k, self.gamma_mix)?;
        let start = context.len() - block.len();
        let token_signals: Vec<f64> = out.records[start..]
            .iter()
            .map(|r| r.importance_signal)
            .collect();
        let gating_score = token_signals.iter().sum::<f64>() / token_signals.len() as f64;
        let text = self.vocab.detokenize(&block).unwrap_or_default();
        let (introduces, references) = extract_identifiers(&text);
        Ok(Some(SegmentCandidate {
            tokens: block,
            text,
            gating_score: gating_score.clamp(0.0, 1.0),
            token_signals,
            scripted_reward: None,
            is_answer: false,
            introduces,
            references,
        }))
    }

    fn name(&self) -> &'static str {
        "moe"
    }
}

/// Accepted chain state: the conditioning prompt, accepted blocks, the step
/// counter, and the remaining budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    prompt: Vec<u32>,
    blocks: Vec<Vec<u32>>,
    step: usize,
    budget_remaining: usize,
}

impl ChainState {
    pub fn new(prompt: Vec<u32>, token_budget: usize) -> Self {
        Self {
            prompt,
            blocks: Vec::new(),
            step: 0,
            budget_remaining: token_budget,
        }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn budget_remaining(&self) -> usize {
        self.budget_remaining
    }

    /// Generated tokens accepted so far (prompt tokens never count).
    pub fn token_total(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Conditioning prefix: prompt followed by every accepted block.
    pub fn prefix(&self) -> Vec<u32> {
        let mut out = self.prompt.clone();
        for b in &self.blocks {
            out.extend_from_slice(b);
        }
        out
    }
}

/// Generate the next raw block. Errors with the session-stop signals when
/// the step cap is reached or the budget is gone.
pub fn decode_block(
    chain: &ChainState,
    backend: &mut dyn Backend,
    cfg: &DCoTConfig,
) -> Result<Option<SegmentCandidate>, SessionError> {
    if chain.step >= cfg.step_cap {
        return Err(SessionError::StepCapReached);
    }
    if chain.budget_remaining == 0 {
        return Err(SessionError::BudgetExhausted);
    }
    let cap = backend.block_cap(cfg.block_size).min(chain.budget_remaining);
    backend.next_block(&chain.prefix(), cap)
}

/// Append an adjusted block to the chain: accepted tokens extend the prefix
/// and spend budget; an empty (fully pruned) block still advances the step
/// counter.
pub fn expand_chain(
    chain: &mut ChainState,
    accepted_tokens: &[u32],
    cfg: &DCoTConfig,
) -> Result<(), SessionError> {
    if chain.step >= cfg.step_cap {
        return Err(SessionError::StepCapReached);
    }
    if accepted_tokens.len() > chain.budget_remaining {
        return Err(SessionError::BudgetOverflow {
            got: accepted_tokens.len(),
            left: chain.budget_remaining,
        });
    }
    if !accepted_tokens.is_empty() {
        chain.budget_remaining -= accepted_tokens.len();
        chain.blocks.push(accepted_tokens.to_vec());
    }
    chain.step += 1;
    Ok(())
}

/// Per-block refinement: macro/micro tags for the block's segments plus the
/// reward-ordered macro list.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedStep {
    /// Macro segment ids, highest cumulative reward first.
    pub macro_ids: Vec<usize>,
    /// Micro segment ids in generation order.
    pub micro_ids: Vec<usize>,
}

/// Tag a block's segments macro/micro and order the macro side by reward.
/// Answer segments and kept-verbatim segments act as macro summaries here;
/// summarized ones carry fine detail. New macro ids are appended to the
/// running `macro_summaries` list the session maintains.
pub fn refine_step(block: &[&CoTSegment], macro_summaries: &mut Vec<usize>) -> RefinedStep {
    let mut tagged: Vec<&CoTSegment> = block
        .iter()
        .copied()
        .filter(|s| s.is_answer() || !s.summarized)
        .collect();
    tagged.sort_by(|a, b| {
        b.partial_reward
            .partial_cmp(&a.partial_reward)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
    let macro_ids: Vec<usize> = tagged.iter().map(|s| s.id).collect();
    let micro_ids: Vec<usize> = block
        .iter()
        .filter(|s| !s.is_answer() && s.summarized)
        .map(|s| s.id)
        .collect();
    macro_summaries.extend(&macro_ids);
    RefinedStep {
        macro_ids,
        micro_ids,
    }
}

/// Everything a session needs besides the task itself.
pub struct SessionSetup<'a> {
    pub cfg: &'a DCoTConfig,
    pub vocab: &'a Vocabulary,
    pub facts: &'a FactStore,
    /// Per-task derived seed; also seeds the MoE model weights.
    pub seed: u64,
}

/// Build the backend a task calls for: scripted tasks replay their trace,
/// computed tasks decode from the seeded MoE model.
pub fn backend_for(task: &Task, setup: &SessionSetup) -> Box<dyn Backend> {
    match &task.payload {
        TaskPayload::Scripted(trace) => Box::new(ScriptedBackend::new(trace.clone())),
        _ => Box::new(MoeBackend::new(
            ModelParams::seeded(setup.seed, setup.cfg.n_experts),
            setup.cfg,
        )),
    }
}

/// Run one full session over a task. Wall time is left at zero for the
/// harness to stamp.
pub fn run_task_session(task: &Task, mode: Mode, setup: &SessionSetup) -> SessionTrace {
    let mut backend = backend_for(task, setup);
    run_session(
        &task.id,
        &task.prompt,
        &task.oracle_answer,
        mode,
        backend.as_mut(),
        setup,
    )
}

fn direct_answer_trace(
    task_id: &str,
    answer: String,
    oracle_answer: &str,
    setup: &SessionSetup,
) -> SessionTrace {
    let token_count = setup.vocab.tokenize(&answer).len();
    let r_sem = semantic_reward(&answer, oracle_answer);
    SessionTrace {
        task_id: task_id.to_string(),
        mode: Mode::Dcot,
        steps: Vec::new(),
        decisions: Vec::new(),
        token_count,
        step_count: 0,
        wall_time_ms: 0,
        final_answer: answer,
        low_confidence: false,
        episode_reward: episode_reward(r_sem, token_count, setup.cfg),
        aborted: None,
        assembly: None,
    }
}

/// The session loop: discriminate (dcot mode only), then repeat
/// decode → adjudicate → expand → refine until the answer lands, the stream
/// ends, or a cap closes the session; finally assemble and score.
///
/// In baseline mode the discriminator is bypassed and the threshold is
/// pinned to -∞, so every verdict is keep and the buffer is the raw trace.
pub fn run_session(
    task_id: &str,
    query: &str,
    oracle_answer: &str,
    mode: Mode,
    backend: &mut dyn Backend,
    setup: &SessionSetup,
) -> SessionTrace {
    let cfg = setup.cfg;
    let vocab = setup.vocab;

    if mode == Mode::Dcot {
        let verdict = discriminate(query, setup.facts, cfg);
        if let Decision::Direct(answer) = verdict.decision {
            return direct_answer_trace(task_id, answer, oracle_answer, setup);
        }
    }

    let oracle_tokens: BTreeSet<u32> = vocab.tokenize(oracle_answer).into_iter().collect();
    let mut chain = ChainState::new(vocab.tokenize(query), cfg.token_budget);
    let mut rewards = RewardState::new();
    let mut buffer = ReasoningBuffer::new();
    let mut steps: Vec<CoTSegment> = Vec::new();
    let mut decisions: Vec<DecisionRecord> = Vec::new();
    let mut macro_summaries: Vec<usize> = Vec::new();
    let mut aborted: Option<String> = None;
    let mut next_id = 0usize;

    loop {
        let candidate = match decode_block(&chain, backend, cfg) {
            Ok(Some(c)) => c,
            Ok(None) => break, // stream exhausted
            Err(SessionError::StepCapReached) | Err(SessionError::BudgetExhausted) => break,
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        };

        let reward = candidate
            .scripted_reward
            .unwrap_or_else(|| token_overlap_reward(&candidate.tokens, &oracle_tokens));
        rewards.observe(reward);
        let threshold = if mode == Mode::LongCotBaseline {
            f64::NEG_INFINITY
        } else {
            match dynamic_threshold(&rewards, cfg) {
                Ok(t) => t,
                Err(e) => {
                    aborted = Some(e.to_string());
                    break;
                }
            }
        };
        let step_outcome = (|| -> Result<(), SessionError> {
            let advantage = advantage_estimate(reward, &rewards)?;
            let gating = candidate.gating_score.clamp(0.0, 1.0);
            let importance = step_importance(advantage, gating, cfg.alpha)?;
            let verdict = classify_segment(importance, threshold, cfg.delta_sum);
            let segment = CoTSegment {
                id: next_id,
                tokens: candidate.tokens.clone(),
                text: candidate.text.clone(),
                importance,
                advantage,
                gating_score: gating,
                partial_reward: reward,
                level: if candidate.is_answer {
                    Level::Answer
                } else {
                    Level::Micro
                },
                verdict,
                introduces: candidate.introduces.clone(),
                references: candidate.references.clone(),
                token_signals: candidate.token_signals.clone(),
                summarized: false,
            };
            next_id += 1;

            let exception = if verdict == Verdict::Prune {
                coherence_check(&segment, &backend.lookahead_references())
                    .then(|| "retained for coherence".to_string())
            } else {
                None
            };
            let outcome = buffer_update(&mut buffer, &segment, verdict, exception.as_deref(), vocab)?;
            decisions.push(DecisionRecord {
                segment_id: segment.id,
                importance,
                threshold,
                verdict,
                exception,
            });
            let retained = outcome != BufferOutcome::Pruned;
            if retained {
                let stored = buffer.segments().last().expect("just appended");
                let stored_tokens = stored.tokens.clone();
                refine_step(&[stored], &mut macro_summaries);
                expand_chain(&mut chain, &stored_tokens, cfg)?;
            } else {
                expand_chain(&mut chain, &[], cfg)?;
            }
            let answered = retained && segment.is_answer();
            steps.push(segment);
            if answered {
                Err(SessionError::StepCapReached) // reuse the stop signal path
            } else {
                Ok(())
            }
        })();
        match step_outcome {
            Ok(()) => {}
            Err(SessionError::StepCapReached) | Err(SessionError::BudgetExhausted) => break,
            Err(SessionError::BudgetOverflow { .. }) => break,
            Err(e) => {
                aborted = Some(e.to_string());
                break;
            }
        }
    }

    let assembled = assembly::assemble(&buffer);
    let (final_answer, low_confidence) = match &assembled.y_out {
        Some(ans) => (ans.text.clone(), ans.low_confidence),
        None => (String::new(), true),
    };
    // Write the assembly's level assignments back onto the step records.
    for step in steps.iter_mut() {
        if let Some(merged) = assembled.c_final.iter().find(|s| s.id == step.id) {
            step.level = merged.level;
        }
    }
    let token_count = chain.token_total();
    let r_sem = semantic_reward(&final_answer, oracle_answer);
    SessionTrace {
        task_id: task_id.to_string(),
        mode,
        steps,
        decisions,
        token_count,
        step_count: buffer.len(),
        wall_time_ms: 0,
        final_answer,
        low_confidence,
        episode_reward: episode_reward(r_sem, token_count, cfg),
        aborted,
        assembly: Some(assembled),
    }
}
