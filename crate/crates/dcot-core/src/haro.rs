//! Hierarchical adaptive reward optimization: step importance, the EMA
//! threshold, margin-based step selection, reward shaping, and clipped
//! policy-gradient updates of the controller parameters.

use alloc::string::String;
use alloc::vec::Vec;

use crate::assembly;
use crate::config::DCoTConfig;
use crate::controller::{
    buffer_update, classify_segment, coherence_check, dynamic_threshold, ReasoningBuffer,
    RewardState,
};
use crate::rng::SplitMix64;
use crate::scripted::ScriptedTrace;
use crate::trace::{CoTSegment, Level, Verdict};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HaroError {
    #[error("{name} = {value} outside [0,1]")]
    Domain { name: &'static str, value: f64 },
    #[error("importance window is empty")]
    EmptyWindow,
    #[error("reward state has no observations")]
    NoRewards,
    #[error("non-finite gradient; update not applied")]
    NonFiniteGradient,
    #[error("candidate set is empty")]
    NoCandidates,
}

/// Importance of a reasoning step: `alpha·advantage + (1-alpha)·gating`.
pub fn step_importance(advantage: f64, gating: f64, alpha: f64) -> Result<f64, HaroError> {
    if !(0.0..=1.0).contains(&advantage) {
        return Err(HaroError::Domain {
            name: "advantage",
            value: advantage,
        });
    }
    if !(0.0..=1.0).contains(&gating) {
        return Err(HaroError::Domain {
            name: "gating",
            value: gating,
        });
    }
    Ok(alpha * advantage + (1.0 - alpha) * gating)
}

/// Advantage of a partial reward against the running mean, squashed to
/// [0,1]: `0.5 + 0.5·tanh(2·(r_t - r̄))`. A reward at the mean scores 0.5.
pub fn advantage_estimate(reward: f64, state: &RewardState) -> Result<f64, HaroError> {
    let mean = state.running_mean().map_err(|_| HaroError::NoRewards)?;
    Ok(0.5 + 0.5 * libm::tanh(2.0 * (reward - mean)))
}

/// Threshold history: the EMA value, the recent-importance window, and the
/// session reward mirror.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdState {
    pub tau: f64,
    window: Vec<f64>,
    window_cap: usize,
    /// Running average reward mirrored from the session's reward state.
    pub r_bar: f64,
    pub step: usize,
}

impl ThresholdState {
    pub fn new(tau_0: f64, window_cap: usize) -> Self {
        Self {
            tau: tau_0,
            window: Vec::new(),
            window_cap: window_cap.max(1),
            r_bar: 0.0,
            step: 0,
        }
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Record an importance value, dropping the oldest past the cap.
    pub fn push_importance(&mut self, importance: f64) {
        if self.window.len() == self.window_cap {
            self.window.remove(0);
        }
        self.window.push(importance);
    }
}

/// One EMA update over an importance window:
/// `tau ← gamma·tau + (1-gamma)·(1/N)·Σ 1[importance > tau]`
/// with a strict indicator. Returns the new threshold.
pub fn ema_threshold_update(
    state: &mut ThresholdState,
    window: &[f64],
    gamma: f64,
) -> Result<f64, HaroError> {
    if window.is_empty() {
        return Err(HaroError::EmptyWindow);
    }
    let above = window.iter().filter(|&&i| i > state.tau).count();
    let fraction = above as f64 / window.len() as f64;
    state.tau = gamma * state.tau + (1.0 - gamma) * fraction;
    state.step += 1;
    Ok(state.tau)
}

/// Push one importance observation and update the EMA over the stored window.
pub fn observe_importance(
    state: &mut ThresholdState,
    importance: f64,
    gamma: f64,
) -> Result<f64, HaroError> {
    state.push_importance(importance);
    let window: Vec<f64> = state.window.clone();
    ema_threshold_update(state, &window, gamma)
}

/// The candidate maximizing `importance - tau`, provided that margin is
/// strictly positive; ties break toward the lowest segment id.
pub fn select_step<'a>(candidates: &'a [CoTSegment], tau: f64) -> Option<&'a CoTSegment> {
    let mut best: Option<&CoTSegment> = None;
    for cand in candidates {
        let margin = cand.importance - tau;
        if margin <= 0.0 {
            continue;
        }
        best = match best {
            None => Some(cand),
            Some(b) => {
                let bm = b.importance - tau;
                if margin > bm || (margin == bm && cand.id < b.id) {
                    Some(cand)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

/// Answer tokens for F1 scoring: lowercased maximal runs of alphanumerics
/// plus `/ . -`, so `det=1` and `det = 1` normalize identically.
fn f1_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '/' || ch == '.' || ch == '-' {
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

/// Token-level F1 between an answer and the oracle answer; exact string
/// match short-circuits to 1.
pub fn semantic_reward(answer: &str, oracle: &str) -> f64 {
    if answer == oracle {
        return 1.0;
    }
    let a = f1_tokens(answer);
    let o = f1_tokens(oracle);
    if a.is_empty() || o.is_empty() {
        return if a.is_empty() && o.is_empty() { 1.0 } else { 0.0 };
    }
    let mut remaining = o.clone();
    let mut hits = 0usize;
    for tok in &a {
        if let Some(pos) = remaining.iter().position(|t| t == tok) {
            remaining.swap_remove(pos);
            hits += 1;
        }
    }
    if hits == 0 {
        return 0.0;
    }
    let precision = hits as f64 / a.len() as f64;
    let recall = hits as f64 / o.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Structural efficiency of a trace: `1 - 2·(tokens/budget)`, clamped to
/// [-1,1]; an empty chain scores 1, a budget-exhausting one -1.
pub fn structural_reward(token_count: usize, token_budget: usize) -> f64 {
    let frac = token_count as f64 / token_budget.max(1) as f64;
    (1.0 - 2.0 * frac).clamp(-1.0, 1.0)
}

/// Episode reward: answer correctness minus the token-cost penalty.
pub fn episode_reward(r_sem: f64, token_count: usize, cfg: &DCoTConfig) -> f64 {
    r_sem - cfg.mu_cost * (token_count as f64 / cfg.token_budget.max(1) as f64)
}

/// The learnable controller parameters plus the reward baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub w_adv: f64,
    pub w_gate: f64,
    pub bias: f64,
    /// Running mean of episode objectives, clamped to [-1,1].
    pub baseline: f64,
    episodes: usize,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            w_adv: 0.0,
            w_gate: 0.0,
            bias: 0.0,
            baseline: 0.0,
            episodes: 0,
        }
    }
}

impl PolicyParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn weights(&self) -> [f64; 3] {
        [self.w_adv, self.w_gate, self.bias]
    }

    pub fn is_finite(&self) -> bool {
        self.weights().iter().all(|w| w.is_finite()) && self.baseline.is_finite()
    }

    /// Fold one episode objective into the running baseline.
    pub fn observe_reward(&mut self, r_total: f64) {
        self.episodes += 1;
        self.baseline += (r_total - self.baseline) / self.episodes as f64;
        self.baseline = self.baseline.clamp(-1.0, 1.0);
    }

    /// Candidate selection scores `w_adv·A + w_gate·G + bias`.
    fn scores(&self, features: &[(f64, f64)]) -> Vec<f64> {
        features
            .iter()
            .map(|&(a, g)| self.w_adv * a + self.w_gate * g + self.bias)
            .collect()
    }

    /// Softmax selection probabilities over a candidate set.
    pub fn probabilities(&self, features: &[(f64, f64)]) -> Vec<f64> {
        let mut s = self.scores(features);
        crate::model::softmax_inplace(&mut s);
        s
    }
}

/// Log probability of the chosen candidate under the softmax policy.
pub fn choice_logprob(
    params: &PolicyParams,
    features: &[(f64, f64)],
    chosen: usize,
) -> Result<f64, HaroError> {
    if features.is_empty() {
        return Err(HaroError::NoCandidates);
    }
    let probs = params.probabilities(features);
    Ok(libm::log(probs[chosen]))
}

/// One recorded selection: the candidate features, which was chosen, and its
/// log probability at selection time.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    /// `(advantage, gating)` per candidate.
    pub features: Vec<(f64, f64)>,
    pub chosen: usize,
    pub logprob: f64,
}

/// One finished episode with everything the optimizer needs.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub choices: Vec<Choice>,
    pub r_sem: f64,
    pub r_struct: f64,
    pub r_episode: f64,
    pub token_count: usize,
    pub step_count: usize,
    pub final_answer: String,
    /// Per-parameter REINFORCE estimate, filled in by the trainer.
    pub gradient: Option<[f64; 3]>,
}

impl EpisodeRecord {
    /// The trained objective `R_sem + lambda·R_struct`.
    pub fn total_reward(&self, lambda_struct: f64) -> f64 {
        self.r_sem + lambda_struct * self.r_struct
    }
}

/// REINFORCE-with-baseline gradient of the policy objective for one episode:
/// `(R_total - baseline) · Σ_choices ∇ log π`. The softmax gradients are
/// analytic: `∂ log π(c)/∂w_adv = A_c - Σ_i π_i A_i`, likewise for gating;
/// the shared bias cancels and contributes zero.
pub fn policy_gradient(
    episode: &EpisodeRecord,
    params: &PolicyParams,
    lambda_struct: f64,
) -> [f64; 3] {
    let advantage_term = episode.total_reward(lambda_struct) - params.baseline;
    let mut grad = [0.0f64; 3];
    for choice in &episode.choices {
        let probs = params.probabilities(&choice.features);
        let (a_c, g_c) = choice.features[choice.chosen];
        let mean_a: f64 = probs
            .iter()
            .zip(&choice.features)
            .map(|(p, &(a, _))| p * a)
            .sum();
        let mean_g: f64 = probs
            .iter()
            .zip(&choice.features)
            .map(|(p, &(_, g))| p * g)
            .sum();
        grad[0] += a_c - mean_a;
        grad[1] += g_c - mean_g;
        // Σπ_i·1 = 1, so the bias component of ∇log π is identically zero.
    }
    [
        advantage_term * grad[0],
        advantage_term * grad[1],
        advantage_term * grad[2],
    ]
}

fn apply_step(params: &PolicyParams, gradient: [f64; 3], scale: f64, eta_lr: f64) -> PolicyParams {
    let mut next = params.clone();
    next.w_adv += eta_lr * scale * gradient[0];
    next.w_gate += eta_lr * scale * gradient[1];
    next.bias += eta_lr * scale * gradient[2];
    next
}

fn ratios_comply(
    candidate: &PolicyParams,
    old: &PolicyParams,
    episode: &EpisodeRecord,
    clip: f64,
) -> bool {
    episode.choices.iter().all(|choice| {
        let new_lp = choice_logprob(candidate, &choice.features, choice.chosen);
        let old_lp = choice_logprob(old, &choice.features, choice.chosen);
        match (new_lp, old_lp) {
            (Ok(n), Ok(o)) => {
                let ratio = libm::exp(n - o);
                ratio >= 1.0 - clip && ratio <= 1.0 + clip
            }
            _ => false,
        }
    })
}

/// Gradient step with ratio clipping: take `Θ + eta·g`, then verify every
/// recorded choice's new/old probability ratio lies within
/// `[1-ppo_clip, 1+ppo_clip]`; if any escapes, rescale the step by bisection
/// (20 iterations) to the largest compliant fraction.
pub fn clipped_update(
    params: &PolicyParams,
    gradient: [f64; 3],
    old: &PolicyParams,
    episode: &EpisodeRecord,
    cfg: &DCoTConfig,
) -> Result<PolicyParams, HaroError> {
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(HaroError::NonFiniteGradient);
    }
    let full = apply_step(params, gradient, 1.0, cfg.eta_lr);
    if ratios_comply(&full, old, episode, cfg.ppo_clip) {
        return Ok(full);
    }
    let mut lo = 0.0f64; // zero step always complies (ratio exactly 1)
    let mut hi = 1.0f64;
    for _ in 0..20 {
        let mid = 0.5 * (lo + hi);
        if ratios_comply(&apply_step(params, gradient, mid, cfg.eta_lr), old, episode, cfg.ppo_clip)
        {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(apply_step(params, gradient, lo, cfg.eta_lr))
}

/// One training episode over a scripted task: the policy picks which
/// pending segment to process next, the controller adjudicates it, and the
/// finished buffer is assembled and scored.
///
/// Sampling uses the provided stream, so an episode is fully determined by
/// `(script, params, cfg, rng seed)`.
pub fn run_policy_episode(
    script: &ScriptedTrace,
    oracle_answer: &str,
    params: &PolicyParams,
    cfg: &DCoTConfig,
    vocab: &Vocabulary,
    rng: &mut SplitMix64,
) -> Result<EpisodeRecord, HaroError> {
    let segments = script.segments();
    let mut pending: Vec<usize> = (0..segments.len()).collect();
    let mut rewards = RewardState::new();
    let mut buffer = ReasoningBuffer::new();
    let mut choices = Vec::new();
    let mut token_count = 0usize;
    let mut steps = 0usize;
    let mut next_id = 0usize;

    while !pending.is_empty() && steps < cfg.step_cap && token_count < cfg.token_budget {
        // Candidate features against the current reward history.
        let features: Vec<(f64, f64)> = pending
            .iter()
            .map(|&i| {
                let seg = &segments[i];
                let adv = if rewards.is_empty() {
                    0.5
                } else {
                    advantage_estimate(seg.reward, &rewards).unwrap_or(0.5)
                };
                (adv, seg.true_importance)
            })
            .collect();
        let probs = params.probabilities(&features);
        let draw = rng.next_f64();
        let mut acc = 0.0;
        let mut pick = features.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if draw < acc {
                pick = i;
                break;
            }
        }
        let logprob = libm::log(probs[pick]);
        choices.push(Choice {
            features: features.clone(),
            chosen: pick,
            logprob,
        });

        let seg_index = pending.remove(pick);
        let scripted = &segments[seg_index];
        let reward = scripted.reward;
        rewards.observe(reward);
        let advantage = advantage_estimate(reward, &rewards)?;
        let importance = step_importance(advantage, scripted.true_importance, cfg.alpha)?;
        let tau = dynamic_threshold(&rewards, cfg).map_err(|_| HaroError::NoRewards)?;
        let verdict = classify_segment(importance, tau, cfg.delta_sum);

        let mut tokens = vocab.tokenize(&scripted.text);
        let remaining = cfg.token_budget - token_count;
        tokens.truncate(remaining);
        let signals = alloc::vec![0.5; tokens.len()];
        let segment = CoTSegment {
            id: next_id,
            text: scripted.text.clone(),
            tokens,
            importance,
            advantage,
            gating_score: scripted.true_importance,
            partial_reward: reward,
            level: if scripted.is_answer {
                Level::Answer
            } else {
                Level::Micro
            },
            verdict,
            introduces: scripted.introduces.clone(),
            references: scripted.references.clone(),
            token_signals: signals,
            summarized: false,
        };
        next_id += 1;

        let exception = if verdict == Verdict::Prune {
            let later: Vec<_> = pending
                .iter()
                .map(|&i| segments[i].references.clone())
                .collect();
            coherence_check(&segment, &later).then(|| "coherence")
        } else {
            None
        };
        let outcome = buffer_update(&mut buffer, &segment, verdict, exception, vocab)
            .expect("episode ids are unique");
        if outcome != crate::controller::BufferOutcome::Pruned {
            token_count += buffer.segments().last().map(|s| s.tokens.len()).unwrap_or(0);
        }
        steps += 1;
        if scripted.is_answer && outcome != crate::controller::BufferOutcome::Pruned {
            break;
        }
    }

    let assembled = assembly::assemble(&buffer);
    let answer = assembly::output_answer(&assembled)
        .map(|a| a.text)
        .unwrap_or_default();
    let r_sem = semantic_reward(&answer, oracle_answer);
    let r_struct = structural_reward(token_count, cfg.token_budget);
    let r_episode = episode_reward(r_sem, token_count, cfg);
    Ok(EpisodeRecord {
        choices,
        r_sem,
        r_struct,
        r_episode,
        token_count,
        step_count: buffer.len(),
        final_answer: answer,
        gradient: None,
    })
}
