//! Policy training over scripted tasks: run episodes, apply clipped
//! gradient updates, and log the learning curve.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use dcot_core::config::DCoTConfig;
use dcot_core::haro::{clipped_update, policy_gradient, run_policy_episode, PolicyParams};
use dcot_core::oracle::{Task, TaskPayload};
use dcot_core::rng::SplitMix64;
use dcot_core::vocab::Vocabulary;

use crate::suite::Suite;

/// One logged training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub episode: usize,
    pub task_id: String,
    pub r_sem: f64,
    pub r_struct: f64,
    pub r_episode: f64,
    pub token_count: usize,
    pub step_count: usize,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub curve: Vec<CurvePoint>,
    /// Episode index training stopped at, when parameters went non-finite.
    pub diverged_at: Option<usize>,
}

/// Train the selection policy for `episodes` episodes, cycling through the
/// suite's scripted tasks. Episode `e` draws from the stream seeded
/// `cfg.seed ^ e`, so a run is fully reproducible.
pub fn train(suite: &Suite, episodes: usize, cfg: &DCoTConfig) -> Result<TrainOutcome> {
    if episodes == 0 {
        bail!("episodes must be ≥ 1");
    }
    let scripted: Vec<&Task> = suite
        .tasks()
        .filter(|t| matches!(t.payload, TaskPayload::Scripted(_)))
        .collect();
    if scripted.is_empty() {
        bail!("training needs at least one scripted task in the suite");
    }
    let vocab = Vocabulary::new();
    let mut params = PolicyParams::new();
    let mut curve = Vec::with_capacity(episodes);
    let mut diverged_at = None;

    for episode in 0..episodes {
        let task = scripted[episode % scripted.len()];
        let TaskPayload::Scripted(script) = &task.payload else {
            unreachable!("filtered to scripted tasks");
        };
        let mut rng = SplitMix64::new(cfg.seed ^ episode as u64);
        let mut record =
            run_policy_episode(script, &task.oracle_answer, &params, cfg, &vocab, &mut rng)?;
        let gradient = policy_gradient(&record, &params, cfg.lambda_struct);
        record.gradient = Some(gradient);
        let updated = clipped_update(&params, gradient, &params, &record, cfg)?;
        if !updated.is_finite() {
            diverged_at = Some(episode);
            curve.push(CurvePoint {
                episode,
                task_id: task.id.clone(),
                r_sem: record.r_sem,
                r_struct: record.r_struct,
                r_episode: record.r_episode,
                token_count: record.token_count,
                step_count: record.step_count,
            });
            break; // keep the last finite checkpoint in `params`
        }
        params = updated;
        params.observe_reward(record.r_episode);
        curve.push(CurvePoint {
            episode,
            task_id: task.id.clone(),
            r_sem: record.r_sem,
            r_struct: record.r_struct,
            r_episode: record.r_episode,
            token_count: record.token_count,
            step_count: record.step_count,
        });
    }
    Ok(TrainOutcome {
        params,
        curve,
        diverged_at,
    })
}

/// Append-only training log: one line per episode plus the parameter values.
pub fn render_training_log(outcome: &TrainOutcome) -> String {
    let mut out = String::new();
    for p in &outcome.curve {
        let _ = writeln!(
            out,
            "episode={} task={} r_sem={} r_struct={} r_episode={} tokens={} steps={}",
            p.episode, p.task_id, p.r_sem, p.r_struct, p.r_episode, p.token_count, p.step_count
        );
    }
    let w = outcome.params.weights();
    let _ = writeln!(
        out,
        "final w_adv={} w_gate={} bias={} baseline={}",
        w[0], w[1], w[2], outcome.params.baseline
    );
    if let Some(e) = outcome.diverged_at {
        let _ = writeln!(out, "diverged_at={e}");
    }
    out
}

/// Persisted parameter file: flat key=value lines.
pub fn render_params(params: &PolicyParams) -> String {
    let w = params.weights();
    format!(
        "w_adv={}\nw_gate={}\nbias={}\nbaseline={}\n",
        w[0], w[1], w[2], params.baseline
    )
}

/// Mean episode reward over a half-open episode range of the curve.
pub fn mean_reward(curve: &[CurvePoint], range: std::ops::Range<usize>) -> f64 {
    let slice = &curve[range];
    slice.iter().map(|p| p.r_episode).sum::<f64>() / slice.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite::load_suite;
    use std::path::Path;

    fn scripted_suite() -> Suite {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/scripted.suite");
        load_suite(&path).unwrap()
    }

    #[test]
    fn zero_episodes_is_an_error() {
        let err = train(&scripted_suite(), 0, &DCoTConfig::default()).unwrap_err();
        assert!(err.to_string().contains("episodes"));
    }

    #[test]
    fn suite_without_scripted_tasks_is_an_error() {
        let suite =
            crate::suite::parse_suite("task|a|arith|p|1+1\n", Path::new(".")).unwrap();
        assert!(train(&suite, 5, &DCoTConfig::default()).is_err());
    }

    #[test]
    fn frozen_learning_keeps_params_bit_identical() {
        let mut cfg = DCoTConfig::default();
        cfg.eta_lr = 0.0;
        let out = train(&scripted_suite(), 100, &cfg).unwrap();
        let zero = PolicyParams::new();
        for (a, b) in out.params.weights().iter().zip(zero.weights()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(out.curve.len(), 100);
        assert!(out.diverged_at.is_none());
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = DCoTConfig::default();
        let a = train(&scripted_suite(), 20, &cfg).unwrap();
        let b = train(&scripted_suite(), 20, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.curve, b.curve);
    }

    #[test]
    fn training_improves_late_episode_rewards() {
        let cfg = DCoTConfig::default();
        let out = train(&scripted_suite(), 300, &cfg).unwrap();
        let first = mean_reward(&out.curve, 0..50);
        let last = mean_reward(&out.curve, 250..300);
        assert!(
            last >= first,
            "late mean {last} fell below early mean {first}"
        );
    }
}
