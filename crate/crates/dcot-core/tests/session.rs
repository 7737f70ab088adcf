//! Cross-module session behavior: dominance, budget safety, replay
//! determinism, and baseline equivalence over both backends.

use dcot_core::config::DCoTConfig;
use dcot_core::decoder::{run_task_session, SessionSetup};
use dcot_core::discriminator::FactStore;
use dcot_core::oracle::{Task, TaskKind, TaskPayload};
use dcot_core::scripted::ScriptedTrace;
use dcot_core::trace::{Mode, Verdict};
use dcot_core::vocab::Vocabulary;

fn scripted_task(id: &str) -> Task {
    let text = "\
step|0.9|0|0.8|u|  |u = forward elimination pass
step|0.2|1|0.2||   |an aside restating the setup in different words entirely
step|0.9|0|0.8|v|u |v = back substitution over u
step|0.2|1|0.2||   |another aside listing tools that will not actually be used
step|0.9|0|0.8||v  |collect the solved entries of v
answer|0.95|0|1||v |x=(2,1)
";
    Task::new(
        id,
        "solve the little system",
        TaskKind::Scripted,
        TaskPayload::Scripted(ScriptedTrace::parse(text).unwrap()),
    )
    .unwrap()
}

fn moe_task(id: &str, expr: &str) -> Task {
    Task::new(
        id,
        &format!("what is {expr}"),
        TaskKind::ArithEval,
        TaskPayload::Expr(expr.to_string()),
    )
    .unwrap()
}

fn run(task: &Task, mode: Mode, cfg: &DCoTConfig, seed: u64) -> dcot_core::SessionTrace {
    let vocab = Vocabulary::new();
    let facts = FactStore::new();
    let setup = SessionSetup {
        cfg,
        vocab: &vocab,
        facts: &facts,
        seed,
    };
    run_task_session(task, mode, &setup)
}

#[test]
fn dcot_never_beats_baseline_on_size_across_seeds_and_thresholds() {
    let tasks = [
        scripted_task("s"),
        moe_task("m1", "2+3"),
        moe_task("m2", "7/2 + 3/4"),
    ];
    for seed in 1..=5u64 {
        for (tau_0, eta_thr) in [(0.3, 0.0), (0.5, 0.1), (0.7, 0.3)] {
            let cfg = DCoTConfig {
                tau_0,
                eta_thr,
                seed,
                ..DCoTConfig::default()
            };
            for task in &tasks {
                let base = run(task, Mode::LongCotBaseline, &cfg, seed);
                let dcot = run(task, Mode::Dcot, &cfg, seed);
                assert!(
                    dcot.token_count <= base.token_count,
                    "tokens {} > {} for {} seed {seed} tau {tau_0}",
                    dcot.token_count,
                    base.token_count,
                    task.id
                );
                assert!(dcot.step_count <= base.step_count);
            }
        }
    }
}

#[test]
fn budget_and_cap_are_never_exceeded() {
    for (budget, cap) in [(6, 2), (13, 3), (40, 8), (320, 8)] {
        let cfg = DCoTConfig {
            token_budget: budget,
            step_cap: cap,
            ..DCoTConfig::default()
        };
        for task in [scripted_task("s"), moe_task("m", "1+2*3")] {
            for mode in [Mode::Dcot, Mode::LongCotBaseline] {
                let trace = run(&task, mode, &cfg, 3);
                assert!(trace.token_count <= budget, "{} > {budget}", trace.token_count);
                assert!(trace.step_count <= cap);
            }
        }
    }
}

#[test]
fn replay_is_byte_identical_for_both_backends() {
    let cfg = DCoTConfig::default();
    for task in [scripted_task("s"), moe_task("m", "10-4*2")] {
        for mode in [Mode::Dcot, Mode::LongCotBaseline] {
            let a = run(&task, mode, &cfg, 11);
            let b = run(&task, mode, &cfg, 11);
            assert_eq!(a, b);
            assert!(a.same_modulo_wall_time(&b));
        }
    }
}

#[test]
fn baseline_buffer_is_the_raw_trace() {
    let cfg = DCoTConfig::default();
    let task = scripted_task("s");
    let trace = run(&task, Mode::LongCotBaseline, &cfg, 2);
    assert_eq!(trace.step_count, trace.steps.len());
    assert!(trace.steps.iter().all(|s| s.verdict == Verdict::Keep));
    let TaskPayload::Scripted(script) = &task.payload else {
        unreachable!();
    };
    assert_eq!(trace.step_count, script.len());
}

#[test]
fn stored_importance_matches_its_own_fields() {
    let cfg = DCoTConfig::default();
    for task in [scripted_task("s"), moe_task("m", "2+3")] {
        let trace = run(&task, Mode::Dcot, &cfg, 5);
        for seg in &trace.steps {
            let again = seg.recompute_importance(cfg.alpha);
            assert!(
                (seg.importance - again).abs() < 1e-12,
                "importance drifted for segment {}",
                seg.id
            );
        }
    }
}

#[test]
fn pruned_segments_stay_out_of_the_buffer() {
    let cfg = DCoTConfig::default();
    let trace = run(&scripted_task("s"), Mode::Dcot, &cfg, 7);
    let assembled = trace.assembly.as_ref().unwrap();
    for seg in &trace.steps {
        let in_final = assembled.c_final.iter().any(|s| s.id == seg.id);
        let excepted = trace
            .decisions
            .iter()
            .any(|d| d.segment_id == seg.id && d.exception.is_some());
        if seg.verdict == Verdict::Prune && !excepted {
            assert!(!in_final, "pruned segment {} leaked downstream", seg.id);
        } else {
            assert!(in_final, "retained segment {} missing downstream", seg.id);
        }
    }
}
