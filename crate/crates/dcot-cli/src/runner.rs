//! Suite execution: every task in every requested mode with per-task
//! derived seeds, optional thread parallelism, and wall-time stamping.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::Result;
use dcot_core::config::DCoTConfig;
use dcot_core::decoder::{run_task_session, SessionSetup};
use dcot_core::discriminator::FactStore;
use dcot_core::haro::semantic_reward;
use dcot_core::trace::{Mode, SessionTrace};
use dcot_core::vocab::Vocabulary;

use crate::report::{RunReport, RunRow};
use crate::suite::{Suite, SuiteEntry};

/// Everything a run produces: the report plus the raw traces (paired with
/// the seed each session used) in row order.
pub struct RunOutcome {
    pub report: RunReport,
    pub traces: Vec<(u64, SessionTrace)>,
}

/// Seed for one task: the run seed XOR the task's position in the suite.
pub fn task_seed(run_seed: u64, task_index: usize) -> u64 {
    run_seed ^ task_index as u64
}

fn run_one(
    entry: &SuiteEntry,
    index: usize,
    mode: Mode,
    cfg: &DCoTConfig,
    vocab: &Vocabulary,
    facts: &FactStore,
) -> (RunRow, Option<(u64, SessionTrace)>) {
    let seed = task_seed(cfg.seed, index);
    match entry {
        SuiteEntry::Broken { id, reason } => (
            RunRow {
                task_id: id.clone(),
                mode: mode.as_str().to_string(),
                wall_time_ms: 0,
                step_count: 0,
                token_count: 0,
                correct: false,
                episode_reward: 0.0,
                aborted: reason.clone(),
            },
            None,
        ),
        SuiteEntry::Task(task) => {
            let setup = SessionSetup {
                cfg,
                vocab,
                facts,
                seed,
            };
            let start = Instant::now();
            let mut trace = run_task_session(task, mode, &setup);
            trace.wall_time_ms = start.elapsed().as_millis() as u64;
            let correct = semantic_reward(&trace.final_answer, &task.oracle_answer) == 1.0;
            let row = RunRow {
                task_id: task.id.clone(),
                mode: mode.as_str().to_string(),
                wall_time_ms: trace.wall_time_ms,
                step_count: trace.step_count,
                token_count: trace.token_count,
                correct,
                episode_reward: trace.episode_reward,
                aborted: trace.aborted.clone().unwrap_or_default(),
            };
            (row, Some((seed, trace)))
        }
    }
}

/// Run every entry in every requested mode. Rows come out task-major,
/// mode-minor in the given order regardless of `jobs`.
pub fn run_suite(
    suite: &Suite,
    cfg: &DCoTConfig,
    modes: &[Mode],
    facts: &FactStore,
    jobs: usize,
) -> Result<RunOutcome> {
    let vocab = Vocabulary::new();
    let work: Vec<(usize, Mode)> = suite
        .entries
        .iter()
        .enumerate()
        .flat_map(|(i, _)| modes.iter().map(move |&m| (i, m)))
        .collect();
    let slots: Mutex<Vec<Option<(RunRow, Option<(u64, SessionTrace)>)>>> =
        Mutex::new((0..work.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = jobs.max(1).min(work.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let w = next.fetch_add(1, Ordering::Relaxed);
                if w >= work.len() {
                    break;
                }
                let (index, mode) = work[w];
                let result = run_one(&suite.entries[index], index, mode, cfg, &vocab, facts);
                slots.lock().unwrap()[w] = Some(result);
            });
        }
    });

    let mut rows = Vec::with_capacity(work.len());
    let mut traces = Vec::new();
    for slot in slots.into_inner().unwrap() {
        let (row, trace) = slot.expect("every work item ran");
        rows.push(row);
        if let Some(t) = trace {
            traces.push(t);
        }
    }
    Ok(RunOutcome {
        report: RunReport {
            rows,
            config: cfg.clone(),
            seed: cfg.seed,
        },
        traces,
    })
}
