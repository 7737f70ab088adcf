//! Session trace rendering for `traces.log`: one structured record per
//! session with fixed field order, the per-step decision log, and a
//! human-readable view of the assembled chain. The wall time sits on its
//! own line so determinism comparisons can mask it.

use std::fmt::Write as _;

use dcot_core::trace::{Level, SessionTrace};

pub fn render_trace(trace: &SessionTrace, seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "=== session task={} mode={} seed={seed}",
        trace.task_id,
        trace.mode.as_str()
    );
    let _ = writeln!(out, "wall_ms={}", trace.wall_time_ms);
    let _ = writeln!(
        out,
        "steps={} tokens={} reward={} answer={:?} confidence={} aborted={}",
        trace.step_count,
        trace.token_count,
        trace.episode_reward,
        trace.final_answer,
        if trace.low_confidence { "low" } else { "normal" },
        trace.aborted.as_deref().unwrap_or("-"),
    );
    for d in &trace.decisions {
        let _ = writeln!(
            out,
            "decision seg={} importance={:.6} tau={:.6} verdict={} exception={}",
            d.segment_id,
            d.importance,
            d.threshold,
            d.verdict.as_str(),
            d.exception.as_deref().unwrap_or("-"),
        );
    }
    if let Some(assembled) = &trace.assembly {
        let _ = writeln!(out, "chain:");
        for seg in &assembled.c_final {
            match seg.level {
                Level::Answer => {
                    let _ = writeln!(out, "  ANSWER [{}]: {}", seg.id, seg.text);
                }
                Level::Macro => {
                    let rank = assembled
                        .reward_map
                        .iter()
                        .find(|(id, _)| *id == seg.id)
                        .map(|(_, r)| *r)
                        .unwrap_or(0);
                    let _ = writeln!(
                        out,
                        "  MACRO [{}] rank={rank} reward={:.3}: {}",
                        seg.id, seg.partial_reward, seg.text
                    );
                }
                Level::Micro => {
                    let _ = writeln!(out, "    micro [{}]: {}", seg.id, seg.text);
                }
            }
        }
    }
    let _ = writeln!(out, "end");
    out
}

/// Render a whole run's traces in row order.
pub fn render_log(traces: &[(u64, SessionTrace)]) -> String {
    traces
        .iter()
        .map(|(seed, t)| render_trace(t, *seed))
        .collect()
}

/// Drop the volatile wall-time lines for byte comparisons.
pub fn mask_wall_time(log: &str) -> String {
    log.lines()
        .filter(|l| !l.starts_with("wall_ms="))
        .collect::<Vec<_>>()
        .join("\n")
}
