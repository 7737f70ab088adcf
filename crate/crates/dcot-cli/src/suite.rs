//! Task suite files: line-oriented task definitions with exact rational
//! payloads or references to scripted trace files.
//!
//! Format (blank lines and `#` comments ignored):
//!
//! ```text
//! task|<id>|arith|<prompt>|<expression>
//! task|<id>|det|<prompt>|<matrix>
//! task|<id>|rank|<prompt>|<matrix>
//! task|<id>|trace|<prompt>|<matrix>|<vector>
//! task|<id>|combo|<prompt>|<col>|<col>|...|<target>
//! task|<id>|scripted|<prompt>|<relative trace path>
//! ```
//!
//! Matrices are `;`-separated rows of `,`-separated rational literals
//! (`p`, `-p`, or `p/q`); vectors are one such row. A structurally valid
//! line whose payload fails to build (bad literal, missing trace file)
//! becomes a broken entry so the rest of the suite still runs.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use dcot_core::oracle::{parse_rational, RatMatrix, Rational, Task, TaskKind, TaskPayload};
use dcot_core::scripted::ScriptedTrace;

/// One suite line: a runnable task or a flagged-but-skipped failure.
#[derive(Debug, Clone)]
pub enum SuiteEntry {
    Task(Task),
    Broken { id: String, reason: String },
}

impl SuiteEntry {
    pub fn id(&self) -> &str {
        match self {
            SuiteEntry::Task(t) => &t.id,
            SuiteEntry::Broken { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Suite {
    pub entries: Vec<SuiteEntry>,
}

impl Suite {
    pub fn tasks(&self) -> impl Iterator<Item = &Task> {
        self.entries.iter().filter_map(|e| match e {
            SuiteEntry::Task(t) => Some(t),
            SuiteEntry::Broken { .. } => None,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn parse_vector(text: &str) -> Result<Vec<Rational>> {
    text.split(',')
        .map(|e| parse_rational(e).map_err(|e| anyhow!("{e}")))
        .collect()
}

fn parse_matrix(text: &str) -> Result<RatMatrix> {
    let rows: Vec<Vec<Rational>> = text
        .split(';')
        .map(parse_vector)
        .collect::<Result<_>>()?;
    let r = rows.len();
    let c = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|row| row.len() != c) {
        bail!("ragged matrix rows");
    }
    if r > 4 || c > 4 {
        bail!("matrices are capped at 4×4, got {r}×{c}");
    }
    RatMatrix::new(r, c, rows.into_iter().flatten().collect()).map_err(|e| anyhow!("{e}"))
}

fn build_task(id: &str, kind: &str, prompt: &str, payload: &[&str], base: &Path) -> Result<Task> {
    let task = match kind {
        "arith" => {
            let [expr] = payload else {
                bail!("arith takes one payload field");
            };
            Task::new(id, prompt, TaskKind::ArithEval, TaskPayload::Expr(expr.to_string()))?
        }
        "det" => {
            let [m] = payload else {
                bail!("det takes one payload field");
            };
            Task::new(id, prompt, TaskKind::Determinant, TaskPayload::Matrix(parse_matrix(m)?))?
        }
        "rank" => {
            let [m] = payload else {
                bail!("rank takes one payload field");
            };
            Task::new(id, prompt, TaskKind::Rank, TaskPayload::Matrix(parse_matrix(m)?))?
        }
        "trace" => {
            let [m, v] = payload else {
                bail!("trace takes matrix and vector payload fields");
            };
            Task::new(
                id,
                prompt,
                TaskKind::TraceIdentity,
                TaskPayload::MatVec {
                    a: parse_matrix(m)?,
                    x: parse_vector(v)?,
                },
            )?
        }
        "combo" => {
            if payload.len() < 2 {
                bail!("combo takes at least one column and a target");
            }
            let columns: Vec<Vec<Rational>> = payload[..payload.len() - 1]
                .iter()
                .map(|c| parse_vector(c))
                .collect::<Result<_>>()?;
            let target = parse_vector(payload[payload.len() - 1])?;
            Task::new(
                id,
                prompt,
                TaskKind::LinearCombination,
                TaskPayload::Vectors { columns, target },
            )?
        }
        "scripted" => {
            let [rel] = payload else {
                bail!("scripted takes one trace-path field");
            };
            let path = base.join(rel);
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading trace {}", path.display()))?;
            let trace = ScriptedTrace::parse(&text)?;
            Task::new(id, prompt, TaskKind::Scripted, TaskPayload::Scripted(trace))?
        }
        other => bail!("unknown task kind {other:?}"),
    };
    Ok(task)
}

/// Parse suite text; `base` resolves scripted trace references. Structural
/// problems (not a task line, duplicate ids) fail with the line number;
/// payload problems demote the task to a broken entry.
pub fn parse_suite(text: &str, base: &Path) -> Result<Suite> {
    let mut entries = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('|').collect();
        if fields.len() < 5 || fields[0] != "task" {
            bail!("line {line}: expected task|<id>|<kind>|<prompt>|<payload...>");
        }
        let (id, kind, prompt) = (fields[1], fields[2], fields[3]);
        if id.is_empty() {
            bail!("line {line}: empty task id");
        }
        if !seen.insert(id.to_string()) {
            bail!("line {line}: duplicate task id {id:?}");
        }
        match build_task(id, kind, prompt, &fields[4..], base) {
            Ok(task) => entries.push(SuiteEntry::Task(task)),
            Err(e) => entries.push(SuiteEntry::Broken {
                id: id.to_string(),
                reason: format!("line {line}: {e}"),
            }),
        }
    }
    Ok(Suite { entries })
}

/// Load a suite file, resolving trace paths against its directory.
pub fn load_suite(path: &Path) -> Result<Suite> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading suite {}", path.display()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_suite(&text, base)
}
