//! Scripted reasoning traces: the deterministic oracle backend.
//!
//! A scripted trace fixes every segment's text, ground-truth importance,
//! reward, and identifier metadata ahead of time, which makes controller
//! behavior exactly predictable in tests and benchmarks.
//!
//! Line format (one record per segment, `|`-separated, fixed field order;
//! the final line must be the answer record):
//!
//! ```text
//! step|<importance>|<redundant 0|1>|<reward>|<introduces,...>|<references,...>|<text>
//! answer|<importance>|<redundant 0|1>|<reward>|<introduces,...>|<references,...>|<text>
//! ```
//!
//! Blank lines and `#` comments are ignored. Any other tag is rejected.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScriptedError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("segment index {index} out of range for trace of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("trace must end with exactly one answer segment")]
    BadAnswerPlacement,
    #[error("segment {index} references {identifier:?} before it is introduced")]
    UnknownReference { index: usize, identifier: String },
}

/// One pre-authored reasoning step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedSegment {
    pub text: String,
    /// Ground-truth gating score handed to the controller, in [0,1].
    pub true_importance: f64,
    pub redundant: bool,
    pub introduces: BTreeSet<String>,
    pub references: BTreeSet<String>,
    /// Partial reward the backend reports for this step, in [0,1].
    pub reward: f64,
    pub is_answer: bool,
}

/// An ordered, validated script; the final segment is the answer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedTrace {
    segments: Vec<ScriptedSegment>,
}

impl ScriptedTrace {
    /// Validate segment ordering and identifier references.
    pub fn new(segments: Vec<ScriptedSegment>) -> Result<Self, ScriptedError> {
        let answers = segments.iter().filter(|s| s.is_answer).count();
        if answers != 1 || !segments.last().map(|s| s.is_answer).unwrap_or(false) {
            return Err(ScriptedError::BadAnswerPlacement);
        }
        let mut known: BTreeSet<&str> = BTreeSet::new();
        for (index, seg) in segments.iter().enumerate() {
            for r in &seg.references {
                if !known.contains(r.as_str()) {
                    return Err(ScriptedError::UnknownReference {
                        index,
                        identifier: r.clone(),
                    });
                }
            }
            known.extend(seg.introduces.iter().map(String::as_str));
        }
        Ok(Self { segments })
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> &[ScriptedSegment] {
        &self.segments
    }

    /// The scripted final answer text.
    pub fn answer(&self) -> &str {
        &self.segments[self.segments.len() - 1].text
    }

    /// Segment at step `index`; this is the oracle behind block decoding.
    pub fn scripted_step(&self, index: usize) -> Result<&ScriptedSegment, ScriptedError> {
        self.segments.get(index).ok_or(ScriptedError::IndexOutOfRange {
            index,
            len: self.segments.len(),
        })
    }

    /// Parse the line format described at module level.
    pub fn parse(text: &str) -> Result<Self, ScriptedError> {
        let mut segments = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut fields = trimmed.splitn(7, '|');
            let tag = fields.next().unwrap_or("");
            let is_answer = match tag {
                "step" => false,
                "answer" => true,
                other => {
                    return Err(ScriptedError::Parse {
                        line,
                        msg: format!("unknown record tag {other:?}"),
                    })
                }
            };
            let rest: Vec<&str> = fields.collect();
            if rest.len() != 6 {
                return Err(ScriptedError::Parse {
                    line,
                    msg: format!("expected 6 fields after tag, found {}", rest.len()),
                });
            }
            let unit_field = |name: &str, v: &str| -> Result<f64, ScriptedError> {
                let x: f64 = v.parse().map_err(|_| ScriptedError::Parse {
                    line,
                    msg: format!("bad {name} value {v:?}"),
                })?;
                if !(0.0..=1.0).contains(&x) {
                    return Err(ScriptedError::Parse {
                        line,
                        msg: format!("{name} {x} outside [0,1]"),
                    });
                }
                Ok(x)
            };
            let true_importance = unit_field("importance", rest[0])?;
            let redundant = match rest[1] {
                "0" => false,
                "1" => true,
                v => {
                    return Err(ScriptedError::Parse {
                        line,
                        msg: format!("bad redundant flag {v:?}"),
                    })
                }
            };
            let reward = unit_field("reward", rest[2])?;
            let ids = |v: &str| -> BTreeSet<String> {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(ToString::to_string)
                    .collect()
            };
            segments.push(ScriptedSegment {
                text: rest[5].to_string(),
                true_importance,
                redundant,
                introduces: ids(rest[3]),
                references: ids(rest[4]),
                reward,
                is_answer,
            });
        }
        Self::new(segments)
    }

    /// Serialize back to the line format; `parse(render(t)) == t`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            let tag = if seg.is_answer { "answer" } else { "step" };
            let ids = |set: &BTreeSet<String>| set.iter().cloned().collect::<Vec<_>>().join(",");
            out.push_str(&format!(
                "{tag}|{}|{}|{}|{}|{}|{}\n",
                seg.true_importance,
                u8::from(seg.redundant),
                seg.reward,
                ids(&seg.introduces),
                ids(&seg.references),
                seg.text,
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
# toy fixture
step|0.9|0|0.8|m|             |define m as the product L U
step|0.2|1|0.2||              |restate the question in other words
answer|0.95|1|1||m|det=1
";

    #[test]
    fn parses_and_validates() {
        let t = ScriptedTrace::parse(FIXTURE).unwrap();
        assert_eq!(t.len(), 3);
        assert!(t.segments()[1].redundant);
        assert_eq!(t.answer(), "det=1");
        assert!(t.segments()[2].references.contains("m"));
    }

    #[test]
    fn single_answer_trace_is_valid() {
        let t = ScriptedTrace::parse("answer|0.9|0|1|||done\n").unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.scripted_step(0).unwrap().is_answer);
    }

    #[test]
    fn step_index_out_of_range() {
        let t = ScriptedTrace::parse("answer|0.9|0|1|||done\n").unwrap();
        assert!(matches!(
            t.scripted_step(1),
            Err(ScriptedError::IndexOutOfRange { index: 1, len: 1 })
        ));
    }

    #[test]
    fn rejects_unknown_tag() {
        let err = ScriptedTrace::parse("verse|0.5|0|0.5|||x\n").unwrap_err();
        assert!(matches!(err, ScriptedError::Parse { line: 1, .. }));
    }

    #[test]
    fn rejects_wrong_field_count() {
        let err = ScriptedTrace::parse("step|0.5|0|0.5||x\n").unwrap_err();
        assert!(matches!(err, ScriptedError::Parse { .. }));
    }

    #[test]
    fn rejects_missing_or_misplaced_answer() {
        assert!(matches!(
            ScriptedTrace::parse("step|0.5|0|0.5|||x\n"),
            Err(ScriptedError::BadAnswerPlacement)
        ));
        assert!(matches!(
            ScriptedTrace::parse("answer|0.9|0|1|||a\nstep|0.5|0|0.5|||x\n"),
            Err(ScriptedError::BadAnswerPlacement)
        ));
    }

    #[test]
    fn rejects_forward_references() {
        let err =
            ScriptedTrace::parse("step|0.5|0|0.5||q|uses q\nanswer|0.9|0|1|q||a\n").unwrap_err();
        assert!(matches!(err, ScriptedError::UnknownReference { index: 0, .. }));
    }

    #[test]
    fn render_round_trips() {
        let t = ScriptedTrace::parse(FIXTURE).unwrap();
        let again = ScriptedTrace::parse(&t.render()).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn importance_bounds_enforced() {
        assert!(matches!(
            ScriptedTrace::parse("answer|1.5|0|1|||a\n"),
            Err(ScriptedError::Parse { .. })
        ));
    }
}
