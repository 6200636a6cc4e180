//! Final-answer extraction from raw model responses, and exact-match judging.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use std::collections::HashMap;

use crate::runner::RunRecord;
use crate::taskgen::{Gold, Instance, TaskKind};
use crate::{Error, PromptVariant, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnswerKind {
    Count { value: u64 },
    StringResult { value: String },
    Unparseable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    #[serde(flatten)]
    pub kind: AnswerKind,
    /// Byte range of the matched region in the raw response.
    pub source_span: Option<(usize, usize)>,
}

impl ParsedAnswer {
    pub fn unparseable(reason: impl Into<String>) -> Self {
        Self {
            kind: AnswerKind::Unparseable {
                reason: reason.into(),
            },
            source_span: None,
        }
    }

    pub fn is_unparseable(&self) -> bool {
        matches!(self.kind, AnswerKind::Unparseable { .. })
    }

    pub fn count(&self) -> Option<u64> {
        match self.kind {
            AnswerKind::Count { value } => Some(value),
            _ => None,
        }
    }
}

// `Result:` with optional bold markers on either side of the colon.
static RESULT_COUNT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bresult\s*[*_]*\s*:\s*[*_]*\s*(\d+)").expect("valid regex")
});
static BOLD_INT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\*\*\s*(\d+)\s*\*\*").expect("valid regex"));
static RESULT_DICT: LazyLock<Regex> = LazyLock::new(|| {
    let q = "['\"\u{2018}\u{2019}\u{201C}\u{201D}`]";
    Regex::new(&format!(r"\{{\s*{q}Result\.?{q}\s*:\s*{q}([^'\x{{2019}}\x{{201D}}\x22]*){q}\s*\}}"))
        .expect("valid regex")
});

/// Integer after the last `Result:`; otherwise the last integer inside
/// `**...**`; otherwise unparseable.
pub fn parse_count(raw: &str) -> ParsedAnswer {
    let found = RESULT_COUNT
        .captures_iter(raw)
        .last()
        .or_else(|| BOLD_INT.captures_iter(raw).last());
    let Some(caps) = found else {
        return ParsedAnswer::unparseable("no `Result:` line or bold integer");
    };
    let whole = caps.get(0).map(|m| (m.start(), m.end()));
    let digits = caps.get(1).map_or("", |m| m.as_str());
    match digits.parse::<u64>() {
        Ok(value) => ParsedAnswer {
            kind: AnswerKind::Count { value },
            source_span: whole,
        },
        Err(e) => ParsedAnswer {
            kind: AnswerKind::Unparseable {
                reason: format!("count {digits:?} out of range: {e}"),
            },
            source_span: whole,
        },
    }
}

/// Value of the last `{'Result': '...'}` dictionary literal. Straight,
/// double and typographic quotes are all accepted.
pub fn parse_string_result(raw: &str) -> ParsedAnswer {
    match RESULT_DICT.captures_iter(raw).last() {
        Some(caps) => ParsedAnswer {
            kind: AnswerKind::StringResult {
                value: caps.get(1).map_or("", |m| m.as_str()).to_owned(),
            },
            source_span: caps.get(0).map(|m| (m.start(), m.end())),
        },
        None => ParsedAnswer::unparseable("no {'Result': ...} dictionary"),
    }
}

pub fn parse_for_task(task: &TaskKind, raw: &str) -> ParsedAnswer {
    if task.is_counting() {
        parse_count(raw)
    } else {
        parse_string_result(raw)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Incorrect { predicted: Gold },
    Unparseable { reason: String },
}

impl Verdict {
    pub fn is_correct(&self) -> bool {
        matches!(self, Verdict::Correct)
    }
}

/// Exact match against `instance.gold`.
pub fn judge(instance: &Instance, parsed: &ParsedAnswer) -> Verdict {
    let predicted = match (&instance.gold, &parsed.kind) {
        (_, AnswerKind::Unparseable { reason }) => {
            return Verdict::Unparseable {
                reason: reason.clone(),
            }
        }
        (Gold::Count(_), AnswerKind::Count { value }) => Gold::Count(*value),
        (Gold::Text(_), AnswerKind::StringResult { value }) => Gold::Text(value.clone()),
        (Gold::Count(_), AnswerKind::StringResult { .. }) => {
            return Verdict::Unparseable {
                reason: "string answer for a counting task".into(),
            }
        }
        (Gold::Text(_), AnswerKind::Count { .. }) => {
            return Verdict::Unparseable {
                reason: "integer answer for a string task".into(),
            }
        }
    };
    if predicted == instance.gold {
        Verdict::Correct
    } else {
        Verdict::Incorrect { predicted }
    }
}

/// One judged run, as written to `verdicts.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub instance_id: String,
    pub variant: PromptVariant,
    pub backend: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub synthetic: bool,
    pub parsed: ParsedAnswer,
    #[serde(flatten)]
    pub verdict: Verdict,
}

/// Parses and judges every run. A run whose backend call failed is scored
/// unparseable; a run without a matching instance is an integrity error.
pub fn score(runs: &[RunRecord], instances: &[Instance]) -> Result<Vec<ScoredRecord>> {
    let by_id: HashMap<&str, &Instance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    runs.iter()
        .map(|run| {
            let instance = by_id.get(run.instance_id.as_str()).ok_or_else(|| {
                Error::Integrity(format!("run for unknown instance {}", run.instance_id))
            })?;
            let parsed = match &run.error {
                Some(e) => ParsedAnswer::unparseable(format!("backend error: {e}")),
                None => parse_for_task(&instance.task, &run.raw_response),
            };
            Ok(ScoredRecord {
                instance_id: run.instance_id.clone(),
                variant: run.variant,
                backend: run.backend.clone(),
                model: run.model.clone(),
                synthetic: run.synthetic,
                verdict: judge(instance, &parsed),
                parsed,
            })
        })
        .collect()
}
