//! Task instances for counting, sorting and reversing under the four string
//! formats.

mod alphabet;
mod generate;
mod oracle;
mod render;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use alphabet::{AlphabetSpec, Sampler, WordSource};
pub use generate::{generate, instance_id};
pub use oracle::{gold_for, oracle_count, oracle_reverse, oracle_sort};
pub use render::{parse_rendered, render};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskKind {
    Counting { target: String },
    Sorting,
    Reversing,
}

impl TaskKind {
    /// Task family name, also the template directory name.
    pub fn family(&self) -> &'static str {
        match self {
            TaskKind::Counting { .. } => "counting",
            TaskKind::Sorting => "sorting",
            TaskKind::Reversing => "reversing",
        }
    }

    pub fn is_counting(&self) -> bool {
        matches!(self, TaskKind::Counting { .. })
    }

    /// Counting lengths are closed ranges; the other tasks use half-open steps.
    pub fn bucket(&self, lo: usize, hi: usize) -> LengthBucket {
        LengthBucket {
            lo,
            hi,
            closed: self.is_counting(),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::Counting { target } => write!(f, "counting({target})"),
            other => f.write_str(other.family()),
        }
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    /// Accepts `sorting`, `reversing`, `counting:X` and `counting(X)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "sorting" | "sort" => return Ok(TaskKind::Sorting),
            "reversing" | "reverse" => return Ok(TaskKind::Reversing),
            _ => {}
        }
        let target = s
            .strip_prefix("counting:")
            .or_else(|| s.strip_prefix("count:"))
            .or_else(|| {
                s.strip_prefix("counting(")
                    .and_then(|rest| rest.strip_suffix(')'))
            });
        match target {
            Some(t) if !t.is_empty() => Ok(TaskKind::Counting {
                target: t.to_owned(),
            }),
            _ => Err(Error::invalid(format!(
                "unknown task {s:?} (expected sorting, reversing or counting:X)"
            ))),
        }
    }
}

/// The four string renderings of one unit list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatType {
    /// pure string
    A,
    /// space-delimited
    B,
    /// comma-space-delimited
    C,
    /// quoted, bracketed item list
    D,
}

impl FormatType {
    pub const ALL: [FormatType; 4] = [FormatType::A, FormatType::B, FormatType::C, FormatType::D];

    pub fn as_str(self) -> &'static str {
        match self {
            FormatType::A => "a",
            FormatType::B => "b",
            FormatType::C => "c",
            FormatType::D => "d",
        }
    }
}

impl fmt::Display for FormatType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormatType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_matches(|c| c == '(' || c == ')') {
            "a" => Ok(FormatType::A),
            "b" => Ok(FormatType::B),
            "c" => Ok(FormatType::C),
            "d" => Ok(FormatType::D),
            other => Err(Error::invalid(format!(
                "unknown format {other:?} (expected a, b, c or d)"
            ))),
        }
    }
}

/// Range of unit counts. `closed` buckets include `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LengthBucket {
    pub lo: usize,
    pub hi: usize,
    pub closed: bool,
}

impl LengthBucket {
    pub fn half_open(lo: usize, hi: usize) -> Self {
        Self {
            lo,
            hi,
            closed: false,
        }
    }

    pub fn closed(lo: usize, hi: usize) -> Self {
        Self { lo, hi, closed: true }
    }

    /// Consecutive half-open buckets of width `step` covering `[lo, hi)`.
    pub fn steps(lo: usize, hi: usize, step: usize) -> Vec<Self> {
        if step == 0 {
            return Vec::new();
        }
        (lo..hi)
            .step_by(step)
            .map(|start| Self::half_open(start, (start + step).min(hi)))
            .collect()
    }

    pub fn max_len(&self) -> Option<usize> {
        if self.closed {
            Some(self.hi)
        } else {
            self.hi.checked_sub(1)
        }
    }

    pub fn is_empty(&self) -> bool {
        self.max_len().is_none_or(|max| max < self.lo)
    }

    pub fn contains(&self, len: usize) -> bool {
        len >= self.lo && self.max_len().is_some_and(|max| len <= max)
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.lo, self.hi)
    }

    /// Parses `LO:HI` (or `LO-HI`) with the closedness convention of `task`.
    pub fn parse_for(task: &TaskKind, s: &str) -> Result<Self> {
        let (lo, hi) = s
            .split_once(':')
            .or_else(|| s.split_once('-'))
            .ok_or_else(|| Error::invalid(format!("bucket {s:?} must look like LO:HI")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|e| Error::invalid(format!("bucket {s:?}: {e}")))
        };
        let bucket = task.bucket(parse(lo)?, parse(hi)?);
        if bucket.is_empty() || bucket.lo == 0 {
            return Err(Error::invalid(format!("bucket {s:?} is empty")));
        }
        Ok(bucket)
    }
}

impl fmt::Display for LengthBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.closed {
            write!(f, "[{}, {}]", self.lo, self.hi)
        } else {
            write!(f, "[{}, {})", self.lo, self.hi)
        }
    }
}

/// Gold answer: a count for counting, a string otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gold {
    Count(u64),
    Text(String),
}

impl fmt::Display for Gold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gold::Count(n) => write!(f, "{n}"),
            Gold::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub task: TaskKind,
    pub alphabet: String,
    pub units: Vec<String>,
    pub format: FormatType,
    pub rendered: String,
    pub gold: Gold,
    pub length_bucket: LengthBucket,
    pub seed: u64,
}
