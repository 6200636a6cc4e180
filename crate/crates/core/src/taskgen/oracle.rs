use super::{Gold, TaskKind};
use crate::{Error, Result};

/// Exact occurrences of `target` among `units`.
pub fn oracle_count<S: AsRef<str>>(units: &[S], target: &str) -> u64 {
    units.iter().filter(|u| u.as_ref() == target).count() as u64
}

/// Single-character units sorted by code point (digits < uppercase < lowercase).
pub fn oracle_sort<S: AsRef<str>>(units: &[S]) -> Result<String> {
    let mut chars = Vec::with_capacity(units.len());
    for (idx, unit) in units.iter().enumerate() {
        let mut it = unit.as_ref().chars();
        match (it.next(), it.next()) {
            (Some(c), None) => chars.push(c),
            _ => {
                return Err(Error::invalid(format!(
                    "sorting unit {idx} ({:?}) is not a single character",
                    unit.as_ref()
                )))
            }
        }
    }
    chars.sort_unstable();
    Ok(chars.into_iter().collect())
}

/// Units in reverse order, concatenated without delimiters.
pub fn oracle_reverse<S: AsRef<str>>(units: &[S]) -> String {
    units.iter().rev().map(AsRef::as_ref).collect()
}

pub fn gold_for<S: AsRef<str>>(task: &TaskKind, units: &[S]) -> Result<Gold> {
    Ok(match task {
        TaskKind::Counting { target } => Gold::Count(oracle_count(units, target)),
        TaskKind::Sorting => Gold::Text(oracle_sort(units)?),
        TaskKind::Reversing => Gold::Text(oracle_reverse(units)),
    })
}
