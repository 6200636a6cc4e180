use serde::{Deserialize, Serialize};

use super::TokenizationView;
use crate::{Error, Result};

/// Structural proxy for whether each atomic unit is visible as its own token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// Indexed by unit occurrence. A unit is aligned when no token it touches
    /// also touches another unit; delimiters glued to it are allowed.
    pub per_unit_aligned: Vec<bool>,
    pub merged_unit_count: usize,
    /// Units whose characters are spread over more than one token.
    pub split_unit_count: usize,
    /// Character span of each located unit in the source.
    pub unit_spans: Vec<(usize, usize)>,
}

/// Locates `units` left to right in `view.source` (anything between them is
/// treated as delimiter) and flags units that share a token with another unit.
pub fn alignment_report<S: AsRef<str>>(
    view: &TokenizationView,
    units: &[S],
) -> Result<AlignmentReport> {
    let source: Vec<char> = view.source.chars().collect();
    let mut owner: Vec<Option<usize>> = vec![None; source.len()];
    let mut unit_spans = Vec::with_capacity(units.len());

    let mut cursor = 0;
    for (idx, unit) in units.iter().enumerate() {
        let needle: Vec<char> = unit.as_ref().chars().collect();
        if needle.is_empty() {
            return Err(Error::invalid(format!("unit {idx} is empty")));
        }
        let start = find_from(&source, &needle, cursor).ok_or_else(|| {
            Error::invalid(format!(
                "unit {idx} ({:?}) not found in source after offset {cursor}",
                unit.as_ref()
            ))
        })?;
        let end = start + needle.len();
        owner[start..end].iter_mut().for_each(|o| *o = Some(idx));
        unit_spans.push((start, end));
        cursor = end;
    }

    let mut touches_other = vec![false; units.len()];
    let mut token_count = vec![0usize; units.len()];
    for &(start, end) in &view.boundaries {
        let end = end.min(source.len());
        let mut touched: Vec<usize> = owner[start.min(end)..end].iter().flatten().copied().collect();
        touched.dedup();
        for &u in &touched {
            token_count[u] += 1;
            if touched.len() > 1 {
                touches_other[u] = true;
            }
        }
    }

    let per_unit_aligned: Vec<bool> = touches_other.iter().map(|t| !t).collect();
    let merged_unit_count = per_unit_aligned.iter().filter(|a| !**a).count();
    let split_unit_count = token_count.iter().filter(|&&n| n > 1).count();

    Ok(AlignmentReport {
        per_unit_aligned,
        merged_unit_count,
        split_unit_count,
        unit_spans,
    })
}

fn find_from(haystack: &[char], needle: &[char], from: usize) -> Option<usize> {
    if needle.len() > haystack.len() {
        return None;
    }
    (from..=haystack.len() - needle.len()).find(|&i| haystack[i..i + needle.len()] == *needle)
}
