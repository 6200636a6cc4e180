//! Minimal character-level BPE.
//!
//! Base symbols are Unicode scalar values. Merges are applied greedily in
//! rank order; with whitespace pretokenization enabled the text is first cut
//! into maximal whitespace / non-whitespace runs and no merge crosses a run.

mod align;
mod file;
mod train;

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use align::{alignment_report, AlignmentReport};
pub use file::{parse_merges, write_merges};
pub use train::train_bpe;

/// Ranked merge rules plus the vocabulary they generate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeTable {
    merges: Vec<(String, String)>,
    ranks: HashMap<String, HashMap<String, usize>>,
    vocab: BTreeSet<String>,
    pretokenize_whitespace: bool,
}

impl MergeTable {
    /// Builds a table from ranked merges, checking that every merge operand is
    /// a single character or the product of an earlier merge.
    pub fn new(merges: Vec<(String, String)>, pretokenize_whitespace: bool) -> Result<Self> {
        Self::with_base_symbols(merges, std::iter::empty::<char>(), pretokenize_whitespace)
    }

    pub fn with_base_symbols(
        merges: Vec<(String, String)>,
        base: impl IntoIterator<Item = char>,
        pretokenize_whitespace: bool,
    ) -> Result<Self> {
        let mut vocab: BTreeSet<String> = base.into_iter().map(String::from).collect();
        let mut products: HashSet<String> = HashSet::new();
        let mut ranks: HashMap<String, HashMap<String, usize>> = HashMap::new();

        for (rank, (left, right)) in merges.iter().enumerate() {
            for sym in [left, right] {
                let single = sym.chars().count() == 1;
                if !single && !products.contains(sym) {
                    return Err(Error::invalid(format!(
                        "merge {rank} ({left:?}, {right:?}): symbol {sym:?} is neither a base symbol nor an earlier merge product"
                    )));
                }
                if single {
                    vocab.insert(sym.clone());
                }
            }
            if ranks
                .entry(left.clone())
                .or_default()
                .insert(right.clone(), rank)
                .is_some()
            {
                return Err(Error::invalid(format!(
                    "duplicate merge pair ({left:?}, {right:?}) at rank {rank}"
                )));
            }
            let product = format!("{left}{right}");
            products.insert(product.clone());
            vocab.insert(product);
        }

        Ok(Self {
            merges,
            ranks,
            vocab,
            pretokenize_whitespace,
        })
    }

    pub fn empty() -> Self {
        Self {
            merges: Vec::new(),
            ranks: HashMap::new(),
            vocab: BTreeSet::new(),
            pretokenize_whitespace: false,
        }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn vocab(&self) -> &BTreeSet<String> {
        &self.vocab
    }

    pub fn pretokenizes_whitespace(&self) -> bool {
        self.pretokenize_whitespace
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    pub fn rank(&self, left: &str, right: &str) -> Option<usize> {
        self.ranks.get(left)?.get(right).copied()
    }

    /// Tokenizes `text`. Unknown characters pass through as single-character
    /// tokens, so concatenating the tokens always reproduces `text`.
    pub fn encode(&self, text: &str) -> TokenizationView {
        let mut tokens = Vec::new();
        for segment in pretokenize(text, self.pretokenize_whitespace) {
            tokens.extend(self.encode_segment(segment));
        }

        let mut boundaries = Vec::with_capacity(tokens.len());
        let mut start = 0;
        for tok in &tokens {
            let end = start + tok.chars().count();
            boundaries.push((start, end));
            start = end;
        }

        TokenizationView {
            tokens,
            boundaries,
            source: text.to_owned(),
        }
    }

    fn encode_segment(&self, segment: &str) -> Vec<String> {
        let mut symbols: Vec<String> = segment.chars().map(String::from).collect();
        if self.merges.is_empty() {
            return symbols;
        }
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.rank(&w[0], &w[1]))
                .min();
            let Some(rank) = best else { break };
            let (left, right) = &self.merges[rank];
            symbols = apply_merge(symbols, left, right);
        }
        symbols
    }
}

/// Merges every non-overlapping occurrence of `(left, right)`, scanning left to right.
pub(crate) fn apply_merge(symbols: Vec<String>, left: &str, right: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut iter = symbols.into_iter().peekable();
    while let Some(sym) = iter.next() {
        if sym == left && iter.peek().is_some_and(|next| next == right) {
            let next = iter.next().unwrap_or_default();
            out.push(sym + &next);
        } else {
            out.push(sym);
        }
    }
    out
}

/// Splits `text` into the runs that merges may not cross.
pub(crate) fn pretokenize(text: &str, on_whitespace: bool) -> Vec<&str> {
    if !on_whitespace {
        return if text.is_empty() { Vec::new() } else { vec![text] };
    }
    let mut runs = Vec::new();
    let mut start = 0;
    let mut prev_ws: Option<bool> = None;
    for (idx, ch) in text.char_indices() {
        let ws = ch.is_whitespace();
        if prev_ws.is_some_and(|p| p != ws) {
            runs.push(&text[start..idx]);
            start = idx;
        }
        prev_ws = Some(ws);
    }
    if start < text.len() {
        runs.push(&text[start..]);
    }
    runs
}

/// Token sequence for one string plus its character-offset alignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizationView {
    pub tokens: Vec<String>,
    /// `(start, end)` character offsets into `source`, end exclusive.
    pub boundaries: Vec<(usize, usize)>,
    pub source: String,
}

impl TokenizationView {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(merges: &[(&str, &str)]) -> MergeTable {
        MergeTable::new(
            merges
                .iter()
                .map(|(l, r)| (l.to_string(), r.to_string()))
                .collect(),
            false,
        )
        .unwrap()
    }

    #[test]
    fn encode_applies_rank_zero_merge_twice() {
        let view = table(&[("a", "b")]).encode("abab");
        assert_eq!(view.tokens, ["ab", "ab"]);
        assert_eq!(view.boundaries, [(0, 2), (2, 4)]);
    }

    #[test]
    fn empty_table_yields_characters() {
        let view = MergeTable::empty().encode("abc");
        assert_eq!(view.tokens, ["a", "b", "c"]);
    }

    #[test]
    fn delimiters_block_adjacency() {
        let view = table(&[("a", "b")]).encode("a, b");
        let letters: Vec<usize> = view
            .tokens
            .iter()
            .map(|t| t.chars().filter(|c| c.is_alphabetic()).count())
            .filter(|&n| n > 0)
            .collect();
        assert_eq!(letters, [1, 1]);
    }

    #[test]
    fn chained_merges() {
        let view = table(&[("a", "a"), ("aa", "aa")]).encode("aaaaa");
        assert_eq!(view.tokens, ["aaaa", "a"]);
    }

    #[test]
    fn whitespace_runs_are_not_merged_across() {
        let t = MergeTable::new(vec![("a".into(), " ".into())], true).unwrap();
        assert_eq!(t.encode("a a").tokens, ["a", " ", "a"]);
        let t = MergeTable::new(vec![("a".into(), " ".into())], false).unwrap();
        assert_eq!(t.encode("a a").tokens, ["a ", "a"]);
    }

    #[test]
    fn pretokenize_runs() {
        assert_eq!(pretokenize("ab  c d", true), ["ab", "  ", "c", " ", "d"]);
        assert_eq!(pretokenize("ab c", false), ["ab c"]);
        assert!(pretokenize("", true).is_empty());
    }

    #[test]
    fn rejects_unknown_operand() {
        let err = MergeTable::new(vec![("ab".into(), "c".into())], false).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn rejects_duplicate_pair() {
        let err = MergeTable::new(
            vec![("a".into(), "b".into()), ("a".into(), "b".into())],
            false,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn vocab_contains_base_and_products() {
        let t = table(&[("a", "b"), ("ab", "c")]);
        let v: Vec<&str> = t.vocab().iter().map(String::as_str).collect();
        assert_eq!(v, ["a", "ab", "abc", "b", "c"]);
    }

    #[test]
    fn multibyte_offsets_are_in_characters() {
        let view = table(&[("é", "a")]).encode("xéa");
        assert_eq!(view.tokens, ["x", "éa"]);
        assert_eq!(view.boundaries, [(0, 1), (1, 3)]);
    }
}
