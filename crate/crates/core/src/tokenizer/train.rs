use std::collections::{BTreeSet, HashMap};

use super::{pretokenize, MergeTable};
use crate::{Error, Result};

/// Learns up to `num_merges` merges from `corpus`.
///
/// At each step every adjacent symbol pair is recounted over the corpus (with
/// multiplicity) and the most frequent pair wins; ties go to the
/// lexicographically smallest `(left, right)`. Training stops early once no
/// adjacent pair remains.
pub fn train_bpe<S: AsRef<str>>(
    corpus: &[S],
    num_merges: usize,
    pretokenize_on_whitespace: bool,
) -> Result<MergeTable> {
    if corpus.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }

    let mut interner = Interner::default();
    let mut base = BTreeSet::new();
    let mut segment_counts: HashMap<&str, u64> = HashMap::new();
    for text in corpus {
        for seg in pretokenize(text.as_ref(), pretokenize_on_whitespace) {
            *segment_counts.entry(seg).or_default() += 1;
        }
        base.extend(text.as_ref().chars());
    }

    // Sorted so that training never depends on hash iteration order.
    let mut segments: Vec<(&str, u64)> = segment_counts.into_iter().collect();
    segments.sort_unstable();
    let mut words: Vec<(Vec<u32>, u64)> = segments
        .into_iter()
        .map(|(seg, n)| {
            let syms = seg
                .chars()
                .map(|c| interner.intern(c.to_string()))
                .collect();
            (syms, n)
        })
        .collect();

    let mut merges = Vec::with_capacity(num_merges);
    let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
    for _ in 0..num_merges {
        pair_counts.clear();
        for (syms, n) in &words {
            for w in syms.windows(2) {
                *pair_counts.entry((w[0], w[1])).or_default() += n;
            }
        }

        let best = pair_counts.iter().max_by(|(pa, ca), (pb, cb)| {
            ca.cmp(cb).then_with(|| {
                // smaller (left, right) wins a tie, so it must compare greater here
                let ka = (interner.get(pa.0), interner.get(pa.1));
                let kb = (interner.get(pb.0), interner.get(pb.1));
                kb.cmp(&ka)
            })
        });
        let Some((&(left, right), _)) = best else { break };

        let product = interner.intern(format!("{}{}", interner.get(left), interner.get(right)));
        for (syms, _) in &mut words {
            merge_ids(syms, left, right, product);
        }
        merges.push((interner.get(left).to_owned(), interner.get(right).to_owned()));
    }

    MergeTable::with_base_symbols(merges, base, pretokenize_on_whitespace)
}

fn merge_ids(syms: &mut Vec<u32>, left: u32, right: u32, product: u32) {
    let mut write = 0;
    let mut read = 0;
    while read < syms.len() {
        if read + 1 < syms.len() && syms[read] == left && syms[read + 1] == right {
            syms[write] = product;
            read += 2;
        } else {
            syms[write] = syms[read];
            read += 1;
        }
        write += 1;
    }
    syms.truncate(write);
}

#[derive(Default)]
struct Interner {
    ids: HashMap<String, u32>,
    names: Vec<String>,
}

impl Interner {
    fn intern(&mut self, s: String) -> u32 {
        if let Some(&id) = self.ids.get(&s) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(s.clone());
        self.ids.insert(s, id);
        id
    }

    fn get(&self, id: u32) -> &str {
        &self.names[id as usize]
    }
}
