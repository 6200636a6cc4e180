use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{gold_for, render, AlphabetSpec, FormatType, Instance, LengthBucket, TaskKind};
use crate::{Error, Result};

/// Draws `n` instances: each length uniform over `bucket`, each unit i.i.d.
/// uniform over the alphabet.
///
/// The format only affects rendering, so one seed produces the same unit
/// lists under every format.
pub fn generate(
    task: &TaskKind,
    alphabet: &AlphabetSpec,
    bucket: LengthBucket,
    n: usize,
    format: FormatType,
    seed: u64,
) -> Result<Vec<Instance>> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if bucket.is_empty() || bucket.lo == 0 {
        return Err(Error::invalid(format!("length bucket {bucket} is empty")));
    }
    if alphabet.units.is_empty() {
        return Err(Error::invalid(format!("alphabet {} is empty", alphabet.name)));
    }
    match task {
        TaskKind::Counting { target } => {
            if target.chars().count() != 1 {
                return Err(Error::invalid(format!(
                    "counting target {target:?} must be a single unit character"
                )));
            }
            if !alphabet.contains(target) {
                return Err(Error::invalid(format!(
                    "counting target {target:?} is not in alphabet {}",
                    alphabet.name
                )));
            }
        }
        TaskKind::Sorting if !alphabet.single_characters() => {
            return Err(Error::invalid(format!(
                "sorting needs single-character units; alphabet {} has longer units",
                alphabet.name
            )));
        }
        _ => {}
    }
    let max = bucket.max_len().unwrap_or(bucket.lo);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for index in 0..n {
        let len = rng.random_range(bucket.lo..=max);
        let units: Vec<String> = (0..len)
            .map(|_| alphabet.units[rng.random_range(0..alphabet.units.len())].clone())
            .collect();
        let rendered = render(&units, format)?;
        let gold = gold_for(task, &units)?;
        out.push(Instance {
            id: instance_id(task, &alphabet.name, format, bucket, seed, index),
            task: task.clone(),
            alphabet: alphabet.name.clone(),
            units,
            format,
            rendered,
            gold,
            length_bucket: bucket,
            seed,
        });
    }
    Ok(out)
}

/// Stable id: `<family>-<16 hex digits>` over every generation coordinate.
pub fn instance_id(
    task: &TaskKind,
    alphabet: &str,
    format: FormatType,
    bucket: LengthBucket,
    seed: u64,
    index: usize,
) -> String {
    let mut h = Sha256::new();
    h.update(format!("{task}\u{1f}{alphabet}\u{1f}{format}\u{1f}{}\u{1f}{seed}\u{1f}{index}", bucket.label()));
    let digest = h.finalize();
    format!("{}-{}", task.family(), hex::encode(&digest[..8]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::oracle_count;

    fn count_a() -> TaskKind {
        TaskKind::Counting { target: "a".into() }
    }

    #[test]
    fn counting_instances() {
        let ab = AlphabetSpec::parse("ab").unwrap();
        let insts = generate(&count_a(), &ab, LengthBucket::closed(10, 20), 3, FormatType::A, 7).unwrap();
        assert_eq!(insts.len(), 3);
        for inst in &insts {
            assert!((10..=20).contains(&inst.units.len()));
            assert_eq!(inst.gold, crate::Gold::Count(oracle_count(&inst.units, "a")));
            assert_eq!(inst.rendered, inst.units.concat());
        }
    }

    #[test]
    fn same_units_across_formats() {
        let ab = AlphabetSpec::parse("ab").unwrap();
        let b = LengthBucket::closed(10, 20);
        let a = generate(&count_a(), &ab, b, 5, FormatType::A, 1).unwrap();
        let d = generate(&count_a(), &ab, b, 5, FormatType::D, 1).unwrap();
        for (x, y) in a.iter().zip(&d) {
            assert_eq!(x.units, y.units);
            assert_eq!(x.gold, y.gold);
            assert_ne!(x.id, y.id);
        }
    }

    #[test]
    fn deterministic() {
        let ab = AlphabetSpec::letter_digit();
        let b = LengthBucket::half_open(5, 10);
        let x = generate(&TaskKind::Sorting, &ab, b, 20, FormatType::C, 99).unwrap();
        let y = generate(&TaskKind::Sorting, &ab, b, 20, FormatType::C, 99).unwrap();
        assert_eq!(x, y);
        let z = generate(&TaskKind::Sorting, &ab, b, 20, FormatType::C, 100).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn rejects_bad_inputs() {
        let ab = AlphabetSpec::parse("ab").unwrap();
        let b = LengthBucket::closed(10, 20);
        let z = TaskKind::Counting { target: "z".into() };
        assert!(generate(&z, &ab, b, 1, FormatType::A, 0).is_err());
        assert!(generate(&count_a(), &ab, b, 0, FormatType::A, 0).is_err());
        assert!(generate(&count_a(), &ab, LengthBucket::half_open(5, 5), 1, FormatType::A, 0).is_err());
        assert!(generate(&TaskKind::Sorting, &AlphabetSpec::word(), LengthBucket::half_open(5, 10), 1, FormatType::A, 0).is_err());
    }

    #[test]
    fn lengths_cover_bucket() {
        let ab = AlphabetSpec::parse("ab").unwrap();
        let insts = generate(&TaskKind::Reversing, &ab, LengthBucket::half_open(5, 10), 400, FormatType::B, 3).unwrap();
        let mut seen = [false; 10];
        for i in &insts {
            assert!((5..10).contains(&i.units.len()));
            seen[i.units.len()] = true;
        }
        assert!(seen[5..10].iter().all(|s| *s));
    }
}
