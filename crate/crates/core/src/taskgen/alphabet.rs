use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Bundled English word list, most frequent first.
const WORDS_EN: &str = include_str!("../../data/words_en.txt");
const HIGH_FREQ_TOP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WordSource {
    Dictionary,
    HighFrequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "source")]
pub enum Sampler {
    Uniform,
    WordList(WordSource),
}

/// A named set of atomic units and how they are drawn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlphabetSpec {
    pub name: String,
    pub units: Vec<String>,
    pub sampler: Sampler,
}

impl AlphabetSpec {
    pub fn from_units<S: Into<String>>(
        name: impl Into<String>,
        units: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let units: Vec<String> = units
            .into_iter()
            .map(Into::into)
            .filter(|u: &String| seen.insert(u.clone()))
            .collect();
        if units.is_empty() || units.iter().any(String::is_empty) {
            return Err(Error::invalid("alphabet must contain non-empty units"));
        }
        Ok(Self {
            name: name.into(),
            units,
            sampler: Sampler::Uniform,
        })
    }

    fn from_chars(name: &str, chars: impl IntoIterator<Item = char>) -> Self {
        Self {
            name: name.to_owned(),
            units: chars.into_iter().map(String::from).collect(),
            sampler: Sampler::Uniform,
        }
    }

    pub fn letter() -> Self {
        Self::from_chars("letter", ('a'..='z').chain('A'..='Z'))
    }

    pub fn letter_digit() -> Self {
        Self::from_chars("letter+digit", ('a'..='z').chain('A'..='Z').chain('0'..='9'))
    }

    pub fn digit() -> Self {
        Self::from_chars("digit", '0'..='9')
    }

    /// Lowercase random strings.
    pub fn random() -> Self {
        Self::from_chars("random", 'a'..='z')
    }

    pub fn word() -> Self {
        Self::from_word_list("word", WORDS_EN, None, WordSource::Dictionary)
    }

    pub fn high_freq_word() -> Self {
        Self::from_word_list(
            "high-freq-word",
            WORDS_EN,
            Some(HIGH_FREQ_TOP),
            WordSource::HighFrequency,
        )
    }

    /// Reads a word list (one word per line, most frequent first). With
    /// `top` set only the first `top` entries are kept.
    pub fn from_word_file(
        name: &str,
        path: &Path,
        top: Option<usize>,
        source: WordSource,
    ) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec = Self::from_word_list(name, &text, top, source);
        if spec.units.is_empty() {
            return Err(Error::invalid(format!("{}: no words", path.display())));
        }
        Ok(spec)
    }

    fn from_word_list(name: &str, text: &str, top: Option<usize>, source: WordSource) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|w| !w.is_empty() && !w.starts_with('#'))
            .take(top.unwrap_or(usize::MAX))
            .map(str::to_owned)
            .collect();
        Self {
            name: name.to_owned(),
            units: words,
            sampler: Sampler::WordList(source),
        }
    }

    /// Resolves a built-in name (`letter`, `letter+digit`, `digit`, `random`,
    /// `word`, `high-freq-word`), a comma-separated unit list (`a,b`), or a
    /// bare string whose characters are the units (`zbre`).
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        match spec {
            "letter" => return Ok(Self::letter()),
            "letter+digit" | "letter-digit" => return Ok(Self::letter_digit()),
            "digit" => return Ok(Self::digit()),
            "random" => return Ok(Self::random()),
            "word" => return Ok(Self::word()),
            "high-freq-word" | "hf-word" => return Ok(Self::high_freq_word()),
            "" => return Err(Error::invalid("empty alphabet")),
            _ => {}
        }
        if spec.contains(',') {
            let units: Vec<&str> = spec.split(',').map(str::trim).collect();
            Self::from_units(units.concat(), units)
        } else {
            Self::from_units(spec, spec.chars().map(String::from))
        }
    }

    pub fn contains(&self, unit: &str) -> bool {
        self.units.iter().any(|u| u == unit)
    }

    pub fn single_characters(&self) -> bool {
        self.units.iter().all(|u| u.chars().count() == 1)
    }
}
