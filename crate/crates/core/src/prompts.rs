//! Prompt templates for each (task, variant) pair.
//!
//! The templates live as plain files under `templates/<task>/<variant>.txt`
//! and are compiled into the crate; [`TemplateSet::from_dir`] loads an
//! alternative directory with the same layout. Placeholders are `{substring}`
//! (counting target), `{sample}` (counting string) and `{{string}}`
//! (sorting/reversing string); substitution is a single literal pass.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::taskgen::{Instance, TaskKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptVariant {
    /// answer only, counting only
    Base,
    /// unsupervised chain of thought
    Cot,
    /// supervised chain of thought
    Scot,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 3] = [PromptVariant::Base, PromptVariant::Cot, PromptVariant::Scot];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptVariant::Base => "base",
            PromptVariant::Cot => "cot",
            PromptVariant::Scot => "scot",
        }
    }

    pub fn applies_to(self, task: &TaskKind) -> bool {
        self != PromptVariant::Base || task.is_counting()
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "base" | "no-cot" => Ok(PromptVariant::Base),
            "cot" => Ok(PromptVariant::Cot),
            "scot" => Ok(PromptVariant::Scot),
            other => Err(Error::invalid(format!(
                "unknown prompt variant {other:?} (expected base, cot or scot)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerShape {
    /// `Result: N`
    IntegerAfterResult,
    /// `{'Result': '...'}`
    ResultDict,
}

impl AnswerShape {
    pub fn for_task(task: &TaskKind) -> Self {
        if task.is_counting() {
            AnswerShape::IntegerAfterResult
        } else {
            AnswerShape::ResultDict
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub instance_id: String,
    pub variant: PromptVariant,
    pub text: String,
    pub expected_answer_shape: AnswerShape,
}

const SUBSTRING: &str = "{substring}";
const SAMPLE: &str = "{sample}";
const STRING: &str = "{{string}}";

/// Templates keyed by (task family, variant).
#[derive(Debug, Clone)]
pub struct TemplateSet {
    entries: Vec<(&'static str, PromptVariant, String)>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::bundled()
    }
}

impl TemplateSet {
    pub fn bundled() -> Self {
        let raw: [(&'static str, PromptVariant, &str); 7] = [
            ("counting", PromptVariant::Base, include_str!("../templates/counting/base.txt")),
            ("counting", PromptVariant::Cot, include_str!("../templates/counting/cot.txt")),
            ("counting", PromptVariant::Scot, include_str!("../templates/counting/scot.txt")),
            ("sorting", PromptVariant::Cot, include_str!("../templates/sorting/cot.txt")),
            ("sorting", PromptVariant::Scot, include_str!("../templates/sorting/scot.txt")),
            ("reversing", PromptVariant::Cot, include_str!("../templates/reversing/cot.txt")),
            ("reversing", PromptVariant::Scot, include_str!("../templates/reversing/scot.txt")),
        ];
        Self {
            entries: raw
                .into_iter()
                .map(|(fam, v, text)| (fam, v, strip_final_newline(text).to_owned()))
                .collect(),
        }
    }

    /// Loads `<dir>/<task>/<variant>.txt` for every applicable pair. Missing
    /// files fall back to the bundled template.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut set = Self::bundled();
        for (fam, variant, text) in &mut set.entries {
            let path = dir.join(fam).join(format!("{variant}.txt"));
            if path.exists() {
                let loaded = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                *text = strip_final_newline(&loaded).to_owned();
            }
        }
        for (fam, _, text) in &set.entries {
            check_slots(fam, text)?;
        }
        Ok(set)
    }

    pub fn template(&self, task: &TaskKind, variant: PromptVariant) -> Option<&str> {
        self.entries
            .iter()
            .find(|(fam, v, _)| *fam == task.family() && *v == variant)
            .map(|(_, _, t)| t.as_str())
    }

    pub fn render(&self, instance: &Instance, variant: PromptVariant) -> Result<PromptBundle> {
        if !variant.applies_to(&instance.task) {
            return Err(Error::invalid(format!(
                "prompt variant {variant} does not apply to {} tasks",
                instance.task.family()
            )));
        }
        let template = self.template(&instance.task, variant).ok_or_else(|| {
            Error::invalid(format!("no template for {}/{variant}", instance.task.family()))
        })?;
        let (text, _) = fill(template, &slot_values(instance)?);
        Ok(PromptBundle {
            instance_id: instance.id.clone(),
            variant,
            text,
            expected_answer_shape: AnswerShape::for_task(&instance.task),
        })
    }
}

/// Renders `instance` with the bundled templates.
pub fn render_prompt(instance: &Instance, variant: PromptVariant) -> Result<PromptBundle> {
    TemplateSet::bundled().render(instance, variant)
}

fn slot_values(instance: &Instance) -> Result<Vec<(&'static str, &str)>> {
    Ok(match &instance.task {
        TaskKind::Counting { target } => {
            if target.chars().count() != 1 {
                return Err(Error::invalid(format!(
                    "counting target {target:?} must be a single unit"
                )));
            }
            vec![(SUBSTRING, target.as_str()), (SAMPLE, instance.rendered.as_str())]
        }
        _ => vec![(STRING, instance.rendered.as_str())],
    })
}

/// Replaces placeholders in one left-to-right pass, so substituted values are
/// never rescanned. Returns the text and the byte range of every substitution.
pub(crate) fn fill(template: &str, values: &[(&str, &str)]) -> (String, Vec<std::ops::Range<usize>>) {
    let mut out = String::with_capacity(template.len() + 64);
    let mut spans = Vec::new();
    let mut rest = template;
    'outer: while !rest.is_empty() {
        for (placeholder, value) in values {
            if let Some(after) = rest.strip_prefix(placeholder) {
                let start = out.len();
                out.push_str(value);
                spans.push(start..out.len());
                rest = after;
                continue 'outer;
            }
        }
        let ch = rest.chars().next().unwrap_or_default();
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    (out, spans)
}

/// Template text with every placeholder removed.
pub fn skeleton(template: &str) -> String {
    fill(template, &[(SUBSTRING, ""), (SAMPLE, ""), (STRING, "")]).0
}

fn check_slots(family: &str, text: &str) -> Result<()> {
    let count = |p: &str| text.matches(p).count();
    let ok = if family == "counting" {
        count(SAMPLE) == 1 && count(SUBSTRING) >= 1 && count(STRING) == 0
    } else {
        count(STRING) == 1 && count(SAMPLE) == 0
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{family} template must contain exactly one sample slot"
        )))
    }
}

fn strip_final_newline(s: &str) -> &str {
    s.strip_suffix('\n').map(|s| s.strip_suffix('\r').unwrap_or(s)).unwrap_or(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{generate, AlphabetSpec, FormatType};

    fn instance(task: TaskKind, alphabet: &str, format: FormatType) -> Instance {
        let alpha = AlphabetSpec::parse(alphabet).unwrap();
        let bucket = task.bucket(5, 8);
        generate(&task, &alpha, bucket, 1, format, 11).unwrap().remove(0)
    }

    fn count_a() -> TaskKind {
        TaskKind::Counting { target: "a".into() }
    }

    #[test]
    fn bundled_templates_have_one_sample_slot() {
        for (fam, _, text) in &TemplateSet::bundled().entries {
            check_slots(fam, text).unwrap();
        }
    }

    #[test]
    fn counting_scot_instruction() {
        let b = render_prompt(&instance(count_a(), "ab", FormatType::A), PromptVariant::Scot).unwrap();
        assert!(b
            .text
            .contains("Use a counter to keep track of how many times the substring appears."));
        assert!(b.text.contains("the substring 'a' in the given string"));
        assert_eq!(b.expected_answer_shape, AnswerShape::IntegerAfterResult);
    }

    #[test]
    fn counting_cot_says_think_step_by_step() {
        let b = render_prompt(&instance(count_a(), "ab", FormatType::D), PromptVariant::Cot).unwrap();
        assert!(b.text.contains("Think step by step."));
        assert!(b.text.contains("Directly output 'Result: '"));
    }

    #[test]
    fn reversing_scot_instruction() {
        let b = render_prompt(
            &instance(TaskKind::Reversing, "random", FormatType::C),
            PromptVariant::Scot,
        )
        .unwrap();
        assert!(b.text.contains("Initialize an empty string called 'reversed'"));
        assert!(b.text.contains("{'Result': 'olleh'}"));
        assert_eq!(b.expected_answer_shape, AnswerShape::ResultDict);
    }

    #[test]
    fn base_only_for_counting() {
        let inst = instance(TaskKind::Sorting, "digit", FormatType::A);
        assert!(matches!(
            render_prompt(&inst, PromptVariant::Base),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn substitution_is_not_rescanned() {
        let (out, spans) = fill("x {sample} y", &[(SAMPLE, "{sample}")]);
        assert_eq!(out, "x {sample} y");
        assert_eq!(spans, vec![2..10]);
    }

    #[test]
    fn removing_substitutions_gives_skeleton() {
        let set = TemplateSet::bundled();
        for task in [count_a(), TaskKind::Sorting, TaskKind::Reversing] {
            for variant in PromptVariant::ALL.into_iter().filter(|v| v.applies_to(&task)) {
                let inst = instance(task.clone(), "ab", FormatType::D);
                let template = set.template(&task, variant).unwrap();
                let (text, spans) = fill(template, &slot_values(&inst).unwrap());
                assert_eq!(text, set.render(&inst, variant).unwrap().text);
                let mut stripped = String::new();
                let mut last = 0;
                for span in spans {
                    stripped.push_str(&text[last..span.start]);
                    last = span.end;
                }
                stripped.push_str(&text[last..]);
                assert_eq!(stripped, skeleton(template));
            }
        }
    }

    #[test]
    fn from_dir_overrides_and_validates() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("sorting")).unwrap();
        std::fs::write(dir.path().join("sorting/cot.txt"), "S: {{string}}\n").unwrap();
        let set = TemplateSet::from_dir(dir.path()).unwrap();
        let inst = instance(TaskKind::Sorting, "digit", FormatType::A);
        assert_eq!(
            set.render(&inst, PromptVariant::Cot).unwrap().text,
            format!("S: {}", inst.rendered)
        );

        std::fs::write(dir.path().join("sorting/cot.txt"), "no slot\n").unwrap();
        assert!(TemplateSet::from_dir(dir.path()).is_err());
    }
}
