//! Accuracy matrices, tokenization gaps, error shifts and letter-frequency
//! correlation, plus their text/CSV/JSON reports.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::parse::{ScoredRecord, Verdict};
use crate::{Error, FormatType, Gold, Instance, LengthBucket, PromptVariant, Result, TaskKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub task: TaskKind,
    pub alphabet: String,
    pub format: FormatType,
    /// `None` for cells pooled over every length bucket.
    pub bucket: Option<LengthBucket>,
    pub variant: PromptVariant,
    pub n: u64,
    pub n_correct: u64,
    /// Included in `n` and scored as wrong.
    pub n_unparseable: u64,
    pub accuracy: f64,
}

impl AccuracyCell {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        task: TaskKind,
        alphabet: impl Into<String>,
        format: FormatType,
        bucket: Option<LengthBucket>,
        variant: PromptVariant,
        n: u64,
        n_correct: u64,
        n_unparseable: u64,
    ) -> Self {
        let accuracy = if n == 0 { 0.0 } else { 100.0 * n_correct as f64 / n as f64 };
        Self {
            task,
            alphabet: alphabet.into(),
            format,
            bucket,
            variant,
            n,
            n_correct,
            n_unparseable,
            accuracy,
        }
    }

    /// Accuracy ignoring unparseable responses; `None` when nothing parsed.
    pub fn accuracy_parsed_only(&self) -> Option<f64> {
        let parsed = self.n - self.n_unparseable;
        (parsed > 0).then(|| 100.0 * self.n_correct as f64 / parsed as f64)
    }

    fn group(&self) -> GroupKey {
        GroupKey {
            task: self.task.clone(),
            alphabet: self.alphabet.clone(),
            bucket: self.bucket,
            variant: self.variant,
        }
    }
}

/// Cells sharing everything but the format.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct GroupKey {
    task: TaskKind,
    alphabet: String,
    bucket: Option<LengthBucket>,
    variant: PromptVariant,
}

/// Ordering used by every report: task, alphabet, format, bucket, variant.
/// Pooled cells sort after the per-bucket ones.
fn cell_order(c: &AccuracyCell) -> impl Ord + '_ {
    (
        &c.task,
        &c.alphabet,
        c.format,
        c.bucket.is_none(),
        c.bucket,
        c.variant,
    )
}

/// Groups verdicts by (task, alphabet, format, bucket, variant). With
/// `pool_buckets` the bucket is dropped from the key.
pub fn accuracy_matrix(
    scored: &[ScoredRecord],
    instances: &[Instance],
    pool_buckets: bool,
) -> Result<Vec<AccuracyCell>> {
    let by_id: HashMap<&str, &Instance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    type Key = (TaskKind, String, FormatType, Option<LengthBucket>, PromptVariant);
    let mut tally: BTreeMap<Key, (u64, u64, u64)> = BTreeMap::new();
    for rec in scored {
        let inst = by_id.get(rec.instance_id.as_str()).ok_or_else(|| {
            Error::Integrity(format!("verdict for unknown instance {}", rec.instance_id))
        })?;
        let bucket = (!pool_buckets).then_some(inst.length_bucket);
        let key = (inst.task.clone(), inst.alphabet.clone(), inst.format, bucket, rec.variant);
        let t = tally.entry(key).or_default();
        t.0 += 1;
        match rec.verdict {
            Verdict::Correct => t.1 += 1,
            Verdict::Unparseable { .. } => t.2 += 1,
            Verdict::Incorrect { .. } => {}
        }
    }
    let mut cells: Vec<AccuracyCell> = tally
        .into_iter()
        .map(|((task, alphabet, format, bucket, variant), (n, c, u))| {
            AccuracyCell::new(task, alphabet, format, bucket, variant, n, c, u)
        })
        .collect();
    cells.sort_by(|a, b| cell_order(a).cmp(&cell_order(b)));
    Ok(cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum DeltaMode {
    /// Gap between two named formats.
    Pair { atomic: FormatType, merged: FormatType },
    /// Gap between the best and worst format of each group.
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTok {
    pub task: TaskKind,
    pub alphabet: String,
    pub bucket: Option<LengthBucket>,
    pub variant: PromptVariant,
    /// For `Max`, the best format.
    pub atomic_format: FormatType,
    /// For `Max`, the worst format.
    pub merged_format: FormatType,
    pub value: f64,
}

/// Accuracy gaps per (task, alphabet, bucket, variant). Groups lacking a
/// needed format (or with fewer than two formats for `Max`) are skipped with
/// a warning.
pub fn delta_tok(cells: &[AccuracyCell], mode: DeltaMode) -> Vec<DeltaTok> {
    let mut groups: BTreeMap<GroupKey, BTreeMap<FormatType, &AccuracyCell>> = BTreeMap::new();
    for c in cells {
        groups.entry(c.group()).or_default().insert(c.format, c);
    }
    let mut out = Vec::new();
    for (key, by_format) in groups {
        let pair = match mode {
            DeltaMode::Pair { atomic, merged } => {
                match (by_format.get(&atomic), by_format.get(&merged)) {
                    (Some(a), Some(m)) => Some((*a, *m)),
                    _ => None,
                }
            }
            DeltaMode::Max if by_format.len() >= 2 => {
                // ties resolve to the earliest format
                let best = by_format.values().fold(None::<&AccuracyCell>, |acc, c| match acc {
                    Some(b) if b.accuracy >= c.accuracy => Some(b),
                    _ => Some(c),
                });
                let worst = by_format.values().fold(None::<&AccuracyCell>, |acc, c| match acc {
                    Some(w) if w.accuracy <= c.accuracy => Some(w),
                    _ => Some(c),
                });
                best.zip(worst)
            }
            DeltaMode::Max => None,
        };
        let Some((a, m)) = pair else {
            log::warn!(
                "delta_tok: skipping {} {} {} {}: missing format",
                key.task,
                key.alphabet,
                key.bucket.map_or("pooled".into(), |b| b.label()),
                key.variant.as_str()
            );
            continue;
        };
        out.push(DeltaTok {
            task: key.task,
            alphabet: key.alphabet,
            bucket: key.bucket,
            variant: key.variant,
            atomic_format: a.format,
            merged_format: m.format,
            value: rational_gap(a, m),
        });
    }
    out
}

// |100·ca/na − 100·cm/nm| from the integer counts, one rounding at the end.
fn rational_gap(a: &AccuracyCell, m: &AccuracyCell) -> f64 {
    if a.n == 0 || m.n == 0 {
        return (a.accuracy - m.accuracy).abs();
    }
    let num = (a.n_correct as i128 * m.n as i128 - m.n_correct as i128 * a.n as i128).abs();
    100.0 * num as f64 / (a.n as f64 * m.n as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorShift {
    /// predicted − gold → number of failed instances.
    pub histogram: BTreeMap<i64, u64>,
}

impl ErrorShift {
    pub fn total(&self) -> u64 {
        self.histogram.values().sum()
    }

    pub fn mean(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| {
            self.histogram.iter().map(|(&s, &c)| s as f64 * c as f64).sum::<f64>() / total as f64
        })
    }

    /// Share of failures whose shift lies in `shifts`.
    pub fn fraction_in(&self, shifts: &[i64]) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| {
            shifts.iter().filter_map(|s| self.histogram.get(s)).sum::<u64>() as f64 / total as f64
        })
    }
}

/// Histogram of predicted − gold over incorrect, parseable counting records
/// accepted by `filter`.
pub fn error_shift(
    scored: &[ScoredRecord],
    instances: &[Instance],
    filter: impl Fn(&Instance, &ScoredRecord) -> bool,
) -> Result<ErrorShift> {
    let by_id: HashMap<&str, &Instance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut shift = ErrorShift::default();
    for rec in scored {
        let inst = by_id.get(rec.instance_id.as_str()).ok_or_else(|| {
            Error::Integrity(format!("verdict for unknown instance {}", rec.instance_id))
        })?;
        if let (Verdict::Incorrect { predicted: Gold::Count(p) }, Gold::Count(g)) =
            (&rec.verdict, &inst.gold)
        {
            if filter(inst, rec) {
                *shift.histogram.entry(*p as i64 - *g as i64).or_default() += 1;
            }
        }
    }
    Ok(shift)
}

/// Error-shift histograms keyed by format.
pub fn error_shift_by_format(
    scored: &[ScoredRecord],
    instances: &[Instance],
) -> Result<BTreeMap<FormatType, ErrorShift>> {
    let mut out = BTreeMap::new();
    for f in FormatType::ALL {
        let s = error_shift(scored, instances, |i, _| i.format == f)?;
        if s.total() > 0 {
            out.insert(f, s);
        }
    }
    Ok(out)
}

/// Natural-language letter frequencies in percent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrequencyTable {
    pub freq: BTreeMap<String, f64>,
}

impl FrequencyTable {
    pub fn new(freq: BTreeMap<String, f64>) -> Result<Self> {
        if let Some((k, v)) = freq.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!("frequency of {k:?} is {v}")));
        }
        Ok(Self { freq })
    }

    /// English frequencies of z, b, r and e.
    pub fn reference() -> Self {
        let freq = [("z", 0.07), ("b", 1.48), ("r", 6.02), ("e", 12.70)]
            .into_iter()
            .map(|(k, v)| (k.to_owned(), v))
            .collect();
        Self { freq }
    }

    /// Accepts a JSON object or `letter value` lines (`#` starts a comment).
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            let freq = serde_json::from_str(text).map_err(|source| Error::Json {
                context: "frequency table".into(),
                source,
            })?;
            return Self::new(freq);
        }
        let mut freq = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(k), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::invalid(format!("frequency table line {}: {line:?}", n + 1)));
            };
            let v: f64 = v
                .parse()
                .map_err(|e| Error::invalid(format!("frequency table line {}: {e}", n + 1)))?;
            freq.insert(k.to_owned(), v);
        }
        Self::new(freq)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub letters: Vec<String>,
    /// `None` when either side has zero variance.
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

/// Correlates frequency with error rate (100 − accuracy) over the letters
/// present in both maps.
pub fn frequency_correlation(
    per_letter_accuracy: &BTreeMap<String, f64>,
    freq: &FrequencyTable,
) -> Result<Correlation> {
    let letters: Vec<String> = per_letter_accuracy
        .keys()
        .filter(|k| freq.freq.contains_key(*k))
        .cloned()
        .collect();
    if letters.len() < 3 {
        return Err(Error::invalid(format!(
            "frequency correlation needs at least 3 shared letters, got {}",
            letters.len()
        )));
    }
    let xs: Vec<f64> = letters.iter().map(|l| freq.freq[l]).collect();
    let ys: Vec<f64> = letters.iter().map(|l| 100.0 - per_letter_accuracy[l]).collect();
    Ok(Correlation {
        pearson: pearson(&xs, &ys),
        spearman: spearman(&xs, &ys),
        letters,
    })
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson over average ranks. Without ties this equals
/// 1 − 6·Σd²/(n(n²−1)), which is used directly so that perfect rank
/// agreement gives exactly ±1.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let (rx, ry) = (ranks(xs), ranks(ys));
    let distinct = |r: &[f64]| r.iter().all(|v| v.fract() == 0.0);
    if !(distinct(&rx) && distinct(&ry)) {
        return pearson(&rx, &ry);
    }
    let n = xs.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    Some(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}

/// 1-based ranks; ties share their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Counting accuracy per target letter, pooling every cell that matches
/// `format` and `variant`.
pub fn per_target_accuracy(
    cells: &[AccuracyCell],
    format: FormatType,
    variant: PromptVariant,
) -> BTreeMap<String, f64> {
    let mut tally: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for c in cells {
        if let TaskKind::Counting { target } = &c.task {
            if c.format == format && c.variant == variant && c.bucket.is_some() {
                let t = tally.entry(target.clone()).or_default();
                t.0 += c.n;
                t.1 += c.n_correct;
            }
        }
    }
    tally
        .into_iter()
        .filter(|(_, (n, _))| *n > 0)
        .map(|(k, (n, c))| (k, 100.0 * c as f64 / n as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyFinding {
    pub format: FormatType,
    pub variant: PromptVariant,
    #[serde(flatten)]
    pub correlation: Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Backend labels and models that produced the verdicts.
    pub backends: Vec<String>,
    /// True when any verdict came from a simulated backend.
    pub synthetic: bool,
    pub n_verdicts: u64,
    pub n_unparseable: u64,
    pub cells: Vec<AccuracyCell>,
    pub pooled_cells: Vec<AccuracyCell>,
    pub delta_tok_max: Vec<DeltaTok>,
    pub delta_tok_pooled: Vec<DeltaTok>,
    /// Keyed by format letter.
    pub error_shift: BTreeMap<FormatType, ErrorShift>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frequency: Vec<FrequencyFinding>,
}

impl MetricsReport {
    /// Computes every aggregate. `freq` adds correlations for each
    /// (format, variant) with at least three shared counting targets.
    pub fn build(
        scored: &[ScoredRecord],
        instances: &[Instance],
        freq: Option<&FrequencyTable>,
    ) -> Result<Self> {
        if scored.is_empty() {
            return Err(Error::invalid("no verdicts to report"));
        }
        let cells = accuracy_matrix(scored, instances, false)?;
        let pooled_cells = accuracy_matrix(scored, instances, true)?;
        let backends: BTreeSet<String> =
            scored.iter().map(|r| format!("{} ({})", r.backend, r.model)).collect();
        let mut frequency = Vec::new();
        if let Some(freq) = freq {
            let combos: BTreeSet<(FormatType, PromptVariant)> =
                cells.iter().filter(|c| c.task.is_counting()).map(|c| (c.format, c.variant)).collect();
            for (format, variant) in combos {
                let acc = per_target_accuracy(&cells, format, variant);
                if let Ok(correlation) = frequency_correlation(&acc, freq) {
                    frequency.push(FrequencyFinding { format, variant, correlation });
                }
            }
        }
        Ok(Self {
            backends: backends.into_iter().collect(),
            synthetic: scored.iter().any(|r| r.synthetic),
            n_verdicts: scored.len() as u64,
            n_unparseable: scored
                .iter()
                .filter(|r| matches!(r.verdict, Verdict::Unparseable { .. }))
                .count() as u64,
            delta_tok_max: delta_tok(&cells, DeltaMode::Max),
            delta_tok_pooled: delta_tok(&pooled_cells, DeltaMode::Max),
            error_shift: error_shift_by_format(scored, instances)?,
            cells,
            pooled_cells,
            frequency,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" | "table-text" | "txt" => Ok(Self::Table),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::invalid(format!(
                "unknown report format {other:?} (expected table, csv or json)"
            ))),
        }
    }
}

pub fn render_report(report: &MetricsReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).map_err(|source| Error::Json {
                context: "report".into(),
                source,
            })?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => Ok(render_csv(report)),
        ReportFormat::Table => Ok(render_table(report)),
    }
}

fn bucket_label(b: Option<LengthBucket>) -> String {
    b.map_or_else(|| "all".to_owned(), |b| b.label())
}

fn render_csv(report: &MetricsReport) -> String {
    let mut out = String::from(
        "task,alphabet,format,bucket,variant,n,n_correct,n_unparseable,accuracy\n",
    );
    for c in report.cells.iter().chain(&report.pooled_cells) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:.2}",
            c.task,
            c.alphabet,
            c.format.as_str(),
            bucket_label(c.bucket),
            c.variant.as_str(),
            c.n,
            c.n_correct,
            c.n_unparseable,
            c.accuracy
        );
    }
    out
}

fn render_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    if report.synthetic {
        out.push_str("NOTE: synthetic results from a simulated backend; not model measurements.\n");
    }
    let _ = writeln!(out, "backends: {}", report.backends.join(", "));
    let _ = writeln!(
        out,
        "verdicts: {} (unparseable: {}, scored as incorrect)\n",
        report.n_verdicts, report.n_unparseable
    );

    let all_cells: Vec<&AccuracyCell> = report.cells.iter().chain(&report.pooled_cells).collect();
    let all_deltas: Vec<&DeltaTok> =
        report.delta_tok_max.iter().chain(&report.delta_tok_pooled).collect();
    let blocks: BTreeSet<(TaskKind, String)> =
        all_cells.iter().map(|c| (c.task.clone(), c.alphabet.clone())).collect();
    for (task, alphabet) in blocks {
        let in_block = |t: &TaskKind, a: &str| *t == task && a == alphabet;
        let mut columns: Vec<(Option<LengthBucket>, PromptVariant)> = all_cells
            .iter()
            .filter(|c| in_block(&c.task, &c.alphabet))
            .map(|c| (c.bucket, c.variant))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        columns.sort_by_key(|&(b, v)| (b.is_none(), b, v));
        let header: Vec<String> = columns
            .iter()
            .map(|(b, v)| format!("{} {}", bucket_label(*b), v.as_str()))
            .collect();
        let mut rows: Vec<(String, Vec<String>)> = Vec::new();
        for f in FormatType::ALL {
            let vals: Vec<String> = columns
                .iter()
                .map(|&(b, v)| {
                    all_cells
                        .iter()
                        .find(|c| {
                            in_block(&c.task, &c.alphabet)
                                && c.format == f
                                && c.bucket == b
                                && c.variant == v
                        })
                        .map_or("-".into(), |c| format!("{:.2}", c.accuracy))
                })
                .collect();
            if vals.iter().any(|v| v != "-") {
                rows.push((format!("({})", f.as_str()), vals));
            }
        }
        let deltas: Vec<String> = columns
            .iter()
            .map(|&(b, v)| {
                all_deltas
                    .iter()
                    .find(|d| in_block(&d.task, &d.alphabet) && d.bucket == b && d.variant == v)
                    .map_or("-".into(), |d| format!("{:.2}", d.value))
            })
            .collect();
        rows.push(("Δ_tok [max]".into(), deltas));

        let _ = writeln!(out, "{task} / {alphabet}");
        let label_w = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0);
        let widths: Vec<usize> = header
            .iter()
            .enumerate()
            .map(|(i, h)| rows.iter().map(|(_, v)| v[i].len()).chain([h.len()]).max().unwrap_or(0))
            .collect();
        let _ = write!(out, "{:label_w$}", "");
        for (h, w) in header.iter().zip(&widths) {
            let _ = write!(out, "  {h:>w$}");
        }
        out.push('\n');
        for (label, vals) in &rows {
            let pad = label_w - label.chars().count();
            let _ = write!(out, "{label}{}", " ".repeat(pad));
            for (v, w) in vals.iter().zip(&widths) {
                let _ = write!(out, "  {v:>w$}");
            }
            out.push('\n');
        }
        out.push('\n');
    }

    if !report.error_shift.is_empty() {
        out.push_str("error shift (predicted - gold, failed counting instances)\n");
        for (f, shift) in &report.error_shift {
            let bins: Vec<String> =
                shift.histogram.iter().map(|(s, c)| format!("{s:+}:{c}")).collect();
            let _ = writeln!(
                out,
                "({}) n={} mean={:.2}  {}",
                f.as_str(),
                shift.total(),
                shift.mean().unwrap_or(0.0),
                bins.join(" ")
            );
        }
        out.push('\n');
    }
    if !report.frequency.is_empty() {
        out.push_str("letter frequency vs error rate\n");
        let fmt = |v: Option<f64>| v.map_or("n/a".to_owned(), |v| format!("{v:.2}"));
        for f in &report.frequency {
            let _ = writeln!(
                out,
                "({}) {}  letters={}  pearson={}  spearman={}",
                f.format.as_str(),
                f.variant.as_str(),
                f.correlation.letters.join(""),
                fmt(f.correlation.pearson),
                fmt(f.correlation.spearman)
            );
        }
    }
    out
}
