//! Config-driven composition of generate, render, run, score and report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::metrics::{render_report, FrequencyTable, MetricsReport, ReportFormat};
use crate::parse::score;
use crate::prompts::TemplateSet;
use crate::runner::{self, BackendKind, BatchStats, RunOptions};
use crate::taskgen::generate;
use crate::tokenizer::write_merges;
use crate::{
    jsonl, AlphabetSpec, BackendConfig, Error, FormatType, Instance, LengthBucket, PromptBundle,
    PromptVariant, Result, TaskKind,
};

/// Experiment grid, read from TOML.
///
/// ```toml
/// seed = 0
/// n = 50
/// output_dir = "out"
/// formats = ["a", "b", "c", "d"]
/// variants = ["cot", "scot"]
/// backend_config = "backend.toml"   # or an inline [backend] table
///
/// [[experiments]]
/// tasks = ["counting:a", "counting:b"]
/// alphabet = "ab"
/// buckets = ["10:20", "20:30", "30:40"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Instances per (task, alphabet, bucket, format).
    pub n: usize,
    pub output_dir: PathBuf,
    #[serde(default = "all_formats")]
    pub formats: Vec<String>,
    #[serde(default = "default_variants")]
    pub variants: Vec<String>,
    pub experiments: Vec<ExperimentSpec>,
    #[serde(default)]
    pub backend: Option<BackendConfig>,
    #[serde(default)]
    pub backend_config: Option<PathBuf>,
    /// Directory of template overrides.
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
    /// Letter frequencies for the correlation section of the report.
    #[serde(default)]
    pub freq_table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub tasks: Vec<String>,
    pub alphabet: String,
    pub buckets: Vec<String>,
}

fn all_formats() -> Vec<String> {
    FormatType::ALL.iter().map(|f| f.as_str().to_owned()).collect()
}

fn default_variants() -> Vec<String> {
    vec!["cot".into()]
}

/// An experiment config with every name resolved.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub seed: u64,
    pub n: usize,
    pub output_dir: PathBuf,
    pub formats: Vec<FormatType>,
    pub variants: Vec<PromptVariant>,
    pub grid: Vec<ResolvedExperiment>,
    pub backend: BackendConfig,
    pub templates: TemplateSet,
    pub freq: Option<FrequencyTable>,
}

#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub tasks: Vec<TaskKind>,
    pub alphabet: AlphabetSpec,
    pub buckets: Vec<LengthBucket>,
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("experiment config: {e}")))
    }

    /// Reads a config file; relative paths in it are taken from its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.output_dir);
        cfg.backend_config.as_mut().map(fix);
        cfg.templates_dir.as_mut().map(fix);
        cfg.freq_table.as_mut().map(fix);
        if let Some(b) = cfg.backend.as_mut() {
            b.resolve_paths(base);
        }
        Ok(cfg)
    }

    /// Checks everything up front; every failure is a config error.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.experiments.is_empty() {
            return Err(Error::Config("no [[experiments]] given".into()));
        }
        let formats = parse_list::<FormatType>(&self.formats, "formats")?;
        let variants = parse_list::<PromptVariant>(&self.variants, "variants")?;
        let mut grid = Vec::new();
        for exp in &self.experiments {
            let tasks = parse_list::<TaskKind>(&exp.tasks, "tasks")?;
            let alphabet = AlphabetSpec::parse(&exp.alphabet).map_err(config_err)?;
            let mut buckets = Vec::new();
            for task in &tasks {
                for b in &exp.buckets {
                    let bucket = LengthBucket::parse_for(task, b).map_err(config_err)?;
                    if !buckets.contains(&bucket) {
                        buckets.push(bucket);
                    }
                }
                if !variants.iter().any(|v| v.applies_to(task)) {
                    return Err(Error::Config(format!("no configured variant applies to {task}")));
                }
            }
            if exp.buckets.is_empty() {
                return Err(Error::Config(format!("experiment {} has no buckets", exp.alphabet)));
            }
            grid.push(ResolvedExperiment { tasks, alphabet, buckets });
        }
        let backend = match (&self.backend, &self.backend_config) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either [backend] or backend_config, not both".into()))
            }
            (Some(b), None) => {
                b.validate()?;
                b.clone()
            }
            (None, Some(path)) => BackendConfig::load(path).map_err(config_err)?,
            (None, None) => return Err(Error::Config("no backend configured".into())),
        };
        let templates = match &self.templates_dir {
            Some(dir) => TemplateSet::from_dir(dir).map_err(config_err)?,
            None => TemplateSet::bundled(),
        };
        let freq = self
            .freq_table
            .as_deref()
            .map(FrequencyTable::load)
            .transpose()
            .map_err(config_err)?;
        let resolved = ResolvedConfig {
            seed: self.seed,
            n: self.n,
            output_dir: self.output_dir.clone(),
            formats,
            variants,
            grid,
            backend,
            templates,
            freq,
        };
        // generation errors (unknown target, multi-character sort units) are
        // config errors too; catch them before anything is written
        for exp in &resolved.grid {
            for task in &exp.tasks {
                generate(task, &exp.alphabet, exp.buckets[0], 1, resolved.formats[0], 0)
                    .map_err(config_err)?;
            }
        }
        Ok(resolved)
    }
}

fn parse_list<T: std::str::FromStr<Err = Error>>(items: &[String], what: &str) -> Result<Vec<T>> {
    if items.is_empty() {
        return Err(Error::Config(format!("{what} must not be empty")));
    }
    items
        .iter()
        .map(|s| s.parse::<T>().map_err(|e| Error::Config(format!("{what}: {e}"))))
        .collect()
}

/// Seed for one (alphabet, bucket) cell. Format and target do not enter, so
/// every format renders the same unit lists.
pub fn cell_seed(seed: u64, alphabet: &str, bucket: &LengthBucket) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(alphabet.as_bytes());
    h.update([0x1f]);
    h.update(bucket.to_string().as_bytes());
    let d = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    u64::from_le_bytes(b)
}

pub fn generate_grid(cfg: &ResolvedConfig) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for exp in &cfg.grid {
        for task in &exp.tasks {
            for &bucket in &exp.buckets {
                let bucket = task.bucket(bucket.lo, bucket.hi);
                let seed = cell_seed(cfg.seed, &exp.alphabet.name, &bucket);
                for &format in &cfg.formats {
                    out.extend(generate(task, &exp.alphabet, bucket, cfg.n, format, seed)?);
                }
            }
        }
    }
    Ok(out)
}

pub fn render_grid(cfg: &ResolvedConfig, instances: &[Instance]) -> Result<Vec<PromptBundle>> {
    let mut out = Vec::new();
    for inst in instances {
        for &v in &cfg.variants {
            if v.applies_to(&inst.task) {
                out.push(cfg.templates.render(inst, v)?);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineSummary {
    pub output_dir: PathBuf,
    pub instances: usize,
    pub bundles: usize,
    pub stats: BatchStats,
    pub failures: usize,
}

pub const ARTIFACTS: &[&str] = &[
    "instances.jsonl",
    "bundles.jsonl",
    "merges.txt",
    "runs.jsonl",
    "verdicts.jsonl",
    "error_shift.json",
    "report.txt",
    "report.csv",
    "report.json",
];

/// Runs every stage, writing each artifact before starting the next stage.
/// Backend results are cached under `output_dir/cache` unless the backend
/// config names its own cache directory.
pub fn run_pipeline(cfg: &ResolvedConfig) -> Result<PipelineSummary> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let instances = generate_grid(cfg)?;
    jsonl::write_jsonl(&dir.join("instances.jsonl"), &instances)?;
    log::info!("generated {} instances", instances.len());

    let bundles = render_grid(cfg, &instances)?;
    jsonl::write_jsonl(&dir.join("bundles.jsonl"), &bundles)?;

    let merges_path = dir.join("merges.txt");
    let backend: Box<dyn runner::Backend> = match cfg.backend.kind {
        BackendKind::Simulated => {
            let sim = cfg.backend.simulated.clone().unwrap_or_default();
            let table = match &sim.merges {
                Some(p) => crate::MergeTable::load(p)?,
                None => runner::default_sim_table(&instances)?,
            };
            write_text(&merges_path, &write_merges(&table))?;
            Box::new(runner::SimulatedBackend::new(
                cfg.backend.label(),
                table,
                sim.errors,
                sim.seed,
                instances.iter().cloned(),
            )?)
        }
        BackendKind::HttpChat => {
            // no tokenizer behind a remote model; record the analysis table
            write_text(&merges_path, &write_merges(&runner::default_sim_table(&instances)?))?;
            runner::build_backend(&cfg.backend, &instances)?
        }
    };

    let cache = runner::open_cache(&cfg.backend, Some(&dir.join("cache")))?;
    let output = runner::run_batch(
        &bundles,
        backend.as_ref(),
        &RunOptions::from_config(&cfg.backend),
        cache.as_ref(),
    )?;
    jsonl::write_jsonl(&dir.join("runs.jsonl"), &output.records)?;
    log::info!(
        "runs: {} cache hits, {} backend calls, {} failures",
        output.stats.cache_hits,
        output.stats.backend_calls,
        output.stats.failures
    );

    let scored = score(&output.records, &instances)?;
    jsonl::write_jsonl(&dir.join("verdicts.jsonl"), &scored)?;

    let report = MetricsReport::build(&scored, &instances, cfg.freq.as_ref())?;
    let shifts = serde_json::to_string_pretty(&report.error_shift).map_err(|source| {
        Error::Json { context: "error shift".into(), source }
    })?;
    write_text(&dir.join("error_shift.json"), &(shifts + "\n"))?;
    for (name, format) in [
        ("report.txt", ReportFormat::Table),
        ("report.csv", ReportFormat::Csv),
        ("report.json", ReportFormat::Json),
    ] {
        write_text(&dir.join(name), &render_report(&report, format)?)?;
    }

    Ok(PipelineSummary {
        output_dir: dir.clone(),
        instances: instances.len(),
        bundles: bundles.len(),
        failures: output.stats.failures,
        stats: output.stats,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
