use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tokbench::metrics::{render_report, FrequencyTable, MetricsReport, ReportFormat};
use tokbench::pipeline::{run_pipeline, ExperimentConfig};
use tokbench::prompts::TemplateSet;
use tokbench::runner::{self, RunOptions};
use tokbench::taskgen::generate;
use tokbench::tokenizer::{alignment_report, train_bpe};
use tokbench::{
    jsonl, AlphabetSpec, BackendConfig, Error, FormatType, Instance, LengthBucket, MergeTable,
    PromptBundle, PromptVariant, RunRecord, TaskKind,
};

/// Tokenization-format benchmark for symbolic reasoning tasks.
///
/// Exit status: 0 on success, 1 on runtime failure, 2 on configuration or
/// usage errors. Set RUST_LOG=info for progress output.
#[derive(Parser, Debug)]
#[command(name = "tokbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate task instances as JSON Lines.
    Generate(GenerateArgs),
    /// Train or load a BPE table and show how a string tokenizes.
    Tokenize(TokenizeArgs),
    /// Render prompt bundles for instances.
    RenderPrompt(RenderArgs),
    /// Send prompt bundles to a backend.
    Run(RunArgs),
    /// Parse run responses and judge them against the instances.
    Score(ScoreArgs),
    /// Aggregate verdicts into accuracy tables, gaps and error shifts.
    Report(ReportArgs),
    /// Run generate, render-prompt, run, score and report from one config.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// counting:X, sorting or reversing.
    #[arg(long)]
    task: TaskKind,
    /// Built-in name (letter, letter-digit, digit, random, word,
    /// high-freq-word), a comma list of units, or a string of characters.
    #[arg(long)]
    alphabet: String,
    /// Length range LO:HI (closed for counting, half-open otherwise).
    #[arg(long)]
    bucket: String,
    /// Instances per format.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Format a, b, c or d; repeat for several. Default: all four.
    #[arg(long = "format", value_name = "FORMAT")]
    formats: Vec<FormatType>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TokenizeArgs {
    /// Merges file to load.
    #[arg(long, conflicts_with = "train_from")]
    merges: Option<PathBuf>,
    /// Train on a corpus instead: an instances JSONL file (its renderings)
    /// or a plain text file (one string per line).
    #[arg(long, value_name = "FILE")]
    train_from: Option<PathBuf>,
    /// Merges to learn with --train-from.
    #[arg(long, default_value_t = 256)]
    num_merges: usize,
    /// Split on whitespace runs before merging (with --train-from).
    #[arg(long)]
    whitespace: bool,
    /// Write the table to this merges file.
    #[arg(long)]
    save: Option<PathBuf>,
    /// String to tokenize.
    #[arg(long)]
    text: Option<String>,
    /// Atomic units of --text, for the alignment report.
    #[arg(long, num_args = 1.., requires = "text")]
    units: Vec<String>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    instances: PathBuf,
    /// base, cot or scot; repeat for several. Variants that do not apply to
    /// a task are skipped.
    #[arg(long = "variant", value_name = "VARIANT", required = true)]
    variants: Vec<PromptVariant>,
    /// Directory overriding the bundled templates (<task>/<variant>.txt).
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    bundles: PathBuf,
    /// Backend config (TOML).
    #[arg(long)]
    backend: PathBuf,
    /// Instances the bundles were rendered from; needed by the simulated
    /// backend unless its config names them.
    #[arg(long)]
    instances: Option<PathBuf>,
    /// Cache directory; overrides the config.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Overrides max_parallel from the config.
    #[arg(long)]
    max_parallel: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[arg(long)]
    runs: PathBuf,
    #[arg(long)]
    instances: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    verdicts: PathBuf,
    #[arg(long)]
    instances: PathBuf,
    /// table, csv or json.
    #[arg(long, default_value = "table")]
    format: ReportFormat,
    /// Letter frequencies (JSON object or "letter value" lines); adds a
    /// frequency/error-rate correlation section.
    #[arg(long)]
    freq_table: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides output_dir.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides n.
    #[arg(long)]
    n: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidInput(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cmd: Command) -> tokbench::Result<()> {
    match cmd {
        Command::Generate(a) => cmd_generate(a),
        Command::Tokenize(a) => cmd_tokenize(a),
        Command::RenderPrompt(a) => cmd_render(a),
        Command::Run(a) => cmd_run(a),
        Command::Score(a) => cmd_score(a),
        Command::Report(a) => cmd_report(a),
        Command::Pipeline(a) => cmd_pipeline(a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> tokbench::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_owned(),
            source: e,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::Io { path: "<stdout>".into(), source: e })
        }
    }
}

fn emit_jsonl<T: serde::Serialize>(out: Option<&Path>, items: &[T]) -> tokbench::Result<()> {
    match out {
        Some(path) => jsonl::write_jsonl(path, items),
        None => emit(None, &jsonl::to_jsonl_string(items)?),
    }
}

fn cmd_generate(a: GenerateArgs) -> tokbench::Result<()> {
    let alphabet = AlphabetSpec::parse(&a.alphabet)?;
    let bucket = LengthBucket::parse_for(&a.task, &a.bucket)?;
    let formats = if a.formats.is_empty() { FormatType::ALL.to_vec() } else { a.formats };
    let mut all = Vec::new();
    for f in formats {
        all.extend(generate(&a.task, &alphabet, bucket, a.n, f, a.seed)?);
    }
    emit_jsonl(a.out.as_deref(), &all)
}

fn cmd_tokenize(a: TokenizeArgs) -> tokbench::Result<()> {
    let table = match (&a.merges, &a.train_from) {
        (Some(path), _) => MergeTable::load(path)?,
        (None, Some(path)) => {
            let corpus = read_corpus(path)?;
            train_bpe(&corpus, a.num_merges, a.whitespace)?
        }
        (None, None) => return Err(Error::Config("give --merges or --train-from".into())),
    };
    if let Some(path) = &a.save {
        table.save(path)?;
    }
    let Some(text) = &a.text else {
        if a.save.is_none() {
            return Err(Error::Config("nothing to do: give --text or --save".into()));
        }
        return Ok(());
    };
    let view = table.encode(text);
    let mut value = serde_json::json!({
        "tokens": view.tokens,
        "boundaries": view.boundaries,
    });
    if !a.units.is_empty() {
        value["alignment"] = serde_json::to_value(alignment_report(&view, &a.units)?)
            .map_err(|source| Error::Json { context: "alignment report".into(), source })?;
    }
    let mut text = serde_json::to_string_pretty(&value)
        .map_err(|source| Error::Json { context: "tokenize output".into(), source })?;
    text.push('\n');
    emit(None, &text)
}

fn read_corpus(path: &Path) -> tokbench::Result<Vec<String>> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let instances: Vec<Instance> = jsonl::read_jsonl(path)?;
        return Ok(instances.into_iter().map(|i| i.rendered).collect());
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    Ok(text.lines().filter(|l| !l.is_empty()).map(str::to_owned).collect())
}

fn cmd_render(a: RenderArgs) -> tokbench::Result<()> {
    let templates = match &a.templates {
        Some(dir) => TemplateSet::from_dir(dir)?,
        None => TemplateSet::bundled(),
    };
    let instances: Vec<Instance> = jsonl::read_jsonl(&a.instances)?;
    let mut bundles = Vec::new();
    for inst in &instances {
        for &v in &a.variants {
            if v.applies_to(&inst.task) {
                bundles.push(templates.render(inst, v)?);
            }
        }
    }
    if bundles.is_empty() && !instances.is_empty() {
        return Err(Error::Config("no requested variant applies to these instances".into()));
    }
    emit_jsonl(a.out.as_deref(), &bundles)
}

fn cmd_run(a: RunArgs) -> tokbench::Result<()> {
    let mut cfg = BackendConfig::load(&a.backend)?;
    if let Some(dir) = a.cache {
        cfg.cache_dir = Some(dir);
    }
    if let Some(p) = a.max_parallel {
        cfg.max_parallel = p;
    }
    cfg.validate()?;
    let instances: Vec<Instance> = match &a.instances {
        Some(path) => jsonl::read_jsonl(path)?,
        None => Vec::new(),
    };
    let bundles: Vec<PromptBundle> = jsonl::read_jsonl(&a.bundles)?;
    let backend = runner::build_backend(&cfg, &instances)?;
    let cache = runner::open_cache(&cfg, None)?;
    let output = runner::run_batch(&bundles, backend.as_ref(), &RunOptions::from_config(&cfg), cache.as_ref())?;
    jsonl::write_jsonl(&a.out, &output.records)?;
    eprintln!(
        "{} records: {} cache hits, {} backend calls, {} attempts, {} failures",
        output.records.len(),
        output.stats.cache_hits,
        output.stats.backend_calls,
        output.stats.attempts,
        output.stats.failures
    );
    if output.stats.failures > 0 {
        return Err(Error::Integrity(format!(
            "{} request(s) failed; their records carry the error and are not cached",
            output.stats.failures
        )));
    }
    Ok(())
}

fn cmd_score(a: ScoreArgs) -> tokbench::Result<()> {
    let runs: Vec<RunRecord> = jsonl::read_jsonl(&a.runs)?;
    let instances: Vec<Instance> = jsonl::read_jsonl(&a.instances)?;
    let scored = tokbench::parse::score(&runs, &instances)?;
    emit_jsonl(a.out.as_deref(), &scored)
}

fn cmd_report(a: ReportArgs) -> tokbench::Result<()> {
    let scored: Vec<tokbench::parse::ScoredRecord> = jsonl::read_jsonl(&a.verdicts)?;
    let instances: Vec<Instance> = jsonl::read_jsonl(&a.instances)?;
    let freq = a.freq_table.as_deref().map(FrequencyTable::load).transpose()?;
    let report = MetricsReport::build(&scored, &instances, freq.as_ref())?;
    emit(a.out.as_deref(), &render_report(&report, a.format)?)
}

fn cmd_pipeline(a: PipelineArgs) -> tokbench::Result<()> {
    let mut cfg = match ExperimentConfig::load(&a.config) {
        Err(Error::Io { path, source }) => {
            return Err(Error::Config(format!("{}: {source}", path.display())))
        }
        other => other?,
    };
    if let Some(dir) = a.output_dir {
        cfg.output_dir = dir;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    let resolved = cfg.resolve()?;
    let summary = run_pipeline(&resolved)?;
    eprintln!(
        "{} instances, {} prompts: {} cache hits, {} backend calls, {} failures -> {}",
        summary.instances,
        summary.bundles,
        summary.stats.cache_hits,
        summary.stats.backend_calls,
        summary.failures,
        summary.output_dir.display()
    );
    if summary.failures > 0 {
        return Err(Error::Integrity(format!(
            "{} request(s) failed; rerun to retry them",
            summary.failures
        )));
    }
    Ok(())
}
