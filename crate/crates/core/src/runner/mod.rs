//! Sends prompt bundles to a backend with caching, retries and bounded
//! parallelism.

mod cache;
mod config;
mod http;
mod sim;

use std::collections::HashMap;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cache::{cache_key, DirCache, MemoryCache, NoCache, ResultStore};
pub use config::{BackendConfig, BackendKind, HttpConfig, RetryPolicy, SimConfig, SimErrorModel};
pub use http::HttpChatBackend;
pub use sim::{simulate_response, SimulatedBackend, DEFAULT_SIM_MERGES};

use crate::{Error, Instance, MergeTable, PromptBundle, PromptVariant, Result};

/// One model call (or cached replay of one).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_id: String,
    pub variant: PromptVariant,
    pub backend: String,
    pub model: String,
    pub request: String,
    pub raw_response: String,
    pub latency_ms: u64,
    pub timestamp_ms: u64,
    pub attempts: u32,
    /// True for simulated backends; reports flag such runs.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub synthetic: bool,
    /// Set when every attempt failed; `raw_response` is then empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendError {
    pub message: String,
    pub retryable: bool,
}

impl BackendError {
    pub fn retryable(message: impl Into<String>) -> Self {
        Self { message: message.into(), retryable: true }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self { message: message.into(), retryable: false }
    }
}

impl std::fmt::Display for BackendError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

pub trait Backend: Send + Sync {
    fn label(&self) -> &str;
    fn model(&self) -> &str;
    fn temperature(&self) -> f64;
    /// Synthetic backends record zero latency and timestamp so that their
    /// output is byte-for-byte reproducible.
    fn synthetic(&self) -> bool {
        false
    }
    fn complete(&self, bundle: &PromptBundle) -> std::result::Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub max_parallel: usize,
    pub retry: RetryPolicy,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { max_parallel: 1, retry: RetryPolicy::default() }
    }
}

impl RunOptions {
    pub fn from_config(cfg: &BackendConfig) -> Self {
        Self { max_parallel: cfg.max_parallel, retry: cfg.retry }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchStats {
    pub cache_hits: usize,
    pub backend_calls: usize,
    pub attempts: usize,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    /// One record per input bundle, in input order.
    pub records: Vec<RunRecord>,
    pub stats: BatchStats,
}

enum Outcome {
    Hit(RunRecord),
    Called(RunRecord),
}

/// Runs every bundle. Individual failures end up in the record's `error`
/// field; the batch itself only fails on a thread-pool error.
pub fn run_batch(
    bundles: &[PromptBundle],
    backend: &dyn Backend,
    opts: &RunOptions,
    cache: &dyn ResultStore,
) -> Result<BatchOutput> {
    let keys: Vec<String> = bundles
        .iter()
        .map(|b| cache_key(backend.label(), backend.model(), backend.temperature(), &b.text))
        .collect();
    let mut first: HashMap<&str, usize> = HashMap::new();
    let mut unique: Vec<usize> = Vec::new();
    for (i, k) in keys.iter().enumerate() {
        first.entry(k.as_str()).or_insert_with(|| {
            unique.push(i);
            i
        });
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.max_parallel.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Outcome> = pool.install(|| {
        unique
            .par_iter()
            .map(|&i| {
                let key = &keys[i];
                if let Some(rec) = cache.get(key) {
                    return Outcome::Hit(rec);
                }
                let rec = call_with_retry(&bundles[i], backend, &opts.retry);
                if !rec.failed() {
                    if let Err(e) = cache.put(key, &rec) {
                        log::warn!("cache write failed for {}: {e}", rec.instance_id);
                    }
                }
                Outcome::Called(rec)
            })
            .collect()
    });

    let mut stats = BatchStats::default();
    let mut by_key: HashMap<&str, RunRecord> = HashMap::new();
    for (&i, outcome) in unique.iter().zip(outcomes) {
        let rec = match outcome {
            Outcome::Hit(rec) => {
                stats.cache_hits += 1;
                rec
            }
            Outcome::Called(rec) => {
                stats.backend_calls += 1;
                stats.attempts += rec.attempts as usize;
                stats.failures += rec.failed() as usize;
                rec
            }
        };
        by_key.insert(keys[i].as_str(), rec);
    }

    let records = bundles
        .iter()
        .zip(&keys)
        .map(|(b, k)| {
            let mut rec = by_key[k.as_str()].clone();
            rec.instance_id.clone_from(&b.instance_id);
            rec.variant = b.variant;
            rec
        })
        .collect();
    Ok(BatchOutput { records, stats })
}

fn call_with_retry(bundle: &PromptBundle, backend: &dyn Backend, retry: &RetryPolicy) -> RunRecord {
    let synthetic = backend.synthetic();
    let timestamp_ms = if synthetic {
        0
    } else {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    };
    let started = Instant::now();
    let mut attempts = 0;
    let result = loop {
        attempts += 1;
        std::thread::sleep(retry.backoff(attempts));
        match backend.complete(bundle) {
            Ok(text) => break Ok(text),
            Err(e) if e.retryable && attempts < retry.max_attempts => {
                log::warn!("{} attempt {attempts} failed: {e}", bundle.instance_id);
            }
            Err(e) => break Err(e),
        }
    };
    let latency_ms = if synthetic { 0 } else { started.elapsed().as_millis() as u64 };
    let (raw_response, error) = match result {
        Ok(text) => (text, None),
        Err(e) => {
            log::error!("{} failed after {attempts} attempt(s): {e}", bundle.instance_id);
            (String::new(), Some(e.message))
        }
    };
    RunRecord {
        instance_id: bundle.instance_id.clone(),
        variant: bundle.variant,
        backend: backend.label().to_owned(),
        model: backend.model().to_owned(),
        request: bundle.text.clone(),
        raw_response,
        latency_ms,
        timestamp_ms,
        attempts,
        synthetic,
        error,
    }
}

/// Builds the backend described by `cfg`. The simulated backend needs the
/// instances the bundles came from: either `instances` or the file named in
/// its config.
pub fn build_backend(cfg: &BackendConfig, instances: &[Instance]) -> Result<Box<dyn Backend>> {
    cfg.validate()?;
    let label = cfg.label();
    match cfg.kind {
        BackendKind::HttpChat => {
            let http = cfg.http.clone().ok_or_else(|| Error::Config("missing [http]".into()))?;
            Ok(Box::new(HttpChatBackend::new(label, http, cfg.temperature)?))
        }
        BackendKind::Simulated => {
            let sim = cfg.simulated.clone().unwrap_or_default();
            let loaded;
            let instances = match (&sim.instances, instances.is_empty()) {
                (Some(path), true) => {
                    loaded = crate::jsonl::read_jsonl::<Instance>(path)?;
                    &loaded[..]
                }
                _ => instances,
            };
            let table = match &sim.merges {
                Some(path) => MergeTable::load(path)?,
                None => default_sim_table(instances)?,
            };
            Ok(Box::new(SimulatedBackend::new(
                label,
                table,
                sim.errors,
                sim.seed,
                instances.iter().cloned(),
            )?))
        }
    }
}

/// Table the simulated backend uses when no merges file is configured.
pub fn default_sim_table(instances: &[Instance]) -> Result<MergeTable> {
    if instances.is_empty() {
        return Ok(MergeTable::empty());
    }
    let corpus: Vec<&str> = instances.iter().map(|i| i.rendered.as_str()).collect();
    crate::tokenizer::train_bpe(&corpus, DEFAULT_SIM_MERGES, true)
}

/// Opens the cache named by `cfg.cache_dir`, or `fallback` when unset.
pub fn open_cache(cfg: &BackendConfig, fallback: Option<&Path>) -> Result<Box<dyn ResultStore>> {
    match cfg.cache_dir.as_deref().or(fallback) {
        Some(dir) => Ok(Box::new(DirCache::open(dir)?)),
        None => Ok(Box::new(NoCache)),
    }
}
