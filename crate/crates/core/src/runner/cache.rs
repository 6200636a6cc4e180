//! Content-addressed result store: one JSON file per key.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::RunRecord;
use crate::{Error, Result};

pub trait ResultStore: Send + Sync {
    fn get(&self, key: &str) -> Option<RunRecord>;
    fn put(&self, key: &str, record: &RunRecord) -> Result<()>;
}

/// `sha256(label, model, temperature, prompt)` as hex.
pub fn cache_key(label: &str, model: &str, temperature: f64, prompt: &str) -> String {
    let mut h = Sha256::new();
    for part in [label, model, &format!("{temperature:?}"), prompt] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone)]
pub struct DirCache {
    dir: PathBuf,
}

impl DirCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }
}

impl ResultStore for DirCache {
    fn get(&self, key: &str) -> Option<RunRecord> {
        let text = std::fs::read_to_string(self.path(key)).ok()?;
        match serde_json::from_str(&text) {
            Ok(rec) => Some(rec),
            Err(e) => {
                log::warn!("ignoring corrupt cache entry {key}: {e}");
                None
            }
        }
    }

    // Write-then-rename: concurrent writers of one key leave exactly one
    // complete file (last write wins).
    fn put(&self, key: &str, record: &RunRecord) -> Result<()> {
        let path = self.path(key);
        let tmp = self.dir.join(format!(
            ".{key}.{}.{:?}.tmp",
            std::process::id(),
            std::thread::current().id()
        ));
        let json = serde_json::to_vec_pretty(record).map_err(|source| Error::Json {
            context: format!("cache entry {key}"),
            source,
        })?;
        std::fs::write(&tmp, json).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

#[derive(Debug, Default)]
pub struct MemoryCache {
    entries: Mutex<HashMap<String, RunRecord>>,
}

impl MemoryCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ResultStore for MemoryCache {
    fn get(&self, key: &str) -> Option<RunRecord> {
        self.entries.lock().ok()?.get(key).cloned()
    }

    fn put(&self, key: &str, record: &RunRecord) -> Result<()> {
        if let Ok(mut map) = self.entries.lock() {
            map.insert(key.to_owned(), record.clone());
        }
        Ok(())
    }
}

/// Stores nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoCache;

impl ResultStore for NoCache {
    fn get(&self, _key: &str) -> Option<RunRecord> {
        None
    }

    fn put(&self, _key: &str, _record: &RunRecord) -> Result<()> {
        Ok(())
    }
}
