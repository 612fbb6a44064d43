use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

/// One cached exchange, stored as `<dir>/<key>.json` when backed by disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub response: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

/// Response cache keyed by [`super::cache_key`] digests.
///
/// Reads go through an `RwLock`; writes to disk are serialized.
pub struct ResponseCache {
    entries: RwLock<HashMap<String, CacheEntry>>,
    dir: Option<PathBuf>,
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            entries: RwLock::new(HashMap::new()),
            dir: None,
            write_lock: Mutex::new(()),
        }
    }

    /// Opens (and creates) a directory-backed cache, loading existing entries.
    pub fn open(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut entries = HashMap::new();
        for item in fs::read_dir(&dir)? {
            let path = item?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let raw = fs::read(&path)?;
            match serde_json::from_slice::<CacheEntry>(&raw) {
                Ok(entry) => {
                    entries.insert(entry.key.clone(), entry);
                }
                Err(e) => log::warn!("skipping unreadable cache file {}: {e}", path.display()),
            }
        }
        Ok(Self {
            entries: RwLock::new(entries),
            dir: Some(dir),
            write_lock: Mutex::new(()),
        })
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.entries
            .read()
            .expect("cache lock poisoned")
            .get(key)
            .map(|e| e.response.clone())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn put(&self, key: &str, response: &str) -> std::io::Result<()> {
        let entry = CacheEntry {
            key: key.to_string(),
            response: response.to_string(),
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let _guard = self.write_lock.lock().expect("cache lock poisoned");
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{key}.json"));
            let tmp = dir.join(format!("{key}.json.tmp"));
            fs::write(&tmp, serde_json::to_vec_pretty(&entry)?)?;
            fs::rename(tmp, path)?;
        }
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert(entry.key.clone(), entry);
        Ok(())
    }
}
