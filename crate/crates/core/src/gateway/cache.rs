use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Completion, CompletionRequest};
use crate::error::{Error, Result};

/// Persistent response store keyed by request digest.
///
/// The disk variant keeps one JSON file per digest under a two-character
/// shard directory and writes via temp-file-then-rename, so readers never
/// see a partial entry.
pub enum ResponseCache {
    Disk(PathBuf),
    Memory(Mutex<HashMap<String, Completion>>),
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    request: CompletionRequest,
    completion: Completion,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ResponseCache {
    pub fn disk(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ResponseCache::Disk(dir))
    }

    pub fn memory() -> Self {
        ResponseCache::Memory(Mutex::new(HashMap::new()))
    }

    fn path_for(dir: &Path, key: &str) -> PathBuf {
        dir.join(&key[..2.min(key.len())]).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<Completion>> {
        match self {
            ResponseCache::Memory(m) => Ok(m.lock().expect("cache poisoned").get(key).cloned()),
            ResponseCache::Disk(dir) => {
                let path = Self::path_for(dir, key);
                let text = match fs::read_to_string(&path) {
                    Ok(t) => t,
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
                    Err(e) => return Err(Error::io(&path, e)),
                };
                let entry: Entry = serde_json::from_str(&text)
                    .map_err(|e| Error::Cache(format!("{}: {e}", path.display())))?;
                if entry.key != key {
                    return Err(Error::Cache(format!("{}: key mismatch", path.display())));
                }
                Ok(Some(entry.completion))
            }
        }
    }

    pub fn put(&self, key: &str, request: &CompletionRequest, completion: &Completion) -> Result<()> {
        match self {
            ResponseCache::Memory(m) => {
                let mut stored = completion.clone();
                stored.from_cache = false;
                m.lock().expect("cache poisoned").insert(key.to_string(), stored);
                Ok(())
            }
            ResponseCache::Disk(dir) => {
                let path = Self::path_for(dir, key);
                let parent = path.parent().expect("sharded path has a parent");
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                let body = serde_json::to_vec_pretty(&Entry {
                    key: key.to_string(),
                    request: request.clone(),
                    completion: completion.clone(),
                })
                .map_err(|e| Error::Cache(e.to_string()))?;
                let tmp = parent.join(format!(
                    ".{key}.{}.{}.tmp",
                    std::process::id(),
                    TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
                ));
                let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
                f.write_all(&body).map_err(|e| Error::io(&tmp, e))?;
                f.sync_all().map_err(|e| Error::io(&tmp, e))?;
                fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
            }
        }
    }
}
