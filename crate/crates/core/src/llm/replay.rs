use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplayMode {
    /// Always call the live backend and persist its answer.
    Record,
    /// Serve stored answers; fall through to the live backend on a miss.
    Replay,
    /// Serve stored answers; a miss is an error.
    StrictReplay,
}

impl FromStr for ReplayMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "record" => Ok(ReplayMode::Record),
            "replay" => Ok(ReplayMode::Replay),
            "strict" | "strict-replay" => Ok(ReplayMode::StrictReplay),
            other => Err(format!("unknown replay mode `{other}` (record, replay, strict)")),
        }
    }
}

/// Digest-keyed response texts, persisted as `<dir>/<digest>.txt`.
#[derive(Debug)]
pub struct ReplayStore {
    dir: Option<PathBuf>,
    cache: RwLock<HashMap<String, String>>,
}

impl ReplayStore {
    /// Store rooted at `dir`; the directory is created on first write.
    pub fn open(dir: impl Into<PathBuf>) -> Self {
        ReplayStore {
            dir: Some(dir.into()),
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn in_memory() -> Self {
        ReplayStore {
            dir: None,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path_for(&self, digest: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{digest}.txt")))
    }

    pub fn get(&self, digest: &str) -> Result<Option<String>, LlmError> {
        if let Some(text) = self.cache.read().expect("replay cache poisoned").get(digest) {
            return Ok(Some(text.clone()));
        }
        let Some(path) = self.path_for(digest) else {
            return Ok(None);
        };
        match fs::read_to_string(&path) {
            Ok(text) => {
                self.cache
                    .write()
                    .expect("replay cache poisoned")
                    .insert(digest.to_string(), text.clone());
                Ok(Some(text))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(LlmError::Store {
                path: path.display().to_string(),
                message: e.to_string(),
            }),
        }
    }

    pub fn put(&self, digest: &str, text: &str) -> Result<(), LlmError> {
        let mut cache = self.cache.write().expect("replay cache poisoned");
        if let (Some(dir), Some(path)) = (&self.dir, self.path_for(digest)) {
            let store_err = |e: std::io::Error| LlmError::Store {
                path: path.display().to_string(),
                message: e.to_string(),
            };
            fs::create_dir_all(dir).map_err(store_err)?;
            let tmp = dir.join(format!(".{digest}.tmp"));
            fs::write(&tmp, text).map_err(store_err)?;
            fs::rename(&tmp, &path).map_err(store_err)?;
        }
        cache.insert(digest.to_string(), text.to_string());
        Ok(())
    }

    /// Stores the response for `request`.
    pub fn seed(&self, request: &ChatRequest, text: &str) -> Result<(), LlmError> {
        self.put(&request.digest(), text)
    }
}

pub struct ReplayBackend {
    store: ReplayStore,
    mode: ReplayMode,
    live: Option<Box<dyn ChatBackend>>,
}

impl ReplayBackend {
    pub fn new(store: ReplayStore, mode: ReplayMode, live: Option<Box<dyn ChatBackend>>) -> Result<Self, LlmError> {
        if mode == ReplayMode::Record && live.is_none() {
            return Err(LlmError::Config("record mode needs a live backend".into()));
        }
        Ok(ReplayBackend { store, mode, live })
    }

    pub fn strict(store: ReplayStore) -> Self {
        ReplayBackend {
            store,
            mode: ReplayMode::StrictReplay,
            live: None,
        }
    }

    pub fn store(&self) -> &ReplayStore {
        &self.store
    }

    pub fn mode(&self) -> ReplayMode {
        self.mode
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let digest = request.digest();
        if self.mode != ReplayMode::Record {
            if let Some(text) = self.store.get(&digest)? {
                return Ok(ChatResponse::text(text));
            }
            if self.mode == ReplayMode::StrictReplay {
                return Err(LlmError::ReplayMiss { digest });
            }
        }
        let live = self.live.as_ref().ok_or(LlmError::ReplayMiss { digest: digest.clone() })?;
        let response = live.complete(request)?;
        if self.mode == ReplayMode::Record {
            self.store.put(&digest, &response.text)?;
        }
        Ok(response)
    }
}
