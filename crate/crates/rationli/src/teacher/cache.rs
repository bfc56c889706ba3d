//! Append-only JSONL response cache keyed by prompt content hash.
//!
//! Every completed teacher call is appended and flushed immediately, so a
//! crashed run loses at most the in-flight responses. Re-recording a key
//! appends a fresh line; on load the last entry for a key wins. A truncated
//! final line (the signature of a crash mid-append) is tolerated; malformed
//! lines anywhere else reject the file.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: malformed cache entry: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub cache_key: String,
    pub prompt_text: String,
    pub response_text: String,
    /// RFC 3339 wall-clock time of the recording, informational only.
    pub timestamp: String,
}

#[derive(Debug)]
pub struct PromptCache {
    path: String,
    entries: HashMap<String, CacheEntry>,
    writer: File,
}

impl PromptCache {
    /// Open or create a cache file and load all existing entries.
    pub fn open(path: impl AsRef<Path>) -> Result<PromptCache, CacheError> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let io_err = |source| CacheError::Io {
            path: display.clone(),
            source,
        };

        let text = match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io_err(e)),
        };

        // A complete append always ends in a newline, so a parse failure on a
        // newline-terminated line is real corruption, while garbage without a
        // trailing newline is an interrupted append: drop it from the file so
        // the next append starts on a clean boundary.
        let mut entries = HashMap::new();
        let mut good_bytes = 0usize;
        for (idx, raw) in text.split_inclusive('\n').enumerate() {
            if raw.trim().is_empty() {
                good_bytes += raw.len();
                continue;
            }
            match serde_json::from_str::<CacheEntry>(raw) {
                Ok(entry) => {
                    entries.insert(entry.cache_key.clone(), entry);
                    good_bytes += raw.len();
                }
                Err(e) => {
                    if raw.ends_with('\n') {
                        return Err(CacheError::Malformed {
                            path: display,
                            line: idx + 1,
                            message: e.to_string(),
                        });
                    }
                    break;
                }
            }
        }
        if good_bytes < text.len() {
            let file = OpenOptions::new().write(true).open(path).map_err(io_err)?;
            file.set_len(good_bytes as u64).map_err(io_err)?;
        }

        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        Ok(PromptCache {
            path: display,
            entries,
            writer,
        })
    }

    pub fn get(&self, cache_key: &str) -> Option<&str> {
        self.entries.get(cache_key).map(|e| e.response_text.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Record a response: append to disk, flush, then update memory.
    pub fn record(
        &mut self,
        cache_key: &str,
        prompt_text: &str,
        response_text: &str,
    ) -> Result<(), CacheError> {
        let entry = CacheEntry {
            cache_key: cache_key.to_string(),
            prompt_text: prompt_text.to_string(),
            response_text: response_text.to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        };
        let io_err = |source| CacheError::Io {
            path: self.path.clone(),
            source,
        };
        // One write_all call per entry keeps concurrent appends line-atomic
        // in practice and makes a torn write detectable by its missing
        // newline.
        let mut json = serde_json::to_string(&entry).expect("cache entry serializes");
        json.push('\n');
        self.writer.write_all(json.as_bytes()).map_err(io_err)?;
        self.writer.flush().map_err(io_err)?;
        self.entries.insert(entry.cache_key.clone(), entry);
        Ok(())
    }
}
