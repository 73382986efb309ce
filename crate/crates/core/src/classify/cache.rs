//! Append-only reply cache keyed by the SHA-256 of the prompt text.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub prompt_hash: String,
    pub response_text: String,
    pub timestamp: u64,
}

/// In-memory map over an optional JSON-lines log. Later entries for the same
/// hash replace earlier ones; unreadable lines (a write torn by a crash) are
/// skipped on load.
#[derive(Debug, Default)]
pub struct ClassificationCache {
    entries: Mutex<HashMap<String, String>>,
    log: Option<Mutex<BufWriter<File>>>,
}

impl ClassificationCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> io::Result<Self> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut entries = HashMap::new();
        let mut skipped = 0usize;
        for line in BufReader::new(&file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<CacheEntry>(&line) {
                Ok(e) => {
                    entries.insert(e.prompt_hash, e.response_text);
                }
                Err(_) => skipped += 1,
            }
        }
        if skipped > 0 {
            log::warn!("skipped {skipped} unreadable cache line(s) in {}", path.display());
        }
        // A torn last line must not swallow the next append.
        let len = file.seek(SeekFrom::End(0))?;
        if len > 0 {
            file.seek(SeekFrom::Start(len - 1))?;
            let mut last = [0u8; 1];
            file.read_exact(&mut last)?;
            if last[0] != b'\n' {
                file.write_all(b"\n")?;
            }
        }
        Ok(Self {
            entries: Mutex::new(entries),
            log: Some(Mutex::new(BufWriter::new(file))),
        })
    }

    pub fn get(&self, hash: &str) -> Option<String> {
        self.entries.lock().unwrap().get(hash).cloned()
    }

    pub fn insert(&self, hash: &str, response_text: &str) -> io::Result<()> {
        if let Some(log) = &self.log {
            let entry = CacheEntry {
                prompt_hash: hash.to_string(),
                response_text: response_text.to_string(),
                timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            };
            let mut line = serde_json::to_string(&entry).map_err(io::Error::other)?;
            line.push('\n');
            let mut w = log.lock().unwrap();
            w.write_all(line.as_bytes())?;
            w.flush()?;
        }
        self.entries
            .lock()
            .unwrap()
            .insert(hash.to_string(), response_text.to_string());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
