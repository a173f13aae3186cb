//! Append-only JSONL store of judge decisions keyed by layout content hashes.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Judge, JudgeDecision, JudgeError};
use crate::layout::Layout;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key1: String,
    pub key2: String,
    pub judge_id: String,
    pub d: u8,
    pub raw_response: Option<String>,
    pub timestamp: u64,
}

/// Hex SHA-256 of the layout's canonical JSON encoding.
pub fn layout_hash(layout: &Layout) -> String {
    let bytes = serde_json::to_vec(layout).expect("layouts always serialize");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

type Key = (String, String, String);

#[derive(Debug)]
pub struct DecisionCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<Key, CacheEntry>>,
    writer: Mutex<Option<File>>,
    skipped_lines: usize,
}

impl DecisionCache {
    pub fn in_memory() -> Self {
        Self { path: None, entries: RwLock::new(HashMap::new()), writer: Mutex::new(None), skipped_lines: 0 }
    }

    /// Opens (creating if needed) a cache file. Unparsable lines are skipped
    /// and counted; a later entry for the same key replaces an earlier one.
    pub fn open(path: &Path) -> Result<Self, JudgeError> {
        let io = |e: std::io::Error| JudgeError::Cache(format!("{}: {e}", path.display()));
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path).map_err(io)?;
        let mut entries = HashMap::new();
        let mut skipped = 0;
        for line in BufReader::new(&file).lines() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<CacheEntry>(&line) {
                Ok(e) if e.d == 1 || e.d == 2 => {
                    entries.insert((e.key1.clone(), e.key2.clone(), e.judge_id.clone()), e);
                }
                _ => skipped += 1,
            }
        }
        // a torn final line must not swallow the next append
        let len = file.metadata().map_err(io)?.len();
        if len > 0 {
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1)).map_err(io)?;
            file.read_exact(&mut last).map_err(io)?;
            if last[0] != b'\n' {
                file.write_all(b"\n").map_err(io)?;
            }
        }
        if skipped > 0 {
            log::warn!("decision cache {}: skipped {skipped} corrupt line(s)", path.display());
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(file)),
            skipped_lines: skipped,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn skipped_lines(&self) -> usize {
        self.skipped_lines
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key1: &str, key2: &str, judge_id: &str) -> Option<CacheEntry> {
        let key = (key1.to_string(), key2.to_string(), judge_id.to_string());
        self.entries.read().expect("cache lock").get(&key).cloned()
    }

    /// Records the entry in memory, then appends it to the backing file.
    /// The in-memory copy survives a failed append.
    pub fn insert(&self, entry: CacheEntry) -> Result<(), JudgeError> {
        let line = serde_json::to_string(&entry).expect("cache entries always serialize");
        let key = (entry.key1.clone(), entry.key2.clone(), entry.judge_id.clone());
        self.entries.write().expect("cache lock").insert(key, entry);
        let mut writer = self.writer.lock().expect("cache lock");
        if let Some(file) = writer.as_mut() {
            writeln!(file, "{line}").and_then(|_| file.flush()).map_err(|e| JudgeError::Cache(e.to_string()))?;
        }
        Ok(())
    }
}

/// Wraps a judge so that repeated comparisons of the same ordered pair are
/// answered from the cache.
#[derive(Debug)]
pub struct CachedJudge<J> {
    inner: J,
    cache: DecisionCache,
    calls: AtomicUsize,
    hits: AtomicUsize,
}

impl<J: Judge> CachedJudge<J> {
    pub fn new(inner: J, cache: DecisionCache) -> Self {
        Self { inner, cache, calls: AtomicUsize::new(0), hits: AtomicUsize::new(0) }
    }

    pub fn inner(&self) -> &J {
        &self.inner
    }

    pub fn cache(&self) -> &DecisionCache {
        &self.cache
    }

    /// Number of comparisons forwarded to the wrapped judge.
    pub fn judge_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn cache_hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl<J: Judge> Judge for CachedJudge<J> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn compare(&self, g1: &Layout, g2: &Layout) -> Result<JudgeDecision, JudgeError> {
        let judge_id = self.inner.id();
        let (key1, key2) = (layout_hash(g1), layout_hash(g2));
        if let Some(hit) = self.cache.get(&key1, &key2, &judge_id) {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(JudgeDecision { d: hit.d, judge_id, raw_response: hit.raw_response, swapped: false });
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let decision = self.inner.compare(g1, g2)?;
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let entry = CacheEntry {
            key1,
            key2,
            judge_id,
            d: decision.d,
            raw_response: decision.raw_response.clone(),
            timestamp,
        };
        if let Err(e) = self.cache.insert(entry) {
            log::warn!("{e}; continuing without persisting this decision");
        }
        Ok(decision)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::HeuristicJudge;
    use crate::layout::{BBox, Canvas, Element, Placement};

    fn layout(shift: f64) -> Layout {
        let canvas = Canvas::new(100.0, 100.0).unwrap();
        Layout::new(
            canvas,
            vec![
                Placement { element: Element::text("a", "x"), bbox: BBox::from_corners(0.0, 0.0, 50.0, 50.0) },
                Placement { element: Element::text("b", "y"), bbox: BBox::from_corners(shift, 0.0, shift + 50.0, 50.0) },
            ],
        )
        .unwrap()
    }

    #[test]
    fn hash_is_content_sensitive() {
        assert_eq!(layout_hash(&layout(10.0)), layout_hash(&layout(10.0)));
        assert_ne!(layout_hash(&layout(10.0)), layout_hash(&layout(11.0)));
        assert_eq!(layout_hash(&layout(0.0)).len(), 64);
    }

    #[test]
    fn repeat_calls_hit_the_cache() {
        let j = CachedJudge::new(HeuristicJudge, DecisionCache::in_memory());
        let (a, b) = (layout(50.0), layout(20.0));
        let first = j.compare(&a, &b).unwrap();
        for _ in 0..5 {
            assert_eq!(j.compare(&a, &b).unwrap().d, first.d);
        }
        assert_eq!(j.judge_calls(), 1);
        j.compare(&b, &a).unwrap();
        assert_eq!(j.judge_calls(), 2);
    }

    #[test]
    fn persists_and_skips_corrupt_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let (a, b, c) = (layout(50.0), layout(20.0), layout(30.0));
        {
            let j = CachedJudge::new(HeuristicJudge, DecisionCache::open(&path).unwrap());
            j.compare(&a, &b).unwrap();
            j.compare(&a, &c).unwrap();
        }
        // corrupt the second record and leave a torn tail
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<_> = text.lines().map(str::to_string).collect();
        lines[1] = lines[1][..lines[1].len() / 2].to_string();
        std::fs::write(&path, lines.join("\n") + "\n{\"key1\":").unwrap();

        let j = CachedJudge::new(HeuristicJudge, DecisionCache::open(&path).unwrap());
        assert_eq!(j.cache().skipped_lines(), 2);
        j.compare(&a, &b).unwrap();
        assert_eq!(j.judge_calls(), 0);
        j.compare(&a, &c).unwrap();
        assert_eq!(j.judge_calls(), 1);
        drop(j);

        let reopened = DecisionCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
    }
}
