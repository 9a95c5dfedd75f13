//! Response cache bounded by total body size.

use std::sync::Mutex;

use axum::body::Bytes;
use indexmap::IndexMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedBody {
    pub content_type: &'static str,
    pub body: Bytes,
}

impl CachedBody {
    fn cost(&self, key: &str) -> usize {
        self.body.len() + key.len()
    }
}

#[derive(Debug, Default)]
struct Inner {
    // Least recently used first.
    entries: IndexMap<String, CachedBody>,
    bytes: usize,
}

/// LRU map from canonical query to response body. Eviction is by bytes,
/// not entry count; a body larger than the whole budget is never stored.
#[derive(Debug)]
pub struct ResponseCache {
    capacity: usize,
    inner: Mutex<Inner>,
}

impl ResponseCache {
    pub fn new(capacity_bytes: usize) -> Self {
        ResponseCache {
            capacity: capacity_bytes,
            inner: Mutex::new(Inner::default()),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, key: &str) -> Option<CachedBody> {
        let mut inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        let index = inner.entries.get_index_of(key)?;
        let last = inner.entries.len() - 1;
        inner.entries.move_index(index, last);
        inner.entries.get_index(last).map(|(_, v)| v.clone())
    }

    pub fn insert(&self, key: String, value: CachedBody) {
        let cost = value.cost(&key);
        if cost > self.capacity {
            return;
        }
        let mut inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(old) = inner.entries.shift_remove(&key) {
            inner.bytes -= old.cost(&key);
        }
        while inner.bytes + cost > self.capacity {
            match inner.entries.shift_remove_index(0) {
                Some((k, v)) => inner.bytes -= v.cost(&k),
                None => break,
            }
        }
        inner.bytes += cost;
        inner.entries.insert(key, value);
    }

    /// Bytes currently held (bodies plus keys).
    pub fn used(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).bytes
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, key: &str) -> bool {
        self.inner
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entries
            .contains_key(key)
    }
}
