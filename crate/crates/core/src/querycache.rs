//! Verdict memoization keyed on canonical query forms.

use std::num::NonZeroUsize;
use std::sync::Mutex;

use lru::LruCache;
use thiserror::Error;

use crate::solverbridge::SatResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QueryKind {
    Emptiness,
    NotSubseteq,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub kind: QueryKind,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub entries: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("only Sat and Unsat verdicts can be cached, got {0:?}")]
pub struct NotCacheable(pub SatResult);

pub const DEFAULT_CAPACITY: usize = 1 << 20;

struct Inner {
    map: LruCache<CacheKey, bool>,
    hits: u64,
    misses: u64,
}

/// Least-recently-used verdict cache, safe to share between threads.
pub struct QueryCache {
    inner: Mutex<Inner>,
}

impl Default for QueryCache {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

impl QueryCache {
    pub fn new(capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity).expect("cache capacity must be positive");
        QueryCache {
            inner: Mutex::new(Inner {
                map: LruCache::new(cap),
                hits: 0,
                misses: 0,
            }),
        }
    }

    /// The stored verdict, or `None` on a miss.
    pub fn lookup(&self, key: &CacheKey) -> Option<SatResult> {
        let mut inner = self.inner.lock().unwrap();
        match inner.map.get(key).copied() {
            Some(sat) => {
                inner.hits += 1;
                Some(if sat { SatResult::Sat } else { SatResult::Unsat })
            }
            None => {
                inner.misses += 1;
                None
            }
        }
    }

    pub fn insert(&self, key: CacheKey, result: &SatResult) -> Result<(), NotCacheable> {
        let sat = match result {
            SatResult::Sat => true,
            SatResult::Unsat => false,
            other => return Err(NotCacheable(other.clone())),
        };
        self.inner.lock().unwrap().map.put(key, sat);
        Ok(())
    }

    pub fn stats(&self) -> CacheStats {
        let inner = self.inner.lock().unwrap();
        CacheStats {
            hits: inner.hits,
            misses: inner.misses,
            entries: inner.map.len() as u64,
        }
    }
}
