use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Clock that only moves when told to.
#[derive(Debug)]
pub struct ManualClock {
    now: Mutex<DateTime<Utc>>,
}

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self { now: Mutex::new(start) }
    }

    pub fn advance(&self, by: Duration) {
        let mut now = self.now.lock();
        *now += chrono::Duration::from_std(by).expect("duration in range");
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.now.lock()
    }
}

#[derive(Debug, Clone)]
struct Entry {
    body: Arc<String>,
    expires_at: DateTime<Utc>,
}

#[derive(Debug, Default)]
struct Inner {
    entries: BTreeMap<(String, String), Entry>,
    generation: u64,
}

/// Recommendation responses keyed by (student id, parameter key).
///
/// Any write bumps the generation and drops every entry. A value computed
/// under an older generation is discarded on insert, so a slow read racing
/// a write cannot repopulate stale data.
#[derive(Debug)]
pub struct RecommendationCache {
    ttl: chrono::Duration,
    inner: Mutex<Inner>,
}

impl RecommendationCache {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl: chrono::Duration::from_std(ttl).expect("ttl in range"),
            inner: Mutex::new(Inner::default()),
        }
    }

    pub fn generation(&self) -> u64 {
        self.inner.lock().generation
    }

    pub fn get(&self, student: &str, params: &str, now: DateTime<Utc>) -> Option<Arc<String>> {
        let mut inner = self.inner.lock();
        let key = (student.to_string(), params.to_string());
        match inner.entries.get(&key) {
            Some(e) if now < e.expires_at => Some(e.body.clone()),
            Some(_) => {
                inner.entries.remove(&key);
                None
            }
            None => None,
        }
    }

    pub fn put(&self, student: &str, params: &str, body: Arc<String>, generation: u64, now: DateTime<Utc>) {
        let mut inner = self.inner.lock();
        if inner.generation != generation {
            return;
        }
        inner.entries.insert(
            (student.to_string(), params.to_string()),
            Entry {
                body,
                expires_at: now + self.ttl,
            },
        );
    }

    pub fn invalidate_all(&self) {
        let mut inner = self.inner.lock();
        inner.generation += 1;
        inner.entries.clear();
    }

    pub fn len(&self) -> usize {
        self.inner.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
