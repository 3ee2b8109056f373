//! In-memory cache of verified resource bodies.
//!
//! Entries are keyed by URL plus the digest of the admitted bytes, so a
//! re-signed provider update coexists with the previous body until the older
//! entry expires. Only bodies with a passing verdict can be inserted.

use std::collections::HashMap;
use std::sync::RwLock;
use std::time::{Duration, Instant};

use bytes::Bytes;
use sigscript_core::{sha256_digest, Digest, VerificationVerdict};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub url: String,
    pub digest: Digest,
}

#[derive(Debug, Clone)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub bytes: Bytes,
    pub content_type: Option<String>,
    pub verdict: VerificationVerdict,
    pub inserted_at: Instant,
    pub expires_at: Instant,
}

#[derive(Debug)]
pub struct VerifiedCache {
    ttl: Duration,
    entries: RwLock<HashMap<String, Vec<CacheEntry>>>,
}

impl VerifiedCache {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            entries: RwLock::new(HashMap::new()),
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn get(&self, key: &CacheKey) -> Option<CacheEntry> {
        self.get_at(key, Instant::now())
    }

    pub fn get_at(&self, key: &CacheKey, now: Instant) -> Option<CacheEntry> {
        let entries = self.entries.read().expect("cache lock poisoned");
        entries
            .get(&key.url)?
            .iter()
            .find(|e| e.key == *key && now < e.expires_at)
            .cloned()
    }

    /// Most recently inserted live entry for `url`.
    pub fn latest(&self, url: &str) -> Option<CacheEntry> {
        self.latest_at(url, Instant::now())
    }

    pub fn latest_at(&self, url: &str, now: Instant) -> Option<CacheEntry> {
        let entries = self.entries.read().expect("cache lock poisoned");
        entries
            .get(url)?
            .iter()
            .filter(|e| now < e.expires_at)
            .max_by_key(|e| e.inserted_at)
            .cloned()
    }

    /// Inserts a verified body. Returns `None` without touching the cache
    /// when the verdict is not a pass.
    pub fn put(
        &self,
        url: &str,
        bytes: Bytes,
        content_type: Option<String>,
        verdict: VerificationVerdict,
    ) -> Option<CacheKey> {
        self.put_at(url, bytes, content_type, verdict, Instant::now())
    }

    pub fn put_at(
        &self,
        url: &str,
        bytes: Bytes,
        content_type: Option<String>,
        verdict: VerificationVerdict,
        now: Instant,
    ) -> Option<CacheKey> {
        if !verdict.is_pass() {
            return None;
        }
        let key = CacheKey {
            url: url.to_owned(),
            digest: sha256_digest(&bytes),
        };
        let entry = CacheEntry {
            key: key.clone(),
            bytes,
            content_type,
            verdict,
            inserted_at: now,
            expires_at: now + self.ttl,
        };
        let mut entries = self.entries.write().expect("cache lock poisoned");
        let slot = entries.entry(key.url.clone()).or_default();
        slot.retain(|e| now < e.expires_at && e.key != key);
        slot.push(entry);
        Some(key)
    }

    pub fn clear(&self) {
        self.entries.write().expect("cache lock poisoned").clear();
    }

    /// Drops expired entries.
    pub fn purge_expired(&self, now: Instant) {
        let mut entries = self.entries.write().expect("cache lock poisoned");
        entries.retain(|_, v| {
            v.retain(|e| now < e.expires_at);
            !v.is_empty()
        });
    }

    pub fn len(&self) -> usize {
        let entries = self.entries.read().expect("cache lock poisoned");
        entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sigscript_core::{verify_resource, TrustRule};

    fn pass_verdict(body: &[u8]) -> VerificationVerdict {
        let rule = TrustRule::ad_hoc(vec![], 0, Some(sha256_digest(body))).unwrap();
        verify_resource(&rule, body)
    }

    fn fail_verdict() -> VerificationVerdict {
        let rule = TrustRule::ad_hoc(vec![], 0, Some(sha256_digest(b"other"))).unwrap();
        verify_resource(&rule, b"body")
    }

    #[test]
    fn put_then_get_hits() {
        let cache = VerifiedCache::new(Duration::from_secs(300));
        let key = cache
            .put("https://a/x.js", Bytes::from_static(b"body"), None, pass_verdict(b"body"))
            .unwrap();
        assert_eq!(cache.get(&key).unwrap().bytes, &b"body"[..]);
        assert_eq!(cache.latest("https://a/x.js").unwrap().key, key);
        assert!(cache.latest("https://a/y.js").is_none());
    }

    #[test]
    fn expired_entries_miss() {
        let cache = VerifiedCache::new(Duration::from_secs(300));
        let t0 = Instant::now();
        let key = cache
            .put_at("u", Bytes::from_static(b"b"), None, pass_verdict(b"b"), t0)
            .unwrap();
        assert!(cache.get_at(&key, t0 + Duration::from_secs(299)).is_some());
        assert!(cache.get_at(&key, t0 + Duration::from_secs(300)).is_none());
        assert!(cache.latest_at("u", t0 + Duration::from_secs(301)).is_none());
        cache.purge_expired(t0 + Duration::from_secs(301));
        assert!(cache.is_empty());
    }

    #[test]
    fn failing_verdicts_are_never_cached() {
        let cache = VerifiedCache::new(Duration::from_secs(300));
        assert!(cache.put("u", Bytes::from_static(b"body"), None, fail_verdict()).is_none());
        assert!(cache.is_empty());
    }

    #[test]
    fn update_coexists_and_latest_wins() {
        let cache = VerifiedCache::new(Duration::from_secs(300));
        let t0 = Instant::now();
        let old = cache
            .put_at("u", Bytes::from_static(b"v1"), None, pass_verdict(b"v1"), t0)
            .unwrap();
        let new = cache
            .put_at("u", Bytes::from_static(b"v2"), None, pass_verdict(b"v2"), t0 + Duration::from_secs(1))
            .unwrap();
        assert_eq!(cache.len(), 2);
        let now = t0 + Duration::from_secs(2);
        assert!(cache.get_at(&old, now).is_some());
        assert_eq!(cache.latest_at("u", now).unwrap().key, new);
        cache.clear();
        assert!(cache.is_empty());
    }
}
