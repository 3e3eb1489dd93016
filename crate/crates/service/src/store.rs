//! Versioned document store with checksummed snapshots.
//!
//! Snapshot layout: one header line
//! `teamup-snapshot v1 sha256=<hex> len=<bytes>` followed by the records as
//! JSON. Both the length and the digest cover the JSON body only.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const MAGIC: &str = "teamup-snapshot v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Student,
    Project,
    Embedding,
    Allocation,
    Override,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub kind: RecordKind,
    pub id: String,
    pub payload: serde_json::Value,
    pub version: u64,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Store {
    records: BTreeMap<(RecordKind, String), StoreRecord>,
    last_version: u64,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces a record. Versions come from one store-wide
    /// counter, so they also increase per id.
    pub fn put<T: Serialize>(
        &mut self,
        kind: RecordKind,
        id: &str,
        payload: &T,
        now: DateTime<Utc>,
    ) -> Result<&StoreRecord, StoreError> {
        let payload = serde_json::to_value(payload)?;
        self.last_version += 1;
        let rec = StoreRecord {
            kind,
            id: id.to_string(),
            payload,
            version: self.last_version,
            updated_at: now,
        };
        let key = (kind, id.to_string());
        self.records.insert(key.clone(), rec);
        Ok(&self.records[&key])
    }

    pub fn get(&self, kind: RecordKind, id: &str) -> Option<&StoreRecord> {
        self.records.get(&(kind, id.to_string()))
    }

    pub fn decode<T: for<'de> Deserialize<'de>>(&self, kind: RecordKind, id: &str) -> Option<Result<T, StoreError>> {
        self.get(kind, id)
            .map(|r| serde_json::from_value(r.payload.clone()).map_err(StoreError::from))
    }

    pub fn contains(&self, kind: RecordKind, id: &str) -> bool {
        self.get(kind, id).is_some()
    }

    /// Records of one kind in id order.
    pub fn of_kind(&self, kind: RecordKind) -> impl Iterator<Item = &StoreRecord> {
        self.records.values().filter(move |r| r.kind == kind)
    }

    pub fn records(&self) -> impl Iterator<Item = &StoreRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_version(&self) -> u64 {
        self.last_version
    }

    pub fn to_snapshot_bytes(&self) -> Result<Vec<u8>, StoreError> {
        let records: Vec<&StoreRecord> = self.records.values().collect();
        let body = serde_json::to_vec(&records)?;
        let digest = hex::encode(Sha256::digest(&body));
        let mut out = format!("{MAGIC} sha256={digest} len={}\n", body.len()).into_bytes();
        out.extend_from_slice(&body);
        Ok(out)
    }

    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        let corrupt = |m: &str| StoreError::CorruptSnapshot(m.to_string());
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| corrupt("missing header"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| corrupt("header is not utf-8"))?;
        let rest = header.strip_prefix(MAGIC).ok_or_else(|| corrupt("bad magic"))?;
        let mut digest = None;
        let mut len = None;
        for field in rest.split_whitespace() {
            if let Some(d) = field.strip_prefix("sha256=") {
                digest = Some(d.to_string());
            } else if let Some(l) = field.strip_prefix("len=") {
                len = Some(l.parse::<usize>().map_err(|_| corrupt("bad length"))?);
            }
        }
        let (digest, len) = digest.zip(len).ok_or_else(|| corrupt("incomplete header"))?;
        let body = &bytes[nl + 1..];
        if body.len() != len {
            return Err(corrupt(&format!("expected {len} bytes, found {}", body.len())));
        }
        if hex::encode(Sha256::digest(body)) != digest {
            return Err(corrupt("checksum mismatch"));
        }
        let records: Vec<StoreRecord> =
            serde_json::from_slice(body).map_err(|e| corrupt(&format!("bad body: {e}")))?;
        let mut store = Store::new();
        for r in records {
            store.last_version = store.last_version.max(r.version);
            store.records.insert((r.kind, r.id.clone()), r);
        }
        Ok(store)
    }

    /// Writes to a temporary sibling and renames it over `path`.
    pub fn persist(&self, path: &Path) -> Result<(), StoreError> {
        let bytes = self.to_snapshot_bytes()?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("snapshot-tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn restore(path: &Path) -> Result<Self, StoreError> {
        Self::from_snapshot_bytes(&fs::read(path)?)
    }
}
