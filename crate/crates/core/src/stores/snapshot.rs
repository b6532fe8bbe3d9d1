use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{EntityKey, SourceKey, SourceRecord, SourceView, Tick, Value, VersionStamp};

#[derive(Debug, Error)]
pub enum SnapshotFormatError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("missing snapshot header")]
    MissingHeader,
}

/// Frozen copy of the legacy store as of `taken_at`.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    taken_at: Tick,
    records: Arc<BTreeMap<SourceKey, SourceRecord>>,
    last_update_time: Option<Tick>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    taken_at: Tick,
    last_update_time: Option<Tick>,
}

/// One exported record: type, id, version counter, commit time, tombstone, fields.
type RecordLine<'a> = (&'a str, u64, u64, Tick, bool, &'a Value);
type OwnedRecordLine = (String, u64, u64, Tick, bool, Value);

impl Snapshot {
    pub fn new(taken_at: Tick, records: BTreeMap<SourceKey, SourceRecord>) -> Self {
        let last_update_time = records.values().map(|r| r.version.commit_time).max();
        Snapshot { taken_at, records: Arc::new(records), last_update_time }
    }

    pub fn taken_at(&self) -> Tick {
        self.taken_at
    }

    /// Latest commit time included; `None` for an empty snapshot.
    pub fn last_update_time(&self) -> Option<Tick> {
        self.last_update_time
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &SourceKey) -> Option<&SourceRecord> {
        self.records.get(key)
    }

    pub fn records(&self) -> impl Iterator<Item = &SourceRecord> {
        self.records.values()
    }

    /// Line-delimited export: a header line, then one JSON array per record.
    pub fn export(&self, out: &mut impl Write) -> std::io::Result<()> {
        let header = Header { taken_at: self.taken_at, last_update_time: self.last_update_time };
        writeln!(out, "{}", serde_json::to_string(&header).map_err(std::io::Error::other)?)?;
        for r in self.records.values() {
            let line: RecordLine<'_> = (r.key.ty.as_str(), r.key.id, r.version.counter, r.version.commit_time, r.tombstone, &r.value);
            writeln!(out, "{}", serde_json::to_string(&line).map_err(std::io::Error::other)?)?;
        }
        Ok(())
    }

    pub fn export_string(&self) -> String {
        let mut buf = Vec::new();
        self.export(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn import(input: impl BufRead) -> Result<Snapshot, SnapshotFormatError> {
        let mut lines = input.lines().enumerate();
        let (_, first) = lines.next().ok_or(SnapshotFormatError::MissingHeader)?;
        let header: Header = serde_json::from_str(&first?).map_err(|source| SnapshotFormatError::Parse { line: 1, source })?;
        let mut records = BTreeMap::new();
        for (i, line) in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (ty, id, counter, commit_time, tombstone, value): OwnedRecordLine =
                serde_json::from_str(&line).map_err(|source| SnapshotFormatError::Parse { line: i + 1, source })?;
            let key = EntityKey::new(ty.as_str(), id);
            records.insert(key.clone(), SourceRecord { key, value, version: VersionStamp::new(counter, commit_time), tombstone });
        }
        Ok(Snapshot { taken_at: header.taken_at, records: Arc::new(records), last_update_time: header.last_update_time })
    }

    /// SHA-256 of the exported form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.export_string().as_bytes()))
    }
}

impl SourceView for Snapshot {
    fn source(&self, key: &SourceKey) -> Option<&SourceRecord> {
        self.records.get(key)
    }
}
