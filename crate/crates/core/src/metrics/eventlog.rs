use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{SourceKey, TargetKey, TargetRecord, Tick, Value};
use crate::healing::{EnqueueOutcome, Trigger};
use crate::stores::PutOutcome;

use super::consistency::ConsistencyReport;

/// One logged occurrence. Everything the oracle needs to recompute the run's
/// metrics is here; nothing else is consulted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEvent {
    /// A legacy commit; `value` is `None` for deletes.
    Commit { key: SourceKey, counter: u64, value: Option<Value> },
    /// A conditional write to the target store with its outcome.
    Put { record: Arc<TargetRecord>, outcome: PutOutcome },
    Enqueue { key: TargetKey, trigger: Trigger, source_update_time: Tick, outcome: EnqueueOutcome },
    /// Validate-and-fix removed the event (`fixed` or `already_consistent`).
    Removed { key: TargetKey, outcome: String },
    Retried { key: TargetKey, attempts: u32, next_due: Tick, reason: String },
    DeadLettered { key: TargetKey, reason: String },
    Requeued { key: TargetKey },
    /// Online settlement of the `counter`-th version of `key`.
    Settled { key: SourceKey, counter: u64 },
    BugToggled { active: bool },
    Phase { name: String },
    Sample { report: ConsistencyReport },
    Switch { report: crate::ramp::SwitchReport },
    /// Closing totals as the run saw them.
    RunEnd { attempts: u64, unsettled: u64, dead_letters: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub time: Tick,
    pub seq: u64,
    #[serde(flatten)]
    pub event: LogEvent,
}

#[derive(Debug, Error)]
pub enum LogFormatError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("line {line}: entry out of order")]
    Order { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Append-only, ordered by (time, seq).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    entries: Vec<LogEntry>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: Tick, event: LogEvent) {
        if let Some(last) = self.entries.last() {
            assert!(time >= last.time, "event log time went backwards: {time} < {}", last.time);
        }
        let seq = self.entries.len() as u64;
        self.entries.push(LogEntry { time, seq, event });
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_jsonl(&self, out: &mut impl Write) -> std::io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut *out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<EventLog, LogFormatError> {
        let mut log = EventLog::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: LogEntry = serde_json::from_str(&line).map_err(|source| LogFormatError::Parse { line: i + 1, source })?;
            if e.seq != log.entries.len() as u64 || log.entries.last().is_some_and(|l| l.time > e.time) {
                return Err(LogFormatError::Order { line: i + 1 });
            }
            log.entries.push(e);
        }
        Ok(log)
    }

    /// SHA-256 over the JSONL encoding.
    pub fn digest(&self) -> String {
        struct H(Sha256);
        impl Write for H {
            fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
                self.0.update(b);
                Ok(b.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let mut h = H(Sha256::new());
        self.write_jsonl(&mut h).expect("hashing cannot fail");
        hex::encode(h.0.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::EntityKey;

    #[test]
    fn jsonl_round_trip() {
        let mut log = EventLog::new();
        log.push(1, LogEvent::Commit { key: EntityKey::new("p", 1), counter: 1, value: Some(Value::new()) });
        log.push(2, LogEvent::Settled { key: EntityKey::new("p", 1), counter: 1 });
        log.push(2, LogEvent::BugToggled { active: true });
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let back = EventLog::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.digest(), log.digest());
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().contains("\"kind\":\"commit\""));
    }

    #[test]
    fn rejects_reordered_lines() {
        let mut log = EventLog::new();
        log.push(1, LogEvent::BugToggled { active: true });
        log.push(2, LogEvent::BugToggled { active: false });
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let swapped: String = text.lines().rev().map(|l| format!("{l}\n")).collect();
        assert!(matches!(EventLog::read_jsonl(swapped.as_bytes()), Err(LogFormatError::Order { line: 1 })));
    }
}
