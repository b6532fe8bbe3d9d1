use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::limiter::RateLimiter;
use crate::domain::{Mapper, SourceKey, TargetRecord, Tick, TypeName};
use crate::healing::{SelfHealingQueue, Trigger, ValidationEvent};
use crate::stores::{PutOutcome, Snapshot, TargetStore};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMode {
    /// Every record becomes a bootstrap validation event.
    #[default]
    Queue,
    /// Snapshot records are mapped and written straight into the target;
    /// only failed writes go through the queue.
    DirectLoad,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub records: u64,
    pub events_enqueued: u64,
    pub direct_accepted: u64,
    pub direct_rejected: u64,
    pub started_at: Option<Tick>,
    pub finished_at: Option<Tick>,
    /// Ticks from the first fed record to the end of the last round.
    pub duration: Tick,
}

/// Rate-limited backfill of a snapshot, one round per source type in
/// dependency order. A round starts once the previous one has left the queue.
#[derive(Debug)]
pub struct Bootstrap {
    snapshot: Snapshot,
    mode: BootstrapMode,
    rounds: Vec<(TypeName, Vec<SourceKey>)>,
    round: usize,
    pos: usize,
    report: BootstrapReport,
}

impl Bootstrap {
    pub fn new(snapshot: Snapshot, mapper: &Mapper, mode: BootstrapMode) -> Self {
        let mut rounds: Vec<(TypeName, Vec<SourceKey>)> =
            mapper.schema().source_types_in_order().into_iter().map(|t| (t, Vec::new())).collect();
        for r in snapshot.records() {
            if let Some(round) = rounds.iter_mut().find(|(t, _)| *t == r.key.ty) {
                round.1.push(r.key.clone());
            }
        }
        rounds.retain(|(_, keys)| !keys.is_empty());
        let records = rounds.iter().map(|(_, k)| k.len() as u64).sum();
        Bootstrap { snapshot, mode, rounds, round: 0, pos: 0, report: BootstrapReport { records, ..Default::default() } }
    }

    pub fn is_done(&self) -> bool {
        self.round >= self.rounds.len()
    }

    pub fn report(&self) -> &BootstrapReport {
        &self.report
    }

    /// Source type of the round in progress.
    pub fn current_round(&self) -> Option<&TypeName> {
        self.rounds.get(self.round).map(|r| &r.0)
    }

    /// Feed as much of the current round as the limiter's spare capacity
    /// allows. Returns the source keys fed this tick.
    pub fn step(&mut self, now: Tick, limiter: &mut RateLimiter, mapper: &Mapper, target: &mut TargetStore, queue: &mut SelfHealingQueue) -> Vec<SourceKey> {
        let mut fed = Vec::new();
        while let Some(len) = self.rounds.get(self.round).map(|r| r.1.len()) {
            if self.pos == len {
                let waiting = self.mode == BootstrapMode::Queue && queue.pending_with_trigger(Trigger::Bootstrap) > 0;
                if waiting {
                    break;
                }
                self.round += 1;
                self.pos = 0;
                if self.is_done() {
                    self.report.finished_at = Some(now);
                    self.report.duration = now + 1 - self.report.started_at.unwrap_or(now);
                }
                continue;
            }
            let want = (len - self.pos) as u64;
            let granted = limiter.grant_backfill(want) as usize;
            if granted == 0 {
                break;
            }
            self.report.started_at.get_or_insert(now);
            let batch: Vec<SourceKey> = self.rounds[self.round].1[self.pos..self.pos + granted].to_vec();
            self.pos += granted;
            for key in batch {
                self.feed(&key, now, mapper, target, queue);
                fed.push(key);
            }
            if self.pos < len {
                break;
            }
        }
        fed
    }

    fn feed(&mut self, key: &SourceKey, now: Tick, mapper: &Mapper, target: &mut TargetStore, queue: &mut SelfHealingQueue) {
        let commit = self.snapshot.get(key).map_or(now, |r| r.version.commit_time);
        let enqueue = |queue: &mut SelfHealingQueue, report: &mut BootstrapReport, t| {
            queue.enqueue(ValidationEvent::new(t, Trigger::Bootstrap, now, commit));
            report.events_enqueued += 1;
        };
        match self.mode {
            BootstrapMode::Queue => {
                for t in mapper.affected_targets(key) {
                    enqueue(queue, &mut self.report, t);
                }
            }
            BootstrapMode::DirectLoad => {
                // records carry the snapshot's provenance, so any fresher
                // write already in the target wins
                let outputs: Vec<TargetRecord> = match mapper.expected_for_source(&self.snapshot, key) {
                    Ok(o) => o,
                    Err(_) => {
                        for t in mapper.affected_targets(key) {
                            enqueue(queue, &mut self.report, t);
                        }
                        return;
                    }
                };
                for out in outputs {
                    let parents = if out.is_live() { mapper.parent_keys(&out).unwrap_or_default() } else { Vec::new() };
                    let k = out.key.clone();
                    match target.put_checked(Arc::new(out), &parents, now) {
                        PutOutcome::Accepted => self.report.direct_accepted += 1,
                        PutOutcome::StaleRejected => self.report.direct_rejected += 1,
                        PutOutcome::Unavailable | PutOutcome::ParentMissing(_) => enqueue(queue, &mut self.report, k),
                    }
                }
            }
        }
    }
}
