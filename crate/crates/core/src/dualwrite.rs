//! Asynchronous replication of legacy commits into the target store.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::domain::{Mapper, TargetKey, TargetRecord, Tick};
use crate::healing::{EnqueueOutcome, SelfHealingQueue, Trigger, ValidationEvent};
use crate::metrics::Histogram;
use crate::stores::{ChangeEvent, LegacyStore, PutOutcome, TargetStore};
use crate::verifiers::RateLimiter;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DualWriteTask {
    pub change: ChangeEvent,
    pub created_at: Tick,
    pub affected_targets: Vec<TargetKey>,
}

/// Schedule replication of a commit that has already returned to the client.
pub fn on_commit(mapper: &Mapper, change: ChangeEvent, now: Tick) -> DualWriteTask {
    let affected_targets = mapper.affected_targets(&change.key);
    DualWriteTask { created_at: now.max(change.commit_time()), change, affected_targets }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReplicateOutcome {
    Done,
    FailedEnqueued,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplicateReport {
    pub outcome: ReplicateOutcome,
    pub writes: Vec<(Arc<TargetRecord>, PutOutcome)>,
    pub enqueued: Vec<(TargetKey, EnqueueOutcome)>,
}

/// Map the latest source state behind the task and write each output in
/// dependency order. The first failure stops the task and hands every
/// unwritten key to the queue.
pub fn replicate(task: &DualWriteTask, legacy: &LegacyStore, target: &mut TargetStore, mapper: &Mapper, queue: &mut SelfHealingQueue, now: Tick) -> ReplicateReport {
    let mut report = ReplicateReport { outcome: ReplicateOutcome::Done, writes: Vec::new(), enqueued: Vec::new() };
    let mut outputs = match mapper.expected_for_source(legacy, &task.change.key) {
        Ok(o) => o,
        Err(_) => Vec::new(),
    };
    let schema = mapper.schema();
    // parents before children for live records, the reverse for deletes
    outputs.sort_by_key(|r| {
        let rank = schema.rank(&r.key.ty).unwrap_or(0);
        if r.tombstone { (1, usize::MAX - rank) } else { (0, rank) }
    });
    let mut written: Vec<TargetKey> = Vec::new();
    let mut failed = outputs.is_empty() && !task.affected_targets.is_empty();
    for out in outputs {
        let parents = if out.is_live() { mapper.parent_keys(&out).unwrap_or_default() } else { Vec::new() };
        let key = out.key.clone();
        let record = Arc::new(out);
        let put = target.put_checked(record.clone(), &parents, now);
        let ok = matches!(put, PutOutcome::Accepted | PutOutcome::StaleRejected);
        report.writes.push((record, put));
        if !ok {
            failed = true;
            break;
        }
        written.push(key);
    }
    if failed {
        report.outcome = ReplicateOutcome::FailedEnqueued;
        for key in task.affected_targets.iter().filter(|k| !written.contains(k)) {
            let ev = ValidationEvent::new(key.clone(), Trigger::DualWrite, now, task.change.commit_time());
            report.enqueued.push((key.clone(), queue.enqueue(ev)));
        }
    }
    report
}

/// Commit-ordered task queue. Tasks run in arrival order, which keeps
/// every source key's tasks in commit order.
#[derive(Debug, Default)]
pub struct DualWriter {
    pending: VecDeque<DualWriteTask>,
    latency: Histogram,
    done: u64,
    failed: u64,
}

impl DualWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn submit(&mut self, task: DualWriteTask) {
        self.pending.push_back(task);
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Run queued tasks while the limiter grants live capacity.
    pub fn dispatch(
        &mut self,
        now: Tick,
        limiter: &mut RateLimiter,
        legacy: &LegacyStore,
        target: &mut TargetStore,
        mapper: &Mapper,
        queue: &mut SelfHealingQueue,
    ) -> Vec<ReplicateReport> {
        let mut out = Vec::new();
        while !self.pending.is_empty() && limiter.try_live() {
            let task = self.pending.pop_front().expect("non-empty");
            self.latency.record(now - task.created_at);
            let r = replicate(&task, legacy, target, mapper, queue, now);
            match r.outcome {
                ReplicateOutcome::Done => self.done += 1,
                ReplicateOutcome::FailedEnqueued => self.failed += 1,
            }
            out.push(r);
        }
        out
    }

    /// Commit-to-dispatch delay of every task run so far.
    pub fn latency(&self) -> &Histogram {
        &self.latency
    }

    pub fn counts(&self) -> (u64, u64) {
        (self.done, self.failed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{EntityKey, Value};
    use crate::healing::RetryPolicy;
    use crate::schemas;
    use crate::stores::{FaultProfile, LegacyWrite};

    fn fields(kv: &[(&str, &str)]) -> Value {
        kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    struct Rig {
        legacy: LegacyStore,
        target: TargetStore,
        mapper: Mapper,
        queue: SelfHealingQueue,
    }

    impl Rig {
        fn new(mapper: Mapper) -> Self {
            Rig {
                legacy: LegacyStore::new(),
                target: TargetStore::new(FaultProfile::healthy()),
                mapper,
                queue: SelfHealingQueue::new(RetryPolicy::default(), 100),
            }
        }

        fn commit(&mut self, ty: &str, id: u64, v: Value, now: Tick) -> ReplicateReport {
            let ev = self.legacy.commit(EntityKey::new(ty, id), LegacyWrite::Put(v), now);
            let task = on_commit(&self.mapper, ev, now);
            replicate(&task, &self.legacy, &mut self.target, &self.mapper, &mut self.queue, now)
        }
    }

    #[test]
    fn affected_targets_follow_rules() {
        let m = Mapper::new(schemas::recruiting());
        let mut legacy = LegacyStore::new();
        let ev = legacy.commit(EntityKey::new("project", 1), LegacyWrite::Put(fields(&[("name", "p")])), 3);
        assert_eq!(on_commit(&m, ev, 3).affected_targets, [EntityKey::new("project_v2", 1)]);
        let m = Mapper::new(schemas::many_to_many());
        let ev = legacy.commit(EntityKey::new("candidate", 1), LegacyWrite::Put(Value::new()), 4);
        assert_eq!(on_commit(&m, ev, 4).affected_targets, [EntityKey::new("candidate_core", 1), EntityKey::new("candidate_notes", 1)]);
    }

    #[test]
    fn parent_present_then_child_written() {
        let mut r = Rig::new(Mapper::new(schemas::recruiting()));
        assert_eq!(r.commit("project", 1, fields(&[("name", "p")]), 1).outcome, ReplicateOutcome::Done);
        let rep = r.commit("state", 1, fields(&[("project", "1"), ("name", "s")]), 2);
        assert_eq!(rep.outcome, ReplicateOutcome::Done);
        assert!(r.target.is_live(&EntityKey::new("state_v2", 1)));
        assert!(r.queue.is_empty());
    }

    #[test]
    fn missing_parent_enqueues_and_writes_nothing() {
        let mut r = Rig::new(Mapper::new(schemas::recruiting()));
        r.legacy.commit(EntityKey::new("state", 1), LegacyWrite::Put(fields(&[("project", "1"), ("name", "s")])), 1);
        let rep = r.commit("candidate", 1, fields(&[("project", "1"), ("state", "1"), ("name", "c")]), 2);
        assert_eq!(rep.outcome, ReplicateOutcome::FailedEnqueued);
        assert!(!r.target.is_live(&EntityKey::new("candidate_v2", 1)));
        assert_eq!(rep.enqueued, [(EntityKey::new("candidate_v2", 1), EnqueueOutcome::Enqueued)]);
    }

    #[test]
    fn partial_failure_enqueues_the_rest() {
        let mut r = Rig::new(Mapper::new(schemas::many_to_many()));
        r.commit("project", 1, fields(&[("name", "p")]), 1);
        // find a tick where the core write succeeds and the notes write fails
        let fault = FaultProfile::healthy().with_availability(0.5).with_seed(7);
        let core = EntityKey::new("candidate_core", 1);
        let notes = EntityKey::new("candidate_notes", 1);
        let t = (2..10_000).find(|&t| fault.available(&core, t) && !fault.available(&notes, t)).unwrap();
        r.target.set_fault(fault);
        let rep = r.commit("candidate", 1, fields(&[("project", "1"), ("id", "1"), ("name", "c"), ("notes", "n")]), t);
        assert_eq!(rep.outcome, ReplicateOutcome::FailedEnqueued);
        assert!(r.target.is_live(&core));
        assert!(!r.target.is_live(&notes));
        assert_eq!(rep.enqueued, [(notes, EnqueueOutcome::Enqueued)]);
    }

    #[test]
    fn outage_commit_still_creates_task() {
        let mut r = Rig::new(Mapper::new(schemas::recruiting()));
        r.target.set_fault(FaultProfile::healthy().with_outage(0, 10));
        let rep = r.commit("project", 1, fields(&[("name", "p")]), 5);
        assert_eq!(rep.outcome, ReplicateOutcome::FailedEnqueued);
        assert_eq!(r.queue.len(), 1);
        assert_eq!(r.legacy.len(), 1);
    }

    #[test]
    fn dispatch_respects_live_budget_in_order() {
        let mut r = Rig::new(Mapper::new(schemas::recruiting()));
        let mut w = DualWriter::new();
        for id in 0..5 {
            let ev = r.legacy.commit(EntityKey::new("project", id), LegacyWrite::Put(fields(&[("name", "p")])), 1);
            w.submit(on_commit(&r.mapper, ev, 1));
        }
        let mut lim = RateLimiter::new(3);
        lim.begin_tick(1);
        let done = w.dispatch(1, &mut lim, &r.legacy, &mut r.target, &r.mapper, &mut r.queue);
        assert_eq!(done.len(), 3);
        lim.begin_tick(2);
        let done = w.dispatch(2, &mut lim, &r.legacy, &mut r.target, &r.mapper, &mut r.queue);
        assert_eq!(done[0].writes[0].0.key, EntityKey::new("project_v2", 3));
        assert_eq!(w.latency().buckets().clone(), [(0, 3), (1, 2)].into_iter().collect());
    }
}
