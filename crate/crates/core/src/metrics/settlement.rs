use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{SourceKey, TargetKey, TargetRecord, Tick};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("update committed at {commit_time} never settled")]
pub struct NotSettled {
    pub commit_time: Tick,
}

/// One source update and when the target caught up with it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Update {
    pub key: SourceKey,
    pub counter: u64,
    pub commit_time: Tick,
    pub settled_at: Option<Tick>,
}

impl Update {
    pub fn settlement_time(&self) -> Result<Tick, NotSettled> {
        self.settled_at.ok_or(NotSettled { commit_time: self.commit_time })
    }
}

/// Tracks every update from commit to settlement: the earliest time each
/// affected target key holds provenance at least as fresh as the update.
#[derive(Clone, Debug, Default)]
pub struct SettlementTracker {
    updates: Vec<Update>,
    pending: HashMap<SourceKey, BTreeMap<u64, (usize, BTreeSet<TargetKey>)>>,
    unsettled: usize,
}

impl SettlementTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a commit. Updates with nothing to replicate settle at once.
    pub fn on_commit(&mut self, key: SourceKey, counter: u64, commit_time: Tick, affected: Vec<TargetKey>) -> usize {
        let idx = self.updates.len();
        let settled_at = affected.is_empty().then_some(commit_time);
        self.updates.push(Update { key: key.clone(), counter, commit_time, settled_at });
        if settled_at.is_none() {
            self.unsettled += 1;
            self.pending.entry(key).or_default().insert(counter, (idx, affected.into_iter().collect()));
        }
        idx
    }

    /// Observe an accepted target write. Returns indices of updates that
    /// settled because of it.
    pub fn on_accepted(&mut self, record: &TargetRecord, now: Tick) -> Vec<usize> {
        let mut done = Vec::new();
        for (src, stamp) in record.provenance.iter() {
            let Some(per_key) = self.pending.get_mut(src) else { continue };
            let mut cleared = Vec::new();
            for (&counter, (idx, remaining)) in per_key.range_mut(..=stamp.counter) {
                if remaining.remove(&record.key) && remaining.is_empty() {
                    cleared.push(counter);
                    done.push(*idx);
                }
            }
            for c in cleared {
                per_key.remove(&c);
            }
            if per_key.is_empty() {
                self.pending.remove(src);
            }
        }
        done.sort_unstable();
        for &i in &done {
            self.updates[i].settled_at = Some(now);
            self.unsettled -= 1;
        }
        done
    }

    pub fn updates(&self) -> &[Update] {
        &self.updates
    }

    pub fn unsettled(&self) -> usize {
        self.unsettled
    }

    /// Commit times of unsettled updates, oldest first.
    pub fn unsettled_updates(&self) -> impl Iterator<Item = &Update> {
        self.updates.iter().filter(|u| u.settled_at.is_none())
    }

    pub fn settlement_time(&self, key: &SourceKey, counter: u64) -> Option<Result<Tick, NotSettled>> {
        self.updates.iter().rev().find(|u| &u.key == key && u.counter == counter).map(Update::settlement_time)
    }

    pub fn time_to_converge(&self, t0: Tick, t1: Tick) -> Result<Tick, NotSettled> {
        time_to_converge(&self.updates, t0, t1)
    }

    /// Lower bound on TTC at `now`: updates still in flight count as
    /// settling now.
    pub fn provisional_ttc(&self, t0: Tick, t1: Tick, now: Tick) -> Tick {
        sweep(&self.updates, t0, t1, |u| Ok(u.settled_at.unwrap_or(now))).expect("provisional never fails")
    }
}

/// Max over snapshot instants s in [t0, t1] of (latest settlement among
/// updates committed at or before s) minus (last commit at or before s).
/// `updates` must be in commit order.
pub fn time_to_converge(updates: &[Update], t0: Tick, t1: Tick) -> Result<Tick, NotSettled> {
    sweep(updates, t0, t1, Update::settlement_time)
}

// The value only changes at commit instants, so it suffices to evaluate at
// t0 and at every commit time inside the window.
fn sweep(updates: &[Update], t0: Tick, t1: Tick, settle: impl Fn(&Update) -> Result<Tick, NotSettled>) -> Result<Tick, NotSettled> {
    if t1 < t0 {
        return Ok(0);
    }
    let mut settled_max: Option<Tick> = None;
    let mut last_commit = 0;
    let mut best = 0;
    let mut i = 0;
    let eval = |sm: Option<Tick>, lc: Tick| sm.map_or(0, |s| s.saturating_sub(lc));
    while i < updates.len() && updates[i].commit_time <= t0 {
        settled_max = settled_max.max(Some(settle(&updates[i])?));
        last_commit = updates[i].commit_time;
        i += 1;
    }
    best = best.max(eval(settled_max, last_commit));
    while i < updates.len() && updates[i].commit_time <= t1 {
        let c = updates[i].commit_time;
        while i < updates.len() && updates[i].commit_time == c {
            settled_max = settled_max.max(Some(settle(&updates[i])?));
            i += 1;
        }
        last_commit = c;
        best = best.max(eval(settled_max, last_commit));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{EntityKey, ProvenanceVector, VersionStamp};

    fn u(commit: Tick, settle: Option<Tick>) -> Update {
        Update { key: EntityKey::new("p", commit), counter: 1, commit_time: commit, settled_at: settle }
    }

    #[test]
    fn ttc_examples() {
        assert_eq!(time_to_converge(&[u(10, Some(12))], 0, 100), Ok(2));
        // snapshot at 11 settles at 16 with last update 11
        assert_eq!(time_to_converge(&[u(10, Some(12)), u(11, Some(16))], 0, 100), Ok(5));
        assert_eq!(time_to_converge(&[], 0, 100), Ok(0));
        assert_eq!(time_to_converge(&[u(10, None)], 0, 100), Err(NotSettled { commit_time: 10 }));
        // updates after the window are ignored
        assert_eq!(time_to_converge(&[u(10, Some(12)), u(200, None)], 0, 100), Ok(2));
    }

    fn rec(id: u64, counter: u64) -> TargetRecord {
        TargetRecord {
            key: EntityKey::new("p2", id),
            value: Default::default(),
            provenance: ProvenanceVector::from_entries([(EntityKey::new("p", id), VersionStamp::new(counter, counter))]),
            tombstone: false,
        }
    }

    #[test]
    fn settlement_examples() {
        let mut t = SettlementTracker::new();
        t.on_commit(EntityKey::new("p", 1), 1, 10, vec![EntityKey::new("p2", 1)]);
        assert_eq!(t.on_accepted(&rec(1, 1), 12), vec![0]);
        assert_eq!(t.settlement_time(&EntityKey::new("p", 1), 1), Some(Ok(12)));

        // a superseded update settles when the fresher write lands
        t.on_commit(EntityKey::new("p", 1), 2, 14, vec![EntityKey::new("p2", 1)]);
        t.on_commit(EntityKey::new("p", 1), 3, 15, vec![EntityKey::new("p2", 1)]);
        assert_eq!(t.on_accepted(&rec(1, 3), 20), vec![1, 2]);
        assert_eq!(t.settlement_time(&EntityKey::new("p", 1), 2), Some(Ok(20)));

        t.on_commit(EntityKey::new("p", 2), 1, 21, vec![EntityKey::new("p2", 2)]);
        assert_eq!(t.settlement_time(&EntityKey::new("p", 2), 1), Some(Err(NotSettled { commit_time: 21 })));
        assert_eq!(t.unsettled(), 1);
        assert_eq!(t.provisional_ttc(0, 30, 30), 9);
    }

    #[test]
    fn multi_output_settles_when_all_land() {
        let mut t = SettlementTracker::new();
        t.on_commit(EntityKey::new("p", 1), 1, 10, vec![EntityKey::new("a", 1), EntityKey::new("p2", 1)]);
        assert!(t.on_accepted(&rec(1, 1), 11).is_empty());
        let mut other = rec(1, 1);
        other.key = EntityKey::new("a", 1);
        assert_eq!(t.on_accepted(&other, 13), vec![0]);
    }
}
