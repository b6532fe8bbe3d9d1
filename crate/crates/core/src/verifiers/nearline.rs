use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::domain::{classify, Mapper, Tick};
use crate::healing::{SelfHealingQueue, Trigger, ValidationEvent};
use crate::stores::{stream_subscribe, ChangeEvent, FaultProfile, LegacyStore, SubscribeError, Subscription, TargetStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NearlineOutcome {
    Verified,
    Enqueued,
}

/// Compare every target key fed by `event` with freshly mapped source state;
/// enqueue the ones that disagree or cannot be read.
pub fn nearline_verify(event: &ChangeEvent, legacy: &LegacyStore, target: &mut TargetStore, mapper: &Mapper, queue: &mut SelfHealingQueue, now: Tick) -> NearlineOutcome {
    let mut outcome = NearlineOutcome::Verified;
    for key in mapper.affected_targets(&event.key) {
        let consistent = match (mapper.expected_for(legacy, &key), target.get(&key, now)) {
            (Ok(expected), Ok(actual)) => classify(expected.as_ref(), actual.as_deref()).is_consistent(),
            _ => false,
        };
        if !consistent {
            queue.enqueue(ValidationEvent::new(key, Trigger::Nearline, now, event.commit_time()));
            outcome = NearlineOutcome::Enqueued;
        }
    }
    outcome
}

/// Change-stream consumer that checks each delivered event `settle_delay`
/// ticks after delivery.
#[derive(Debug)]
pub struct NearlineVerifier {
    sub: Subscription,
    settle_delay: Tick,
    waiting: VecDeque<(Tick, ChangeEvent)>,
    last_processed_seq: u64,
    verified: u64,
    enqueued: u64,
}

impl NearlineVerifier {
    pub fn new(legacy: &LegacyStore, from_seq: u64, fault: &FaultProfile, settle_delay: Tick) -> Result<Self, SubscribeError> {
        let sub = stream_subscribe(legacy, from_seq, fault)?;
        Ok(NearlineVerifier { sub, settle_delay, waiting: VecDeque::new(), last_processed_seq: 0, verified: 0, enqueued: 0 })
    }

    /// Default settle delay: twice the stream lag.
    pub fn default_settle_delay(fault: &FaultProfile) -> Tick {
        2 * fault.stream_lag
    }

    pub fn settle_delay(&self) -> Tick {
        self.settle_delay
    }

    /// Pull newly delivered events, then verify the ones whose settle delay
    /// has elapsed. Returns (event, verify time, outcome) for each check.
    pub fn step(
        &mut self,
        now: Tick,
        legacy: &LegacyStore,
        target: &mut TargetStore,
        mapper: &Mapper,
        queue: &mut SelfHealingQueue,
    ) -> Vec<(ChangeEvent, NearlineOutcome)> {
        for ev in self.sub.poll(legacy, now) {
            let delivered = ev.commit_time() + self.sub.lag();
            self.waiting.push_back((delivered + self.settle_delay, ev));
        }
        let mut out = Vec::new();
        while self.waiting.front().is_some_and(|(due, _)| *due <= now) {
            let (_, ev) = self.waiting.pop_front().expect("non-empty");
            let r = nearline_verify(&ev, legacy, target, mapper, queue, now);
            match r {
                NearlineOutcome::Verified => self.verified += 1,
                NearlineOutcome::Enqueued => self.enqueued += 1,
            }
            self.last_processed_seq = self.last_processed_seq.max(ev.seq);
            out.push((ev, r));
        }
        out
    }

    pub fn last_processed_seq(&self) -> u64 {
        self.last_processed_seq
    }

    pub fn counts(&self) -> (u64, u64) {
        (self.verified, self.enqueued)
    }

    pub fn in_flight(&self) -> usize {
        self.waiting.len()
    }

    pub fn dropped(&self) -> u64 {
        self.sub.dropped()
    }
}
