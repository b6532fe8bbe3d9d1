use thiserror::Error;

use super::fault::FaultProfile;
use super::legacy::{ChangeEvent, LegacyStore};
use crate::domain::Tick;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("subscription start {from_seq} is past the log end {max_seq}")]
pub struct SubscribeError {
    pub from_seq: u64,
    pub max_seq: u64,
}

/// In-order, at-most-once view of the legacy change log, delayed by the
/// fault profile's lag and thinned by its drop probability.
#[derive(Clone, Debug)]
pub struct Subscription {
    next_seq: u64,
    lag: Tick,
    fault: FaultProfile,
    delivered: u64,
    dropped: u64,
}

pub fn stream_subscribe(legacy: &LegacyStore, from_seq: u64, fault: &FaultProfile) -> Result<Subscription, SubscribeError> {
    let from_seq = from_seq.max(1);
    if from_seq > legacy.max_seq() + 1 {
        return Err(SubscribeError { from_seq, max_seq: legacy.max_seq() });
    }
    Ok(Subscription { next_seq: from_seq, lag: fault.stream_lag, fault: fault.clone(), delivered: 0, dropped: 0 })
}

impl Subscription {
    /// Events whose delivery time (commit time + lag) is at or before `now`.
    pub fn poll(&mut self, legacy: &LegacyStore, now: Tick) -> Vec<ChangeEvent> {
        let log = legacy.change_log();
        let mut out = Vec::new();
        while let Some(ev) = log.get(self.next_seq as usize - 1) {
            if ev.commit_time() + self.lag > now {
                break;
            }
            self.next_seq += 1;
            if self.fault.drops(ev.seq) {
                self.dropped += 1;
            } else {
                self.delivered += 1;
                out.push(ev.clone());
            }
        }
        out
    }

    pub fn lag(&self) -> Tick {
        self.lag
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}
