use serde::{Deserialize, Serialize};

use crate::domain::Tick;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickUsage {
    pub tick: Tick,
    pub live: u64,
    pub backfill: u64,
}

/// Per-tick operation budget on the target store. Live traffic is served
/// first; backfill only gets what live traffic left over.
#[derive(Clone, Debug)]
pub struct RateLimiter {
    capacity: u64,
    current: TickUsage,
    history: Vec<TickUsage>,
}

impl RateLimiter {
    pub fn new(capacity_per_tick: u64) -> Self {
        RateLimiter { capacity: capacity_per_tick, current: TickUsage::default(), history: Vec::new() }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn begin_tick(&mut self, now: Tick) {
        if self.current.live + self.current.backfill > 0 {
            self.history.push(self.current);
        }
        self.current = TickUsage { tick: now, live: 0, backfill: 0 };
    }

    /// Take one unit for live traffic if any is left this tick.
    pub fn try_live(&mut self) -> bool {
        if self.used() < self.capacity {
            self.current.live += 1;
            true
        } else {
            false
        }
    }

    /// Grant up to `want` backfill units from the spare capacity.
    pub fn grant_backfill(&mut self, want: u64) -> u64 {
        let g = want.min(self.spare());
        self.current.backfill += g;
        g
    }

    pub fn spare(&self) -> u64 {
        self.capacity.saturating_sub(self.used())
    }

    fn used(&self) -> u64 {
        self.current.live + self.current.backfill
    }

    pub fn current(&self) -> TickUsage {
        self.current
    }

    /// Usage of every finished tick that saw traffic, plus the current one.
    pub fn history(&self) -> impl Iterator<Item = &TickUsage> {
        self.history.iter().chain(std::iter::once(&self.current).filter(|c| c.live + c.backfill > 0))
    }
}
