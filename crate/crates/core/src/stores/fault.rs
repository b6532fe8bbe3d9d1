use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{EntityKey, Tick};
use crate::rng;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FaultError {
    #[error("availability_p must be in (0, 1], got {0}")]
    Availability(f64),
    #[error("stream_drop_p must be in [0, 1], got {0}")]
    DropProbability(f64),
    #[error("outage window [{0}, {1}) is empty or overlaps its neighbour")]
    Window(Tick, Tick),
}

/// Half-open interval `[start, end)` of zero availability.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutageWindow {
    pub start: Tick,
    pub end: Tick,
}

/// Time-scheduled availability and change-stream faults.
///
/// Random unavailability is decided per `(key, tick)`: every operation on a
/// key within one tick sees the same draw, and draws for different keys or
/// ticks are independent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultProfile {
    #[serde(default = "one")]
    pub availability_p: f64,
    #[serde(default)]
    pub outage_windows: Vec<OutageWindow>,
    #[serde(default)]
    pub stream_lag: Tick,
    #[serde(default)]
    pub stream_drop_p: f64,
    #[serde(skip)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl Default for FaultProfile {
    fn default() -> Self {
        FaultProfile::healthy()
    }
}

impl FaultProfile {
    pub fn healthy() -> Self {
        FaultProfile { availability_p: 1.0, outage_windows: Vec::new(), stream_lag: 0, stream_drop_p: 0.0, seed: 0 }
    }

    pub fn with_availability(mut self, p: f64) -> Self {
        self.availability_p = p;
        self
    }

    pub fn with_outage(mut self, start: Tick, end: Tick) -> Self {
        self.outage_windows.push(OutageWindow { start, end });
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), FaultError> {
        if !(self.availability_p > 0.0 && self.availability_p <= 1.0) {
            return Err(FaultError::Availability(self.availability_p));
        }
        if !(0.0..=1.0).contains(&self.stream_drop_p) {
            return Err(FaultError::DropProbability(self.stream_drop_p));
        }
        let mut windows = self.outage_windows.clone();
        windows.sort_by_key(|w| w.start);
        let mut prev_end = None;
        for w in &windows {
            if w.end <= w.start || prev_end.is_some_and(|e| w.start < e) {
                return Err(FaultError::Window(w.start, w.end));
            }
            prev_end = Some(w.end);
        }
        Ok(())
    }

    pub fn in_outage(&self, now: Tick) -> bool {
        self.outage_windows.iter().any(|w| w.start <= now && now < w.end)
    }

    pub fn available(&self, key: &EntityKey, now: Tick) -> bool {
        if self.in_outage(now) {
            return false;
        }
        self.availability_p >= 1.0 || rng::unit_draw(self.seed, key.digest(), now) < self.availability_p
    }

    /// Whether change event `seq` is dropped before reaching consumers.
    pub fn drops(&self, seq: u64) -> bool {
        self.stream_drop_p > 0.0 && rng::unit_draw(self.seed ^ 0xd5a6_1266_f0c9_392c, seq, 0) < self.stream_drop_p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(FaultProfile::healthy().validate().is_ok());
        assert!(FaultProfile::healthy().with_availability(0.0).validate().is_err());
        assert!(FaultProfile::healthy().with_availability(1.5).validate().is_err());
        assert!(FaultProfile::healthy().with_outage(5, 10).with_outage(8, 12).validate().is_err());
        assert!(FaultProfile::healthy().with_outage(5, 5).validate().is_err());
        assert!(FaultProfile::healthy().with_outage(10, 12).with_outage(5, 10).validate().is_ok());
    }

    #[test]
    fn draws_are_per_key_and_tick() {
        let f = FaultProfile::healthy().with_availability(0.5).with_seed(42);
        let k = EntityKey::new("a", 1);
        assert_eq!(f.available(&k, 3), f.available(&k, 3));
        let ups = (0..10_000).filter(|t| f.available(&k, *t)).count();
        assert!((4_700..5_300).contains(&ups), "{ups}");
    }

    #[test]
    fn outage_blocks_everything() {
        let f = FaultProfile::healthy().with_outage(10, 20);
        let k = EntityKey::new("a", 1);
        assert!(f.available(&k, 9));
        assert!(!f.available(&k, 10));
        assert!(!f.available(&k, 19));
        assert!(f.available(&k, 20));
    }
}
