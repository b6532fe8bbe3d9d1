use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::Tick;

/// Exact-value histogram over tick latencies.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    counts: BTreeMap<Tick, u64>,
    total: u64,
    sum: u128,
}

impl Histogram {
    pub fn record(&mut self, v: Tick) {
        *self.counts.entry(v).or_insert(0) += 1;
        self.total += 1;
        self.sum += u128::from(v);
    }

    pub fn count(&self) -> u64 {
        self.total
    }

    pub fn max(&self) -> Option<Tick> {
        self.counts.keys().next_back().copied()
    }

    pub fn mean(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.sum as f64 / self.total as f64
        }
    }

    /// Smallest value with at least `q` of the mass at or below it.
    pub fn quantile(&self, q: f64) -> Option<Tick> {
        if self.total == 0 {
            return None;
        }
        let need = ((q.clamp(0.0, 1.0) * self.total as f64).ceil() as u64).max(1);
        let mut seen = 0;
        for (v, c) in &self.counts {
            seen += c;
            if seen >= need {
                return Some(*v);
            }
        }
        self.max()
    }

    pub fn buckets(&self) -> &BTreeMap<Tick, u64> {
        &self.counts
    }
}

/// Counters, gauges and latency histograms of the repair loop.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRegistry {
    pub enqueue: u64,
    pub coalesced: u64,
    pub dequeue: u64,
    pub dead_lettered: u64,
    pub validation_success: u64,
    pub validation_failure: u64,
    pub fix_success: u64,
    pub fix_failure: u64,
    pub retry: u64,
    pub queue_length: u64,
    pub max_event_age: Tick,
    pub in_queue_latency: Histogram,
    pub validate_fix_latency: Histogram,
    pub pipeline_latency: Histogram,
}

impl MetricsRegistry {
    /// Validate+fix attempts made so far.
    pub fn attempts(&self) -> u64 {
        self.validation_success + self.fix_success + self.fix_failure
    }

    /// `queue_length == enqueue - dequeue - dead_lettered` and `dequeue <= enqueue`.
    pub fn is_balanced(&self) -> bool {
        self.dequeue <= self.enqueue && self.enqueue - self.dequeue - self.dead_lettered == self.queue_length
    }
}
