//! Switch-over of the source of truth: clearance checks, bulk-operation
//! freeze, write freeze, drain and flip, or an immediate forced flip.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Tick;
use crate::duration::{self, DAY};
use crate::metrics::ConsistencyReport;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampMode {
    /// Freeze writes and wait for the loop to drain before flipping.
    #[default]
    Drained,
    /// Flip at ramp time whatever is still in flight.
    Forced,
}

fn default_lead() -> Tick {
    3 * DAY
}

fn default_timeout() -> Tick {
    30
}

fn default_clearance_lead() -> Tick {
    60
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampPlan {
    #[serde(deserialize_with = "duration::deserialize")]
    pub ramp_time: Tick,
    #[serde(default = "default_lead", deserialize_with = "duration::deserialize")]
    pub bulk_freeze_lead: Tick,
    /// Longest tolerated write freeze.
    #[serde(default = "default_timeout", deserialize_with = "duration::deserialize")]
    pub freeze_timeout: Tick,
    /// How long before ramp time clearance checks start.
    #[serde(default = "default_clearance_lead", deserialize_with = "duration::deserialize")]
    pub clearance_lead: Tick,
    #[serde(default)]
    pub mode: RampMode,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RampPlanError {
    #[error("clearance lead {lead} reaches before time 0 (ramp at {ramp})")]
    ClearanceBeforeStart { lead: Tick, ramp: Tick },
}

impl RampPlan {
    pub fn at(ramp_time: Tick) -> Self {
        RampPlan {
            ramp_time,
            bulk_freeze_lead: default_lead(),
            freeze_timeout: default_timeout(),
            clearance_lead: default_clearance_lead(),
            mode: RampMode::Drained,
        }
    }

    pub fn forced(mut self) -> Self {
        self.mode = RampMode::Forced;
        self
    }

    pub fn validate(&self) -> Result<(), RampPlanError> {
        if self.clearance_lead > self.ramp_time {
            return Err(RampPlanError::ClearanceBeforeStart { lead: self.clearance_lead, ramp: self.ramp_time });
        }
        Ok(())
    }

    pub fn bulk_freeze_start(&self) -> Tick {
        self.ramp_time.saturating_sub(self.bulk_freeze_lead)
    }
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// Thresholds a consistency report must meet before the flip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampCriteria {
    #[serde(default = "one")]
    pub min_settled_rate: f64,
    #[serde(default)]
    pub max_queue_length: u64,
    /// `None` means the report's own staleness bound.
    #[serde(default, with = "duration::option", skip_serializing_if = "Option::is_none")]
    pub max_window_ttc: Option<Tick>,
    #[serde(default = "yes")]
    pub require_empty_dead_letters: bool,
}

impl Default for RampCriteria {
    fn default() -> Self {
        RampCriteria { min_settled_rate: 1.0, max_queue_length: 0, max_window_ttc: None, require_empty_dead_letters: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "criterion", rename_all = "snake_case")]
pub enum BlockReason {
    SettledRate { actual: f64, required: f64 },
    QueueLength { actual: u64, max: u64 },
    WindowTtc { actual: Tick, max: Tick },
    DeadLetters { count: u64 },
}

impl fmt::Display for BlockReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockReason::SettledRate { actual, required } => write!(f, "settled_rate {actual} < {required}"),
            BlockReason::QueueLength { actual, max } => write!(f, "queue_length {actual} > {max}"),
            BlockReason::WindowTtc { actual, max } => write!(f, "window_ttc {actual} > {max}"),
            BlockReason::DeadLetters { count } => write!(f, "dead_letters {count}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clearance {
    Cleared,
    Blocked(Vec<BlockReason>),
}

pub fn check_clearance(criteria: &RampCriteria, report: &ConsistencyReport, dead_letters: u64) -> Clearance {
    let mut reasons = Vec::new();
    if report.settled_rate < criteria.min_settled_rate {
        reasons.push(BlockReason::SettledRate { actual: report.settled_rate, required: criteria.min_settled_rate });
    }
    if report.queue_length > criteria.max_queue_length {
        reasons.push(BlockReason::QueueLength { actual: report.queue_length, max: criteria.max_queue_length });
    }
    let max_ttc = criteria.max_window_ttc.unwrap_or(report.staleness_bound);
    if report.window_ttc > max_ttc {
        reasons.push(BlockReason::WindowTtc { actual: report.window_ttc, max: max_ttc });
    }
    if criteria.require_empty_dead_letters && dead_letters > 0 {
        reasons.push(BlockReason::DeadLetters { count: dead_letters });
    }
    if reasons.is_empty() {
        Clearance::Cleared
    } else {
        Clearance::Blocked(reasons)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchOutcome {
    Switched,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchReport {
    pub mode: RampMode,
    pub outcome: SwitchOutcome,
    /// Tick the decision was made: the flip, or the abort.
    pub decided_at: Tick,
    pub unavailability_window: Tick,
    /// Source updates not settled in the target at the flip.
    pub lost_updates: u64,
    /// Target keys differing from the mapped final legacy state at the flip.
    pub post_switch_discrepancies: u64,
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampPhase {
    Normal,
    BulkFrozen,
    WriteFrozen { since: Tick },
    Switched { at: Tick },
    Aborted { at: Tick },
}

/// What the caller must do this tick.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RampAction {
    Nothing,
    FreezeBulk,
    FreezeWrites,
    /// Flip now: no drain, whatever is in flight is lost.
    ForceFlip,
    Flip { window: Tick },
    Abort(String),
}

/// Drives one switch-over plan. The caller owns the stores and reports
/// drain status; the controller owns the phase.
#[derive(Clone, Debug)]
pub struct RampController {
    plan: RampPlan,
    criteria: RampCriteria,
    phase: RampPhase,
    cleared_at: Option<Tick>,
    last_block: Vec<BlockReason>,
}

impl RampController {
    pub fn new(plan: RampPlan, criteria: RampCriteria) -> Self {
        RampController { plan, criteria, phase: RampPhase::Normal, cleared_at: None, last_block: Vec::new() }
    }

    pub fn plan(&self) -> &RampPlan {
        &self.plan
    }

    pub fn criteria(&self) -> &RampCriteria {
        &self.criteria
    }

    pub fn phase(&self) -> &RampPhase {
        &self.phase
    }

    pub fn cleared_at(&self) -> Option<Tick> {
        self.cleared_at
    }

    pub fn bulk_frozen(&self, now: Tick) -> bool {
        now >= self.plan.bulk_freeze_start() && !matches!(self.phase, RampPhase::Aborted { .. })
    }

    pub fn legacy_writable(&self) -> bool {
        matches!(self.phase, RampPhase::Normal | RampPhase::BulkFrozen | RampPhase::Aborted { .. })
    }

    pub fn is_final(&self) -> bool {
        matches!(self.phase, RampPhase::Switched { .. } | RampPhase::Aborted { .. })
    }

    /// True while a clearance report is wanted.
    pub fn wants_clearance(&self, now: Tick) -> bool {
        self.plan.mode == RampMode::Drained
            && self.cleared_at.is_none()
            && !self.is_final()
            && now + self.plan.clearance_lead >= self.plan.ramp_time
            && now < self.plan.ramp_time
    }

    pub fn observe(&mut self, now: Tick, report: &ConsistencyReport, dead_letters: u64) -> Clearance {
        let c = check_clearance(&self.criteria, report, dead_letters);
        match &c {
            Clearance::Cleared => self.cleared_at = Some(now),
            Clearance::Blocked(r) => self.last_block = r.clone(),
        }
        c
    }

    /// Phase changes due at the start of `now`, before any traffic.
    pub fn begin_tick(&mut self, now: Tick) -> RampAction {
        match self.phase {
            RampPhase::Normal if now >= self.plan.ramp_time => self.ramp(now),
            RampPhase::Normal if now >= self.plan.bulk_freeze_start() => {
                self.phase = RampPhase::BulkFrozen;
                RampAction::FreezeBulk
            }
            RampPhase::BulkFrozen if now >= self.plan.ramp_time => self.ramp(now),
            _ => RampAction::Nothing,
        }
    }

    fn ramp(&mut self, now: Tick) -> RampAction {
        match self.plan.mode {
            RampMode::Forced => RampAction::ForceFlip,
            RampMode::Drained if self.cleared_at.is_none() => {
                let why = self.last_block.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(", ");
                let reason = if why.is_empty() { "clearance never checked".to_string() } else { format!("not cleared: {why}") };
                self.phase = RampPhase::Aborted { at: now };
                RampAction::Abort(reason)
            }
            RampMode::Drained => {
                self.phase = RampPhase::WriteFrozen { since: now };
                RampAction::FreezeWrites
            }
        }
    }

    /// Forced flip bookkeeping, after the ramp tick's commits.
    pub fn force_flip(&mut self, now: Tick) {
        self.phase = RampPhase::Switched { at: now };
    }

    /// End-of-tick drain check while writes are frozen.
    pub fn end_tick(&mut self, now: Tick, drained: bool) -> RampAction {
        let RampPhase::WriteFrozen { since } = self.phase else {
            return RampAction::Nothing;
        };
        let window = now + 1 - since;
        if drained {
            self.phase = RampPhase::Switched { at: now };
            RampAction::Flip { window }
        } else if window >= self.plan.freeze_timeout {
            self.phase = RampPhase::Aborted { at: now };
            RampAction::Abort(format!("drain exceeded freeze_timeout {}", self.plan.freeze_timeout))
        } else {
            RampAction::Nothing
        }
    }
}
