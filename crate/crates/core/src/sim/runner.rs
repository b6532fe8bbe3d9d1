use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::scenario::{BootstrapChoice, ConfigError, Scenario};
use super::workload::{LegacyOp, WorkloadGenerator};
use crate::domain::{Mapper, SchemaHandle, SourceRecord, Tick};
use crate::dualwrite::{on_commit, DualWriter};
use crate::healing::{validate_and_fix, JournalEntry, RepairContext, SelfHealingQueue, Transition};
use crate::metrics::{staleness_bound, ConsistencyReport, ConsistencyTracker, EventLog, Histogram, LogEvent, MetricsRegistry, SettlementTracker};
use crate::ramp::{RampAction, RampController, RampMode, SwitchOutcome, SwitchReport};
use crate::rng::{derive_seed, sub_stream};
use crate::stores::{LegacyStore, LegacyWrite, TargetStore};
use crate::verifiers::{offline_bulk_verify, Bootstrap, BootstrapMode, BootstrapReport, NearlineVerifier, OfflineReport, RateLimiter, ShadowReader};

/// Counters gathered while the simulation ran.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub commits: u64,
    pub rejected_writes: u64,
    pub burst_writes: u64,
    pub legacy_reads: u64,
    pub dual_writes_done: u64,
    pub dual_writes_failed: u64,
    /// Commit-to-dispatch delay of every dual write.
    pub live_latency: Histogram,
    pub nearline_verified: u64,
    pub nearline_enqueued: u64,
    pub stream_dropped: u64,
    pub shadow_matches: u64,
    pub shadow_reported: u64,
    pub peak_backfill: u64,
    /// Ticks where backfill exceeded what live traffic left over.
    pub backfill_violations: u64,
    pub target_writes: u64,
}

/// Everything the simulation itself reports, before any oracle check.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub scenario: String,
    pub seed: u64,
    pub initial_records: u64,
    pub start: Tick,
    pub last_tick: Tick,
    pub samples: Vec<ConsistencyReport>,
    pub switch: Option<SwitchReport>,
    pub attempts: u64,
    pub attempts_ratio: Option<f64>,
    pub dead_letters: Vec<String>,
    pub dead_letter_reasons: BTreeMap<String, u64>,
    pub queue: MetricsRegistry,
    pub bootstrap: Option<BootstrapReport>,
    pub offline: Vec<OfflineReport>,
    pub stats: RunStats,
    pub unsettled_at_end: u64,
    pub inconsistent_at_end: u64,
}

/// Live components of one run. Public for examples and tests that want to
/// drive or inspect a run tick by tick.
pub struct Simulation {
    pub scenario: Scenario,
    pub schema: SchemaHandle,
    pub legacy: LegacyStore,
    pub target: TargetStore,
    pub mapper: Mapper,
    pub queue: SelfHealingQueue,
    pub limiter: RateLimiter,
    pub dual: DualWriter,
    pub bootstrap: Option<Bootstrap>,
    pub nearline: Option<NearlineVerifier>,
    pub shadow: Option<ShadowReader>,
    pub ramp: Option<RampController>,
    pub settlement: SettlementTracker,
    pub tracker: ConsistencyTracker,
    pub workload: WorkloadGenerator,
    pub log: EventLog,
    pub outcome: SimOutcome,
    put_cursor: usize,
    now: Tick,
    finished: bool,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Simulation, ConfigError> {
        scenario.validate()?;
        let s = scenario.clone();
        let schema = s.register_schema()?;
        let mut fault = s.faults.clone();
        fault.seed = derive_seed(s.seed, "faults");
        let mut mapper = Mapper::new(schema.clone());
        if let Some(b) = &s.bug {
            mapper = mapper.with_bug(b.mapping_bug());
        }
        let workload = WorkloadGenerator::new(s.workload.clone(), &s.population, &schema, sub_stream(s.seed, "workload"));
        let mut sim = Simulation {
            legacy: LegacyStore::new(),
            target: TargetStore::new(fault.clone()),
            queue: SelfHealingQueue::new(s.retry, s.pipeline.queue_rate_limit).with_journal(),
            limiter: RateLimiter::new(s.pipeline.limiter_capacity),
            dual: DualWriter::new(),
            bootstrap: None,
            nearline: None,
            shadow: s.pipeline.shadow_reads.then(|| ShadowReader::new(s.pipeline.compared_fields.clone())),
            ramp: s.ramp.clone().map(|p| RampController::new(p, s.criteria.clone())),
            settlement: SettlementTracker::new(),
            tracker: ConsistencyTracker::new(schema.clone()),
            workload,
            log: EventLog::new(),
            outcome: SimOutcome {
                scenario: s.name.clone(),
                seed: s.seed,
                initial_records: s.population.initial_records,
                start: s.start,
                last_tick: s.start,
                ..SimOutcome::default()
            },
            put_cursor: 0,
            now: s.start,
            finished: false,
            mapper,
            schema,
            scenario: s,
        };
        sim.preload();
        let s = &sim.scenario;
        if s.pipeline.nearline {
            let delay = s.pipeline.settle_delay.unwrap_or_else(|| NearlineVerifier::default_settle_delay(&fault));
            sim.nearline = Some(NearlineVerifier::new(&sim.legacy, sim.legacy.max_seq() + 1, &fault, delay).expect("subscribing at the log end"));
        }
        let mode = match s.pipeline.bootstrap {
            BootstrapChoice::Off => None,
            BootstrapChoice::Queue => Some(BootstrapMode::Queue),
            BootstrapChoice::DirectLoad => Some(BootstrapMode::DirectLoad),
        };
        if let Some(mode) = mode {
            sim.bootstrap = Some(Bootstrap::new(sim.legacy.take_snapshot(s.start), &sim.mapper, mode));
        }
        sim.log.push(sim.scenario.start, LogEvent::Phase { name: "start".into() });
        Ok(sim)
    }

    fn preload(&mut self) {
        let n = self.scenario.population.initial_records;
        let ops = self.workload.preload(n);
        let span = self.scenario.start.max(1);
        let mut rng = sub_stream(self.scenario.seed, "preload");
        let mut times: Vec<Tick> = (0..ops.len()).map(|_| rand::Rng::random_range(&mut rng, 0..span)).collect();
        times.sort_unstable();
        for (op, t) in ops.into_iter().zip(times) {
            if let LegacyOp::Write(key, w) = op {
                self.commit(key, w, t, false);
            }
        }
    }

    fn commit(&mut self, key: crate::domain::SourceKey, write: LegacyWrite, now: Tick, replicate: bool) {
        let value = match &write {
            LegacyWrite::Put(v) => Some(v.clone()),
            LegacyWrite::Delete => None,
        };
        let ev = self.legacy.commit(key.clone(), write, now);
        self.outcome.stats.commits += 1;
        self.log.push(now, LogEvent::Commit { key: key.clone(), counter: ev.new_version.counter, value });
        let task = on_commit(&self.mapper, ev, now);
        self.settlement.on_commit(key.clone(), task.change.new_version.counter, now, task.affected_targets.clone());
        self.tracker.touch_source(&key);
        if replicate {
            self.dual.submit(task);
        }
    }

    /// Move new target writes and queue activity into the log and the
    /// online trackers.
    fn sync(&mut self) {
        let now = self.now;
        let entries = &self.target.write_log()[self.put_cursor..];
        self.put_cursor += entries.len();
        for e in entries {
            self.outcome.stats.target_writes += 1;
            self.log.push(now, LogEvent::Put { record: e.record.clone(), outcome: e.outcome.clone() });
            if e.outcome.is_accepted() {
                self.tracker.touch_target(&e.record.key);
                for i in self.settlement.on_accepted(&e.record, now) {
                    let u = &self.settlement.updates()[i];
                    self.log.push(now, LogEvent::Settled { key: u.key.clone(), counter: u.counter });
                }
            }
        }
        for j in self.queue.take_journal() {
            let ev = match j {
                JournalEntry::Enqueue { key, trigger, source_update_time, outcome } => LogEvent::Enqueue { key, trigger, source_update_time, outcome },
                JournalEntry::Requeued { key } => LogEvent::Requeued { key },
                JournalEntry::Transition(Transition::Removed { key, outcome }) => LogEvent::Removed {
                    key,
                    outcome: match outcome {
                        crate::healing::FixOutcome::Fixed => "fixed".into(),
                        _ => "already_consistent".into(),
                    },
                },
                JournalEntry::Transition(Transition::Retried { key, attempts, next_due, reason }) => {
                    LogEvent::Retried { key, attempts, next_due, reason: reason.to_string() }
                }
                JournalEntry::Transition(Transition::DeadLettered { key, reason }) => LogEvent::DeadLettered { key, reason: reason.to_string() },
            };
            self.log.push(now, ev);
        }
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Consistency report of the current state.
    pub fn sample(&mut self) -> ConsistencyReport {
        let now = self.now;
        let (queue_length, age) = self.queue.loop_gauges(now);
        let ttc = self.settlement.provisional_ttc(now.saturating_sub(self.scenario.metrics.ttc_window), now, now);
        let bound = self.scenario.metrics.staleness_bound.unwrap_or_else(|| staleness_bound(ttc));
        let mut r = ConsistencyReport { queue_length, max_in_loop_age: age, window_ttc: ttc, ..Default::default() };
        self.tracker.rates(&self.legacy, &self.target, now, bound, &mut r);
        r
    }

    fn record_sample(&mut self) -> ConsistencyReport {
        let r = self.sample();
        self.log.push(self.now, LogEvent::Sample { report: r.clone() });
        self.outcome.samples.push(r.clone());
        r
    }

    fn switch(&mut self, mode: RampMode, outcome: SwitchOutcome, window: Tick, reason: Option<String>) {
        self.tracker.refresh(&self.legacy, &self.target);
        let switched = outcome == SwitchOutcome::Switched;
        let report = SwitchReport {
            mode,
            outcome,
            decided_at: self.now,
            unavailability_window: window,
            lost_updates: if switched { self.settlement.unsettled() as u64 } else { 0 },
            post_switch_discrepancies: if switched { self.tracker.inconsistent().len() as u64 } else { 0 },
            reason,
        };
        self.log.push(self.now, LogEvent::Switch { report: report.clone() });
        self.outcome.switch = Some(report);
        if switched {
            self.finished = true;
        }
    }

    /// Advance one tick.
    pub fn step(&mut self) {
        if self.finished {
            return;
        }
        let now = self.now;
        let s_offline_every = self.scenario.pipeline.offline_every;
        let mut force_flip = false;

        if let Some(r) = self.ramp.as_mut() {
            match r.begin_tick(now) {
                RampAction::FreezeBulk => self.log.push(now, LogEvent::Phase { name: "bulk_freeze".into() }),
                RampAction::FreezeWrites => self.log.push(now, LogEvent::Phase { name: "write_freeze".into() }),
                RampAction::ForceFlip => force_flip = true,
                RampAction::Abort(why) => self.switch(RampMode::Drained, SwitchOutcome::Aborted, 0, Some(why)),
                RampAction::Nothing | RampAction::Flip { .. } => {}
            }
        }
        self.limiter.begin_tick(now);

        // repairs first: events raised this tick wait for the next one
        {
            let (legacy, target, mapper) = (&self.legacy, &mut self.target, &self.mapper);
            self.queue.process(now, |ev| {
                let mut ctx = RepairContext { legacy, target: &mut *target, mapper };
                validate_and_fix(&mut ctx, &ev.target_key, now).outcome
            });
        }
        self.sync();

        let writable = self.ramp.as_ref().is_none_or(|r| r.legacy_writable());
        let frozen = self.ramp.as_ref().is_some_and(|r| r.bulk_frozen(now));
        let ops = self.workload.step(now, writable, frozen);
        let mut reads: Vec<SourceRecord> = Vec::new();
        let replicate = self.scenario.pipeline.dual_writes;
        for op in ops {
            match op {
                LegacyOp::Write(key, w) => self.commit(key, w, now, replicate),
                LegacyOp::Read(key) => {
                    self.outcome.stats.legacy_reads += 1;
                    if let Some(r) = self.legacy.read(&key) {
                        reads.push(r.clone());
                    }
                }
            }
        }
        self.sync();

        if force_flip {
            self.ramp.as_mut().expect("forced flip needs a plan").force_flip(now);
            self.switch(RampMode::Forced, SwitchOutcome::Switched, 0, None);
            self.finish();
            return;
        }

        self.dual.dispatch(now, &mut self.limiter, &self.legacy, &mut self.target, &self.mapper, &mut self.queue);
        self.sync();

        if let Some(b) = self.bootstrap.as_mut() {
            if !b.is_done() {
                b.step(now, &mut self.limiter, &self.mapper, &mut self.target, &mut self.queue);
                if b.is_done() {
                    self.log.push(now, LogEvent::Phase { name: "bootstrap_done".into() });
                }
            }
        }
        self.sync();

        if let Some(n) = self.nearline.as_mut() {
            n.step(now, &self.legacy, &mut self.target, &self.mapper, &mut self.queue);
        }
        if let Some(sh) = self.shadow.as_mut() {
            for r in &reads {
                sh.shadow_read(r, &self.legacy, &mut self.target, &self.mapper, &mut self.queue, now);
            }
        }
        if let Some(every) = s_offline_every {
            if now > self.scenario.start && (now - self.scenario.start) % every == 0 {
                let src = self.legacy.take_snapshot(now);
                let tgt = self.target.snapshot(now);
                let rep = offline_bulk_verify(&src, &tgt, self.scenario.pipeline.offline_cutoff, &self.mapper, &mut self.queue, now);
                self.outcome.offline.push(rep);
            }
        }
        if let Some(fix_at) = self.scenario.bug.as_ref().and_then(|b| b.fixed_at) {
            if now == fix_at {
                self.mapper.set_bug_active(false);
                self.log.push(now, LogEvent::BugToggled { active: false });
                self.queue.requeue_dead_letters(now);
            }
        }
        self.sync();

        let periodic = (now - self.scenario.start) % self.scenario.metrics.sample_every == 0;
        let wants_clearance = self.ramp.as_ref().is_some_and(|r| r.wants_clearance(now));
        if periodic || wants_clearance {
            let report = self.record_sample();
            if wants_clearance {
                let dead = self.queue.dead_letters().len() as u64;
                self.ramp.as_mut().expect("checked").observe(now, &report, dead);
            }
        }

        if let Some(r) = self.ramp.as_mut() {
            let drained = self.queue.is_empty() && self.dual.pending() == 0 && self.settlement.unsettled() == 0;
            match r.end_tick(now, drained) {
                RampAction::Flip { window } => {
                    self.switch(RampMode::Drained, SwitchOutcome::Switched, window, None);
                    self.finish();
                    return;
                }
                RampAction::Abort(why) => {
                    let window = now + 1 - r.plan().ramp_time;
                    self.switch(RampMode::Drained, SwitchOutcome::Aborted, window, Some(why));
                }
                _ => {}
            }
        }

        if now >= self.scenario.end {
            self.finish();
            return;
        }
        self.now += 1;
    }

    fn finish(&mut self) {
        if self.outcome.samples.last().is_none_or(|s| s.at != self.now) {
            self.record_sample();
        }
        self.finished = true;
        let o = &mut self.outcome;
        o.last_tick = self.now;
        o.queue = self.queue.metrics().clone();
        o.attempts = o.queue.attempts();
        o.attempts_ratio = (o.initial_records > 0).then(|| o.attempts as f64 / o.initial_records as f64);
        o.dead_letters = self.queue.dead_letters().iter().map(|d| d.event.target_key.to_string()).collect();
        o.dead_letter_reasons = BTreeMap::new();
        for d in self.queue.dead_letters() {
            let kind = d.last_error.split(':').next().unwrap_or("").to_string();
            *o.dead_letter_reasons.entry(kind).or_insert(0) += 1;
        }
        o.bootstrap = self.bootstrap.as_ref().map(|b| b.report().clone());
        let st = &mut o.stats;
        st.rejected_writes = self.workload.rejected_writes();
        st.burst_writes = self.workload.burst_writes();
        (st.dual_writes_done, st.dual_writes_failed) = self.dual.counts();
        st.live_latency = self.dual.latency().clone();
        if let Some(n) = &self.nearline {
            (st.nearline_verified, st.nearline_enqueued) = n.counts();
            st.stream_dropped = n.dropped();
        }
        if let Some(sh) = &self.shadow {
            (st.shadow_matches, st.shadow_reported) = sh.counts();
        }
        let cap = self.limiter.capacity();
        for u in self.limiter.history() {
            st.peak_backfill = st.peak_backfill.max(u.backfill);
            if u.live + u.backfill > cap {
                st.backfill_violations += 1;
            }
        }
        self.tracker.refresh(&self.legacy, &self.target);
        o.unsettled_at_end = self.settlement.unsettled() as u64;
        o.inconsistent_at_end = self.tracker.inconsistent().len() as u64;
        self.log.push(
            self.now,
            LogEvent::RunEnd { attempts: o.attempts, unsettled: o.unsettled_at_end, dead_letters: o.dead_letters.len() as u64 },
        );
    }

    pub fn run_to_end(&mut self) {
        while !self.finished {
            self.step();
        }
    }

    pub fn into_parts(self) -> (SimOutcome, EventLog) {
        (self.outcome, self.log)
    }
}

/// Run the simulation alone, without oracle or assertions.
pub fn simulate(scenario: &Scenario) -> Result<(SimOutcome, EventLog), ConfigError> {
    let mut sim = Simulation::new(scenario)?;
    sim.run_to_end();
    Ok(sim.into_parts())
}
