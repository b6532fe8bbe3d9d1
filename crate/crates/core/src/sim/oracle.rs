use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::scenario::{ConfigError, Scenario};
use crate::domain::{at_least_as_fresh, classify, DiscrepancyClass, Mapper, SchemaHandle, SourceKey, SourceRecord, TargetKey, TargetRecord, Tick, VersionStamp};
use crate::healing::EnqueueOutcome;
use crate::metrics::{ConsistencyReport, EventLog, LogEvent};
use crate::ramp::SwitchOutcome;

/// One named pass/fail result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

/// What replaying a log found, independently of the run's own bookkeeping.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub commits: u64,
    pub accepted_puts: u64,
    pub rejected_puts: u64,
    pub final_keys: u64,
    pub final_diff: BTreeMap<DiscrepancyClass, u64>,
    pub resurrections: u64,
    pub orphan_violations: u64,
    pub provenance_regressions: u64,
    pub updates: u64,
    pub unsettled: u64,
    pub settlement_mismatches: u64,
    pub samples_checked: u64,
    pub sample_mismatches: Vec<String>,
    pub attempts: u64,
    pub attempts_per_key: BTreeMap<String, u64>,
    pub dead_lettered: Vec<String>,
    pub checks: Vec<Check>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn final_inconsistent(&self) -> u64 {
        self.final_diff.values().sum()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Upd {
    key: SourceKey,
    counter: u64,
    time: Tick,
    idx: usize,
    affected: Vec<TargetKey>,
}

struct Put {
    idx: usize,
    time: Tick,
    record: Arc<TargetRecord>,
}

#[derive(Default)]
struct Replay {
    sources: BTreeMap<SourceKey, SourceRecord>,
    target: HashMap<TargetKey, Arc<TargetRecord>>,
    children: HashMap<TargetKey, HashSet<TargetKey>>,
    puts: HashMap<TargetKey, Vec<Put>>,
    updates: Vec<Upd>,
    commit_times: Vec<(Tick, SourceKey)>,
    dirty: HashSet<TargetKey>,
    domain: HashSet<TargetKey>,
    bad: HashSet<TargetKey>,
}

impl Replay {
    fn refresh(&mut self, mapper: &Mapper) {
        for key in std::mem::take(&mut self.dirty) {
            let actual = self.target.get(&key).map(|r| r.as_ref());
            let (in_domain, class) = match mapper.expected_for(&self.sources, &key) {
                Ok(e) => (e.is_some() || actual.is_some_and(TargetRecord::is_live), classify(e.as_ref(), actual)),
                Err(_) => (true, DiscrepancyClass::Corrupt),
            };
            if in_domain {
                self.domain.insert(key.clone());
            } else {
                self.domain.remove(&key);
            }
            if in_domain && !class.is_consistent() {
                self.bad.insert(key);
            } else {
                self.bad.remove(&key);
            }
        }
    }

    fn parents(mapper: &Mapper, r: &TargetRecord) -> Vec<TargetKey> {
        if r.is_live() {
            mapper.parent_keys(r).unwrap_or_default()
        } else {
            Vec::new()
        }
    }
}

/// Replay a run's log against its scenario and recheck everything the run
/// claimed: store states, ordering, settlement, TTC, rates, queue counts and
/// the switch report.
pub fn oracle_verify(log: &EventLog, scenario: &Scenario) -> Result<OracleReport, ConfigError> {
    let schema = scenario.register_schema()?;
    Ok(verify_with_schema(log, scenario, &schema))
}

fn verify_with_schema(log: &EventLog, scenario: &Scenario, schema: &SchemaHandle) -> OracleReport {
    let mapper = Mapper::new(schema.clone());
    let mut rp = Replay::default();
    let mut rep = OracleReport::default();
    let mut settled_logged: HashMap<(SourceKey, u64), (Tick, usize)> = HashMap::new();
    let mut samples: Vec<(usize, ConsistencyReport)> = Vec::new();
    let mut queue_len: i64 = 0;
    let mut switch = None;
    let mut commits_after_switch = 0u64;
    let mut run_end = None;
    let mut removed_or_retried = 0u64;
    let mut dead: std::collections::BTreeSet<String> = Default::default();

    for (idx, e) in log.entries().iter().enumerate() {
        let now = e.time;
        match &e.event {
            LogEvent::Commit { key, counter, value } => {
                rep.commits += 1;
                if switch.is_some() {
                    commits_after_switch += 1;
                }
                let v = VersionStamp::new(*counter, now);
                let rec = match value {
                    Some(val) => SourceRecord::live(key.clone(), val.clone(), v),
                    None => SourceRecord::tombstone(key.clone(), v),
                };
                rp.sources.insert(key.clone(), rec);
                let affected = mapper.affected_targets(key);
                rp.dirty.extend(affected.iter().cloned());
                rp.commit_times.push((now, key.clone()));
                rp.updates.push(Upd { key: key.clone(), counter: *counter, time: now, idx, affected });
            }
            LogEvent::Put { record, outcome } => {
                if !outcome.is_accepted() {
                    rep.rejected_puts += 1;
                    continue;
                }
                rep.accepted_puts += 1;
                let key = &record.key;
                if let Some(old) = rp.target.get(key) {
                    if !at_least_as_fresh(&record.provenance, &old.provenance) {
                        rep.provenance_regressions += 1;
                    }
                    for p in Replay::parents(&mapper, old) {
                        if let Some(c) = rp.children.get_mut(&p) {
                            c.remove(key);
                        }
                    }
                }
                if record.is_live() {
                    for p in Replay::parents(&mapper, record) {
                        if !rp.target.get(&p).is_some_and(|r| r.is_live()) {
                            rep.orphan_violations += 1;
                        }
                        rp.children.entry(p).or_default().insert(key.clone());
                    }
                } else if let Some(c) = rp.children.get(key) {
                    rep.orphan_violations += c.len() as u64;
                }
                rp.target.insert(key.clone(), record.clone());
                rp.puts.entry(key.clone()).or_default().push(Put { idx, time: now, record: record.clone() });
                rp.dirty.insert(key.clone());
            }
            LogEvent::Settled { key, counter } => {
                settled_logged.insert((key.clone(), *counter), (now, idx));
            }
            LogEvent::Enqueue { outcome, .. } => {
                if *outcome == EnqueueOutcome::Enqueued {
                    queue_len += 1;
                }
            }
            LogEvent::Requeued { key } => {
                queue_len += 1;
                dead.remove(&key.to_string());
            }
            LogEvent::Removed { key, .. } => {
                queue_len -= 1;
                removed_or_retried += 1;
                *rep.attempts_per_key.entry(key.to_string()).or_insert(0) += 1;
            }
            LogEvent::Retried { key, .. } => {
                removed_or_retried += 1;
                *rep.attempts_per_key.entry(key.to_string()).or_insert(0) += 1;
            }
            LogEvent::DeadLettered { key, .. } => {
                queue_len -= 1;
                removed_or_retried += 1;
                *rep.attempts_per_key.entry(key.to_string()).or_insert(0) += 1;
                dead.insert(key.to_string());
            }
            LogEvent::Sample { report } => {
                rp.refresh(&mapper);
                check_sample(&rp, &mapper, report, queue_len, &mut rep);
                samples.push((idx, report.clone()));
            }
            LogEvent::Switch { report } => switch = Some((idx, report.clone())),
            LogEvent::RunEnd { attempts, unsettled, dead_letters } => run_end = Some((*attempts, *unsettled, *dead_letters)),
            LogEvent::BugToggled { .. } | LogEvent::Phase { .. } => {}
        }
    }
    rep.attempts = removed_or_retried;
    rep.dead_lettered = dead.into_iter().collect();

    // settlement, recomputed from the accepted puts
    let settle: Vec<Option<(Tick, usize)>> = rp.updates.iter().map(|u| settle_of(u, &rp.puts)).collect();
    rep.updates = rp.updates.len() as u64;
    rep.unsettled = settle.iter().filter(|s| s.is_none()).count() as u64;
    for (u, s) in rp.updates.iter().zip(&settle) {
        if u.affected.is_empty() {
            continue;
        }
        let logged = settled_logged.get(&(u.key.clone(), u.counter)).map(|x| x.0);
        if logged != s.map(|x| x.0) {
            rep.settlement_mismatches += 1;
        }
    }

    // window TTC at every sample, evaluated at every tick of the window
    let window = scenario.metrics.ttc_window;
    for (sidx, s) in &samples {
        let ttc = brute_ttc(&rp.updates, &settle, *sidx, s.at.saturating_sub(window), s.at, s.at);
        if ttc != s.window_ttc {
            rep.sample_mismatches.push(format!("t={} window_ttc logged {} replayed {ttc}", s.at, s.window_ttc));
        }
    }

    // final state against the reference mapping
    rp.dirty.extend(rp.sources.keys().flat_map(|k| mapper.affected_targets(k)));
    rp.dirty.extend(rp.target.keys().cloned());
    rp.refresh(&mapper);
    rep.final_keys = rp.domain.len() as u64;
    for key in &rp.bad {
        let class = match mapper.expected_for(&rp.sources, key) {
            Ok(e) => classify(e.as_ref(), rp.target.get(key).map(|r| r.as_ref())),
            Err(_) => DiscrepancyClass::Corrupt,
        };
        *rep.final_diff.entry(class).or_insert(0) += 1;
    }
    rep.resurrections = rep.final_diff.get(&DiscrepancyClass::Resurrection).copied().unwrap_or(0);

    let mut checks = vec![
        Check::new("target_order", rep.orphan_violations == 0, format!("{} live children without a live parent", rep.orphan_violations)),
        Check::new("no_regression", rep.provenance_regressions == 0, format!("{} accepted writes older than what they replaced", rep.provenance_regressions)),
        Check::new("settlement", rep.settlement_mismatches == 0, format!("{} of {} updates settle differently on replay", rep.settlement_mismatches, rep.updates)),
        Check::new(
            "samples",
            rep.sample_mismatches.is_empty(),
            match rep.sample_mismatches.first() {
                None => format!("{} samples agree", rep.samples_checked),
                Some(m) => format!("{} mismatches, first: {m}", rep.sample_mismatches.len()),
            },
        ),
    ];
    match run_end {
        Some((attempts, unsettled, dead)) => {
            checks.push(Check::new("attempts", attempts == rep.attempts, format!("run {attempts}, replay {}", rep.attempts)));
            checks.push(Check::new("unsettled", unsettled == rep.unsettled, format!("run {unsettled}, replay {}", rep.unsettled)));
            checks.push(Check::new("dead_letters", dead == rep.dead_lettered.len() as u64, format!("run {dead}, replay {}", rep.dead_lettered.len())));
        }
        None => checks.push(Check::new("run_end", false, "log has no closing entry")),
    }
    if let Some((sidx, sw)) = &switch {
        if sw.outcome == SwitchOutcome::Switched {
            let lost = rp.updates.iter().zip(&settle).filter(|(u, s)| u.idx < *sidx && s.is_none_or(|(_, pi)| pi > *sidx)).count() as u64;
            let final_bad = rep.final_inconsistent();
            checks.push(Check::new("lost_updates", lost == sw.lost_updates, format!("switch {}, replay {lost}", sw.lost_updates)));
            checks.push(Check::new(
                "post_switch_discrepancies",
                final_bad == sw.post_switch_discrepancies,
                format!("switch {}, replay {final_bad}", sw.post_switch_discrepancies),
            ));
            checks.push(Check::new("frozen_after_switch", commits_after_switch == 0, format!("{commits_after_switch} commits after the switch")));
        }
    }
    rep.checks = checks;
    rep
}

fn check_sample(rp: &Replay, mapper: &Mapper, r: &ConsistencyReport, queue_len: i64, rep: &mut OracleReport) {
    rep.samples_checked += 1;
    let cut = r.at.saturating_sub(r.staleness_bound);
    let from = rp.commit_times.partition_point(|(t, _)| *t <= cut);
    let recent: HashSet<TargetKey> =
        rp.commit_times[from..].iter().flat_map(|(_, k)| mapper.affected_targets(k)).filter(|t| rp.domain.contains(t)).collect();
    let total = rp.domain.len() as u64;
    let bad = rp.bad.len() as u64;
    let settled = total - recent.len() as u64;
    let settled_bad = rp.bad.iter().filter(|k| !recent.contains(*k)).count() as u64;
    let mut diffs = Vec::new();
    for (name, logged, replayed) in [
        ("total_keys", r.total_keys, total),
        ("inconsistent_keys", r.inconsistent_keys, bad),
        ("settled_keys", r.settled_keys, settled),
        ("settled_inconsistent", r.settled_inconsistent, settled_bad),
        ("queue_length", r.queue_length, queue_len.max(0) as u64),
    ] {
        if logged != replayed {
            diffs.push(format!("{name} logged {logged} replayed {replayed}"));
        }
    }
    if !diffs.is_empty() {
        rep.sample_mismatches.push(format!("t={} {}", r.at, diffs.join(", ")));
    }
}

fn settle_of(u: &Upd, puts: &HashMap<TargetKey, Vec<Put>>) -> Option<(Tick, usize)> {
    if u.affected.is_empty() {
        return Some((u.time, u.idx));
    }
    let mut worst: Option<(Tick, usize)> = None;
    for t in &u.affected {
        let list = puts.get(t)?;
        let from = list.partition_point(|p| p.idx < u.idx);
        let hit = list[from..].iter().find(|p| p.record.provenance.get(&u.key).is_some_and(|s| s.counter >= u.counter))?;
        worst = worst.max(Some((hit.time, hit.idx)));
    }
    worst
}

/// Window TTC as the run saw it at log position `at_idx`: updates whose
/// settling write came later count as settling at `now`.
fn brute_ttc(updates: &[Upd], settle: &[Option<(Tick, usize)>], at_idx: usize, t0: Tick, t1: Tick, now: Tick) -> Tick {
    let known: Vec<(Tick, Tick)> = updates
        .iter()
        .zip(settle)
        .filter(|(u, _)| u.idx < at_idx)
        .map(|(u, s)| (u.time, s.filter(|(_, pi)| *pi < at_idx).map_or(now, |(t, _)| t)))
        .collect();
    let mut best = 0;
    let mut i = 0;
    let mut pm: Option<Tick> = None;
    let mut last = 0;
    for s in t0..=t1 {
        while i < known.len() && known[i].0 <= s {
            pm = pm.max(Some(known[i].1));
            last = known[i].0;
            i += 1;
        }
        if let Some(p) = pm {
            best = best.max(p.saturating_sub(last));
        }
    }
    best
}

/// TTC over `[t0, t1]` straight from a log: every update must have settled.
pub fn ttc_from_log(log: &EventLog, schema: &SchemaHandle, t0: Tick, t1: Tick) -> Option<Tick> {
    let mapper = Mapper::new(schema.clone());
    let mut puts: HashMap<TargetKey, Vec<Put>> = HashMap::new();
    let mut updates = Vec::new();
    for (idx, e) in log.entries().iter().enumerate() {
        match &e.event {
            LogEvent::Commit { key, counter, .. } => {
                updates.push(Upd { key: key.clone(), counter: *counter, time: e.time, idx, affected: mapper.affected_targets(key) })
            }
            LogEvent::Put { record, outcome } if outcome.is_accepted() => {
                puts.entry(record.key.clone()).or_default().push(Put { idx, time: e.time, record: record.clone() })
            }
            _ => {}
        }
    }
    let settle: Vec<_> = updates.iter().map(|u| settle_of(u, &puts)).collect();
    if settle.iter().any(Option::is_none) {
        return None;
    }
    Some(brute_ttc(&updates, &settle, usize::MAX, t0, t1, Tick::MAX))
}
