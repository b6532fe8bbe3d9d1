use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::oracle::{oracle_verify, Check, OracleReport};
use super::runner::{simulate, SimOutcome};
use super::scenario::{ConfigError, Scenario};
use crate::metrics::EventLog;

/// Result of a full run: what the simulation reported, what the oracle
/// found on replay, and the scenario's own assertions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub outcome: SimOutcome,
    pub oracle: OracleReport,
    pub assertions: Vec<Check>,
    pub log_digest: String,
    pub log_entries: usize,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.oracle.passed() && self.assertions.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.oracle.checks.iter().chain(&self.assertions).filter(|c| !c.passed)
    }

    pub fn to_text(&self) -> String {
        let o = &self.outcome;
        let mut s = String::new();
        let _ = writeln!(s, "scenario {} seed {}  ticks {}..={}", o.scenario, o.seed, o.start, o.last_tick);
        let _ = writeln!(s, "log {} entries, sha256 {}", self.log_entries, self.log_digest);
        let ratio = o.attempts_ratio.map_or("n/a".to_string(), |r| format!("{r:.5}"));
        let _ = writeln!(s, "records {}  commits {}  attempts {} (ratio {ratio})", o.initial_records, o.stats.commits, o.attempts);
        let _ = writeln!(
            s,
            "dual writes {} done / {} failed  nearline {} verified / {} enqueued  shadow {} match / {} reported",
            o.stats.dual_writes_done, o.stats.dual_writes_failed, o.stats.nearline_verified, o.stats.nearline_enqueued, o.stats.shadow_matches, o.stats.shadow_reported
        );
        if let Some(b) = &o.bootstrap {
            let _ = writeln!(s, "bootstrap {} records, {} events, {} ticks", b.records, b.events_enqueued + b.direct_accepted, b.duration);
        }
        for r in &o.offline {
            let _ = writeln!(s, "offline @{}: scanned {} inconsistent {} enqueued {}", r.snapshot_time, r.scanned, r.inconsistent(), r.enqueued);
        }
        let _ = writeln!(s, "dead letters {}", o.dead_letters.len());
        for (why, n) in &o.dead_letter_reasons {
            let _ = writeln!(s, "  {why}: {n}");
        }
        if let Some(sw) = &o.switch {
            let _ = writeln!(
                s,
                "switch {:?} {:?} at {}  window {}  lost {}  discrepancies {}{}",
                sw.mode,
                sw.outcome,
                sw.decided_at,
                sw.unavailability_window,
                sw.lost_updates,
                sw.post_switch_discrepancies,
                sw.reason.as_ref().map(|r| format!("  ({r})")).unwrap_or_default()
            );
        }
        let _ = writeln!(s, "\n{:>7} {:>10} {:>10} {:>8} {:>6} {:>6} {:>6}", "tick", "overall", "settled", "bad", "queue", "ttc", "bound");
        for r in &o.samples {
            let _ = writeln!(
                s,
                "{:>7} {:>10.6} {:>10.6} {:>8} {:>6} {:>6} {:>6}",
                r.at, r.overall_rate, r.settled_rate, r.inconsistent_keys, r.queue_length, r.window_ttc, r.staleness_bound
            );
        }
        let _ = writeln!(s, "\nfinal diff over {} keys:", self.oracle.final_keys);
        if self.oracle.final_diff.is_empty() {
            let _ = writeln!(s, "  none");
        }
        for (c, n) in &self.oracle.final_diff {
            let _ = writeln!(s, "  {c}: {n}");
        }
        let _ = writeln!(s, "\nchecks:");
        for c in self.oracle.checks.iter().chain(&self.assertions) {
            let _ = writeln!(s, "  [{}] {:<28} {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
        }
        let _ = writeln!(s, "\n{}", if self.passed() { "PASSED" } else { "FAILED" });
        s
    }
}

/// Scenario assertions checked against a finished run.
pub fn evaluate_expectations(scenario: &Scenario, o: &SimOutcome, oracle: &OracleReport) -> Vec<Check> {
    let e = &scenario.expect;
    let mut out = Vec::new();
    if let Some(want) = e.switch_outcome {
        let got = o.switch.as_ref().map(|s| s.outcome);
        out.push(Check::new("switch_outcome", got == Some(want), format!("want {want:?}, got {got:?}")));
    }
    if let Some(max) = e.max_post_switch_discrepancies {
        let got = o.switch.as_ref().map(|s| s.post_switch_discrepancies);
        out.push(Check::new("post_switch_discrepancies", got.is_some_and(|g| g <= max), format!("at most {max}, got {got:?}")));
    }
    if let Some(min) = e.min_lost_updates {
        let got = o.switch.as_ref().map(|s| s.lost_updates);
        out.push(Check::new("lost_updates", got.is_some_and(|g| g >= min), format!("at least {min}, got {got:?}")));
    }
    if let Some((lo, hi)) = e.attempts_ratio_range {
        let ok = o.attempts_ratio.is_some_and(|r| (lo..=hi).contains(&r));
        out.push(Check::new("attempts_ratio", ok, format!("within [{lo}, {hi}], got {:?}", o.attempts_ratio)));
    }
    if e.steady_min_overall.is_some() || e.steady_min_settled.is_some() {
        let from = e.steady_from.unwrap_or(o.start);
        let steady: Vec<_> = o.samples.iter().filter(|s| s.at >= from).collect();
        if let Some(min) = e.steady_min_overall {
            let worst = steady.iter().map(|s| s.overall_rate).reduce(f64::min);
            out.push(Check::new("steady_overall", worst.is_some_and(|w| w >= min), format!("min over {} samples from {from}: {worst:?}, need >= {min}", steady.len())));
        }
        if let Some(min) = e.steady_min_settled {
            let worst = steady.iter().map(|s| s.settled_rate).reduce(f64::min);
            out.push(Check::new("steady_settled", worst.is_some_and(|w| w >= min), format!("min over {} samples from {from}: {worst:?}, need >= {min}", steady.len())));
        }
    }
    if let Some(min) = e.final_min_settled {
        let got = o.samples.last().map(|s| s.settled_rate);
        out.push(Check::new("final_settled", got.is_some_and(|g| g >= min), format!("need >= {min}, got {got:?}")));
    }
    if let Some(max) = e.max_dead_letters {
        let n = o.dead_letters.len() as u64;
        out.push(Check::new("dead_letters", n <= max, format!("at most {max}, got {n}")));
    }
    if let Some(max) = e.max_final_discrepancies {
        let n = oracle.final_inconsistent();
        out.push(Check::new("final_discrepancies", n <= max, format!("at most {max}, got {n}")));
    }
    if let Some(max) = e.max_resurrections {
        out.push(Check::new("resurrections", oracle.resurrections <= max, format!("at most {max}, got {}", oracle.resurrections)));
    }
    out
}

/// Simulate, replay through the oracle and evaluate the scenario's
/// assertions.
pub fn run_scenario(scenario: &Scenario) -> Result<(RunReport, EventLog), ConfigError> {
    let (outcome, log) = simulate(scenario)?;
    let oracle = oracle_verify(&log, scenario)?;
    let assertions = evaluate_expectations(scenario, &outcome, &oracle);
    let report = RunReport { log_digest: log.digest(), log_entries: log.len(), outcome, oracle, assertions };
    Ok((report, log))
}
